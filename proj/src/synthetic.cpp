// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eegfmri/error.hpp"
#include "eegfmri/random.hpp"

namespace eegfmri {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::array<double, 2> kDriverWeights = {0.6, 0.4};
constexpr double kNonlinearGain = 2.0;

std::size_t frame_samples(const SyntheticSpec& s) {
  return std::size_t(std::llround(s.stft_window_s * s.sampling_rate_hz));
}

std::size_t volume_count(const SyntheticSpec& s) { return std::size_t(std::floor(s.duration_s / s.tr_s + 1e-9)); }

double couple(const SyntheticSpec& s, double g) {
  return s.coupling == Coupling::Linear ? g : std::tanh(kNonlinearGain * g);
}

std::string individual_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "sub-%02zu", i + 1);
  return buf;
}

}  // namespace

std::string_view to_string(Coupling c) { return c == Coupling::Linear ? "linear" : "nonlinear"; }

Coupling coupling_from_string(std::string_view name) {
  if (name == "linear") return Coupling::Linear;
  if (name == "nonlinear") return Coupling::Nonlinear;
  fail(ErrorKind::InvalidSpec, "unknown coupling '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::InvalidSpec, m); };
  if (individuals == 0) bad("individuals must be positive");
  if (channels == 0) bad("channels must be positive");
  if (drivers == 0) bad("drivers must be positive");
  if (!(duration_s > 0) || !std::isfinite(duration_s)) bad("duration_s must be positive");
  if (!(sampling_rate_hz > 0) || !std::isfinite(sampling_rate_hz)) bad("sampling_rate must be positive");
  if (!(tr_s > 0) || !std::isfinite(tr_s)) bad("TR must be positive");
  for (auto d : grid)
    if (d == 0) bad("grid dimensions must be positive");
  if (!(noise_level >= 0) || !std::isfinite(noise_level)) bad("noise_level must be >= 0");
  if (!(stft_window_s > 0)) bad("stft_window_s must be positive");
  if (!(hrf_shift_s >= 0)) bad("hrf_shift_s must be >= 0");
  if (!(modulation > 0 && modulation < 1)) bad("modulation must lie in (0, 1)");
  const double n = stft_window_s * sampling_rate_hz;
  if (std::abs(n - std::round(n)) > 1e-9) bad("stft window must span a whole number of samples");
  if (frame_samples(*this) / 2 < drivers + 3) bad("too few STFT bins for the requested drivers");
  if (duration_s < stft_window_s) bad("recording shorter than one STFT frame");
  if (volume_count(*this) < 2) bad("recording must hold at least two volumes");
}

SyntheticSpec synthetic_preset(std::string_view name) {
  SyntheticSpec s;
  if (name == "tiny") return s;
  if (name == "noddi_like") {
    s.individuals = 10;
    s.channels = 64;
    s.sampling_rate_hz = 1000.0;
    s.tr_s = 2.16;
    s.duration_s = 300 * 2.16;
    s.grid = {30, 30, 15};
    return s;
  }
  if (name == "oddball_like") {
    s.individuals = 14;
    s.channels = 64;
    s.sampling_rate_hz = 1000.0;
    s.tr_s = 2.0;
    s.duration_s = 340.0;
    s.grid = {30, 30, 15};
    return s;
  }
  fail(ErrorKind::InvalidSpec, "unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> synthetic_preset_names() { return {"tiny", "noddi_like", "oddball_like"}; }

SyntheticTruth synthetic_truth(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticTruth t;
  Rng shared(derive_seed(spec.seed, {0x5359}));
  for (std::size_t i = 0; i < spec.drivers * 2; ++i) t.driver_freqs.push_back(shared.uniform(0.008, 0.035));

  const auto [X, Y, Z] = spec.grid;
  const std::size_t V = X * Y * Z, B = spec.drivers;
  std::vector<std::array<double, 3>> centres(B);
  for (auto& c : centres) c = {shared.uniform(0, double(X)), shared.uniform(0, double(Y)), shared.uniform(0, double(Z))};
  const double sigma = 0.35 * double(std::max({X, Y, Z}));
  Vector mix(static_cast<Eigen::Index>(V * (B + 1)));
  for (std::size_t x = 0, v = 0; x < X; ++x)
    for (std::size_t y = 0; y < Y; ++y)
      for (std::size_t z = 0; z < Z; ++z, ++v) {
        for (std::size_t b = 0; b < B; ++b) {
          const double dx = double(x) + 0.5 - centres[b][0], dy = double(y) + 0.5 - centres[b][1],
                       dz = double(z) + 0.5 - centres[b][2];
          mix[Eigen::Index(v * (B + 1) + b)] =
              spec.coupling_strength * std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma));
        }
        mix[Eigen::Index(v * (B + 1) + B)] = spec.baseline + 0.2 * shared.uniform(-1.0, 1.0);
      }
  t.mixing = Tensor({V, B + 1}, std::move(mix));

  const std::size_t half = frame_samples(spec) / 2;
  const std::size_t max_bin = std::min(half - 1, std::size_t(std::floor(40.0 * spec.stft_window_s)));
  for (std::size_t i = 0; i < spec.individuals; ++i) {
    Rng rng(derive_seed(spec.seed, {0x1D, i}));
    SyntheticTruth::Individual ind;
    for (std::size_t k = 0; k < B * 2; ++k) ind.driver_phases.push_back(rng.uniform(0.0, kTwoPi));
    const std::size_t offset = rng.index(2);
    const double gain = rng.uniform(0.8, 1.25);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      // Distinct bins per channel from [1, max_bin - 1], then the
      // individual's offset.
      std::vector<std::size_t> pool(max_bin - 1);
      for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k + 1;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t j = b + rng.index(pool.size() - b);
        std::swap(pool[b], pool[j]);
        ind.bins.push_back(pool[b] + offset);
        ind.amplitudes.push_back(gain * rng.uniform(0.5, 1.5));
        ind.tone_phases.push_back(rng.uniform(0.0, kTwoPi));
      }
    }
    t.individuals.push_back(std::move(ind));
  }
  return t;
}

double driver_value(const SyntheticTruth& truth, std::size_t i, std::size_t b, double t) {
  const auto& ph = truth.individuals.at(i).driver_phases;
  double g = 0;
  for (std::size_t m = 0; m < 2; ++m)
    g += kDriverWeights[m] * std::sin(kTwoPi * truth.driver_freqs[b * 2 + m] * t + ph[b * 2 + m]);
  return g;
}

RawSession synthesize_session(const SyntheticSpec& spec, const SyntheticTruth& truth, std::size_t i) {
  if (i >= spec.individuals) fail(ErrorKind::IndexOutOfRange, "individual index out of range");
  const auto& ind = truth.individuals[i];
  const std::size_t B = spec.drivers, C = spec.channels;
  const std::size_t N = frame_samples(spec);
  const std::size_t T = std::size_t(std::floor(spec.duration_s * spec.sampling_rate_hz + 1e-9));
  const double fs = spec.sampling_rate_hz;
  Rng noise(derive_seed(spec.seed, {0x4E, i}));

  // Envelope per frame, evaluated at the frame centre.
  const std::size_t frames = (T + N - 1) / N;
  std::vector<double> env(frames * B);
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t b = 0; b < B; ++b)
      env[f * B + b] = 1.0 + spec.modulation * driver_value(truth, i, b, (double(f) + 0.5) * spec.stft_window_s);

  Vector eeg(static_cast<Eigen::Index>(C * T));
  const double eeg_noise = spec.noise_level * 2.0 / std::sqrt(double(N));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t n = 0; n < T; ++n) {
      const double t = double(n) / fs;
      const std::size_t f = n / N;
      double v = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t k = c * B + b;
        const double freq = double(ind.bins[k]) / spec.stft_window_s;
        v += 2.0 * ind.amplitudes[k] / double(N) * env[f * B + b] * std::sin(kTwoPi * freq * t + ind.tone_phases[k]);
      }
      if (eeg_noise > 0) v += eeg_noise * noise.normal();
      eeg[Eigen::Index(c * T + n)] = v;
    }

  const std::size_t K = volume_count(spec);
  const std::size_t V = truth.mixing.dim(0);
  const auto M = truth.mixing.as_matrix(V);
  Vector vol(static_cast<Eigen::Index>(K * V));
  Eigen::VectorXd h(static_cast<Eigen::Index>(B + 1));
  for (std::size_t k = 0; k < K; ++k) {
    const double t = double(k) * spec.tr_s;
    for (std::size_t b = 0; b < B; ++b) h[Eigen::Index(b)] = couple(spec, driver_value(truth, i, b, t - spec.hrf_shift_s));
    h[Eigen::Index(B)] = 1.0;
    Eigen::VectorXd logv = M * h;
    for (std::size_t v = 0; v < V; ++v) {
      double x = logv[Eigen::Index(v)];
      if (spec.noise_level > 0) x += spec.noise_level * noise.normal();
      vol[Eigen::Index(k * V + v)] = std::exp(x);
    }
  }

  RawSession s;
  s.individual_id = individual_id(i);
  s.eeg.sampling_rate_hz = fs;
  s.eeg.samples = Tensor({C, T}, std::move(eeg));
  s.fmri.tr_seconds = spec.tr_s;
  s.fmri.volumes = Tensor({K, spec.grid[0], spec.grid[1], spec.grid[2]}, std::move(vol));
  return s;
}

std::vector<RawSession> generate_synthetic(const SyntheticSpec& spec) {
  const SyntheticTruth truth = synthetic_truth(spec);
  std::vector<RawSession> out;
  for (std::size_t i = 0; i < spec.individuals; ++i) out.push_back(synthesize_session(spec, truth, i));
  return out;
}

json to_json_value(const SyntheticSpec& s) {
  return {{"individuals", s.individuals},
          {"duration_s", s.duration_s},
          {"channels", s.channels},
          {"sampling_rate_hz", s.sampling_rate_hz},
          {"grid", s.grid},
          {"tr_s", s.tr_s},
          {"coupling", to_string(s.coupling)},
          {"noise_level", s.noise_level},
          {"seed", s.seed},
          {"drivers", s.drivers},
          {"hrf_shift_s", s.hrf_shift_s},
          {"stft_window_s", s.stft_window_s},
          {"baseline", s.baseline},
          {"coupling_strength", s.coupling_strength},
          {"modulation", s.modulation}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  SyntheticSpec s;
  try {
    if (j.contains("preset")) s = synthetic_preset(j.at("preset").get<std::string>());
    for (const auto& [key, v] : j.items()) {
      if (key == "preset") continue;
      if (key == "individuals") s.individuals = v.get<std::size_t>();
      else if (key == "duration_s") s.duration_s = v.get<double>();
      else if (key == "channels") s.channels = v.get<std::size_t>();
      else if (key == "sampling_rate_hz") s.sampling_rate_hz = v.get<double>();
      else if (key == "grid") s.grid = v.get<std::array<std::size_t, 3>>();
      else if (key == "tr_s") s.tr_s = v.get<double>();
      else if (key == "coupling") s.coupling = coupling_from_string(v.get<std::string>());
      else if (key == "noise_level") s.noise_level = v.get<double>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "drivers") s.drivers = v.get<std::size_t>();
      else if (key == "hrf_shift_s") s.hrf_shift_s = v.get<double>();
      else if (key == "stft_window_s") s.stft_window_s = v.get<double>();
      else if (key == "baseline") s.baseline = v.get<double>();
      else if (key == "coupling_strength") s.coupling_strength = v.get<double>();
      else if (key == "modulation") s.modulation = v.get<double>();
      else fail(ErrorKind::InvalidSpec, "unknown synthetic spec key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidSpec, std::string("synthetic spec: ") + e.what());
  }
  return s;
}

void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticSpec& spec) {
  const SyntheticTruth truth = synthetic_truth(spec);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < spec.individuals; ++i) {
    const RawSession s = synthesize_session(spec, truth, i);
    save_session(root, s);
    ids.push_back(s.individual_id);
  }
  write_tensor(root / "coupling.bin", truth.mixing);
  json desc = {{"generator", "synthetic"},
               {"spec", to_json_value(spec)},
               {"coupling", {{"file", "coupling.bin"}, {"checksum", file_checksum(root / "coupling.bin")}}}};
  write_dataset_index(root, ids, desc.dump());
}

Tensor oracle_predict(const SyntheticSpec& spec, const SyntheticTruth& truth, std::size_t i, const Tensor& eeg,
                      std::size_t factor) {
  if (eeg.rank() != 3 || eeg.dim(0) != spec.channels)
    fail(ErrorKind::ShapeMismatch, "oracle expects an EEG window [channels, freq, steps]");
  const auto& ind = truth.individuals.at(i);
  const std::size_t B = spec.drivers, C = spec.channels, F = eeg.dim(1), W = eeg.dim(2);
  const std::size_t V = truth.mixing.dim(0);
  const auto M = truth.mixing.as_matrix(V);
  Vector out(static_cast<Eigen::Index>(W * V));
  Eigen::VectorXd h(static_cast<Eigen::Index>(B + 1));
  for (std::size_t w = 0; w < W; ++w) {
    for (std::size_t b = 0; b < B; ++b) {
      double g = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t k = c * B + b;
        if (ind.bins[k] >= F) fail(ErrorKind::ShapeMismatch, "EEG window lacks the modulated bins");
        const double mag = eeg[(c * F + ind.bins[k]) * W + w];
        g += (mag / ind.amplitudes[k] - 1.0) / spec.modulation;
      }
      h[Eigen::Index(b)] = couple(spec, g / double(C));
    }
    h[Eigen::Index(B)] = 1.0;
    out.segment(Eigen::Index(w * V), Eigen::Index(V)) = M * h;
  }
  FMRIVolumeSeries full;
  full.volumes = Tensor({W, spec.grid[0], spec.grid[1], spec.grid[2]}, std::move(out));
  full.tr_seconds = 1.0;
  full.log_scaled = true;
  return downsample_spatial(full, factor).volumes;
}

}  // namespace eegfmri

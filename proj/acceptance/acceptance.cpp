// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#define DOCTEST_CONFIG_DISABLE
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "eegfmri/architecture.hpp"
#include "eegfmri/experiment.hpp"
#include "eegfmri/gradcheck.hpp"
#include "eegfmri/hpo.hpp"
#include "eegfmri/io.hpp"
#include "eegfmri/layers.hpp"
#include "eegfmri/losses.hpp"
#include "eegfmri/metrics.hpp"
#include "eegfmri/models.hpp"
#include "eegfmri/ops.hpp"
#include "eegfmri/pairing.hpp"
#include "eegfmri/random.hpp"
#include "eegfmri/signal.hpp"
#include "eegfmri/synthetic.hpp"
#include "fixtures.hpp"

using namespace eegfmri;
using eegfmri::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), sizeof(double) * std::size_t(a.data().size())) == 0;
}

bool bit_equal(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].size() != b[i].size() ||
        std::memcmp(a[i].data(), b[i].data(), sizeof(double) * std::size_t(a[i].size())) != 0)
      return false;
  return true;
}

LayerParams layer(LayerKind kind, LayerHyper h, Tensor w, Tensor b) {
  return make_layer(kind, std::move(h), std::move(w), std::move(b));
}

// Random conv geometry with input length chosen so that conv and transposed
// conv map exactly between the two sizes.
struct ConvCase {
  LayerHyper hyper;
  Shape in, out;  // conv input / output shapes
};

ConvCase random_conv_case(Rng& rng) {
  ConvCase c;
  const std::size_t dims = 1 + rng.index(3);
  c.hyper.in_channels = 1 + rng.index(3);
  c.hyper.out_channels = 1 + rng.index(3);
  c.in = {c.hyper.in_channels};
  c.out = {c.hyper.out_channels};
  for (std::size_t a = 0; a < dims; ++a) {
    const std::size_t k = 1 + rng.index(3), s = 1 + rng.index(2), p = rng.index(k);
    std::size_t m = 1 + rng.index(dims == 3 ? 3 : 4);
    while ((m - 1) * s + k < 2 * p + 1) ++m;
    c.hyper.kernel.push_back(k);
    c.hyper.stride.push_back(s);
    c.hyper.padding.push_back(p);
    c.in.push_back((m - 1) * s + k - 2 * p);
    c.out.push_back(m);
  }
  return c;
}

// 1. analytic vs central-difference gradients
Outcome gradients() {
  double worst = 0;
  std::string where;
  auto track = [&](const std::string& name, const GradCheckResult& r) {
    if (r.max_relative_error > worst || !std::isfinite(r.max_relative_error)) {
      worst = r.max_relative_error;
      where = name;
    }
  };
  auto check = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    track(name, finite_diff_check(f, x.clone(true)));
  };
  Rng rng(101);
  for (std::uint64_t t = 0; t < 12; ++t) {
    const ConvCase c = random_conv_case(rng);
    const Shape ws = weight_shape(LayerKind::Conv, c.hyper), bs = bias_shape(LayerKind::Conv, c.hyper);
    const Tensor x = random_tensor(c.in, 10 * t), w = random_tensor(ws, 10 * t + 1), b = random_tensor(bs, 10 * t + 2);
    const Tensor r = random_tensor(c.out, 10 * t + 3);
    auto obj = [&](const Tensor& y, const Tensor& rr) { return sum(mul(tanh(y), rr)); };
    check("conv/input", [&](const Tensor& v) { return obj(conv_forward(v, layer(LayerKind::Conv, c.hyper, w, b)), r); }, x);
    check("conv/weights", [&](const Tensor& v) { return obj(conv_forward(x, layer(LayerKind::Conv, c.hyper, v, b)), r); }, w);
    check("conv/bias", [&](const Tensor& v) { return obj(conv_forward(x, layer(LayerKind::Conv, c.hyper, w, v)), r); }, b);

    LayerHyper th = c.hyper;
    std::swap(th.in_channels, th.out_channels);
    const Shape tws = weight_shape(LayerKind::ConvTranspose, th), tbs = bias_shape(LayerKind::ConvTranspose, th);
    const Tensor tx = random_tensor(c.out, 10 * t + 4), tw = random_tensor(tws, 10 * t + 5);
    const Tensor tb = random_tensor(tbs, 10 * t + 6), tr = random_tensor(c.in, 10 * t + 7);
    auto tf = [&](const Tensor& in, const Tensor& wt, const Tensor& bt) {
      return obj(conv_transpose_forward(in, layer(LayerKind::ConvTranspose, th, wt, bt)), tr);
    };
    check("convT/input", [&](const Tensor& v) { return tf(v, tw, tb); }, tx);
    check("convT/weights", [&](const Tensor& v) { return tf(tx, v, tb); }, tw);
    check("convT/bias", [&](const Tensor& v) { return tf(tx, tw, v); }, tb);

    LayerHyper dh;
    dh.in_channels = 1 + rng.index(4);
    dh.out_channels = 1 + rng.index(4);
    const std::size_t rows = 1 + rng.index(4);
    const Tensor dx = random_tensor({rows, dh.in_channels}, 10 * t + 8);
    const Tensor dw = random_tensor(weight_shape(LayerKind::Dense, dh), 10 * t + 9);
    const Tensor db = random_tensor(bias_shape(LayerKind::Dense, dh), 10 * t + 11);
    const Tensor dr = random_tensor({rows, dh.out_channels}, 10 * t + 12);
    auto df = [&](const Tensor& in, const Tensor& wt, const Tensor& bt) {
      return obj(dense_forward(in, layer(LayerKind::Dense, dh, wt, bt)), dr);
    };
    check("dense/input", [&](const Tensor& v) { return df(v, dw, db); }, dx);
    check("dense/weights", [&](const Tensor& v) { return df(dx, v, db); }, dw);
    check("dense/bias", [&](const Tensor& v) { return df(dx, dw, v); }, db);

    LayerHyper gh;
    gh.in_channels = 1 + rng.index(3);
    gh.out_channels = 1 + rng.index(3);
    const std::size_t steps = 1 + rng.index(5);
    const Tensor gx = random_tensor({steps, gh.in_channels}, 10 * t + 13);
    const Tensor gw = random_tensor(weight_shape(LayerKind::GRU, gh), 10 * t + 14);
    const Tensor gb = random_tensor(bias_shape(LayerKind::GRU, gh), 10 * t + 15);
    const Tensor gr = random_tensor({steps, gh.out_channels}, 10 * t + 16);
    auto gf = [&](const Tensor& in, const Tensor& wt, const Tensor& bt) {
      return sum(mul(gru_seq2seq_forward(in, layer(LayerKind::GRU, gh, wt, bt)), gr));
    };
    check("gru/input", [&](const Tensor& v) { return gf(v, gw, gb); }, gx);
    check("gru/weights", [&](const Tensor& v) { return gf(gx, v, gb); }, gw);
    check("gru/bias", [&](const Tensor& v) { return gf(gx, gw, v); }, gb);

    // losses on small random shapes
    const Shape fs{2 + rng.index(3), 1 + rng.index(3), 2, 1 + rng.index(2)};
    const Tensor truth = random_tensor(fs, 10 * t + 17), pred = random_tensor(fs, 10 * t + 18);
    check("epv/pred", [&](const Tensor& v) { return epv_loss(truth, v); }, pred);
    const Tensor a = random_tensor({4, 3}, 10 * t + 19), o = random_tensor({4, 3}, 10 * t + 20);
    const double margin = 2.0;  // above every mean |a - o| on [-1, 1], so the hinge stays active
    for (int y : {0, 1})
      check("contrastive/y=" + std::to_string(y),
            [&](const Tensor& v) { return contrastive_loss(mean_abs_diff(v, o), y, margin); }, a);
    const double theta = rng.uniform();
    check("combined", [&](const Tensor& v) {
      return encoder_combined_loss(contrastive_loss(mean_abs_diff(v, truth), 0, margin), epv_loss(truth, v), theta);
    }, pred);
    const Tensor logits_real = random_tensor({3, 1}, 10 * t + 21), logits_fake = random_tensor({3, 1}, 10 * t + 22);
    check("gan/real", [&](const Tensor& v) {
      return adversarial_losses(sigmoid(v), sigmoid(logits_fake), AdversarialMode::Entropy).discriminator;
    }, logits_real);
    check("gan/fake", [&](const Tensor& v) {
      return adversarial_losses(sigmoid(logits_real), sigmoid(v), AdversarialMode::Entropy).discriminator;
    }, logits_fake);
    check("gan/generator", [&](const Tensor& v) {
      return generator_adversarial_loss(sigmoid(v), AdversarialMode::Entropy);
    }, logits_fake);
    check("wgan/critic", [&](const Tensor& v) {
      return adversarial_losses(tanh(v), tanh(logits_fake), AdversarialMode::EarthMover).discriminator;
    }, logits_real);
    check("wgan/generator", [&](const Tensor& v) {
      return generator_adversarial_loss(tanh(v), AdversarialMode::EarthMover);
    }, logits_fake);
  }
  return {worst < 1e-4, fmt("max relative error %.2e", worst) + " (worst: " + where + ", bound 1e-4)"};
}

// 2. <conv(x), y> = <x, conv^T(y)>
Outcome adjoint() {
  Rng rng(202);
  double worst = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const ConvCase c = random_conv_case(rng);
    const Tensor w = random_tensor(weight_shape(LayerKind::Conv, c.hyper), 3 * t);
    const Tensor x = random_tensor(c.in, 3 * t + 1), y = random_tensor(c.out, 3 * t + 2);
    LayerHyper th = c.hyper;
    std::swap(th.in_channels, th.out_channels);
    const Tensor cx = conv_forward(x, layer(LayerKind::Conv, c.hyper, w, Tensor::zeros({c.hyper.out_channels})));
    const Tensor cty =
        conv_transpose_forward(y, layer(LayerKind::ConvTranspose, th, w, Tensor::zeros({c.hyper.in_channels})));
    if (cx.shape() != y.shape() || cty.shape() != x.shape()) return {false, "shape mismatch in case " + std::to_string(t)};
    double lhs = 0, rhs = 0;
    for (Eigen::Index i = 0; i < y.data().size(); ++i) lhs += cx.data()[i] * y.data()[i];
    for (Eigen::Index i = 0; i < x.data().size(); ++i) rhs += x.data()[i] * cty.data()[i];
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return {worst < 1e-10, fmt("100 configurations, max |<Ax,y> - <x,A'y>| = %.2e (bound 1e-10)", worst)};
}

// 3. window constants against brute-force enumeration on the common grid
Outcome pipeline_constants() {
  const PreprocessConfig cfg;  // 25.2 s windows, 1.8 s step, 5.4 s shift
  std::size_t total = 0;
  std::string notes;
  for (const char* preset : {"noddi_like", "tiny"}) {
    SyntheticSpec s = synthetic_preset(preset);
    s.individuals = 1;
    if (std::string(preset) == "noddi_like") {
      s.channels = 2;
      s.sampling_rate_hz = 250;
    }
    const RawSession raw = synthesize_session(s, synthetic_truth(s), 0);
    StftOptions so;
    so.window_seconds = cfg.stft_window_s;
    EEGSpectrogram spec = stft(raw.eeg, so);
    FMRIVolumeSeries bold = downsample_spatial(log_scale(raw.fmri, cfg.log_offset), cfg.downsample_factor);
    const double start = std::max(spec.start_seconds, bold.start_seconds);
    spec = resample(spec, cfg.step_s, start);
    bold = resample(bold, cfg.step_s, start);

    // grid points covered by one window
    std::size_t w = 0;
    while (double(w) * cfg.step_s < cfg.window_s - 1e-9) ++w;
    struct Pair { std::size_t a, b; };
    std::vector<Pair> expected;
    for (std::size_t a = 0; a + w <= spec.time_steps(); a += w)
      for (std::size_t b = 0; b + w <= bold.time_steps(); ++b)
        if (std::abs((double(b) - double(a)) * cfg.step_s - cfg.shift_s) < 1e-9) expected.push_back({a, b});

    const auto got = partition_windows(spec, bold, cfg.window_s, cfg.shift_s);
    const auto full = preprocess_recording(raw.eeg, raw.fmri, cfg);
    if (got.size() != expected.size() || full.size() != expected.size())
      return {false, std::string(preset) + ": window count differs from enumeration"};
    const std::size_t C = spec.channels(), F = spec.freq_bins(), T = spec.time_steps();
    const std::size_t vox = bold.voxels();
    for (std::size_t k = 0; k < expected.size(); ++k) {
      const auto [a, b] = expected[k];
      if (w != 14 || b - a != 3) return {false, std::string(preset) + ": window not 14 steps / offset not 3"};
      Vector e(Eigen::Index(C * F * w)), f(Eigen::Index(w * vox));
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t q = 0; q < F; ++q)
          for (std::size_t j = 0; j < w; ++j)
            e[Eigen::Index((c * F + q) * w + j)] = spec.values.data()[Eigen::Index((c * F + q) * T + a + j)];
      for (std::size_t j = 0; j < w * vox; ++j) f[Eigen::Index(j)] = bold.volumes.data()[Eigen::Index(b * vox + j)];
      const Tensor et({C, F, w}, e), ft({w, bold.grid()[0], bold.grid()[1], bold.grid()[2]}, f);
      if (!bit_equal(got[k].eeg, et) || !bit_equal(got[k].fmri, ft) || !bit_equal(full[k].eeg, et) ||
          !bit_equal(full[k].fmri, ft))
        return {false, std::string(preset) + ": window contents differ from the enumerated slabs"};
    }
    total += expected.size();
    notes += std::string(notes.empty() ? "" : ", ") + preset + " " + std::to_string(expected.size());
  }
  return {true, std::to_string(total) + " windows (" + notes + "), all 14 steps, fMRI offset 3 steps"};
}

// 4. negative pairs never aligned, positives = windows, 2x2 full set = 4
Outcome pairing_oracle() {
  std::size_t batches = 0, checked = 0;
  const auto sessions = eegfmri::testing::tiny_sessions(4);
  std::size_t windows = 0;
  for (const auto& s : sessions) windows += s.windows.size();
  if (make_positive_pairs(sessions).size() != windows) return {false, "positive count differs from window count"};
  TrainConfig c;
  for (std::uint64_t e = 0; e < 200; ++e) {
    NegativePairOptions opt;
    opt.limit = windows;
    opt.seed = derive_seed(e, {0x4E});
    for (const auto& p : make_negative_pairs(sessions, opt)) {
      const bool same = p.eeg_individual == p.fmri_individual;
      const bool aligned = std::abs(p.t_fmri - (p.t_eeg + 5.4)) <= 1e-6;
      if (same && aligned) return {false, "an aligned same-individual negative was drawn"};
      ++checked;
    }
    ++batches;
  }
  const auto toy = eegfmri::testing::toy_sessions(2, 2);
  std::size_t brute = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t wi = 0; wi < 2; ++wi)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t wj = 0; wj < 2; ++wj) {
          const bool same = i == j;
          const bool aligned = std::abs(toy[j].windows[wj].t_fmri - toy[i].windows[wi].t_fmri) < 1e-9;
          brute += !same && !aligned;
        }
  const std::size_t full = make_negative_pairs(toy).size();
  return {full == 4 && brute == 4,
          std::to_string(checked) + " sampled negatives over " + std::to_string(batches) +
              " draws clean; positives " + std::to_string(windows) + " = windows; 2x2 full set " +
              std::to_string(full) + " (enumeration " + std::to_string(brute) + ")"};
}

// 5. metric cross-consistency
Outcome metric_consistency() {
  double worst_lcfv = 0;
  bool kl_ok = true;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Tensor a = random_tensor({5, 12}, 2 * s), b = random_tensor({5, 12}, 2 * s + 1);
    const RowMatrix ma = volume_matrix(a), mb = volume_matrix(b);
    const double dot = (ma.array() * mb.array()).sum();
    const double c = dot / (std::sqrt(ma.array().square().sum()) * std::sqrt(mb.array().square().sum()));
    worst_lcfv = std::max(worst_lcfv, std::abs(metric::lcfv_unclamped(ma, mb) - std::log(1.0 - c)));
    if (!(kl(a, b) >= 0.0) || kl(a, a) != 0.0) kl_ok = false;
  }
  double worst_rel = 0;
  bool dyadic_exact = true;
  for (std::size_t n : {4u, 16u, 64u})
    for (double c : {0.5, 1.25, 3.0, -2.0}) {
      const Tensor r = Tensor::full({3, n}, c), z = Tensor::zeros({3, n});
      if (mae(r, z) != epv_metric(r, z) * std::sqrt(double(n))) dyadic_exact = false;
    }
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng.index(50);
    const double c = rng.uniform(-5, 5);
    const Tensor r = Tensor::full({4, n}, c), z = Tensor::zeros({4, n});
    worst_rel = std::max(worst_rel, std::abs(mae(r, z) - epv_metric(r, z) * std::sqrt(double(n))) / std::abs(c));
  }
  const bool ok = worst_lcfv < 1e-9 && kl_ok && dyadic_exact && worst_rel < 1e-14;
  return {ok, fmt("LCFV vs ln(1-CFV) max %.1e; MAE vs EPV*sqrt(N): exact on dyadic residuals, max rel %.1e otherwise; ", worst_lcfv,
                  worst_rel) +
                  (kl_ok ? "KL >= 0 and KL(p,p) = 0 on 1000 pairs" : "KL property violated")};
}

// 6. AE and LCOMB learn the linear synthetic coupling
Outcome learning_smoke() {
  const auto [train_part, held_out] = eegfmri::testing::split_windows(eegfmri::testing::tiny_sessions(3));
  const auto val_pairs = make_positive_pairs(held_out);
  const DataShapes shapes{val_pairs.front().eeg.shape(), val_pairs.front().fmri.shape()};
  bool ok = true;
  std::string detail;
  for (auto p : {Procedure::AE, Procedure::LCOMB}) {
    TrainConfig c;
    c.procedure = p;
    c.learning_rate = 0.1;
    c.batch_size = 4;
    c.epochs = 200;
    c.seed = 1;
    const double before = validation_epv(init_model(shapes, c), val_pairs);
    const TrainedModel m = train(train_part, c, held_out);
    const double after = validation_epv(m, val_pairs);
    const double cfv_mean = evaluate_all(m, held_out)[Metric::CFV].mean;
    const double ratio = after / before;
    ok = ok && ratio <= 0.5 && cfv_mean >= 0.8;
    detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(p)) +
              fmt(" val EPV %.6f -> %.6f (ratio %.4f <= 0.5), CFV %.4f >= 0.8", before, after, ratio, cfv_mean);
  }
  return {ok, detail};
}

// 7. LCOMB at theta = 0 reproduces AE encoder gradients bit for bit
Outcome theta_endpoint() {
  const auto sessions = eegfmri::testing::tiny_sessions(3);
  const auto positives = make_positive_pairs(sessions);
  const DataShapes shapes{positives.front().eeg.shape(), positives.front().fmri.shape()};
  TrainConfig ae;
  ae.learning_rate = 0.05;
  ae.seed = 9;
  ae.record_gradients = true;
  TrainConfig lc = ae;
  lc.procedure = Procedure::LCOMB;
  lc.loss.theta = 0.0;
  TrainedModel ma = init_model(shapes, ae), ml = init_model(shapes, lc);
  Trainer ta(ma, ae), tl(ml, lc);
  std::size_t steps = 0;
  for (std::uint64_t e = 0; e < 5; ++e) {
    NegativePairOptions opt;
    opt.limit = positives.size();
    opt.seed = e;
    const auto neg = make_negative_pairs(sessions, opt);
    for (std::size_t b = 0; b * 8 < positives.size(); ++b) {
      Batch batch;
      for (std::size_t i = b * 8; i < std::min(positives.size(), b * 8 + 8); ++i) {
        batch.positives.push_back(positives[(i * 7 + e) % positives.size()]);
        batch.negatives.push_back(neg[i]);
      }
      ta.step(batch, derive_seed(e, {b}));
      tl.step(batch, derive_seed(e, {b}));
      if (!bit_equal(ta.last_gradients()[kEEGEncoder], tl.last_gradients()[kEEGEncoder]))
        return {false, "encoder gradients differ at step " + std::to_string(steps)};
      ++steps;
    }
  }
  // the full training loop agrees as well
  TrainConfig ae2 = ae, lc2 = lc;
  ae2.record_gradients = lc2.record_gradients = false;
  ae2.epochs = lc2.epochs = 3;
  const TrainedModel fa = train(sessions, ae2), fl = train(sessions, lc2);
  std::vector<Vector> pa, pl;
  for (const auto& t : fa.net(kEEGEncoder).parameters()) pa.push_back(t.data());
  for (const auto& t : fl.net(kEEGEncoder).parameters()) pl.push_back(t.data());
  if (!bit_equal(pa, pl)) return {false, "trained encoders differ"};
  return {true, std::to_string(steps) + " steps with bit-identical encoder gradients; trained encoders identical"};
}

// 8. adversarial value behaviour
Outcome adversarial_sanity() {
  // real windows lifted well above anything the untrained generator emits
  auto sessions = eegfmri::testing::tiny_sessions(2);
  for (auto& s : sessions)
    for (auto& w : s.windows) w.fmri = add_scalar(w.fmri, 3.0);
  const auto positives = make_positive_pairs(sessions);
  TrainConfig c;
  c.procedure = Procedure::WGAN;
  c.learning_rate = 1e-3;
  c.seed = 2;
  TrainedModel m = init_model({positives.front().eeg.shape(), positives.front().fmri.shape()}, c);
  Trainer t(m, c);
  Batch batch;
  batch.positives.assign(positives.begin(), positives.begin() + 8);
  std::vector<Vector> gen_before;
  for (auto comp : {kEEGEncoder, kDecoder})
    for (const auto& p : m.net(comp).parameters()) gen_before.push_back(p.data());
  std::vector<double> values;
  for (int i = 0; i <= 10; ++i) values.push_back(t.discriminator_phase(batch, 77));
  bool increasing = true;
  for (std::size_t i = 1; i < values.size(); ++i) increasing = increasing && values[i] > values[i - 1];
  std::vector<Vector> gen_after;
  for (auto comp : {kEEGEncoder, kDecoder})
    for (const auto& p : m.net(comp).parameters()) gen_after.push_back(p.data());
  const bool frozen = bit_equal(gen_before, gen_after);
  const Tensor half = Tensor::full({4, 1}, 0.5);
  const double v = adversarial_losses(half, half, AdversarialMode::Entropy).value.item();
  const double err = std::abs(v + 2 * std::log(2.0));
  return {increasing && frozen && err < 1e-12,
          fmt("WGAN value %.10f -> %.10f over 10 critic steps", values.front(), values.back()) +
              (increasing ? " (strictly increasing)" : " (NOT strictly increasing)") +
              (frozen ? ", generator unchanged" : ", generator moved") +
              fmt("; entropy value at D=0.5 off -2 ln 2 by %.1e", err)};
}

// 9. top-k self query and weight normalization
Outcome topk() {
  double worst_sum = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::vector<Tensor> cands;
    for (std::uint64_t j = 0; j < 8; ++j) cands.push_back(random_tensor({6, 3}, 100 * s + j));
    const std::size_t q = s % 8;
    const auto self = topk_combination(cands[q], cands, 1);
    if (self.indices != std::vector<std::size_t>{q} || !bit_equal(self.combined, cands[q]))
      return {false, "self query did not return the query encoding"};
    const Tensor query = random_tensor({6, 3}, 100 * s + 99);
    for (std::size_t k = 1; k <= cands.size(); ++k) {
      try {
        const auto r = topk_combination(query, cands, k);
        double total = 0;
        for (double w : r.weights) total += w;
        worst_sum = std::max(worst_sum, std::abs(total - 1.0));
      } catch (const Error& e) {
        // a zero correlation total cannot be normalized; anything else is a failure
        if (e.kind() != ErrorKind::DegenerateEncoding) throw;
      }
    }
  }
  return {worst_sum < 1e-12, fmt("self query exact on 50 sets; max |sum w - 1| = %.1e over k = 1..8", worst_sum)};
}

// 10. BO and NAS on mock objectives
Outcome hpo() {
  HyperParamSpace line;
  line.add(Dimension{"x", DimensionKind::Uniform, 0.0, 1.0, {}});
  const Objective quad = [](const ParamPoint& p, std::uint64_t) -> std::optional<double> {
    return (p.at("x") - 0.3) * (p.at("x") - 0.3);
  };
  double grid_x = 0, grid_v = 1e300;
  for (int i = 0; i <= 100000; ++i) {
    ParamPoint p;
    p.values["x"] = i / 100000.0;
    if (*quad(p, 0) < grid_v) grid_v = *quad(p, 0), grid_x = p.at("x");
  }
  BoOptions bo;
  bo.n_iter = 50;
  bo.seed = 5;
  const BoResult a = bo_optimize(line, quad, bo), b = bo_optimize(line, quad, bo);
  const double dist = std::abs(a.best.params.at("x") - grid_x);
  bool bo_repro = a.trials.size() == b.trials.size();
  for (std::size_t i = 0; bo_repro && i < a.trials.size(); ++i) bo_repro = a.trials[i].params == b.trials[i].params;

  const std::vector<double> per_depth = {5, 3, 3.5};
  const DepthObjective mock = [&](std::size_t d, const ParamPoint& p, std::uint64_t) -> std::optional<double> {
    return per_depth.at(d - 1) + 1e-3 * std::abs(p.at("x") - 0.5);
  };
  NasOptions nas;
  nas.n_iter_per_depth = 10;
  nas.seed = 5;
  const auto space = [&](std::size_t) { return line; };
  const NasResult n1 = nas_depth_search(space, mock, nas), n2 = nas_depth_search(space, mock, nas);
  const bool nas_repro = n1.depth == n2.depth && n1.best.params == n2.best.params;
  return {dist < 0.05 && bo_repro && n1.depth == 2 && nas_repro,
          fmt("BO best x %.4f vs grid %.4f (|d| = %.4f < 0.05)", a.best.params.at("x"), grid_x, dist) +
              (bo_repro ? ", reproducible" : ", NOT reproducible") + "; NAS [5, 3, 3.5] -> depth " +
              std::to_string(n1.depth) + (nas_repro ? ", reproducible" : ", NOT reproducible")};
}

ExperimentConfig e2e_config(Procedure p, const fs::path& out) {
  ExperimentConfig c;
  c.synthetic = synthetic_preset("tiny");
  c.synthetic.individuals = 4;
  c.train.procedure = p;
  c.train.epochs = 4;
  c.train.topk_pretrain_epochs = 2;
  c.train.learning_rate = 0.05;
  c.train.batch_size = 4;
  c.rng_seed = 31;
  c.output_dir = out.string();
  return c;
}

// 11. repeated train + evaluate runs give identical CSV bytes
Outcome determinism(const fs::path& root) {
  std::string detail;
  bool ok = true;
  for (auto p : {Procedure::AE, Procedure::LCOMB, Procedure::GAN, Procedure::WGAN, Procedure::TOPK}) {
    std::string bytes[2];
    for (int r = 0; r < 2; ++r) {
      const fs::path dir = root / ("det_" + std::string(to_string(p)) + "_" + std::to_string(r));
      fs::remove_all(dir);
      const auto trained = run_train(e2e_config(p, dir));
      if (trained.diverged) return {false, std::string(to_string(p)) + " diverged"};
      run_evaluate(dir);
      bytes[r] = read_file(dir / "metrics.csv");
    }
    const bool same = !bytes[0].empty() && bytes[0] == bytes[1];
    ok = ok && same;
    detail += std::string(detail.empty() ? "" : ", ") + std::string(to_string(p)) + (same ? " identical" : " DIFFER");
  }
  return {ok, "metrics.csv " + detail};
}

// 12. the exploding-gradient configuration stops with diagnostics
Outcome failure_mode(const fs::path& root) {
  const fs::path dir = root / "exploding";
  fs::remove_all(dir);
  ExperimentConfig c = e2e_config(Procedure::GAN, dir);
  c.train.learning_rate = 1e-3;
  c.train.clip_norm = 0.0;
  c.train.init_gain = 5.0;
  const auto res = run_experiment(c);
  if (!res.diverged || !res.diagnostics) return {false, "training finished without NonFiniteLoss"};
  const bool no_outputs = !fs::exists(dir / "metrics.csv") && !fs::exists(dir / "slices") &&
                          !fs::exists(dir / "checkpoint.efck") && fs::exists(dir / "diagnostics.json");
  bool refused = false;
  try {
    run_evaluate(dir);
  } catch (const Error& e) {
    refused = e.kind() == ErrorKind::NonFiniteLoss;
  }
  const auto& d = *res.diagnostics;
  return {no_outputs && refused, "NonFiniteLoss at epoch " + std::to_string(d.epoch) + ", batch " +
                                     std::to_string(d.batch) + ", phase " + d.phase + "; " +
                                     (no_outputs ? "no volumes or metrics written" : "outputs were written") +
                                     (refused ? ", evaluation refused" : ", evaluation NOT refused")};
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "eegfmri_acceptance";
  fs::create_directories(root);
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double time_limit_s;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradients, 60},
      {2, "convolution adjoint", adjoint, 0},
      {3, "pipeline constants", pipeline_constants, 0},
      {4, "pairing oracle", pairing_oracle, 0},
      {5, "metric cross-consistency", metric_consistency, 0},
      {6, "learning smoke test", learning_smoke, 300},
      {7, "theta endpoint", theta_endpoint, 0},
      {8, "adversarial sanity", adversarial_sanity, 0},
      {9, "top-k combination", topk, 0},
      {10, "hyperparameter search", hpo, 0},
      {11, "end-to-end determinism", [&] { return determinism(root); }, 0},
      {12, "failure-mode fidelity", [&] { return failure_mode(root); }, 0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
      o.pass = false;
      o.detail += fmt(" [time limit %.0f s exceeded]", c.time_limit_s);
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  fs::remove_all(root);
  std::printf("%zu/%zu criteria passed\n", criteria.size() - std::size_t(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}

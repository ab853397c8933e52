// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/signal.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "eegfmri/error.hpp"

namespace eegfmri {
namespace {

constexpr double kGridTolerance = 1e-6;

std::size_t samples_of(double seconds, double rate, const char* what) {
  const double exact = seconds * rate;
  const double rounded = std::round(exact);
  if (!(seconds > 0) || rounded < 1 || std::abs(exact - rounded) > 1e-9 * std::max(1.0, exact))
    fail(ErrorKind::InvalidArgument, std::string(what) + " of " + std::to_string(seconds) +
                                         " s is not a positive whole number of samples at " +
                                         std::to_string(rate) + " Hz");
  return static_cast<std::size_t>(rounded);
}

Eigen::VectorXd make_window(WindowFunction fn, std::size_t n) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(Eigen::Index(n));
  if (fn == WindowFunction::Hann && n > 1) {
    for (std::size_t i = 0; i < n; ++i)
      w[Eigen::Index(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n));
  }
  return w;
}

}  // namespace

Eigen::VectorXd frame_magnitudes(const Eigen::Ref<const Eigen::VectorXd>& frame) {
  const Eigen::Index n = frame.size();
  Eigen::FFT<double> fft;
  Eigen::VectorXcd spectrum;
  Eigen::VectorXd in = frame;
  fft.fwd(spectrum, in);
  return spectrum.head(n / 2 + 1).cwiseAbs();
}

EEGSpectrogram stft(const EEGRecording& rec, const StftOptions& options) {
  if (!(rec.sampling_rate_hz > 0)) fail(ErrorKind::InvalidArgument, "sampling rate must be positive");
  if (rec.samples.rank() != 2) fail(ErrorKind::ShapeMismatch, "EEG samples must be [channels, time]");
  if (!rec.samples.data().allFinite()) fail(ErrorKind::DomainError, "EEG contains non-finite samples");
  const std::size_t win = samples_of(options.window_seconds, rec.sampling_rate_hz, "STFT window");
  const double hop_s = options.hop_seconds > 0 ? options.hop_seconds : options.window_seconds;
  const std::size_t hop = samples_of(hop_s, rec.sampling_rate_hz, "STFT hop");
  const std::size_t len = rec.length();
  if (win > len)
    fail(ErrorKind::WindowTooLong, "window of " + std::to_string(win) + " samples exceeds recording of " +
                                       std::to_string(len));

  const std::size_t channels = rec.channels();
  const std::size_t frames = (len - win) / hop + 1;
  const std::size_t bins = win / 2 + 1;
  const Eigen::VectorXd taper = make_window(options.window, win);
  const auto samples = rec.samples.as_matrix(channels);

  Eigen::FFT<double> fft;
  Eigen::VectorXd frame(static_cast<Eigen::Index>(win));
  Eigen::VectorXcd spectrum;
  Vector out(Eigen::Index(channels * bins * frames));
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < frames; ++k) {
      frame = samples.row(Eigen::Index(c)).segment(Eigen::Index(k * hop), Eigen::Index(win)).transpose();
      frame.array() *= taper.array();
      fft.fwd(spectrum, frame);
      for (std::size_t f = 0; f < bins; ++f)
        out[Eigen::Index((c * bins + f) * frames + k)] = std::abs(spectrum[Eigen::Index(f)]);
    }
  }
  EEGSpectrogram spec;
  spec.values = Tensor({channels, bins, frames}, std::move(out));
  spec.step_seconds = double(hop) / rec.sampling_rate_hz;
  spec.start_seconds = 0.5 * double(win) / rec.sampling_rate_hz;
  return spec;
}

FMRIVolumeSeries log_scale(const FMRIVolumeSeries& fmri, double offset) {
  if (fmri.log_scaled) fail(ErrorKind::AlreadyScaled, "fMRI series is already log-scaled");
  const Vector& v = fmri.volumes.data();
  if ((v.array() + offset <= 0.0).any())
    fail(ErrorKind::DomainError, "log_scale needs values > -offset");
  FMRIVolumeSeries out = fmri;
  out.volumes = Tensor(fmri.volumes.shape(), (v.array() + offset).log().matrix());
  out.log_scaled = true;
  return out;
}

FMRIVolumeSeries downsample_spatial(const FMRIVolumeSeries& fmri, std::size_t factor) {
  if (factor < 1) fail(ErrorKind::InvalidFactor, "downsampling factor must be >= 1");
  if (factor == 1) return fmri;
  const std::size_t T = fmri.time_steps();
  const auto [X, Y, Z] = fmri.grid();
  const std::size_t ox = (X + factor - 1) / factor, oy = (Y + factor - 1) / factor,
                    oz = (Z + factor - 1) / factor;
  Vector out = Vector::Zero(Eigen::Index(T * ox * oy * oz));
  const Vector& in = fmri.volumes.data();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t bx = 0; bx < ox; ++bx)
      for (std::size_t by = 0; by < oy; ++by)
        for (std::size_t bz = 0; bz < oz; ++bz) {
          double acc = 0;
          std::size_t count = 0;
          for (std::size_t x = bx * factor; x < std::min(X, (bx + 1) * factor); ++x)
            for (std::size_t y = by * factor; y < std::min(Y, (by + 1) * factor); ++y)
              for (std::size_t z = bz * factor; z < std::min(Z, (bz + 1) * factor); ++z) {
                acc += in[Eigen::Index(((t * X + x) * Y + y) * Z + z)];
                ++count;
              }
          out[Eigen::Index(((t * ox + bx) * oy + by) * oz + bz)] = acc / double(count);
        }
  FMRIVolumeSeries res = fmri;
  res.volumes = Tensor({T, ox, oy, oz}, std::move(out));
  return res;
}

Tensor resample_time(const Tensor& series, std::size_t time_axis, double src_step, double dst_step,
                     double offset) {
  if (!(src_step > 0) || !(dst_step > 0)) fail(ErrorKind::InvalidArgument, "time steps must be positive");
  if (time_axis >= series.rank()) fail(ErrorKind::ShapeMismatch, "time axis out of range");
  const Shape& shape = series.shape();
  const std::size_t n = shape[time_axis];
  if (n < 2) fail(ErrorKind::TooFewPoints, "resampling needs at least 2 time points, got " + std::to_string(n));
  const double span = double(n - 1) * src_step;
  if (offset < -kGridTolerance || offset > span + kGridTolerance)
    fail(ErrorKind::TooFewPoints, "resampling offset lies outside the series");
  const std::size_t count = std::size_t(std::floor((span - offset) / dst_step + kGridTolerance)) + 1;

  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < time_axis; ++a) outer *= shape[a];
  for (std::size_t a = time_axis + 1; a < shape.size(); ++a) inner *= shape[a];

  // Interpolation stencil per destination time.
  std::vector<std::size_t> lo(count);
  std::vector<double> frac(count);
  for (std::size_t j = 0; j < count; ++j) {
    const double pos = (offset + double(j) * dst_step) / src_step;
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) < 1e-9) {
      const auto i = std::size_t(std::clamp(nearest, 0.0, double(n - 1)));
      lo[j] = std::min(i, n - 2);
      frac[j] = i == n - 1 ? 1.0 : 0.0;
    } else {
      const auto i = std::size_t(std::clamp(std::floor(pos), 0.0, double(n - 2)));
      lo[j] = i;
      frac[j] = std::clamp(pos - double(i), 0.0, 1.0);
    }
  }

  Shape out_shape = shape;
  out_shape[time_axis] = count;
  Vector out(Eigen::Index(outer * count * inner));
  const Vector& in = series.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < count; ++j) {
      const double* a = in.data() + (o * n + lo[j]) * inner;
      const double* b = a + inner;
      double* dst = out.data() + (o * count + j) * inner;
      const double f = frac[j];
      for (std::size_t q = 0; q < inner; ++q) {
        if (f == 0.0)
          dst[q] = a[q];
        else if (f == 1.0)
          dst[q] = b[q];
        else
          dst[q] = a[q] + f * (b[q] - a[q]);
      }
    }
  return Tensor(out_shape, std::move(out));
}

EEGSpectrogram resample(const EEGSpectrogram& eeg, double dst_step, double start_seconds) {
  EEGSpectrogram out = eeg;
  out.values = resample_time(eeg.values, 2, eeg.step_seconds, dst_step, start_seconds - eeg.start_seconds);
  out.step_seconds = dst_step;
  out.start_seconds = start_seconds;
  return out;
}

FMRIVolumeSeries resample(const FMRIVolumeSeries& fmri, double dst_step, double start_seconds) {
  FMRIVolumeSeries out = fmri;
  out.volumes = resample_time(fmri.volumes, 0, fmri.tr_seconds, dst_step, start_seconds - fmri.start_seconds);
  out.tr_seconds = dst_step;
  out.start_seconds = start_seconds;
  return out;
}

std::size_t steps_of(double seconds, double step, const char* what) {
  const double r = seconds / step;
  const double n = std::round(r);
  if (!(step > 0) || std::abs(r - n) > kGridTolerance || n < 0)
    fail(ErrorKind::ShiftNotMultiple, std::string(what) + " of " + std::to_string(seconds) +
                                          " s is not a multiple of the " + std::to_string(step) + " s step");
  return std::size_t(n);
}

std::vector<AlignedWindow> partition_windows(const EEGSpectrogram& eeg, const FMRIVolumeSeries& fmri,
                                             double window_s, double shift_s) {
  if (std::abs(eeg.step_seconds - fmri.tr_seconds) > 1e-9)
    fail(ErrorKind::InvalidArgument, "EEG and fMRI must share a time step before partitioning");
  if (std::abs(eeg.start_seconds - fmri.start_seconds) > 1e-9)
    fail(ErrorKind::InvalidArgument, "EEG and fMRI grids must start at the same time");
  const double step = eeg.step_seconds;
  const std::size_t w = steps_of(window_s, step, "window");
  const std::size_t s = steps_of(shift_s, step, "shift");
  if (w == 0) fail(ErrorKind::ShiftNotMultiple, "window shorter than one step");

  const std::size_t n_eeg = eeg.time_steps(), n_fmri = fmri.time_steps();
  const std::size_t C = eeg.channels(), F = eeg.freq_bins();
  const std::size_t vox = fmri.voxels();
  const auto [X, Y, Z] = fmri.grid();

  std::vector<AlignedWindow> windows;
  for (std::size_t k = 0; (k + 1) * w <= n_eeg && k * w + s + w <= n_fmri; ++k) {
    const std::size_t e0 = k * w, f0 = k * w + s;
    Vector ev(Eigen::Index(C * F * w));
    for (std::size_t cf = 0; cf < C * F; ++cf)
      ev.segment(Eigen::Index(cf * w), Eigen::Index(w)) =
          eeg.values.data().segment(Eigen::Index(cf * n_eeg + e0), Eigen::Index(w));
    AlignedWindow win;
    win.eeg = Tensor({C, F, w}, std::move(ev));
    win.fmri = Tensor({w, X, Y, Z}, fmri.volumes.data().segment(Eigen::Index(f0 * vox), Eigen::Index(w * vox)));
    win.t_eeg = eeg.start_seconds + double(e0) * step;
    win.t_fmri = fmri.start_seconds + double(f0) * step;
    windows.push_back(std::move(win));
  }
  if (windows.empty())
    fail(ErrorKind::RecordingTooShort, "recording of " + std::to_string(std::min(n_eeg, n_fmri)) +
                                           " steps holds no aligned window");
  return windows;
}

std::vector<AlignedWindow> preprocess_recording(const EEGRecording& eeg, const FMRIVolumeSeries& fmri,
                                                const PreprocessConfig& cfg) {
  StftOptions so;
  so.window_seconds = cfg.stft_window_s;
  so.hop_seconds = cfg.stft_hop_at_step ? cfg.step_s : 0.0;
  so.window = cfg.window;
  EEGSpectrogram spec = stft(eeg, so);
  FMRIVolumeSeries bold = downsample_spatial(log_scale(fmri, cfg.log_offset), cfg.downsample_factor);
  const double start = std::max(spec.start_seconds, bold.start_seconds);
  spec = resample(spec, cfg.step_s, start);
  bold = resample(bold, cfg.step_s, start);
  return partition_windows(spec, bold, cfg.window_s, cfg.shift_s);
}

}  // namespace eegfmri

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <vector>

#include "eegfmri/tensor.hpp"

namespace eegfmri {

struct EEGRecording {
  double sampling_rate_hz = 0.0;
  Tensor samples;  // [channels, time]

  std::size_t channels() const { return samples.dim(0); }
  std::size_t length() const { return samples.dim(1); }
  double duration_seconds() const { return double(length()) / sampling_rate_hz; }
};

/// Magnitude spectrogram; frame k is stamped at start_seconds + k * step_seconds.
struct EEGSpectrogram {
  Tensor values;  // [channels, freq, time]
  double step_seconds = 0.0;
  double start_seconds = 0.0;

  std::size_t channels() const { return values.dim(0); }
  std::size_t freq_bins() const { return values.dim(1); }
  std::size_t time_steps() const { return values.dim(2); }
};

struct FMRIVolumeSeries {
  Tensor volumes;  // [time, x, y, z]
  double tr_seconds = 0.0;
  double start_seconds = 0.0;
  bool log_scaled = false;

  std::size_t time_steps() const { return volumes.dim(0); }
  std::array<std::size_t, 3> grid() const { return {volumes.dim(1), volumes.dim(2), volumes.dim(3)}; }
  std::size_t voxels() const { return volumes.dim(1) * volumes.dim(2) * volumes.dim(3); }
};

enum class WindowFunction { Rectangular, Hann };

struct StftOptions {
  double window_seconds = 2.0;
  /// Hop between frames; 0 means non-overlapping (hop = window).
  double hop_seconds = 0.0;
  WindowFunction window = WindowFunction::Rectangular;
};

/// Per-channel one-sided magnitude STFT (unnormalized DFT). Frames are
/// stamped at their centre. freq_bins = window_samples / 2 + 1.
EEGSpectrogram stft(const EEGRecording& rec, const StftOptions& options = {});

/// One-sided DFT magnitudes of a single real frame.
Eigen::VectorXd frame_magnitudes(const Eigen::Ref<const Eigen::VectorXd>& frame);

/// values <- ln(values + offset).
FMRIVolumeSeries log_scale(const FMRIVolumeSeries& fmri, double offset = 1e-6);

/// Block-mean over factor^3 voxel blocks; trailing partial blocks average
/// their actual members.
FMRIVolumeSeries downsample_spatial(const FMRIVolumeSeries& fmri, std::size_t factor);

/// Linear interpolation along `time_axis` onto t_j = offset + j * dst_step,
/// for every t_j inside the source span [0, (N - 1) * src_step] (times
/// relative to the first source sample).
Tensor resample_time(const Tensor& series, std::size_t time_axis, double src_step, double dst_step,
                     double offset = 0.0);

EEGSpectrogram resample(const EEGSpectrogram& eeg, double dst_step, double start_seconds);
FMRIVolumeSeries resample(const FMRIVolumeSeries& fmri, double dst_step, double start_seconds);

struct AlignedWindow {
  Tensor eeg;   // [channels, freq, window_steps]
  Tensor fmri;  // [window_steps, x, y, z]
  double t_eeg = 0.0;
  double t_fmri = 0.0;
};

/// Cuts both modalities (already on one common grid) into consecutive,
/// non-overlapping windows; the fMRI window of each pair starts shift_s
/// after its EEG window. Windows whose fMRI part would overrun are dropped.
std::vector<AlignedWindow> partition_windows(const EEGSpectrogram& eeg, const FMRIVolumeSeries& fmri,
                                             double window_s, double shift_s);

/// Number of whole steps `seconds` spans on a `step` grid; throws
/// `kind` if it is not an integer multiple.
std::size_t steps_of(double seconds, double step, const char* what);

struct PreprocessConfig {
  double stft_window_s = 2.0;
  double step_s = 1.8;
  double window_s = 25.2;
  double shift_s = 5.4;
  std::size_t downsample_factor = 3;
  double log_offset = 1e-6;
  /// Recompute STFT frames at step_s hops instead of interpolating the
  /// non-overlapping frames onto the step_s grid.
  bool stft_hop_at_step = false;
  WindowFunction window = WindowFunction::Rectangular;
};

/// STFT, log-scaling, spatial downsampling, resampling to the common grid
/// and windowing for one simultaneous recording.
std::vector<AlignedWindow> preprocess_recording(const EEGRecording& eeg, const FMRIVolumeSeries& fmri,
                                                const PreprocessConfig& cfg);

}  // namespace eegfmri

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eegfmri/io.hpp"
#include "eegfmri/signal.hpp"
#include "eegfmri/tensor.hpp"

namespace eegfmri {

enum class Coupling { Linear, Nonlinear };

std::string_view to_string(Coupling c);
Coupling coupling_from_string(std::string_view name);

/// Simultaneous EEG/fMRI generator. A few slow latent drivers g_b(t) in
/// [-1, 1] modulate the amplitude of per-channel tones that sit exactly on
/// STFT bins (held constant over each STFT frame), and the log-fMRI is a
/// fixed spatial mixing of h(g_b(t - hrf_shift)), with h the identity
/// (linear) or a tanh (nonlinear), plus optional noise.
struct SyntheticSpec {
  std::size_t individuals = 5;
  double duration_s = 360.0;
  std::size_t channels = 4;
  double sampling_rate_hz = 32.0;
  std::array<std::size_t, 3> grid = {12, 12, 6};
  double tr_s = 2.0;
  Coupling coupling = Coupling::Linear;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  std::size_t drivers = 3;
  double hrf_shift_s = 5.4;
  double stft_window_s = 2.0;
  /// Mean log intensity of every voxel.
  double baseline = 1.0;
  /// Peak of the spatial mixing weights.
  double coupling_strength = 0.5;
  /// Relative depth of the EEG amplitude modulation.
  double modulation = 0.5;

  /// Throws InvalidSpec.
  void validate() const;
};

/// Desk-scale stand-ins: tiny (tests and smoke runs), NODDI-like (64 ch at
/// 1000 Hz, 10 individuals, TR 2.16 s) and Oddball-like (14 individuals,
/// 170 volumes at TR 2 s).
SyntheticSpec synthetic_preset(std::string_view name);
std::vector<std::string> synthetic_preset_names();

/// Ground truth of one generated dataset.
struct SyntheticTruth {
  std::vector<double> driver_freqs;  // [drivers * 2] Hz
  /// Log-fMRI mixing on the full grid: [voxels, drivers + 1], last column is
  /// the voxel baseline.
  Tensor mixing;
  struct Individual {
    std::vector<double> driver_phases;     // [drivers * 2]
    std::vector<std::size_t> bins;         // [channels * drivers] STFT bin indices
    std::vector<double> amplitudes;        // [channels * drivers] bin magnitudes
    std::vector<double> tone_phases;       // [channels * drivers]
  };
  std::vector<Individual> individuals;
};

SyntheticTruth synthetic_truth(const SyntheticSpec& spec);

double driver_value(const SyntheticTruth& truth, std::size_t individual, std::size_t driver, double t);

/// Individual i's raw recording.
RawSession synthesize_session(const SyntheticSpec& spec, const SyntheticTruth& truth, std::size_t individual);

std::vector<RawSession> generate_synthetic(const SyntheticSpec& spec);

/// Generates and writes the dataset one individual at a time; the spec and
/// the mixing (coupling.bin) are stored alongside.
void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticSpec& spec);

nlohmann::json to_json_value(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

/// Closed-form inverse of the stored coupling: reads the driver values off
/// the modulated bins of a preprocessed EEG window [C, F, W] and maps them
/// through the mixing, then downsamples like preprocessing does. Exact up to
/// resampling interpolation when the data is noise-free.
Tensor oracle_predict(const SyntheticSpec& spec, const SyntheticTruth& truth, std::size_t individual,
                      const Tensor& eeg_window, std::size_t downsample_factor);

}  // namespace eegfmri

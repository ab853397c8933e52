// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "eegfmri/losses.hpp"
#include "eegfmri/network.hpp"

namespace eegfmri {

/// Architecture of the encoder/decoder family. Each convolutional stack has
/// widths.size() + 1 layers: hidden layers of the listed channel widths
/// (non-increasing) followed by a single-channel layer.
struct ArchitectureConfig {
  std::size_t latent = 8;
  std::vector<std::size_t> eeg_widths = {4};
  std::size_t eeg_freq_kernel = 3;
  std::vector<std::size_t> fmri_widths = {4};
  std::size_t fmri_kernel = 2;
  std::vector<std::size_t> decoder_widths = {4};
  std::size_t decoder_kernel = 2;
  std::size_t temporal_hidden = 4;
  Activation activation = Activation::ReLU;
  double dropout_p = 0.5;

  /// Number of convolutional layers per component.
  std::size_t depth() const { return eeg_widths.size() + 1; }
  /// Throws InvalidArgument if a width group increases or contains zero.
  void validate() const;

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

/// Shapes of one modality pair, as produced by preprocessing.
struct DataShapes {
  Shape eeg;   // [channels, freq, steps]
  Shape fmri;  // [steps, x, y, z]
};

/// EEG encoder over the time-major layout [channels, steps, freq];
/// output [steps, latent].
NetworkSpec eeg_encoder_spec(const DataShapes& shapes, const ArchitectureConfig& arch);
/// fMRI encoder over [steps, x, y, z]; output [steps, latent].
NetworkSpec fmri_encoder_spec(const DataShapes& shapes, const ArchitectureConfig& arch);
/// Decoder [steps, latent] -> [steps, x, y, z].
NetworkSpec decoder_spec(const DataShapes& shapes, const ArchitectureConfig& arch);
/// fMRI-encoder mirror with a scalar head, sigmoid in Entropy mode and
/// linear in EarthMover mode; output [1, 1].
NetworkSpec discriminator_spec(const DataShapes& shapes, const ArchitectureConfig& arch, AdversarialMode mode);
/// Dense(latent -> 1) followed by GRU(1 -> hidden); output [steps, hidden].
NetworkSpec temporal_head_spec(const DataShapes& shapes, const ArchitectureConfig& arch);

/// Default architecture of a given depth with widths starting at `width`.
ArchitectureConfig architecture_of_depth(std::size_t depth, std::size_t width = 4);

}  // namespace eegfmri

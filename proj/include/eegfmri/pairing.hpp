// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "eegfmri/signal.hpp"

namespace eegfmri {

/// Aligned windows of one individual's simultaneous recording, sorted by
/// EEG start time.
struct RecordingSession {
  std::string individual_id;
  std::vector<AlignedWindow> windows;
};

struct PairedInstance {
  Tensor eeg;   // [channels, freq, steps]
  Tensor fmri;  // [steps, x, y, z]
  int label = 0;
  std::string eeg_individual;
  std::string fmri_individual;
  double t_eeg = 0.0;
  double t_fmri = 0.0;
};

/// One Y=1 pair per aligned window.
std::vector<PairedInstance> make_positive_pairs(const std::vector<RecordingSession>& sessions);

struct NegativePairOptions {
  /// Maximum number of pairs drawn; nullopt returns the full set in
  /// canonical order.
  std::optional<std::size_t> limit;
  std::uint64_t seed = 0;
  /// Haemodynamic shift used to decide time alignment.
  double shift_s = 5.4;
  /// Also admit same-individual pairs whose times are misaligned.
  bool include_same_individual = false;
};

/// Y=0 pairs: an EEG window with an fMRI window of another individual whose
/// start does not equal t_eeg + shift.
std::vector<PairedInstance> make_negative_pairs(const std::vector<RecordingSession>& sessions,
                                                const NegativePairOptions& options = {});

/// True if an (EEG, fMRI) combination is admissible as a negative pair.
bool is_valid_negative(const PairedInstance& p, double shift_s, bool include_same_individual = false);

struct SessionSplit {
  std::vector<RecordingSession> train;
  std::vector<RecordingSession> val;
  std::vector<RecordingSession> test;
};

/// Seeded partition of individuals into disjoint train/val/test groups.
SessionSplit split_by_individual(const std::vector<RecordingSession>& sessions, std::size_t n_test,
                                 std::size_t n_val, std::uint64_t seed);

}  // namespace eegfmri

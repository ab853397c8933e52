// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "eegfmri/pairing.hpp"
#include "eegfmri/synthetic.hpp"
#include "test_util.hpp"

namespace eegfmri::testing {

/// Sessions of `individuals` x `windows` small random windows on the
/// default 25.2 s grid, fMRI shifted by 5.4 s.
inline std::vector<RecordingSession> toy_sessions(std::size_t individuals, std::size_t windows,
                                                  std::uint64_t seed = 1, Shape eeg = {2, 3, 4},
                                                  Shape fmri = {4, 2, 2, 1}) {
  std::vector<RecordingSession> out;
  for (std::size_t i = 0; i < individuals; ++i) {
    RecordingSession s;
    s.individual_id = "ind" + std::to_string(i);
    for (std::size_t w = 0; w < windows; ++w) {
      AlignedWindow a;
      a.eeg = random_tensor(eeg, seed * 1000 + i * 100 + w, 0.0, 1.0);
      a.fmri = random_tensor(fmri, seed * 1000 + i * 100 + w + 50, 0.5, 1.5);
      a.t_eeg = 1.0 + 25.2 * double(w);
      a.t_fmri = a.t_eeg + 5.4;
      s.windows.push_back(std::move(a));
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Tiny synthetic dataset, preprocessed with the default constants.
inline std::vector<RecordingSession> tiny_sessions(std::size_t individuals = 3, std::uint64_t seed = 0) {
  SyntheticSpec spec = synthetic_preset("tiny");
  spec.individuals = individuals;
  spec.seed = seed;
  const SyntheticTruth truth = synthetic_truth(spec);
  std::vector<RecordingSession> out;
  for (std::size_t i = 0; i < individuals; ++i) {
    const RawSession raw = synthesize_session(spec, truth, i);
    out.push_back({raw.individual_id, preprocess_recording(raw.eeg, raw.fmri, PreprocessConfig{})});
  }
  return out;
}

/// Splits every session's windows: every `stride`-th window goes to the
/// held-out part (held-out windows of seen individuals).
inline std::pair<std::vector<RecordingSession>, std::vector<RecordingSession>> split_windows(
    const std::vector<RecordingSession>& sessions, std::size_t stride = 4) {
  std::vector<RecordingSession> a, b;
  for (const auto& s : sessions) {
    RecordingSession x{s.individual_id, {}}, y{s.individual_id, {}};
    for (std::size_t k = 0; k < s.windows.size(); ++k) (k % stride == stride - 1 ? y : x).windows.push_back(s.windows[k]);
    a.push_back(std::move(x));
    b.push_back(std::move(y));
  }
  return {a, b};
}

}  // namespace eegfmri::testing

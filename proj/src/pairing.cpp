// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "eegfmri/error.hpp"
#include "eegfmri/random.hpp"

namespace eegfmri {
namespace {

constexpr double kTimeTolerance = 1e-6;

std::vector<std::string> distinct_individuals(const std::vector<RecordingSession>& sessions) {
  std::vector<std::string> ids;
  for (const auto& s : sessions)
    if (std::find(ids.begin(), ids.end(), s.individual_id) == ids.end()) ids.push_back(s.individual_id);
  return ids;
}

PairedInstance pair_of(const RecordingSession& a, const AlignedWindow& wa, const RecordingSession& b,
                       const AlignedWindow& wb, int label) {
  return {wa.eeg, wb.fmri, label, a.individual_id, b.individual_id, wa.t_eeg, wb.t_fmri};
}

}  // namespace

std::vector<PairedInstance> make_positive_pairs(const std::vector<RecordingSession>& sessions) {
  std::vector<PairedInstance> out;
  for (const auto& s : sessions)
    for (const auto& w : s.windows) out.push_back(pair_of(s, w, s, w, 1));
  return out;
}

bool is_valid_negative(const PairedInstance& p, double shift_s, bool include_same_individual) {
  const bool aligned = std::abs(p.t_fmri - (p.t_eeg + shift_s)) <= kTimeTolerance;
  const bool same = p.eeg_individual == p.fmri_individual;
  if (aligned) return false;
  return include_same_individual || !same;
}

std::vector<PairedInstance> make_negative_pairs(const std::vector<RecordingSession>& sessions,
                                                const NegativePairOptions& options) {
  if (distinct_individuals(sessions).size() < 2 && !options.include_same_individual)
    fail(ErrorKind::NoNegativesPossible, "negative pairs need at least two individuals");

  // Enumerate admissible (eeg session, eeg window, fmri session, fmri window)
  // index tuples; materializing tensors is deferred to the chosen subset.
  struct Candidate {
    std::size_t sa, wa, sb, wb;
  };
  std::vector<Candidate> candidates;
  for (std::size_t sa = 0; sa < sessions.size(); ++sa)
    for (std::size_t wa = 0; wa < sessions[sa].windows.size(); ++wa)
      for (std::size_t sb = 0; sb < sessions.size(); ++sb) {
        const bool same = sessions[sa].individual_id == sessions[sb].individual_id;
        if (same && !options.include_same_individual) continue;
        for (std::size_t wb = 0; wb < sessions[sb].windows.size(); ++wb) {
          const double t_eeg = sessions[sa].windows[wa].t_eeg;
          const double t_fmri = sessions[sb].windows[wb].t_fmri;
          if (std::abs(t_fmri - (t_eeg + options.shift_s)) <= kTimeTolerance) continue;
          candidates.push_back({sa, wa, sb, wb});
        }
      }
  if (candidates.empty()) fail(ErrorKind::NoNegativesPossible, "no admissible negative combination exists");

  if (options.limit && *options.limit < candidates.size()) {
    // Partial Fisher-Yates: the first `limit` entries form a uniform sample.
    Rng rng(derive_seed(options.seed, {0x4E45}));
    for (std::size_t i = 0; i < *options.limit; ++i)
      std::swap(candidates[i], candidates[i + rng.index(candidates.size() - i)]);
    candidates.resize(*options.limit);
  }

  std::vector<PairedInstance> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates)
    out.push_back(pair_of(sessions[c.sa], sessions[c.sa].windows[c.wa], sessions[c.sb],
                          sessions[c.sb].windows[c.wb], 0));
  return out;
}

SessionSplit split_by_individual(const std::vector<RecordingSession>& sessions, std::size_t n_test,
                                 std::size_t n_val, std::uint64_t seed) {
  auto ids = distinct_individuals(sessions);
  if (n_test + n_val >= ids.size())
    fail(ErrorKind::NotEnoughIndividuals, std::to_string(n_test) + " test + " + std::to_string(n_val) +
                                              " validation individuals leave no training set out of " +
                                              std::to_string(ids.size()));
  std::sort(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, {0x5350}));
  rng.shuffle(ids);
  const std::set<std::string> test(ids.begin(), ids.begin() + std::ptrdiff_t(n_test));
  const std::set<std::string> val(ids.begin() + std::ptrdiff_t(n_test),
                                  ids.begin() + std::ptrdiff_t(n_test + n_val));
  SessionSplit split;
  for (const auto& s : sessions) {
    if (test.count(s.individual_id))
      split.test.push_back(s);
    else if (val.count(s.individual_id))
      split.val.push_back(s);
    else
      split.train.push_back(s);
  }
  return split;
}

}  // namespace eegfmri

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <set>

#include "eegfmri/pairing.hpp"
#include "fixtures.hpp"

using namespace eegfmri;
using eegfmri::testing::toy_sessions;

TEST_CASE("positive pairs") {
  const auto sessions = toy_sessions(2, 3);
  const auto pos = make_positive_pairs(sessions);
  CHECK(pos.size() == 6);
  for (const auto& p : pos) {
    CHECK(p.label == 1);
    CHECK(p.eeg_individual == p.fmri_individual);
    CHECK(p.t_fmri == doctest::Approx(p.t_eeg + 5.4));
  }
  CHECK(pos[0].eeg.same_node(sessions[0].windows[0].eeg));
  CHECK(make_positive_pairs({RecordingSession{"x", {}}}).empty());
}

TEST_CASE("full negative set on 2 individuals x 2 windows") {
  const auto sessions = toy_sessions(2, 2);
  const auto neg = make_negative_pairs(sessions);
  REQUIRE(neg.size() == 4);
  std::set<std::pair<std::string, double>> seen;
  for (const auto& p : neg) {
    CHECK(p.label == 0);
    CHECK(p.eeg_individual != p.fmri_individual);
    CHECK(std::abs(p.t_fmri - (p.t_eeg + 5.4)) > 1e-6);
    CHECK(is_valid_negative(p, 5.4));
    seen.insert({p.eeg_individual, p.t_eeg});
  }
  CHECK(seen.size() == 4);
}

TEST_CASE("brute-force scan of sampled negatives") {
  const auto sessions = toy_sessions(4, 5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    NegativePairOptions opt;
    opt.limit = 12;
    opt.seed = seed;
    const auto neg = make_negative_pairs(sessions, opt);
    CHECK(neg.size() == 12);
    for (const auto& p : neg) {
      const bool same = p.eeg_individual == p.fmri_individual;
      const bool aligned = std::abs(p.t_fmri - (p.t_eeg + 5.4)) <= 1e-6;
      CHECK_FALSE((same && aligned));
      CHECK_FALSE(same);
      CHECK_FALSE(aligned);
    }
  }
}

TEST_CASE("seeded negative subsets") {
  const auto sessions = toy_sessions(3, 4);
  NegativePairOptions opt;
  opt.limit = 2;
  opt.seed = 9;
  const auto a = make_negative_pairs(sessions, opt);
  const auto b = make_negative_pairs(sessions, opt);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a[i].eeg.same_node(b[i].eeg));
    CHECK(a[i].fmri.same_node(b[i].fmri));
  }
  opt.limit = 1000;
  const auto all = make_negative_pairs(sessions, opt);
  // 3 individuals, 4 windows: 3*2*16 cross combinations minus 3*2*4 aligned.
  CHECK(all.size() == 72);
}

TEST_CASE("same-individual negatives behind the flag") {
  const auto sessions = toy_sessions(1, 3);
  CHECK_THROWS_AS_KIND(make_negative_pairs(sessions), ErrorKind::NoNegativesPossible);
  NegativePairOptions opt;
  opt.include_same_individual = true;
  const auto neg = make_negative_pairs(sessions, opt);
  CHECK(neg.size() == 6);
  for (const auto& p : neg) CHECK(std::abs(p.t_fmri - (p.t_eeg + 5.4)) > 1e-6);
}

TEST_CASE("split_by_individual") {
  SUBCASE("NODDI-sized") {
    const auto s = toy_sessions(10, 1);
    const auto split = split_by_individual(s, 2, 1, 5);
    CHECK(split.test.size() == 2);
    CHECK(split.val.size() == 1);
    CHECK(split.train.size() == 7);
  }
  SUBCASE("Oddball-sized") {
    const auto split = split_by_individual(toy_sessions(14, 1), 4, 1, 5);
    CHECK(split.test.size() == 4);
  }
  SUBCASE("partition and determinism") {
    const auto s = toy_sessions(8, 1);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = split_by_individual(s, 2, 2, seed);
      const auto b = split_by_individual(s, 2, 2, seed);
      std::multiset<std::string> ids;
      for (const auto* part : {&a.train, &a.val, &a.test})
        for (const auto& x : *part) ids.insert(x.individual_id);
      CHECK(ids.size() == 8);
      CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 8);
      for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].individual_id == b.test[i].individual_id);
    }
  }
  SUBCASE("empty train set is refused") {
    CHECK_THROWS_AS_KIND(split_by_individual(toy_sessions(3, 1), 2, 1, 0), ErrorKind::NotEnoughIndividuals);
  }
}

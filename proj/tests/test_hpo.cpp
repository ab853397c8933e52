// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "eegfmri/error.hpp"
#include "eegfmri/hpo.hpp"
#include "eegfmri/random.hpp"
#include "test_util.hpp"

using namespace eegfmri;

namespace {

Eigen::VectorXd random_unit(Rng& rng, std::size_t n) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.uniform();
  return u;
}

HyperParamSpace line_space() {
  HyperParamSpace s;
  s.add(Dimension{"x", DimensionKind::Uniform, 0.0, 1.0, {}});
  return s;
}

// Scores per depth follow `per_depth`; every trial at depth d scores
// per_depth[d - 1] plus a small penalty away from x = 0.5.
DepthObjective scripted(std::vector<double> per_depth) {
  return [per_depth](std::size_t depth, const ParamPoint& p, std::uint64_t) -> std::optional<double> {
    return per_depth.at(depth - 1) + 1e-3 * std::abs(p.at("x") - 0.5);
  };
}

}  // namespace

TEST_CASE("default space: every draw respects its range") {
  const std::set<double> batches = {2, 4, 8, 16, 32, 64, 128};
  Rng rng(11);
  for (std::size_t depth = 1; depth <= 4; ++depth) {
    const HyperParamSpace s = default_space(depth, 8);
    for (int i = 0; i < 2000; ++i) {
      const ParamPoint p = s.decode(random_unit(rng, s.unit_dims()));
      REQUIRE(s.contains(p));
      CHECK(p.at("learning_rate") >= 1e-14);
      CHECK(p.at("learning_rate") <= 1e-3);
      for (const char* l1 : {"l1_eeg", "l1_fmri", "l1_dec"}) {
        CHECK(p.at(l1) >= 1e-5);
        CHECK(p.at(l1) <= 1e-1);
      }
      CHECK(p.at("theta") >= 0.0);
      CHECK(p.at("theta") <= 1.0);
      CHECK(batches.count(p.at("batch_size")) == 1);
      for (const auto& [name, w] : p.widths) {
        CHECK(w.size() == depth - 1);
        for (std::size_t j = 0; j < w.size(); ++j) {
          CHECK(w[j] >= 1);
          CHECK(w[j] <= 8);
          if (j > 0) CHECK(w[j] <= w[j - 1]);
        }
      }
    }
  }
  CHECK(default_space(1, 8, false).unit_dims() + 1 == default_space(1, 8, true).unit_dims());
}

TEST_CASE("encode inverts decode") {
  const HyperParamSpace s = default_space(3, 8);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const ParamPoint p = s.decode(random_unit(rng, s.unit_dims()));
    const ParamPoint q = s.decode(s.encode(p));
    CHECK(q.widths == p.widths);
    CHECK(q.at("batch_size") == p.at("batch_size"));
    CHECK(q.at("learning_rate") == doctest::Approx(p.at("learning_rate")).epsilon(1e-9));
  }
  ParamPoint bad = s.decode(Eigen::VectorXd::Constant(Eigen::Index(s.unit_dims()), 0.5));
  bad.values["learning_rate"] = 1.0;
  CHECK_FALSE(s.contains(bad));
}

TEST_CASE("gaussian process interpolates its data") {
  GaussianProcess gp;
  std::vector<Eigen::VectorXd> x;
  std::vector<double> y;
  for (double v : {0.1, 0.4, 0.8}) {
    x.push_back(Eigen::VectorXd::Constant(1, v));
    y.push_back(std::sin(6 * v));
  }
  gp.fit(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto [m, sd] = gp.predict(x[i]);
    CHECK(m == doctest::Approx(y[i]).epsilon(1e-3));
    CHECK(sd < 0.05);
  }
  CHECK(gp.predict(Eigen::VectorXd::Constant(1, 0.6)).second > gp.predict(x[1]).second);
  CHECK(expected_improvement(0.0, 1.0, 0.0) == doctest::Approx(1.0 / std::sqrt(2 * M_PI)));
  CHECK(expected_improvement(5.0, 0.0, 1.0) == 0.0);
}

TEST_CASE("bo_optimize") {
  const HyperParamSpace s = line_space();
  const Objective quad = [](const ParamPoint& p, std::uint64_t) -> std::optional<double> {
    return (p.at("x") - 0.3) * (p.at("x") - 0.3);
  };
  SUBCASE("quadratic minimum near the dense-grid optimum") {
    double grid_best = 0.0, grid_score = 1e9;
    for (int i = 0; i <= 10000; ++i) {
      ParamPoint p;
      p.values["x"] = i / 10000.0;
      const double v = *quad(p, 0);
      if (v < grid_score) grid_score = v, grid_best = p.at("x");
    }
    BoOptions o;
    o.n_iter = 50;
    o.seed = 3;
    const BoResult r = bo_optimize(s, quad, o);
    CHECK(std::abs(r.best.params.at("x") - grid_best) < 0.05);
    CHECK(r.trials.size() == 50);
  }
  SUBCASE("a single iteration returns its random point") {
    BoOptions o;
    o.n_iter = 1;
    const BoResult r = bo_optimize(s, quad, o);
    REQUIRE(r.trials.size() == 1);
    CHECK(r.best.params == r.trials[0].params);
  }
  SUBCASE("constant objective") {
    BoOptions o;
    o.n_iter = 8;
    const BoResult r = bo_optimize(s, [](const ParamPoint&, std::uint64_t) { return std::optional<double>(4.25); }, o);
    CHECK(*r.best.score == 4.25);
    CHECK(s.contains(r.best.params));
  }
  SUBCASE("seeded runs repeat, other seeds differ") {
    BoOptions o;
    o.n_iter = 12;
    o.seed = 9;
    const BoResult a = bo_optimize(s, quad, o), b = bo_optimize(s, quad, o);
    for (std::size_t i = 0; i < a.trials.size(); ++i) CHECK(a.trials[i].params == b.trials[i].params);
    o.seed = 10;
    CHECK_FALSE(bo_optimize(s, quad, o).trials[0].params == a.trials[0].params);
  }
  SUBCASE("failures") {
    BoOptions o;
    o.n_iter = 6;
    int calls = 0;
    const Objective flaky = [&](const ParamPoint& p, std::uint64_t) -> std::optional<double> {
      if (++calls % 2 == 0) return std::nullopt;
      if (calls == 3) throw Error(ErrorKind::NonFiniteLoss, "boom");
      return p.at("x");
    };
    const BoResult r = bo_optimize(s, flaky, o);
    std::size_t failed = 0;
    for (const auto& t : r.trials) failed += !t.score.has_value();
    CHECK(failed == 4);
    CHECK(r.best.score.has_value());
    CHECK_THROWS_AS_KIND(bo_optimize(s, [](const ParamPoint&, std::uint64_t) { return std::optional<double>(); }, o),
                         ErrorKind::AllTrialsFailed);
  }
  SUBCASE("replay skips evaluation") {
    BoOptions o;
    o.n_iter = 6;
    const BoResult first = bo_optimize(s, quad, o);
    o.replay = first.trials;
    int calls = 0;
    const BoResult again = bo_optimize(
        s, [&](const ParamPoint& p, std::uint64_t t) { ++calls; return quad(p, t); }, o);
    CHECK(calls == 0);
    CHECK(again.best.params == first.best.params);
  }
}

TEST_CASE("nas_depth_search stopping rule") {
  const auto space = [](std::size_t) { return line_space(); };
  NasOptions o;
  o.n_iter_per_depth = 4;
  o.max_depth = 8;
  SUBCASE("[5, 3, 3.5] stops at depth 3 and keeps depth 2") {
    const NasResult r = nas_depth_search(space, scripted({5, 3, 3.5, 1}), o);
    CHECK(r.depth == 2);
    CHECK(r.best.depth == 2);
    CHECK(*r.best.score < 3.01);
    CHECK_FALSE(r.cap_reached);
    CHECK(r.best_per_depth.size() == 3);
  }
  SUBCASE("strict improvement hits the cap") {
    o.max_depth = 4;
    const NasResult r = nas_depth_search(space, scripted({4, 3, 2, 1, 0}), o);
    CHECK(r.depth == 4);
    CHECK(r.cap_reached);
  }
  SUBCASE("earliest stop") {
    const NasResult r = nas_depth_search(space, scripted({1, 2}), o);
    CHECK(r.depth == 1);
    CHECK(r.best_per_depth.size() == 2);
  }
}

TEST_CASE("trial log round trip") {
  TrialResult t;
  t.depth = 2;
  t.index = 7;
  t.params.values["learning_rate"] = 1.25e-7;
  t.params.widths["eeg"] = {6, 3};
  t.score = 0.0312;
  t.seed = 123456789012345ULL;
  t.wall_time = 1.5;
  const TrialResult back = trial_from_json(trial_to_json(t));
  CHECK(back.params == t.params);
  CHECK(back.score == t.score);
  CHECK(back.seed == t.seed);
  CHECK(back.depth == 2);

  TrialResult failed = t;
  failed.score.reset();
  failed.status = "failed";
  const auto path = (std::filesystem::temp_directory_path() / "eegfmri_trials_test.jsonl").string();
  std::filesystem::remove(path);
  append_trial_log(path, t);
  append_trial_log(path, failed);
  const auto log = read_trial_log(path);
  REQUIRE(log.size() == 2);
  CHECK_FALSE(log[1].score.has_value());
  CHECK(log[1].status == "failed");
  std::filesystem::remove(path);
}

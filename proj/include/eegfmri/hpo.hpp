// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace eegfmri {

enum class DimensionKind { Uniform, LogUniform, Categorical };

struct Dimension {
  std::string name;
  DimensionKind kind = DimensionKind::Uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> choices;  // Categorical only
};

/// Integer layer widths of one component, non-increasing along depth and
/// bounded by [lo, hi]. Encoded as one unit coordinate per layer: width i
/// interpolates between lo and width i-1.
struct WidthGroup {
  std::string name;
  std::size_t layers = 0;
  std::size_t lo = 1;
  std::size_t hi = 1;
};

/// Point in natural units: every dimension by name, and every width group
/// as a width list.
struct ParamPoint {
  std::map<std::string, double> values;
  std::map<std::string, std::vector<std::size_t>> widths;

  double at(const std::string& name) const;
  friend bool operator==(const ParamPoint&, const ParamPoint&) = default;
};

class HyperParamSpace {
 public:
  HyperParamSpace& add(Dimension d);
  HyperParamSpace& add(WidthGroup g);

  std::size_t unit_dims() const;
  /// Maps a unit-cube point to natural units.
  ParamPoint decode(const Eigen::VectorXd& u) const;
  /// Inverse of decode up to categorical/integer rounding.
  Eigen::VectorXd encode(const ParamPoint& p) const;
  /// True if every value lies within its declared range and width groups
  /// are monotone within bounds.
  bool contains(const ParamPoint& p) const;

  const std::vector<Dimension>& dimensions() const { return dims_; }
  const std::vector<WidthGroup>& width_groups() const { return groups_; }

 private:
  std::vector<Dimension> dims_;
  std::vector<WidthGroup> groups_;
};

/// Learning rate, three L1 weights, theta, batch size and (for depth > 1)
/// the hidden widths of the three convolutional stacks.
HyperParamSpace default_space(std::size_t depth, std::size_t max_width = 8, bool include_theta = true);

/// Matérn-5/2 Gaussian process on the unit cube with standardized targets.
class GaussianProcess {
 public:
  void fit(const std::vector<Eigen::VectorXd>& x, const std::vector<double>& y);
  /// Posterior mean and standard deviation in target units.
  std::pair<double, double> predict(const Eigen::VectorXd& x) const;
  double length_scale() const { return length_; }

 private:
  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  std::vector<Eigen::VectorXd> x_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd chol_l_;
  double length_ = 0.3, mean_ = 0.0, scale_ = 1.0;
  static constexpr double kNoise = 1e-6;
};

/// Expected improvement for minimization.
double expected_improvement(double mean, double sd, double best);

struct TrialResult {
  std::size_t depth = 0;
  std::size_t index = 0;
  ParamPoint params;
  std::optional<double> score;  // nullopt when the trial failed
  std::string status = "ok";
  std::uint64_t seed = 0;
  double wall_time = 0.0;
};

/// Returns a score, or nullopt (or throws) on failure.
using Objective = std::function<std::optional<double>(const ParamPoint&, std::uint64_t trial_seed)>;

struct BoOptions {
  std::size_t n_iter = 100;
  std::uint64_t seed = 0;
  std::size_t depth = 0;
  /// Candidates scored by the acquisition per iteration.
  std::size_t candidates = 2048;
  /// Completed trials to replay instead of evaluating (resume).
  std::vector<TrialResult> replay;
  /// Invoked after every evaluated or replayed trial.
  std::function<void(const TrialResult&)> on_trial;
};

struct BoResult {
  TrialResult best;
  std::vector<TrialResult> trials;
};

/// Warm-up of ceil(n_iter / 5) seeded random points inside the budget, then
/// EI-maximizing proposals. Failed trials enter the surrogate with the worst
/// observed score. Throws AllTrialsFailed.
BoResult bo_optimize(const HyperParamSpace& space, const Objective& objective, const BoOptions& options);

struct NasOptions {
  std::size_t n_iter_per_depth = 100;
  std::size_t max_depth = 8;
  double relative_tolerance = 1e-6;
  std::uint64_t seed = 0;
  std::vector<TrialResult> replay;
  std::function<void(const TrialResult&)> on_trial;
};

struct NasResult {
  std::size_t depth = 0;
  TrialResult best;
  bool cap_reached = false;
  std::vector<TrialResult> best_per_depth;
};

using DepthObjective =
    std::function<std::optional<double>(std::size_t depth, const ParamPoint&, std::uint64_t trial_seed)>;

/// Grows depth from 1 while the best score improves by more than the
/// relative tolerance; returns the last improving depth.
NasResult nas_depth_search(const std::function<HyperParamSpace(std::size_t)>& space_for_depth,
                           const DepthObjective& build_and_eval, const NasOptions& options);

/// Line-delimited JSON trial records.
std::string trial_to_json(const TrialResult& t);
TrialResult trial_from_json(const std::string& line);
std::vector<TrialResult> read_trial_log(const std::string& path);
void append_trial_log(const std::string& path, const TrialResult& t);

}  // namespace eegfmri

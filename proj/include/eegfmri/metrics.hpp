// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eegfmri/error.hpp"
#include "eegfmri/tensor.hpp"

namespace eegfmri {

struct TrainedModel;
struct RecordingSession;

// Metrics over an fMRI window viewed as a [volumes x voxels] matrix (time
// along rows). The Tensor overloads flatten every axis after the first.

inline constexpr double kLogEpsilon = 1e-12;
inline constexpr double kKlSmoothing = 1e-9;

namespace metric {

template <typename A, typename B>
void require_same_shape(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0)
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": inputs differ in shape or are empty");
}

/// Cosine similarity of the flattened inputs.
template <typename A, typename B>
double cfv(const Eigen::MatrixBase<A>& bold, const Eigen::MatrixBase<B>& pred) {
  require_same_shape(bold, pred, "cfv");
  const double na = bold.norm(), nb = pred.norm();
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::ZeroVector, "cfv of an all-zero series");
  return bold.cwiseProduct(pred).sum() / (na * nb);
}

/// ln(1 - cfv), before clamping.
template <typename A, typename B>
double lcfv_unclamped(const Eigen::MatrixBase<A>& bold, const Eigen::MatrixBase<B>& pred) {
  return std::log(1.0 - cfv(bold, pred));
}

template <typename A, typename B>
double lcfv(const Eigen::MatrixBase<A>& bold, const Eigen::MatrixBase<B>& pred, double eps = kLogEpsilon) {
  return std::log(std::max(eps, 1.0 - cfv(bold, pred)));
}

/// Mean over voxels (columns) of the Euclidean distance between time series.
template <typename A, typename B>
double emv(const Eigen::MatrixBase<A>& bold, const Eigen::MatrixBase<B>& pred) {
  require_same_shape(bold, pred, "emv");
  return (bold - pred).colwise().norm().mean();
}

/// Mean over volumes (rows) of ||diff|| / N_voxels.
template <typename A, typename B>
double epv(const Eigen::MatrixBase<A>& fmri, const Eigen::MatrixBase<B>& pred) {
  require_same_shape(fmri, pred, "epv");
  return (fmri - pred).rowwise().norm().mean() / double(fmri.cols());
}

/// Mean over volumes of the mean absolute voxel difference.
template <typename A, typename B>
double mae(const Eigen::MatrixBase<A>& fmri, const Eigen::MatrixBase<B>& pred) {
  require_same_shape(fmri, pred, "mae");
  return (fmri - pred).cwiseAbs().rowwise().mean().mean();
}

/// Probability vector of one volume: shift by its minimum, add the
/// smoothing constant, normalize to unit sum.
template <typename A>
Eigen::VectorXd volume_distribution(const Eigen::MatrixBase<A>& volume) {
  Eigen::VectorXd p = (volume.array() - volume.minCoeff() + kKlSmoothing).matrix().transpose();
  return p / p.sum();
}

template <typename A, typename B>
double kl_divergence(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  require_same_shape(p, q, "kl_divergence");
  double s = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0) s += p(i) * std::log(p(i) / q(i));
  return s;
}

/// Mean over volumes of KL(real || predicted) on the volume distributions.
template <typename A, typename B>
double kl(const Eigen::MatrixBase<A>& fmri, const Eigen::MatrixBase<B>& pred) {
  require_same_shape(fmri, pred, "kl");
  double s = 0;
  for (Eigen::Index v = 0; v < fmri.rows(); ++v)
    s += kl_divergence(volume_distribution(fmri.row(v)), volume_distribution(pred.row(v)));
  return s / double(fmri.rows());
}

}  // namespace metric

/// Tensor views [volumes, ...] -> matrix [volumes x voxels].
RowMatrix volume_matrix(const Tensor& t);

double cfv(const Tensor& bold, const Tensor& pred);
double lcfv(const Tensor& bold, const Tensor& pred, double eps = kLogEpsilon);
double emv(const Tensor& bold, const Tensor& pred);
double epv_metric(const Tensor& fmri, const Tensor& pred);
double mae(const Tensor& fmri, const Tensor& pred);
double kl(const Tensor& fmri, const Tensor& pred);

enum class Metric { LCFV, CFV, EMV, EPV, MAE, KL };
inline constexpr std::array<Metric, 6> kMetricOrder = {Metric::LCFV, Metric::CFV, Metric::EMV,
                                                      Metric::EPV,  Metric::MAE, Metric::KL};
std::string_view to_string(Metric m);

using MetricValues = std::array<double, 6>;

MetricValues compute_metrics(const Tensor& truth, const Tensor& pred);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct MetricsReport {
  std::vector<MetricValues> instances;
  std::array<MeanStd, 6> aggregate{};

  const MeanStd& operator[](Metric m) const { return aggregate[std::size_t(m)]; }
};

/// Aggregates per-instance rows in input order; EmptyTestSet if none.
MetricsReport aggregate_metrics(std::vector<MetricValues> instances);

/// Metrics of (truth, prediction) pairs.
MetricsReport evaluate_predictions(const std::vector<std::pair<Tensor, Tensor>>& pairs);

/// Synthesizes every window of the test sessions and scores it.
MetricsReport evaluate_all(const TrainedModel& model, const std::vector<RecordingSession>& test_sessions);

/// One row per metric in fixed order, one column per variant, cells
/// "mean±std".
void write_metrics_csv(std::ostream& out, const std::vector<std::pair<std::string, MetricsReport>>& variants);

std::string format_mean_std(const MeanStd& v);

}  // namespace eegfmri

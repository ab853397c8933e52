// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/metrics.hpp"

#include <cstdio>

#include "eegfmri/models.hpp"

namespace eegfmri {

RowMatrix volume_matrix(const Tensor& t) {
  if (t.rank() < 1 || t.size() == 0) fail(ErrorKind::ShapeMismatch, "metric input is empty");
  return t.as_matrix(t.dim(0));
}

namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

}  // namespace

double cfv(const Tensor& bold, const Tensor& pred) {
  same_shape(bold, pred, "cfv");
  return metric::cfv(bold.data(), pred.data());
}

double lcfv(const Tensor& bold, const Tensor& pred, double eps) {
  same_shape(bold, pred, "lcfv");
  return metric::lcfv(bold.data(), pred.data(), eps);
}

double emv(const Tensor& bold, const Tensor& pred) {
  same_shape(bold, pred, "emv");
  return metric::emv(volume_matrix(bold), volume_matrix(pred));
}

double epv_metric(const Tensor& fmri, const Tensor& pred) {
  same_shape(fmri, pred, "epv");
  return metric::epv(volume_matrix(fmri), volume_matrix(pred));
}

double mae(const Tensor& fmri, const Tensor& pred) {
  same_shape(fmri, pred, "mae");
  return metric::mae(volume_matrix(fmri), volume_matrix(pred));
}

double kl(const Tensor& fmri, const Tensor& pred) {
  same_shape(fmri, pred, "kl");
  return metric::kl(volume_matrix(fmri), volume_matrix(pred));
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::LCFV: return "LCFV";
    case Metric::CFV: return "CFV";
    case Metric::EMV: return "EMV";
    case Metric::EPV: return "EPV";
    case Metric::MAE: return "MAE";
    case Metric::KL: return "KL";
  }
  return "?";
}

MetricValues compute_metrics(const Tensor& truth, const Tensor& pred) {
  same_shape(truth, pred, "metrics");
  const RowMatrix t = volume_matrix(truth), p = volume_matrix(pred);
  MetricValues v{};
  v[std::size_t(Metric::LCFV)] = metric::lcfv(t, p);
  v[std::size_t(Metric::CFV)] = metric::cfv(t, p);
  v[std::size_t(Metric::EMV)] = metric::emv(t, p);
  v[std::size_t(Metric::EPV)] = metric::epv(t, p);
  v[std::size_t(Metric::MAE)] = metric::mae(t, p);
  v[std::size_t(Metric::KL)] = metric::kl(t, p);
  return v;
}

MetricsReport aggregate_metrics(std::vector<MetricValues> instances) {
  if (instances.empty()) fail(ErrorKind::EmptyTestSet, "no test instances to aggregate");
  MetricsReport r;
  r.instances = std::move(instances);
  const double n = double(r.instances.size());
  for (std::size_t k = 0; k < 6; ++k) {
    double s = 0;
    for (const auto& row : r.instances) s += row[k];
    const double mean = s / n;
    double sq = 0;
    for (const auto& row : r.instances) sq += (row[k] - mean) * (row[k] - mean);
    r.aggregate[k] = {mean, std::sqrt(sq / n)};
  }
  return r;
}

MetricsReport evaluate_predictions(const std::vector<std::pair<Tensor, Tensor>>& pairs) {
  std::vector<MetricValues> rows;
  for (const auto& [t, p] : pairs) rows.push_back(compute_metrics(t, p));
  return aggregate_metrics(std::move(rows));
}

MetricsReport evaluate_all(const TrainedModel& model, const std::vector<RecordingSession>& test_sessions) {
  std::vector<MetricValues> rows;
  for (const auto& s : test_sessions)
    for (const auto& w : s.windows) rows.push_back(compute_metrics(w.fmri, synthesize(model, w.eeg)));
  if (rows.empty()) fail(ErrorKind::EmptyTestSet, "test sessions hold no windows");
  return aggregate_metrics(std::move(rows));
}

std::string format_mean_std(const MeanStd& v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6f\xC2\xB1%.6f", v.mean, v.std);
  return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<std::pair<std::string, MetricsReport>>& variants) {
  out << "metric";
  for (const auto& [name, r] : variants) out << ',' << name;
  out << '\n';
  for (auto m : kMetricOrder) {
    out << to_string(m);
    for (const auto& [name, r] : variants) out << ',' << format_mean_std(r[m]);
    out << '\n';
  }
}

}  // namespace eegfmri

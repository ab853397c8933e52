// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/hpo.hpp"

#include <Eigen/Cholesky>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "eegfmri/error.hpp"
#include "eegfmri/random.hpp"

namespace eegfmri {

double ParamPoint::at(const std::string& name) const {
  const auto it = values.find(name);
  if (it == values.end()) fail(ErrorKind::InvalidArgument, "parameter '" + name + "' is not in the point");
  return it->second;
}

HyperParamSpace& HyperParamSpace::add(Dimension d) {
  if (d.kind == DimensionKind::Categorical ? d.choices.empty() : !(d.lo <= d.hi))
    fail(ErrorKind::InvalidArgument, "dimension '" + d.name + "' has an empty range");
  if (d.kind == DimensionKind::LogUniform && !(d.lo > 0))
    fail(ErrorKind::InvalidArgument, "log-uniform dimension '" + d.name + "' needs lo > 0");
  dims_.push_back(std::move(d));
  return *this;
}

HyperParamSpace& HyperParamSpace::add(WidthGroup g) {
  if (g.lo < 1 || g.lo > g.hi) fail(ErrorKind::InvalidArgument, "width group '" + g.name + "' has an empty range");
  groups_.push_back(std::move(g));
  return *this;
}

std::size_t HyperParamSpace::unit_dims() const {
  std::size_t n = dims_.size();
  for (const auto& g : groups_) n += g.layers;
  return n;
}

ParamPoint HyperParamSpace::decode(const Eigen::VectorXd& u) const {
  if (std::size_t(u.size()) != unit_dims()) fail(ErrorKind::ShapeMismatch, "unit point has the wrong dimension");
  ParamPoint p;
  Eigen::Index i = 0;
  for (const auto& d : dims_) {
    const double x = std::clamp(u[i++], 0.0, 1.0);
    double v = 0;
    switch (d.kind) {
      case DimensionKind::Uniform: v = d.lo + x * (d.hi - d.lo); break;
      case DimensionKind::LogUniform:
        v = std::clamp(std::exp(std::log(d.lo) + x * (std::log(d.hi) - std::log(d.lo))), d.lo, d.hi);
        break;
      case DimensionKind::Categorical: {
        const auto idx = std::min(d.choices.size() - 1, std::size_t(x * double(d.choices.size())));
        v = d.choices[idx];
        break;
      }
    }
    p.values[d.name] = v;
  }
  for (const auto& g : groups_) {
    std::vector<std::size_t> w;
    std::size_t upper = g.hi;
    for (std::size_t l = 0; l < g.layers; ++l) {
      const double x = std::clamp(u[i++], 0.0, 1.0);
      const std::size_t span = upper - g.lo + 1;
      const std::size_t width = g.lo + std::min(span - 1, std::size_t(x * double(span)));
      w.push_back(width);
      upper = width;
    }
    p.widths[g.name] = std::move(w);
  }
  return p;
}

Eigen::VectorXd HyperParamSpace::encode(const ParamPoint& p) const {
  Eigen::VectorXd u(static_cast<Eigen::Index>(unit_dims()));
  Eigen::Index i = 0;
  for (const auto& d : dims_) {
    const double v = p.at(d.name);
    switch (d.kind) {
      case DimensionKind::Uniform: u[i++] = d.hi > d.lo ? (v - d.lo) / (d.hi - d.lo) : 0.5; break;
      case DimensionKind::LogUniform:
        u[i++] = d.hi > d.lo ? (std::log(v) - std::log(d.lo)) / (std::log(d.hi) - std::log(d.lo)) : 0.5;
        break;
      case DimensionKind::Categorical: {
        const auto it = std::find(d.choices.begin(), d.choices.end(), v);
        if (it == d.choices.end()) fail(ErrorKind::InvalidArgument, "value is not a choice of '" + d.name + "'");
        u[i++] = (double(it - d.choices.begin()) + 0.5) / double(d.choices.size());
        break;
      }
    }
  }
  for (const auto& g : groups_) {
    const auto it = p.widths.find(g.name);
    if (it == p.widths.end() || it->second.size() != g.layers)
      fail(ErrorKind::InvalidArgument, "width group '" + g.name + "' missing from the point");
    std::size_t upper = g.hi;
    for (auto w : it->second) {
      u[i++] = (double(w - g.lo) + 0.5) / double(upper - g.lo + 1);
      upper = w;
    }
  }
  return u;
}

bool HyperParamSpace::contains(const ParamPoint& p) const {
  for (const auto& d : dims_) {
    const auto it = p.values.find(d.name);
    if (it == p.values.end()) return false;
    const double v = it->second;
    if (d.kind == DimensionKind::Categorical) {
      if (std::find(d.choices.begin(), d.choices.end(), v) == d.choices.end()) return false;
    } else if (!(v >= d.lo && v <= d.hi)) {
      return false;
    }
  }
  for (const auto& g : groups_) {
    const auto it = p.widths.find(g.name);
    if (it == p.widths.end() || it->second.size() != g.layers) return false;
    std::size_t prev = g.hi;
    for (auto w : it->second) {
      if (w < g.lo || w > prev) return false;
      prev = w;
    }
  }
  return true;
}

HyperParamSpace default_space(std::size_t depth, std::size_t max_width, bool include_theta) {
  HyperParamSpace s;
  s.add({"learning_rate", DimensionKind::LogUniform, 1e-14, 1e-3, {}});
  for (const char* n : {"l1_eeg", "l1_fmri", "l1_dec"}) s.add({n, DimensionKind::LogUniform, 1e-5, 1e-1, {}});
  if (include_theta) s.add({"theta", DimensionKind::Uniform, 0.0, 1.0, {}});
  s.add({"batch_size", DimensionKind::Categorical, 0, 0, {2, 4, 8, 16, 32, 64, 128}});
  if (depth > 1)
    for (const char* g : {"eeg_widths", "fmri_widths", "decoder_widths"}) s.add(WidthGroup{g, depth - 1, 1, max_width});
  return s;
}

double GaussianProcess::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  const double r = (a - b).norm() / length_;
  const double s5 = std::sqrt(5.0) * r;
  return (1.0 + s5 + 5.0 * r * r / 3.0) * std::exp(-s5);
}

void GaussianProcess::fit(const std::vector<Eigen::VectorXd>& x, const std::vector<double>& y) {
  if (x.empty() || x.size() != y.size()) fail(ErrorKind::InvalidArgument, "GP needs matching non-empty data");
  x_ = x;
  const Eigen::Index n = Eigen::Index(x.size());
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  mean_ = yv.mean();
  const double var = (yv.array() - mean_).square().mean();
  scale_ = var > 0 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (yv.array() - mean_) / scale_;

  // Length scale by maximum marginal likelihood over a fixed grid.
  double best_ll = -std::numeric_limits<double>::infinity(), best_length = length_;
  for (double ell : {0.03, 0.06, 0.1, 0.15, 0.2, 0.3, 0.45, 0.7, 1.0, 1.5}) {
    length_ = ell;
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = kernel(x[i], x[j]);
    K.diagonal().array() += kNoise;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd a = llt.solve(ys);
    const double ll = -0.5 * ys.dot(a) - Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    if (ll > best_ll) {
      best_ll = ll;
      best_length = ell;
      alpha_ = a;
      chol_l_ = llt.matrixL();
    }
  }
  if (!std::isfinite(best_ll)) fail(ErrorKind::DomainError, "GP kernel matrix is not positive definite");
  length_ = best_length;
}

std::pair<double, double> GaussianProcess::predict(const Eigen::VectorXd& x) const {
  const Eigen::Index n = Eigen::Index(x_.size());
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel(x, x_[std::size_t(i)]);
  const double mu = k.dot(alpha_);
  const Eigen::VectorXd v = chol_l_.triangularView<Eigen::Lower>().solve(k);
  const double var = std::max(0.0, 1.0 + kNoise - v.squaredNorm());
  return {mean_ + scale_ * mu, scale_ * std::sqrt(var)};
}

double expected_improvement(double mean, double sd, double best) {
  const double gain = best - mean;
  if (sd <= 1e-12) return std::max(gain, 0.0);
  const double z = gain / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return gain * cdf + sd * pdf;
}

namespace {

Eigen::VectorXd random_unit(Rng& rng, std::size_t dims) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(dims));
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.uniform();
  return u;
}

const TrialResult* find_replay(const std::vector<TrialResult>& replay, std::size_t depth, std::size_t index) {
  for (const auto& t : replay)
    if (t.depth == depth && t.index == index) return &t;
  return nullptr;
}

bool better(const TrialResult& a, const TrialResult& b) { return *a.score < *b.score; }

}  // namespace

BoResult bo_optimize(const HyperParamSpace& space, const Objective& objective, const BoOptions& opt) {
  if (opt.n_iter == 0) fail(ErrorKind::InvalidArgument, "bo_optimize needs n_iter >= 1");
  const std::size_t dims = space.unit_dims();
  const std::size_t warmup = (opt.n_iter + 4) / 5;
  Rng rng(derive_seed(opt.seed, {opt.depth, 0xB0}));
  BoResult result;
  std::vector<Eigen::VectorXd> xs;

  for (std::size_t t = 0; t < opt.n_iter; ++t) {
    std::vector<double> scores;
    double worst = -std::numeric_limits<double>::infinity(), best = std::numeric_limits<double>::infinity();
    for (const auto& tr : result.trials)
      if (tr.score) {
        worst = std::max(worst, *tr.score);
        best = std::min(best, *tr.score);
      }
    const bool any_ok = std::isfinite(best);

    Eigen::VectorXd u;
    if (t < warmup || !any_ok || dims == 0) {
      u = random_unit(rng, dims);
    } else {
      for (const auto& tr : result.trials) scores.push_back(tr.score ? *tr.score : worst);
      GaussianProcess gp;
      gp.fit(xs, scores);
      std::size_t best_i = 0;
      for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] < scores[best_i]) best_i = i;
      double best_ei = -1;
      for (std::size_t c = 0; c < opt.candidates; ++c) {
        Eigen::VectorXd cand = random_unit(rng, dims);
        if (c % 2 == 1) {
          // Local perturbation of the incumbent.
          for (Eigen::Index i = 0; i < cand.size(); ++i)
            cand[i] = std::clamp(xs[best_i][i] + 0.05 * (2.0 * cand[i] - 1.0), 0.0, 1.0);
        }
        const auto [mu, sd] = gp.predict(cand);
        const double ei = expected_improvement(mu, sd, best);
        if (ei > best_ei) {
          best_ei = ei;
          u = cand;
        }
      }
    }

    TrialResult tr;
    tr.depth = opt.depth;
    tr.index = t;
    tr.params = space.decode(u);
    tr.seed = derive_seed(opt.seed, {opt.depth, t, 0x7E});
    if (const auto* prior = find_replay(opt.replay, opt.depth, t)) {
      tr.score = prior->score;
      tr.status = prior->status;
      tr.wall_time = prior->wall_time;
    } else {
      const auto start = std::chrono::steady_clock::now();
      try {
        const auto s = objective(tr.params, tr.seed);
        if (s && std::isfinite(*s)) {
          tr.score = *s;
        } else {
          tr.status = "failed: objective returned no finite score";
        }
      } catch (const std::exception& e) {
        tr.status = std::string("failed: ") + e.what();
      }
      tr.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    xs.push_back(u);
    result.trials.push_back(tr);
    if (opt.on_trial) opt.on_trial(tr);
  }

  const TrialResult* best = nullptr;
  for (const auto& tr : result.trials)
    if (tr.score && (!best || better(tr, *best))) best = &tr;
  if (!best) fail(ErrorKind::AllTrialsFailed, "every one of " + std::to_string(opt.n_iter) + " trials failed");
  result.best = *best;
  return result;
}

NasResult nas_depth_search(const std::function<HyperParamSpace(std::size_t)>& space_for_depth,
                           const DepthObjective& build_and_eval, const NasOptions& opt) {
  if (opt.max_depth == 0) fail(ErrorKind::InvalidArgument, "depth cap must be >= 1");
  NasResult out;
  for (std::size_t d = 1; d <= opt.max_depth; ++d) {
    BoOptions bo;
    bo.n_iter = opt.n_iter_per_depth;
    bo.seed = derive_seed(opt.seed, {d});
    bo.depth = d;
    bo.replay = opt.replay;
    bo.on_trial = opt.on_trial;
    const auto r = bo_optimize(
        space_for_depth(d), [&](const ParamPoint& p, std::uint64_t s) { return build_and_eval(d, p, s); }, bo);
    out.best_per_depth.push_back(r.best);
    if (d == 1) {
      out.depth = 1;
      out.best = r.best;
      continue;
    }
    const double prev = *out.best.score;
    if (!(*r.best.score < prev - opt.relative_tolerance * std::abs(prev))) return out;
    out.depth = d;
    out.best = r.best;
  }
  out.cap_reached = true;
  return out;
}

std::string trial_to_json(const TrialResult& t) {
  nlohmann::json j;
  j["depth"] = t.depth;
  j["index"] = t.index;
  j["params"] = t.params.values;
  j["widths"] = t.params.widths;
  j["score"] = t.score ? nlohmann::json(*t.score) : nlohmann::json(nullptr);
  j["status"] = t.status;
  j["seed"] = t.seed;
  j["wall_time"] = t.wall_time;
  return j.dump();
}

TrialResult trial_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    TrialResult t;
    t.depth = j.at("depth").get<std::size_t>();
    t.index = j.at("index").get<std::size_t>();
    t.params.values = j.at("params").get<std::map<std::string, double>>();
    t.params.widths = j.at("widths").get<std::map<std::string, std::vector<std::size_t>>>();
    if (!j.at("score").is_null()) t.score = j.at("score").get<double>();
    t.status = j.at("status").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.wall_time = j.at("wall_time").get<double>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, std::string("trial record: ") + e.what());
  }
}

std::vector<TrialResult> read_trial_log(const std::string& path) {
  std::vector<TrialResult> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(trial_from_json(line));
    } catch (const Error& e) {
      fail(ErrorKind::FormatError, path + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void append_trial_log(const std::string& path, const TrialResult& t) {
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorKind::FormatError, "cannot open trial log " + path);
  out << trial_to_json(t) << '\n';
}

}  // namespace eegfmri

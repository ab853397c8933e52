// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eegfmri/ops.hpp"
#include "eegfmri/random.hpp"

namespace eegfmri {

std::string_view to_string(Procedure p) {
  switch (p) {
    case Procedure::AE: return "AE";
    case Procedure::LCOMB: return "LCOMB";
    case Procedure::GAN: return "GAN";
    case Procedure::WGAN: return "WGAN";
    case Procedure::TOPK: return "TOPK";
  }
  return "?";
}

Procedure procedure_from_string(std::string_view name) {
  for (auto p : {Procedure::AE, Procedure::LCOMB, Procedure::GAN, Procedure::WGAN, Procedure::TOPK})
    if (to_string(p) == name) return p;
  fail(ErrorKind::InvalidArgument, "unknown procedure '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "adam") return OptimizerKind::Adam;
  fail(ErrorKind::InvalidArgument, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(Component c) {
  constexpr std::string_view names[] = {"eeg_encoder", "fmri_encoder", "decoder",
                                        "discriminator", "eeg_temporal", "fmri_temporal"};
  return names[c];
}

void TrainConfig::validate() const {
  if (epochs == 0) fail(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    fail(ErrorKind::InvalidArgument, "learning rate must be finite and >= 0");
  for (double l : {l1_eeg, l1_fmri, l1_dec})
    if (!(l >= 0.0) || !std::isfinite(l)) fail(ErrorKind::InvalidArgument, "L1 weights must be finite and >= 0");
  if (batch_size == 0) fail(ErrorKind::InvalidArgument, "batch size must be >= 1");
  if (k == 0) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  if (!(clip_norm >= 0.0)) fail(ErrorKind::InvalidArgument, "clip norm must be >= 0");
  if (!(wgan_clip > 0.0)) fail(ErrorKind::InvalidArgument, "critic clip must be positive");
  if (!(adversarial_weight >= 0.0)) fail(ErrorKind::InvalidArgument, "adversarial weight must be >= 0");
  if (!(init_gain > 0.0)) fail(ErrorKind::InvalidArgument, "init gain must be positive");
  loss.validate();
  architecture.validate();
}

std::vector<Tensor> TrainedModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& n : nets)
    for (const auto& p : n.parameters()) out.push_back(p);
  return out;
}

TrainedModel init_model(const DataShapes& shapes, const TrainConfig& cfg) {
  cfg.validate();
  TrainedModel m;
  m.procedure = cfg.procedure;
  m.architecture = cfg.architecture;
  m.shapes = shapes;
  const auto& arch = cfg.architecture;
  const std::uint64_t base = derive_seed(cfg.seed, {0x1A17});
  auto build = [&](Component c, const NetworkSpec& spec) {
    m.nets[c] = build_network(spec, derive_seed(base, {c}), cfg.init_gain);
  };
  build(kEEGEncoder, eeg_encoder_spec(shapes, arch));
  build(kDecoder, decoder_spec(shapes, arch));
  const bool contrastive = cfg.procedure == Procedure::LCOMB || cfg.procedure == Procedure::TOPK;
  if (contrastive) {
    build(kFMRIEncoder, fmri_encoder_spec(shapes, arch));
    if (cfg.temporal_encoding) {
      build(kEEGTemporal, temporal_head_spec(shapes, arch));
      build(kFMRITemporal, temporal_head_spec(shapes, arch));
    }
  }
  if (cfg.procedure == Procedure::GAN || cfg.procedure == Procedure::WGAN) {
    const auto mode = cfg.procedure == Procedure::GAN ? AdversarialMode::Entropy : AdversarialMode::EarthMover;
    build(kDiscriminator, discriminator_spec(shapes, arch, mode));
    if (mode == AdversarialMode::EarthMover)
      for (auto p : m.nets[kDiscriminator].parameters())
        p.mutable_data() = p.data().cwiseMax(-cfg.wgan_clip).cwiseMin(cfg.wgan_clip);
  }
  return m;
}

Tensor encode_eeg(const TrainedModel& m, const Tensor& eeg, const ForwardContext& ctx) {
  if (eeg.shape() != m.shapes.eeg)
    fail(ErrorKind::ShapeMismatch, "EEG window " + to_string(eeg.shape()) + ", model expects " +
                                       to_string(m.shapes.eeg));
  return m.net(kEEGEncoder).forward(permute(eeg, {0, 2, 1}), ctx);
}

Tensor encode_fmri(const TrainedModel& m, const Tensor& fmri, const ForwardContext& ctx) {
  return m.net(kFMRIEncoder).forward(fmri, ctx);
}

Tensor temporal_encode(const Tensor& activation, const Network& head, const ForwardContext& ctx) {
  if (head.empty()) fail(ErrorKind::InvalidArgument, "temporal head is not initialized");
  if (activation.shape() != head.spec().input_shape)
    fail(ErrorKind::ShapeMismatch, "temporal head expects " + to_string(head.spec().input_shape) + ", got " +
                                       to_string(activation.shape()));
  return head.forward(activation, ctx);
}

Tensor synthesize(const TrainedModel& m, const Tensor& eeg) {
  if (!m.trained) fail(ErrorKind::UntrainedModel, "synthesize() needs a trained model");
  const ForwardContext eval{false, 0};
  return m.net(kDecoder).forward(encode_eeg(m, eeg.detach(), eval), eval).detach();
}

double pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) fail(ErrorKind::ShapeMismatch, "correlation of vectors of unequal length");
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  const double sa = ca.squaredNorm(), sb = cb.squaredNorm();
  if (sa == 0.0 || sb == 0.0) fail(ErrorKind::DegenerateEncoding, "correlation of a constant encoding");
  return ca.dot(cb) / std::sqrt(sa * sb);
}

TopkResult topk_combination(const Tensor& query, const std::vector<Tensor>& candidates, std::size_t k,
                            std::optional<std::size_t> skip) {
  if (k == 0) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  const std::size_t available = candidates.size() - (skip && *skip < candidates.size() ? 1 : 0);
  if (k > available)
    fail(ErrorKind::KTooLarge, "k = " + std::to_string(k) + " exceeds " + std::to_string(available) + " candidates");
  const Vector& q = query.data();
  if ((q.array() == q[0]).all()) fail(ErrorKind::DegenerateEncoding, "query encoding has zero variance");

  TopkResult r;
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    if (skip && *skip == j) continue;
    const Vector& c = candidates[j].data();
    if (candidates[j].shape() != query.shape())
      fail(ErrorKind::ShapeMismatch, "candidate encoding shape differs from the query");
    if ((c.array() == c[0]).all()) {
      ++r.excluded;
      continue;
    }
    ranked.emplace_back(pearson(q, c), j);
  }
  if (ranked.size() < k)
    fail(ErrorKind::KTooLarge, "only " + std::to_string(ranked.size()) + " candidates have non-zero variance (" +
                                   std::to_string(r.excluded) + " excluded)");
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  ranked.resize(k);
  double total = 0;
  for (const auto& [c, j] : ranked) total += c;
  if (std::abs(total) < 1e-12) fail(ErrorKind::DegenerateEncoding, "top-k correlations sum to zero");

  Vector acc = Vector::Zero(q.size());
  for (const auto& [c, j] : ranked) {
    const double w = c / total;
    acc += w * candidates[j].data();
    r.indices.push_back(j);
    r.correlations.push_back(c);
    r.weights.push_back(w);
  }
  r.combined = Tensor(query.shape(), std::move(acc));
  return r;
}

}  // namespace eegfmri

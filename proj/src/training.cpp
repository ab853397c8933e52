// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "eegfmri/models.hpp"
#include "eegfmri/ops.hpp"
#include "eegfmri/random.hpp"

namespace eegfmri {
namespace {

// Stream tags for derived seeds.
enum Tag : std::uint64_t {
  kTagEEG = 1,
  kTagFMRI,
  kTagDec,
  kTagDisc,
  kTagTEEG,
  kTagTFMRI,
  kTagShuffle,
  kTagNegatives,
  kTagStep,
  kTagDecoderStage
};
enum Kind : std::uint64_t { kPositive = 0, kNegative, kCriticFake, kCriticReal, kGenerator };

ForwardContext train_ctx(std::uint64_t step_seed, std::size_t idx, std::uint64_t role, std::uint64_t kind) {
  return {true, derive_seed(step_seed, {idx, role, kind})};
}

Tensor mean_of(const std::vector<Tensor>& terms) { return scale(add_all(terms), 1.0 / double(terms.size())); }

/// Gradient of `term` with respect to every parameter of `comps`, from a
/// fresh backward pass.
ComponentGradients grads_of(const Tensor& term, const TrainedModel& m, const std::vector<Component>& comps) {
  for (auto p : m.parameters()) p.zero_grad();
  if (term.requires_grad()) backward(term);
  ComponentGradients g;
  for (auto c : comps)
    for (const auto& p : m.net(c).parameters()) g[c].push_back(p.grad());
  return g;
}

/// Subgradient of lambda * sum|w| added to `g` (weights only; biases sit at
/// odd positions of Network::parameters()).
void add_l1(std::vector<Vector>& g, const Network& net, double lambda) {
  const auto params = net.parameters();
  for (std::size_t j = 0; j < params.size(); j += 2) {
    const Vector& w = params[j].data();
    g[j] += (lambda * w.array().sign()).matrix();
  }
}

bool contrastive_procedure(Procedure p) { return p == Procedure::LCOMB || p == Procedure::TOPK; }
bool adversarial_procedure(Procedure p) { return p == Procedure::GAN || p == Procedure::WGAN; }

AdversarialMode mode_of(Procedure p) {
  return p == Procedure::GAN ? AdversarialMode::Entropy : AdversarialMode::EarthMover;
}

Tensor reconstruct(const TrainedModel& m, const Tensor& eeg) {
  const ForwardContext eval{false, 0};
  return m.net(kDecoder).forward(encode_eeg(m, eeg.detach(), eval), eval).detach();
}

}  // namespace

struct Trainer::State {
  struct Moments {
    Vector m, v;
    std::size_t t = 0;
  };
  std::unordered_map<const detail::Node*, Moments> adam;
};

Trainer::Trainer(TrainedModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), state_(std::make_unique<State>()) {
  cfg_.validate();
}

Trainer::~Trainer() = default;

void Trainer::diverged(const char* phase, const std::string& detail) {
  TrainingDiagnostics d{epoch_, batch_, phase, detail, last_finite_};
  throw TrainingError(d, "non-finite training state at epoch " + std::to_string(epoch_) + ", batch " +
                             std::to_string(batch_) + " (" + phase + "): " + detail);
}

void Trainer::apply(const std::vector<Component>& comps, const ComponentGradients& g, const char* phase) {
  for (auto c : comps)
    for (const auto& v : g[c])
      if (!v.allFinite()) diverged(phase, "non-finite gradient in " + std::string(to_string(c)));

  double factor = 1.0;
  if (cfg_.clip_norm > 0) {
    double sq = 0;
    for (auto c : comps)
      for (const auto& v : g[c]) sq += v.squaredNorm();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) diverged(phase, "gradient norm overflow");
    if (norm > cfg_.clip_norm) factor = cfg_.clip_norm / norm;
  }

  const double lr = cfg_.learning_rate;
  for (auto c : comps) {
    const auto params = model_.net(c).parameters();
    for (std::size_t j = 0; j < params.size(); ++j) {
      Tensor p = params[j];
      const Vector grad = factor == 1.0 ? g[c][j] : Vector(g[c][j] * factor);
      Vector& w = p.mutable_data();
      if (cfg_.optimizer == OptimizerKind::SGD) {
        w -= lr * grad;
      } else {
        auto& st = state_->adam[p.node().get()];
        if (st.t == 0) {
          st.m = Vector::Zero(grad.size());
          st.v = Vector::Zero(grad.size());
        }
        ++st.t;
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        st.m = b1 * st.m + (1 - b1) * grad;
        st.v = b2 * st.v + (1 - b2) * grad.cwiseProduct(grad);
        const double c1 = 1 - std::pow(b1, double(st.t)), c2 = 1 - std::pow(b2, double(st.t));
        w.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps);
      }
      if (!w.allFinite()) diverged(phase, "parameter overflow in " + std::string(to_string(c)));
    }
    last_[c] = factor == 1.0 ? g[c] : [&] {
      auto s = g[c];
      for (auto& v : s) v *= factor;
      return s;
    }();
  }
}

LossBreakdown Trainer::encoder_objective(const Batch& batch, std::uint64_t seed, bool contrastive, bool update) {
  const auto& m = model_;
  if (batch.positives.empty()) fail(ErrorKind::EmptyDataset, "batch holds no positive pairs");
  const double theta = cfg_.loss.theta;
  const bool temporal = contrastive && cfg_.temporal_encoding;

  std::vector<Tensor> codes, rec_terms;
  for (std::size_t i = 0; i < batch.positives.size(); ++i) {
    const auto& p = batch.positives[i];
    Tensor z = encode_eeg(m, p.eeg, train_ctx(seed, i, kTagEEG, kPositive));
    Tensor pred = m.net(kDecoder).forward(z, train_ctx(seed, i, kTagDec, kPositive));
    rec_terms.push_back(epv_loss(p.fmri, pred));
    codes.push_back(z);
  }
  const Tensor l_r = mean_of(rec_terms);

  auto distance = [&](const Tensor& ze, const Tensor& zf, std::size_t i, std::uint64_t kind) {
    if (!temporal) return mean_abs_diff(ze, zf);
    return mean_abs_diff(temporal_encode(ze, m.net(kEEGTemporal), train_ctx(seed, i, kTagTEEG, kind)),
                         temporal_encode(zf, m.net(kFMRITemporal), train_ctx(seed, i, kTagTFMRI, kind)));
  };
  Tensor l_c = Tensor::scalar(0.0);
  if (contrastive) {
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < batch.positives.size(); ++i) {
      const Tensor zf = encode_fmri(m, batch.positives[i].fmri, train_ctx(seed, i, kTagFMRI, kPositive));
      terms.push_back(contrastive_loss(distance(codes[i], zf, i, kPositive), 1, cfg_.loss.margin));
    }
    for (std::size_t j = 0; j < batch.negatives.size(); ++j) {
      const auto& n = batch.negatives[j];
      const Tensor ze = encode_eeg(m, n.eeg, train_ctx(seed, j, kTagEEG, kNegative));
      const Tensor zf = encode_fmri(m, n.fmri, train_ctx(seed, j, kTagFMRI, kNegative));
      terms.push_back(contrastive_loss(distance(ze, zf, j, kNegative), 0, cfg_.loss.margin));
    }
    l_c = mean_of(terms);
  }

  LossBreakdown out;
  out.reconstruction = l_r.item();
  out.contrastive = l_c.item();
  out.l1 = cfg_.l1_eeg * m.net(kEEGEncoder).l1_norm() + cfg_.l1_dec * m.net(kDecoder).l1_norm();
  if (contrastive) {
    out.l1 += cfg_.l1_fmri * m.net(kFMRIEncoder).l1_norm();
    if (temporal) out.l1 += cfg_.l1_eeg * m.net(kEEGTemporal).l1_norm() + cfg_.l1_fmri * m.net(kFMRITemporal).l1_norm();
    out.total = theta * out.contrastive + (1 - theta) * out.reconstruction + out.l1;
  } else {
    out.total = out.reconstruction + out.l1;
  }
  if (!std::isfinite(out.total)) diverged("encoder", "loss is not finite");
  if (!update) return out;

  ComponentGradients g = grads_of(l_r, m, {kEEGEncoder, kDecoder});
  std::vector<Component> comps{kEEGEncoder, kDecoder};
  if (contrastive) {
    std::vector<Component> cc{kEEGEncoder, kFMRIEncoder};
    if (temporal) cc.insert(cc.end(), {kEEGTemporal, kFMRITemporal});
    const ComponentGradients gc = grads_of(l_c, m, cc);
    // Encoder: (1 - theta) * g(L_r) + theta * g(L_c); a zero-weight term
    // is skipped rather than added as signed zeros.
    for (std::size_t j = 0; j < g[kEEGEncoder].size(); ++j) {
      if (theta != 1.0) g[kEEGEncoder][j] *= (1 - theta);
      else g[kEEGEncoder][j].setZero();
      if (theta != 0.0) g[kEEGEncoder][j] += theta * gc[kEEGEncoder][j];
    }
    for (auto c : {kFMRIEncoder, kEEGTemporal, kFMRITemporal}) {
      if (c != kFMRIEncoder && !temporal) continue;
      g[c].clear();
      for (const auto& v : gc[c]) g[c].push_back(theta * v);
    }
    comps.insert(comps.end(), cc.begin() + 1, cc.end());
    add_l1(g[kFMRIEncoder], m.net(kFMRIEncoder), cfg_.l1_fmri);
    if (temporal) {
      add_l1(g[kEEGTemporal], m.net(kEEGTemporal), cfg_.l1_eeg);
      add_l1(g[kFMRITemporal], m.net(kFMRITemporal), cfg_.l1_fmri);
    }
  }
  add_l1(g[kEEGEncoder], m.net(kEEGEncoder), cfg_.l1_eeg);
  add_l1(g[kDecoder], m.net(kDecoder), cfg_.l1_dec);
  apply(comps, g, "encoder");
  last_finite_ = out.total;
  return out;
}

double Trainer::discriminator_phase(const Batch& batch, std::uint64_t seed) {
  const auto& m = model_;
  if (!adversarial_procedure(cfg_.procedure)) fail(ErrorKind::InvalidArgument, "procedure has no discriminator");
  if (batch.positives.empty()) fail(ErrorKind::EmptyDataset, "batch holds no positive pairs");
  const auto mode = mode_of(cfg_.procedure);
  double value = 0;
  try {
    std::vector<Tensor> d_terms, v_terms;
    for (std::size_t i = 0; i < batch.positives.size(); ++i) {
      const auto& p = batch.positives[i];
      const Tensor fake =
          m.net(kDecoder)
              .forward(encode_eeg(m, p.eeg.detach(), train_ctx(seed, i, kTagEEG, kCriticFake)),
                       train_ctx(seed, i, kTagDec, kCriticFake))
              .detach();
      const Tensor d_real = m.net(kDiscriminator).forward(p.fmri, train_ctx(seed, i, kTagDisc, kCriticReal));
      const Tensor d_fake = m.net(kDiscriminator).forward(fake, train_ctx(seed, i, kTagDisc, kCriticFake));
      const auto adv = adversarial_losses(d_real, d_fake, mode);
      d_terms.push_back(adv.discriminator);
      v_terms.push_back(adv.value);
    }
    const Tensor loss = mean_of(d_terms);
    value = mean_of(v_terms).item();
    if (!std::isfinite(value)) diverged("discriminator", "adversarial value is not finite");
    const auto g = grads_of(loss, m, {kDiscriminator});
    apply({kDiscriminator}, g, "discriminator");
  } catch (const TrainingError&) {
    throw;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NumericOverflow || e.kind() == ErrorKind::DomainError)
      diverged("discriminator", e.what());
    throw;
  }
  if (mode == AdversarialMode::EarthMover)
    for (auto p : m.net(kDiscriminator).parameters())
      p.mutable_data() = p.data().cwiseMax(-cfg_.wgan_clip).cwiseMin(cfg_.wgan_clip);
  return value;
}

LossBreakdown Trainer::generator_phase(const Batch& batch, std::uint64_t seed) {
  const auto& m = model_;
  if (!adversarial_procedure(cfg_.procedure)) fail(ErrorKind::InvalidArgument, "procedure has no discriminator");
  if (batch.positives.empty()) fail(ErrorKind::EmptyDataset, "batch holds no positive pairs");
  const auto mode = mode_of(cfg_.procedure);
  LossBreakdown out;
  try {
    std::vector<Tensor> rec_terms, gen_terms;
    for (std::size_t i = 0; i < batch.positives.size(); ++i) {
      const auto& p = batch.positives[i];
      const Tensor z = encode_eeg(m, p.eeg, train_ctx(seed, i, kTagEEG, kGenerator));
      const Tensor pred = m.net(kDecoder).forward(z, train_ctx(seed, i, kTagDec, kGenerator));
      rec_terms.push_back(epv_loss(p.fmri, pred));
      const Tensor d_fake = m.net(kDiscriminator).forward(pred, train_ctx(seed, i, kTagDisc, kGenerator));
      gen_terms.push_back(generator_adversarial_loss(d_fake, mode));
    }
    const Tensor l_r = mean_of(rec_terms);
    const Tensor l_g = mean_of(gen_terms);
    out.reconstruction = l_r.item();
    out.generator = l_g.item();
    out.l1 = cfg_.l1_eeg * m.net(kEEGEncoder).l1_norm() + cfg_.l1_dec * m.net(kDecoder).l1_norm();
    out.total = out.reconstruction + cfg_.adversarial_weight * out.generator + out.l1;
    if (!std::isfinite(out.total)) diverged("generator", "loss is not finite");

    ComponentGradients g = grads_of(l_r, m, {kEEGEncoder, kDecoder});
    const ComponentGradients gg = grads_of(l_g, m, {kEEGEncoder, kDecoder});
    for (auto c : {kEEGEncoder, kDecoder})
      for (std::size_t j = 0; j < g[c].size(); ++j) g[c][j] += cfg_.adversarial_weight * gg[c][j];
    add_l1(g[kEEGEncoder], m.net(kEEGEncoder), cfg_.l1_eeg);
    add_l1(g[kDecoder], m.net(kDecoder), cfg_.l1_dec);
    apply({kEEGEncoder, kDecoder}, g, "generator");
  } catch (const TrainingError&) {
    throw;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NumericOverflow || e.kind() == ErrorKind::DomainError) diverged("generator", e.what());
    throw;
  }
  last_finite_ = out.total;
  return out;
}

LossBreakdown Trainer::decoder_step(const std::vector<Tensor>& codes, const std::vector<Tensor>& targets,
                                    std::uint64_t seed) {
  const auto& m = model_;
  if (codes.empty() || codes.size() != targets.size())
    fail(ErrorKind::EmptyDataset, "decoder step needs matching non-empty codes and targets");
  for (auto& v : last_) v.clear();
  LossBreakdown out;
  try {
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const Tensor pred = m.net(kDecoder).forward(codes[i].detach(), train_ctx(seed, i, kTagDec, kPositive));
      terms.push_back(epv_loss(targets[i], pred));
    }
    const Tensor l_r = mean_of(terms);
    out.reconstruction = l_r.item();
    out.l1 = cfg_.l1_dec * m.net(kDecoder).l1_norm();
    out.total = out.reconstruction + out.l1;
    if (!std::isfinite(out.total)) diverged("decoder", "loss is not finite");
    ComponentGradients g = grads_of(l_r, m, {kDecoder});
    add_l1(g[kDecoder], m.net(kDecoder), cfg_.l1_dec);
    apply({kDecoder}, g, "decoder");
  } catch (const TrainingError&) {
    throw;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NumericOverflow) diverged("decoder", e.what());
    throw;
  }
  if (cfg_.record_gradients) history_.push_back(last_);
  last_finite_ = out.total;
  return out;
}

LossBreakdown Trainer::losses(const Batch& batch, std::uint64_t seed) {
  return encoder_objective(batch, seed, contrastive_procedure(cfg_.procedure), false);
}

LossBreakdown Trainer::step(const Batch& batch, std::uint64_t seed) {
  for (auto& v : last_) v.clear();
  LossBreakdown out;
  if (adversarial_procedure(cfg_.procedure)) {
    const double value = discriminator_phase(batch, seed);
    out = generator_phase(batch, seed);
    out.adversarial_value = value;
  } else {
    try {
      out = encoder_objective(batch, seed, contrastive_procedure(cfg_.procedure), true);
    } catch (const TrainingError&) {
      throw;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NumericOverflow) diverged("encoder", e.what());
      throw;
    }
  }
  if (cfg_.record_gradients) history_.push_back(last_);
  return out;
}

double validation_epv(const TrainedModel& m, const std::vector<PairedInstance>& pairs) {
  if (pairs.empty()) fail(ErrorKind::EmptyDataset, "no validation pairs");
  double s = 0;
  for (const auto& p : pairs) s += epv_loss(p.fmri, reconstruct(m, p.eeg)).item();
  return s / double(pairs.size());
}

TrainedModel train(const std::vector<RecordingSession>& train_sessions, const TrainConfig& cfg,
                   const std::vector<RecordingSession>& val_sessions) {
  cfg.validate();
  const auto positives = make_positive_pairs(train_sessions);
  if (positives.empty()) fail(ErrorKind::EmptyDataset, "no training windows");
  const DataShapes shapes{positives.front().eeg.shape(), positives.front().fmri.shape()};
  for (const auto& p : positives)
    if (p.eeg.shape() != shapes.eeg || p.fmri.shape() != shapes.fmri)
      fail(ErrorKind::ShapeMismatch, "training windows differ in shape");
  const auto val_pairs = make_positive_pairs(val_sessions);
  const double shift = positives.front().t_fmri - positives.front().t_eeg;

  TrainedModel model = init_model(shapes, cfg);
  Trainer trainer(model, cfg);
  const bool contrastive = contrastive_procedure(cfg.procedure);
  const std::size_t encoder_epochs = cfg.procedure == Procedure::TOPK ? cfg.topk_pretrain_epochs : cfg.epochs;
  const std::size_t n = positives.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;

  auto record = [&](std::size_t epoch, double loss) {
    EpochRecord r{epoch, loss, std::nullopt};
    if (!val_pairs.empty()) r.val_epv = validation_epv(model, val_pairs);
    model.history.push_back(r);
  };

  std::size_t epoch_index = 0;
  for (std::size_t e = 0; e < encoder_epochs; ++e, ++epoch_index) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng(derive_seed(cfg.seed, {kTagShuffle, e})).shuffle(order);
    std::vector<PairedInstance> negatives;
    if (contrastive) {
      NegativePairOptions opt;
      opt.limit = n;
      opt.seed = derive_seed(cfg.seed, {kTagNegatives, e});
      opt.shift_s = shift;
      negatives = make_negative_pairs(train_sessions, opt);
    }
    double total = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      Batch batch;
      for (std::size_t i = b * cfg.batch_size; i < std::min(n, (b + 1) * cfg.batch_size); ++i) {
        batch.positives.push_back(positives[order[i]]);
        if (i < negatives.size()) batch.negatives.push_back(negatives[i]);
      }
      trainer.set_position(epoch_index, b);
      total += trainer.step(batch, derive_seed(cfg.seed, {kTagStep, e, b})).total;
    }
    record(epoch_index, total / double(batches));
  }

  if (cfg.procedure == Procedure::TOPK) {
    std::vector<Tensor> codes, combined, targets;
    for (const auto& p : positives) codes.push_back(encode_eeg(model, p.eeg, {false, 0}).detach());
    for (std::size_t i = 0; i < n; ++i) {
      combined.push_back(topk_combination(codes[i], codes, cfg.k, i).combined);
      targets.push_back(positives[i].fmri);
    }
    for (std::size_t e = 0; e < cfg.epochs; ++e, ++epoch_index) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      Rng(derive_seed(cfg.seed, {kTagDecoderStage, kTagShuffle, e})).shuffle(order);
      double total = 0;
      for (std::size_t b = 0; b < batches; ++b) {
        std::vector<Tensor> bc, bt;
        for (std::size_t i = b * cfg.batch_size; i < std::min(n, (b + 1) * cfg.batch_size); ++i) {
          bc.push_back(combined[order[i]]);
          bt.push_back(targets[order[i]]);
        }
        trainer.set_position(epoch_index, b);
        total += trainer.decoder_step(bc, bt, derive_seed(cfg.seed, {kTagDecoderStage, kTagStep, e, b})).total;
      }
      record(epoch_index, total / double(batches));
    }
  }
  model.trained = true;
  return model;
}

}  // namespace eegfmri

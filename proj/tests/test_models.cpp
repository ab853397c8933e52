// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "eegfmri/architecture.hpp"
#include "eegfmri/models.hpp"
#include "eegfmri/network.hpp"
#include "eegfmri/ops.hpp"
#include "fixtures.hpp"

using namespace eegfmri;
using eegfmri::testing::random_tensor;
using eegfmri::testing::tiny_sessions;

namespace {

NetworkSpec dense_spec(std::size_t in, std::size_t out) {
  NetworkSpec s;
  s.role = NetworkRole::TemporalHead;
  s.input_shape = {1, in};
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.hyper.in_channels = in;
  l.hyper.out_channels = out;
  s.layers = {l};
  return s;
}

std::vector<Vector> snapshot(const Network& n) {
  std::vector<Vector> out;
  for (const auto& p : n.parameters()) out.push_back(p.data());
  return out;
}

bool same(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].size() != b[i].size() || std::memcmp(a[i].data(), b[i].data(), sizeof(double) * a[i].size()) != 0)
      return false;
  return true;
}

struct TinyData {
  std::vector<RecordingSession> sessions = tiny_sessions(3);
  std::vector<PairedInstance> positives = make_positive_pairs(sessions);
  DataShapes shapes{positives.front().eeg.shape(), positives.front().fmri.shape()};

  Batch batch(std::size_t n, std::uint64_t seed = 3) const {
    Batch b;
    b.positives.assign(positives.begin(), positives.begin() + std::ptrdiff_t(n));
    NegativePairOptions opt;
    opt.limit = n;
    opt.seed = seed;
    b.negatives = make_negative_pairs(sessions, opt);
    return b;
  }
};

const TinyData& tiny() {
  static const TinyData d;
  return d;
}

TrainConfig config(Procedure p) {
  TrainConfig c;
  c.procedure = p;
  c.seed = 17;
  c.learning_rate = 0.05;
  c.epochs = 2;
  c.batch_size = 4;
  return c;
}

}  // namespace

TEST_CASE("build_network") {
  const Network n = build_network(dense_spec(4, 2), 1);
  CHECK(n.parameter_count() == 10);
  CHECK(n.output_shape() == Shape{1, 2});
  CHECK(same(snapshot(n), snapshot(build_network(dense_spec(4, 2), 1))));
  CHECK_FALSE(same(snapshot(n), snapshot(build_network(dense_spec(4, 2), 2))));
  for (const auto& p : n.parameters()) CHECK(p.requires_grad());
  // Glorot bound sqrt(6 / (4 + 2)) = 1
  CHECK(n.parameters()[0].data().cwiseAbs().maxCoeff() <= 1.0);
  CHECK(n.parameters()[1].data().isZero());

  NetworkSpec bad = dense_spec(4, 2);
  bad.layers.push_back(bad.layers.front());  // Dense 4->2 after a 2-wide output
  CHECK_THROWS_AS_KIND(build_network(bad, 1), ErrorKind::ShapeCompositionError);
  CHECK_THROWS_AS_KIND(infer_shapes(bad), ErrorKind::ShapeCompositionError);
}

TEST_CASE("dropout follows every parametric layer except the last") {
  NetworkSpec s = dense_spec(4, 3);
  LayerSpec second;
  second.kind = LayerKind::Dense;
  second.hyper.in_channels = 3;
  second.hyper.out_channels = 2;
  s.layers.push_back(second);
  const auto layers = expanded_layers(s);
  REQUIRE(layers.size() == 3);
  CHECK(layers[1].kind == LayerKind::Dropout);
  CHECK(layers[1].hyper.drop_probability == 0.5);
  s.insert_dropout = false;
  CHECK(expanded_layers(s).size() == 2);

  // inference is deterministic, training mode is not the identity
  const Network n = build_network(dense_spec(4, 3), 4);
  const Tensor x = random_tensor({1, 4}, 2);
  CHECK(n.forward(x).data() == n.forward(x).data());
}

TEST_CASE("network roles and architecture specs compose") {
  for (auto r : {NetworkRole::EEGEncoder, NetworkRole::FMRIEncoder, NetworkRole::Decoder, NetworkRole::Discriminator,
                 NetworkRole::TemporalHead})
    CHECK(network_role_from_string(to_string(r)) == r);
  const DataShapes shapes = tiny().shapes;
  for (std::size_t depth = 1; depth <= 3; ++depth) {
    const ArchitectureConfig a = architecture_of_depth(depth, 3);
    CHECK(a.depth() == depth);
    CHECK(infer_shapes(eeg_encoder_spec(shapes, a)).back() == Shape{14, a.latent});
    CHECK(infer_shapes(fmri_encoder_spec(shapes, a)).back() == Shape{14, a.latent});
    CHECK(infer_shapes(decoder_spec(shapes, a)).back() == shapes.fmri);
    CHECK(infer_shapes(discriminator_spec(shapes, a, AdversarialMode::Entropy)).back() == Shape{1, 1});
    CHECK(infer_shapes(temporal_head_spec(shapes, a)).back() == Shape{14, a.temporal_hidden});
  }
  ArchitectureConfig bad;
  bad.eeg_widths = {2, 4};
  bad.fmri_widths = {2, 2};
  bad.decoder_widths = {2, 2};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("temporal heads") {
  TrainConfig c = config(Procedure::LCOMB);
  c.temporal_encoding = true;
  const TrainedModel m = init_model(tiny().shapes, c);
  const Network& he = m.net(kEEGTemporal);
  const Network& hf = m.net(kFMRITemporal);
  REQUIRE_FALSE(he.empty());
  REQUIRE_FALSE(hf.empty());
  CHECK_FALSE(same(snapshot(he), snapshot(hf)));

  const Tensor act = random_tensor({14, m.architecture.latent}, 8);
  const Tensor t = temporal_encode(act, he);
  CHECK(t.shape() == Shape{14, m.architecture.temporal_hidden});

  std::vector<Tensor> zeros;
  for (const auto& p : he.parameters()) zeros.push_back(Tensor::zeros(p.shape(), true));
  const Network zero = assemble_network(he.spec(), zeros);
  CHECK(temporal_encode(act, zero).data().isZero());
  CHECK_THROWS_AS_KIND(temporal_encode(random_tensor({13, m.architecture.latent}, 8), he), ErrorKind::ShapeMismatch);
}

TEST_CASE("synthesize") {
  TrainedModel m = init_model(tiny().shapes, config(Procedure::AE));
  const Tensor eeg = tiny().positives.front().eeg;
  CHECK_THROWS_AS_KIND(synthesize(m, eeg), ErrorKind::UntrainedModel);
  m.trained = true;
  const Tensor y = synthesize(m, eeg);
  CHECK(y.shape() == tiny().shapes.fmri);
  CHECK(y.dim(0) == 14);
  CHECK(y.data() == synthesize(m, eeg).data());
  CHECK_THROWS_AS_KIND(synthesize(m, random_tensor({4, 33, 13}, 1)), ErrorKind::ShapeMismatch);
}

TEST_CASE("topk_combination") {
  std::vector<Tensor> cands;
  for (std::uint64_t s = 0; s < 6; ++s) cands.push_back(random_tensor({3, 2}, s));

  SUBCASE("self query k = 1") {
    const auto r = topk_combination(cands[2], cands, 1);
    CHECK(r.indices == std::vector<std::size_t>{2});
    CHECK(r.weights[0] == 1.0);
    CHECK(std::memcmp(r.combined.data().data(), cands[2].data().data(), 6 * sizeof(double)) == 0);
  }
  SUBCASE("weights sum to one for every k") {
    const Tensor q = random_tensor({3, 2}, 99);
    std::vector<Tensor> pos;
    for (std::uint64_t s = 0; s < 6; ++s) pos.push_back(add(q, scale(random_tensor({3, 2}, s + 10), 0.3)));
    for (std::size_t k = 1; k <= pos.size(); ++k) {
      const auto r = topk_combination(q, pos, k);
      CHECK(std::accumulate(r.weights.begin(), r.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(r.indices.size() == k);
    }
  }
  SUBCASE("identical encodings") {
    const std::vector<Tensor> same_codes(4, cands[0]);
    const auto r = topk_combination(cands[1], same_codes, 4);
    for (std::size_t i = 0; i < 6; ++i) CHECK(r.combined[i] == doctest::Approx(cands[0][i]));
  }
  SUBCASE("hand-set correlations {0.9, 0.5, -0.2}") {
    // q and u are centred, orthonormal; c = rho q + sqrt(1 - rho^2) u has
    // correlation rho with q.
    Vector q(6), u(6);
    q << 1, -1, 2, -2, 0, 0;
    u << 1, 1, 0, 0, -1, -1;
    q /= q.norm();
    u /= u.norm();
    std::vector<Tensor> c;
    for (double rho : {0.9, 0.5, -0.2}) c.push_back(Tensor({3, 2}, Vector(rho * q + std::sqrt(1 - rho * rho) * u)));
    const auto r = topk_combination(Tensor({3, 2}, q), c, 2);
    REQUIRE(r.indices == std::vector<std::size_t>{0, 1});
    CHECK(r.correlations[0] == doctest::Approx(0.9));
    CHECK(r.correlations[1] == doctest::Approx(0.5));
    CHECK(r.weights[0] == doctest::Approx(0.9 / 1.4));
    CHECK(r.weights[1] == doctest::Approx(0.5 / 1.4));
    const Vector expect = (0.9 * c[0].data() + 0.5 * c[1].data()) / 1.4;
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(r.combined[std::size_t(i)] == doctest::Approx(expect[i]));
  }
  SUBCASE("errors and degenerate encodings") {
    CHECK_THROWS_AS_KIND(topk_combination(cands[0], cands, 7), ErrorKind::KTooLarge);
    CHECK_THROWS_AS_KIND(topk_combination(Tensor::full({3, 2}, 1.0), cands, 1), ErrorKind::DegenerateEncoding);
    auto with_flat = cands;
    with_flat.push_back(Tensor::full({3, 2}, 2.0));
    const auto r = topk_combination(cands[0], with_flat, 3);
    CHECK(r.excluded == 1);
    for (auto i : r.indices) CHECK(i != 6);
    const auto skipped = topk_combination(cands[0], cands, 1, 0);
    CHECK(skipped.indices[0] != 0);
  }
}

TEST_CASE("a zero learning rate leaves every parameter bit-identical") {
  for (auto p : {Procedure::AE, Procedure::LCOMB, Procedure::GAN, Procedure::WGAN, Procedure::TOPK}) {
    TrainConfig c = config(p);
    c.learning_rate = 0.0;
    c.temporal_encoding = p == Procedure::LCOMB;
    TrainedModel m = init_model(tiny().shapes, c);
    std::vector<std::vector<Vector>> before;
    for (const auto& n : m.nets) before.push_back(snapshot(n));
    Trainer t(m, c);
    t.step(tiny().batch(3), 5);
    if (p == Procedure::TOPK) {
      std::vector<Tensor> codes, targets;
      for (std::size_t i = 0; i < 3; ++i) {
        codes.push_back(encode_eeg(m, tiny().positives[i].eeg));
        targets.push_back(tiny().positives[i].fmri);
      }
      t.decoder_step(codes, targets, 6);
    }
    for (std::size_t k = 0; k < kComponentCount; ++k) {
      INFO(to_string(p) << " component " << to_string(Component(k)));
      CHECK(same(before[k], snapshot(m.nets[k])));
    }
  }
}

TEST_CASE("L1 adds exactly lambda times the weight magnitude") {
  for (auto p : {Procedure::AE, Procedure::LCOMB}) {
    TrainConfig c = config(p);
    c.l1_eeg = c.l1_fmri = c.l1_dec = 0.0;
    TrainedModel m = init_model(tiny().shapes, c);
    const Batch b = tiny().batch(2);
    const double base = Trainer(m, c).losses(b, 1).total;
    TrainConfig d = c;
    d.l1_eeg = 0.01;
    d.l1_fmri = 0.02;
    d.l1_dec = 0.03;
    const double with = Trainer(m, d).losses(b, 1).total;
    double expect = 0.01 * m.net(kEEGEncoder).l1_norm() + 0.03 * m.net(kDecoder).l1_norm();
    if (p == Procedure::LCOMB) expect += 0.02 * m.net(kFMRIEncoder).l1_norm();
    CHECK(with - base == doctest::Approx(expect).epsilon(1e-10));
    // Sum of |w| over weights only
    double manual = 0;
    for (const auto& w : m.net(kDecoder).weights()) manual += w.data().cwiseAbs().sum();
    CHECK(m.net(kDecoder).l1_norm() == doctest::Approx(manual));
  }
}

TEST_CASE("temporal toggle changes the contrastive distance, not the decoder path") {
  TrainConfig on = config(Procedure::LCOMB);
  on.temporal_encoding = true;
  TrainedModel m = init_model(tiny().shapes, on);
  TrainConfig off = on;
  off.temporal_encoding = false;
  const Batch b = tiny().batch(3);
  const auto a = Trainer(m, on).losses(b, 2);
  const auto z = Trainer(m, off).losses(b, 2);
  CHECK(a.reconstruction == z.reconstruction);
  CHECK(a.contrastive != z.contrastive);
}

TEST_CASE("adversarial phases touch only their own components") {
  for (auto p : {Procedure::GAN, Procedure::WGAN}) {
    TrainConfig c = config(p);
    TrainedModel m = init_model(tiny().shapes, c);
    Trainer t(m, c);
    const Batch b = tiny().batch(3);
    auto snap = [&] {
      std::vector<std::vector<Vector>> s;
      for (const auto& n : m.nets) s.push_back(snapshot(n));
      return s;
    };
    auto s0 = snap();
    t.discriminator_phase(b, 1);
    auto s1 = snap();
    CHECK_FALSE(same(s0[kDiscriminator], s1[kDiscriminator]));
    CHECK(same(s0[kEEGEncoder], s1[kEEGEncoder]));
    CHECK(same(s0[kDecoder], s1[kDecoder]));
    t.generator_phase(b, 2);
    auto s2 = snap();
    CHECK(same(s1[kDiscriminator], s2[kDiscriminator]));
    CHECK_FALSE(same(s1[kEEGEncoder], s2[kEEGEncoder]));
    CHECK_FALSE(same(s1[kDecoder], s2[kDecoder]));
    if (p == Procedure::WGAN)
      for (const auto& w : m.net(kDiscriminator).parameters()) CHECK(w.data().cwiseAbs().maxCoeff() <= c.wgan_clip);
  }
}

TEST_CASE("theta = 0 reproduces AE encoder gradients bit for bit") {
  TrainConfig ae = config(Procedure::AE);
  ae.record_gradients = true;
  ae.epochs = 2;
  TrainConfig lc = ae;
  lc.procedure = Procedure::LCOMB;
  lc.loss.theta = 0.0;
  const auto sessions = tiny_sessions(3);
  TrainedModel ma = init_model(tiny().shapes, ae), ml = init_model(tiny().shapes, lc);
  Trainer ta(ma, ae), tl(ml, lc);
  for (std::size_t step = 0; step < 4; ++step) {
    const Batch b = tiny().batch(3, step);
    ta.step(b, 100 + step);
    tl.step(b, 100 + step);
    CHECK(same(ta.last_gradients()[kEEGEncoder], tl.last_gradients()[kEEGEncoder]));
    CHECK(same(ta.last_gradients()[kDecoder], tl.last_gradients()[kDecoder]));
  }
  CHECK(same(snapshot(ma.net(kEEGEncoder)), snapshot(ml.net(kEEGEncoder))));
}

TEST_CASE("train: history, determinism and errors") {
  const auto sessions = tiny_sessions(3);
  TrainConfig c = config(Procedure::TOPK);
  c.topk_pretrain_epochs = 2;
  c.epochs = 3;
  const TrainedModel a = train(sessions, c, sessions);
  CHECK(a.trained);
  CHECK(a.history.size() == 5);
  for (const auto& h : a.history) CHECK(h.val_epv.has_value());
  const TrainedModel b = train(sessions, c);
  for (std::size_t k = 0; k < kComponentCount; ++k) CHECK(same(snapshot(a.nets[k]), snapshot(b.nets[k])));
  CHECK_THROWS_AS_KIND(train({}, c), ErrorKind::EmptyDataset);
  c.procedure = Procedure::LCOMB;
  CHECK_THROWS_AS_KIND(train({sessions[0]}, c), ErrorKind::NoNegativesPossible);
}

TEST_CASE("AE reduces the reconstruction loss") {
  const auto [train_part, held_out] = eegfmri::testing::split_windows(tiny_sessions(3));
  TrainConfig c = config(Procedure::AE);
  c.learning_rate = 0.1;
  c.epochs = 40;
  const TrainedModel init = init_model(tiny().shapes, c);
  const TrainedModel m = train(train_part, c, held_out);
  const auto pairs = make_positive_pairs(held_out);
  CHECK(validation_epv(m, pairs) < 0.6 * validation_epv(init, pairs));
}

TEST_CASE("divergence surfaces as NonFiniteLoss with diagnostics") {
  const auto sessions = tiny_sessions(3);
  TrainConfig c = config(Procedure::GAN);
  c.learning_rate = 1e-3;
  c.clip_norm = 0.0;
  c.init_gain = 10.0;
  try {
    train(sessions, c);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteLoss);
    CHECK(e.diagnostics().epoch == 0);
    CHECK_FALSE(e.diagnostics().phase.empty());
  }
  // Huge steps with an active clip keep the parameters finite.
  TrainConfig d = config(Procedure::AE);
  d.learning_rate = 1e3;
  d.clip_norm = 1e-3;
  d.epochs = 3;
  const TrainedModel m = train(sessions, d);
  for (const auto& p : m.parameters()) CHECK(p.data().allFinite());
}

TEST_CASE("TrainConfig validation") {
  TrainConfig c;
  c.validate();
  c.learning_rate = -1;
  CHECK_THROWS_AS_KIND(c.validate(), ErrorKind::InvalidArgument);
  c.learning_rate = 1e-3;
  c.k = 0;
  CHECK_THROWS_AS_KIND(c.validate(), ErrorKind::InvalidArgument);
  c.k = 5;
  c.loss.theta = 3;
  CHECK_THROWS_AS_KIND(c.validate(), ErrorKind::ThetaOutOfRange);
  for (auto p : {Procedure::AE, Procedure::LCOMB, Procedure::GAN, Procedure::WGAN, Procedure::TOPK})
    CHECK(procedure_from_string(to_string(p)) == p);
  CHECK_THROWS_AS_KIND(procedure_from_string("VAE"), ErrorKind::InvalidArgument);
}

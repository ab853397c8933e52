// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "eegfmri/architecture.hpp"
#include "eegfmri/gradcheck.hpp"
#include "eegfmri/losses.hpp"
#include "eegfmri/network.hpp"
#include "eegfmri/ops.hpp"
#include "test_util.hpp"

using namespace eegfmri;
using eegfmri::testing::random_tensor;

TEST_CASE("epv_loss examples") {
  const Tensor a = random_tensor({3, 4}, 1);
  CHECK(epv_loss(a, a).item() == 0.0);
  CHECK(epv_loss(Tensor::full({1, 4}, 2.0), Tensor::zeros({1, 4})).item() == doctest::Approx(1.0));
  // per-volume values 1 and 3 over 4 voxels: residuals 2 and 6.
  const Tensor t = Tensor::from({2, 4}, {2, 2, 2, 2, 6, 6, 6, 6});
  CHECK(epv_loss(t, Tensor::zeros({2, 4})).item() == doctest::Approx(2.0));
  CHECK_THROWS_AS_KIND(epv_loss(a, Tensor::zeros({4, 3})), ErrorKind::ShapeMismatch);
}

TEST_CASE("epv_loss properties") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor a = random_tensor({3, 2, 2}, s), b = random_tensor({3, 2, 2}, s + 99);
    CHECK(epv_loss(a, b).item() > 0.0);
    const Tensor c = Tensor::full({3, 2, 2}, 1.0);
    const double one = epv_loss(add(b, c), b).item();
    const double three = epv_loss(add(b, scale(c, 3.0)), b).item();
    CHECK(three == doctest::Approx(3 * one));
  }
}

TEST_CASE("contrastive_loss examples") {
  CHECK(contrastive_loss(Tensor::scalar(0.0), 1, 1.0).item() == 0.0);
  CHECK(contrastive_loss(Tensor::scalar(1.5), 0, 1.0).item() == 0.0);
  CHECK(contrastive_loss(Tensor::scalar(1.0), 0, 1.0).item() == 0.0);
  CHECK(contrastive_loss(Tensor::scalar(0.0), 0, 1.0).item() == 1.0);
  CHECK(contrastive_loss(Tensor::scalar(0.5), 1, 1.0).item() == 0.25);
  CHECK_THROWS_AS_KIND(contrastive_loss(Tensor::scalar(-0.1), 1, 1.0), ErrorKind::NegativeDistance);
  CHECK_THROWS_AS_KIND(contrastive_loss(Tensor::zeros({2}), 1, 1.0), ErrorKind::NotScalar);
  // continuity at the margin
  const double left = contrastive_loss(Tensor::scalar(1.0 - 1e-9), 0, 1.0).item();
  CHECK(left < 1e-17);
}

TEST_CASE("encoder_combined_loss") {
  const Tensor lc = Tensor::scalar(4.0), lr = Tensor::scalar(8.0);
  CHECK(encoder_combined_loss(lc, lr, 1.0).item() == 4.0);
  CHECK(encoder_combined_loss(lc, lr, 0.0).item() == 8.0);
  CHECK(encoder_combined_loss(lc, lr, 0.25).item() == 7.0);
  CHECK_THROWS_AS_KIND(encoder_combined_loss(lc, lr, 1.1), ErrorKind::ThetaOutOfRange);
  CHECK_THROWS_AS_KIND(encoder_combined_loss(lc, lr, -0.1), ErrorKind::ThetaOutOfRange);
  for (double theta : {0.1, 0.5, 0.9}) {
    CHECK(encoder_combined_loss(Tensor::scalar(5.0), lr, theta).item() > encoder_combined_loss(lc, lr, theta).item());
    CHECK(encoder_combined_loss(lc, Tensor::scalar(9.0), theta).item() > encoder_combined_loss(lc, lr, theta).item());
  }
}

TEST_CASE("adversarial losses") {
  const Tensor half = Tensor::full({1, 1}, 0.5);
  auto e = adversarial_losses(half, half, AdversarialMode::Entropy);
  CHECK(std::abs(e.value.item() - 2 * std::log(0.5)) < 1e-12);
  CHECK(e.discriminator.item() == -e.value.item());
  CHECK(generator_adversarial_loss(half, AdversarialMode::Entropy).item() == doctest::Approx(std::log(0.5)));

  auto w = adversarial_losses(Tensor::full({1, 1}, 1.0), Tensor::full({1, 1}, 0.0), AdversarialMode::EarthMover);
  CHECK(w.value.item() == 2.0);
  for (double c : {-3.0, 0.0, 0.7, 12.0}) {
    const Tensor t = Tensor::full({1, 1}, c);
    CHECK(adversarial_losses(t, t, AdversarialMode::EarthMover).value.item() == doctest::Approx(1.0));
    CHECK(generator_adversarial_loss(t, AdversarialMode::EarthMover).item() == doctest::Approx(-c));
  }
  CHECK_THROWS_AS_KIND(adversarial_losses(Tensor::full({1, 1}, 1.0), half, AdversarialMode::Entropy),
                       ErrorKind::DomainError);
  CHECK_THROWS_AS_KIND(adversarial_losses(half, Tensor::full({1, 1}, 0.0), AdversarialMode::Entropy),
                       ErrorKind::DomainError);
  CHECK(adversarial_mode_from_string(to_string(AdversarialMode::EarthMover)) == AdversarialMode::EarthMover);
}

TEST_CASE("LossConfig validation") {
  LossConfig c;
  c.validate();
  c.theta = 2;
  CHECK_THROWS_AS_KIND(c.validate(), ErrorKind::ThetaOutOfRange);
  c.theta = 0.5;
  c.margin = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("gradient clipping") {
  Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor b = Tensor::from({1}, {3.0}, true);
  backward(add(sum(scale(a, 3.0)), sum(scale(b, 4.0))));
  const std::vector<Tensor> ps{a, b};
  CHECK(global_grad_norm(ps) == doctest::Approx(std::sqrt(9 + 9 + 16)));
  const double before = clip_grad_norm(ps, 1.0);
  CHECK(before == doctest::Approx(std::sqrt(34.0)));
  CHECK(global_grad_norm(ps) == doctest::Approx(1.0));
  clip_grad_norm(ps, 10.0);
  CHECK(global_grad_norm(ps) == doctest::Approx(1.0));
}

namespace {

// Finite-difference check of one parameter tensor of `spec` through the
// given scalar objective of the network output.
double network_param_error(const NetworkSpec& spec, std::size_t param, const Tensor& input,
                           const std::function<Tensor(const Tensor&)>& objective, std::uint64_t seed) {
  const Network net = build_network(spec, seed);
  const auto base = net.parameters();
  auto f = [&](const Tensor& w) {
    auto params = base;
    params[param] = w;
    return objective(assemble_network(spec, params).forward(input));
  };
  return finite_diff_check(f, base[param].clone(true), 1e-6, 1e-6).max_relative_error;
}

}  // namespace

TEST_CASE("losses pass finite differences through encoder and decoder graphs") {
  const DataShapes shapes{{2, 5, 4}, {4, 3, 3, 2}};
  ArchitectureConfig arch;
  arch.latent = 3;
  arch.eeg_widths = arch.fmri_widths = arch.decoder_widths = {2};
  arch.activation = Activation::Tanh;
  const Tensor eeg = random_tensor({2, 4, 5}, 3, 0.0, 1.0);  // encoder layout [C, T, F]
  const Tensor fmri = random_tensor(shapes.fmri, 4, 0.5, 1.5);
  const NetworkSpec enc = eeg_encoder_spec(shapes, arch);
  const NetworkSpec fenc = fmri_encoder_spec(shapes, arch);
  const NetworkSpec dec = decoder_spec(shapes, arch);
  const Tensor code = random_tensor({4, 3}, 5);
  const Tensor other_code = random_tensor({4, 3}, 6);

  const std::size_t enc_params = build_network(enc, 1).parameters().size();
  for (std::size_t j = 0; j < enc_params; ++j) {
    // contrastive through the EEG encoder, both labels
    for (int y : {0, 1})
      CHECK(network_param_error(enc, j, eeg, [&](const Tensor& z) {
              return contrastive_loss(mean_abs_diff(z, other_code), y, 1.0);
            }, 11) < 1e-4);
  }
  const std::size_t fenc_params = build_network(fenc, 1).parameters().size();
  for (std::size_t j = 0; j < fenc_params; ++j)
    CHECK(network_param_error(fenc, j, fmri, [&](const Tensor& z) {
            return contrastive_loss(mean_abs_diff(code, z), 0, 4.0);
          }, 12) < 1e-4);
  const std::size_t dec_params = build_network(dec, 1).parameters().size();
  for (std::size_t j = 0; j < dec_params; ++j) {
    CHECK(network_param_error(dec, j, code, [&](const Tensor& p) { return epv_loss(fmri, p); }, 13) < 1e-4);
    CHECK(network_param_error(dec, j, code, [&](const Tensor& p) {
            const Tensor lc = contrastive_loss(scale(sum_abs(p), 1e-2), 1, 1.0);
            return encoder_combined_loss(lc, epv_loss(fmri, p), 0.3);
          }, 14) < 1e-4);
  }
  for (auto mode : {AdversarialMode::Entropy, AdversarialMode::EarthMover}) {
    const NetworkSpec disc = discriminator_spec(shapes, arch, mode);
    const Tensor fake = random_tensor(shapes.fmri, 21, 0.5, 1.5);
    const std::size_t n = build_network(disc, 1).parameters().size();
    for (std::size_t j = 0; j < n; ++j) {
      const Network net = build_network(disc, 15);
      const auto base = net.parameters();
      auto f = [&](const Tensor& w) {
        auto params = base;
        params[j] = w;
        const Network d = assemble_network(disc, params);
        return adversarial_losses(d.forward(fmri), d.forward(fake), mode).discriminator;
      };
      const auto r = finite_diff_check(f, base[j].clone(true), 1e-5, 1e-6);
      INFO("mode " << to_string(mode) << " param " << j << " analytic " << r.analytic << " numeric " << r.numeric);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
}

// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/losses.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "eegfmri/error.hpp"
#include "eegfmri/ops.hpp"

namespace eegfmri {

std::string_view to_string(AdversarialMode mode) {
  return mode == AdversarialMode::Entropy ? "entropy" : "earth_mover";
}

AdversarialMode adversarial_mode_from_string(std::string_view name) {
  if (name == "entropy") return AdversarialMode::Entropy;
  if (name == "earth_mover") return AdversarialMode::EarthMover;
  fail(ErrorKind::InvalidArgument, "unknown adversarial mode '" + std::string(name) + "'");
}

void LossConfig::validate() const {
  if (!(theta >= 0.0 && theta <= 1.0)) fail(ErrorKind::ThetaOutOfRange, "theta must lie in [0, 1]");
  if (!(margin > 0.0)) fail(ErrorKind::InvalidArgument, "contrastive margin must be positive");
}

Tensor epv_loss(const Tensor& fmri, const Tensor& pred) {
  if (fmri.shape() != pred.shape())
    fail(ErrorKind::ShapeMismatch, "epv_loss: " + to_string(fmri.shape()) + " vs " + to_string(pred.shape()));
  if (fmri.rank() < 1 || fmri.size() == 0) fail(ErrorKind::ShapeMismatch, "epv_loss needs at least one voxel");
  const std::size_t vols = fmri.dim(0);
  const std::size_t vox = fmri.size() / vols;
  const RowMatrix diff = pred.as_matrix(vols) - fmri.as_matrix(vols);
  const Vector norms = diff.rowwise().norm();
  const double denom = double(vox) * double(vols);
  const double value = norms.sum() / denom;

  auto d = std::make_shared<const RowMatrix>(diff);
  auto n = std::make_shared<const Vector>(norms);
  const auto pred_node = pred.node();
  const auto fmri_node = fmri.node();
  return Tensor::make_result(
      Shape{1}, Vector::Constant(1, value), {pred, fmri},
      [d, n, vols, denom, pred_node, fmri_node](detail::Node& self) {
        const double g = self.grad[0];
        RowMatrix gd(d->rows(), d->cols());
        for (Eigen::Index v = 0; v < Eigen::Index(vols); ++v) {
          const double nv = (*n)[v];
          if (nv > 0)
            gd.row(v) = d->row(v) * (g / (nv * denom));
          else
            gd.row(v).setZero();
        }
        const Eigen::Map<const Vector> flat(gd.data(), gd.size());
        if (pred_node->requires_grad) pred_node->accumulate(flat);
        if (fmri_node->requires_grad) fmri_node->accumulate(-flat);
      },
      "epv_loss");
}

Tensor contrastive_loss(const Tensor& d_w, int y, double margin) {
  if (d_w.size() != 1) fail(ErrorKind::NotScalar, "contrastive distance must be a scalar");
  if (d_w.item() < 0.0) fail(ErrorKind::NegativeDistance, "contrastive distance is negative");
  if (y != 0 && y != 1) fail(ErrorKind::InvalidArgument, "pair label must be 0 or 1");
  if (!(margin > 0.0)) fail(ErrorKind::InvalidArgument, "contrastive margin must be positive");
  if (y == 1) return square(d_w);
  return square(relu(add_scalar(neg(d_w), margin)));
}

Tensor encoder_combined_loss(const Tensor& l_c, const Tensor& l_r, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) fail(ErrorKind::ThetaOutOfRange, "theta must lie in [0, 1]");
  return add(scale(l_c, theta), scale(l_r, 1.0 - theta));
}

AdversarialLosses adversarial_losses(const Tensor& d_real, const Tensor& d_fake, AdversarialMode mode) {
  if (d_real.size() == 0 || d_fake.size() == 0)
    fail(ErrorKind::ShapeMismatch, "adversarial losses need discriminator outputs");
  if (mode == AdversarialMode::Entropy) {
    for (const Tensor* t : {&d_real, &d_fake})
      if (!((t->data().array() > 0.0).all() && (t->data().array() < 1.0).all()))
        fail(ErrorKind::DomainError, "entropy-mode discriminator outputs must lie in (0, 1)");
    const Tensor log_real = mean(log(d_real));
    const Tensor log_one_minus_fake = mean(log(add_scalar(neg(d_fake), 1.0)));
    const Tensor value = add(log_real, log_one_minus_fake);
    return {neg(value), log_one_minus_fake, value};
  }
  const Tensor value = add(mean(d_real), mean(add_scalar(neg(d_fake), 1.0)));
  return {neg(value), neg(mean(d_fake)), value};
}

Tensor generator_adversarial_loss(const Tensor& d_fake, AdversarialMode mode) {
  if (d_fake.size() == 0) fail(ErrorKind::ShapeMismatch, "generator loss needs discriminator outputs");
  if (mode == AdversarialMode::Entropy) {
    if (!((d_fake.data().array() > 0.0).all() && (d_fake.data().array() < 1.0).all()))
      fail(ErrorKind::DomainError, "entropy-mode discriminator outputs must lie in (0, 1)");
    return mean(log(add_scalar(neg(d_fake), 1.0)));
  }
  return neg(mean(d_fake));
}

double global_grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.has_grad()) sq += p.node()->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<const Tensor> params, double max_norm) {
  if (!(max_norm > 0.0)) fail(ErrorKind::InvalidArgument, "max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (std::isfinite(norm) && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params)
      if (p.has_grad()) p.node()->grad *= factor;
  }
  return norm;
}

}  // namespace eegfmri

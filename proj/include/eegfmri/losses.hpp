// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string_view>

#include "eegfmri/tensor.hpp"

namespace eegfmri {

enum class AdversarialMode { Entropy, EarthMover };

std::string_view to_string(AdversarialMode mode);
AdversarialMode adversarial_mode_from_string(std::string_view name);

struct LossConfig {
  double theta = 0.5;
  double margin = 1.0;
  AdversarialMode adversarial_mode = AdversarialMode::Entropy;

  /// Throws ThetaOutOfRange / InvalidArgument.
  void validate() const;
};

/// Euclidean per volume: mean over the leading axis of ||diff_v||_2 / N,
/// where N is the number of elements per volume. The subgradient at a
/// zero residual volume is zero.
Tensor epv_loss(const Tensor& fmri, const Tensor& pred);

/// Y * d^2 + (1 - Y) * max(0, m - d)^2 for a scalar distance d >= 0.
Tensor contrastive_loss(const Tensor& d_w, int y, double margin);

/// theta * l_c + (1 - theta) * l_r.
Tensor encoder_combined_loss(const Tensor& l_c, const Tensor& l_r, double theta);

struct AdversarialLosses {
  Tensor discriminator;  // minimized by the discriminator (= -value)
  Tensor generator;      // minimized by the generator
  Tensor value;          // objective the discriminator maximizes
};

/// Entropy mode expects post-sigmoid outputs in (0, 1); EarthMover takes
/// unbounded critic outputs.
AdversarialLosses adversarial_losses(const Tensor& d_real, const Tensor& d_fake, AdversarialMode mode);

/// Generator objective alone: E[log(1 - D(fake))] or -E[D(fake)].
Tensor generator_adversarial_loss(const Tensor& d_fake, AdversarialMode mode);

/// Rescales the accumulated gradients of `params` so their global L2 norm
/// is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(std::span<const Tensor> params, double max_norm);

double global_grad_norm(std::span<const Tensor> params);

}  // namespace eegfmri

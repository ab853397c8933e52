// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "eegfmri/layers.hpp"

namespace eegfmri {

enum class NetworkRole { EEGEncoder, FMRIEncoder, Decoder, Discriminator, TemporalHead };

std::string_view to_string(NetworkRole role);
NetworkRole network_role_from_string(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  LayerHyper hyper;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  NetworkRole role = NetworkRole::EEGEncoder;
  Shape input_shape;
  std::vector<LayerSpec> layers;
  double dropout_p = 0.5;
  /// Insert a dropout layer after every parametric layer except the last.
  bool insert_dropout = true;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Layer list after dropout insertion.
std::vector<LayerSpec> expanded_layers(const NetworkSpec& spec);

/// Shape after each expanded layer; throws ShapeCompositionError naming the
/// first layer whose input does not fit.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

struct ForwardContext {
  bool training = false;
  std::uint64_t seed = 0;
};

class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, std::vector<LayerParams> layers);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  const Shape& output_shape() const { return output_shape_; }
  bool empty() const { return layers_.empty(); }

  Tensor forward(const Tensor& x, const ForwardContext& ctx = {}) const;

  /// Trainable leaves in layer order (weights then biases per layer).
  std::vector<Tensor> parameters() const;
  /// Weight tensors only; the L1 penalty ranges over these.
  std::vector<Tensor> weights() const;
  std::size_t parameter_count() const;
  /// Sum of |w| over all weights, as a plain number.
  double l1_norm() const;
  /// Differentiable sum of |w| over all weights.
  Tensor l1_penalty() const;

  /// Independent copy of all parameters.
  Network clone() const;

 private:
  NetworkSpec spec_;
  std::vector<LayerParams> layers_;
  Shape output_shape_;
};

/// Fan-based (Glorot) uniform weights scaled by `gain`, zero biases.
Network build_network(const NetworkSpec& spec, std::uint64_t seed, double gain = 1.0);

/// Wraps existing parameter tensors (e.g. from a checkpoint), validating
/// their shapes against the spec.
Network assemble_network(const NetworkSpec& spec, const std::vector<Tensor>& parameters);

}  // namespace eegfmri

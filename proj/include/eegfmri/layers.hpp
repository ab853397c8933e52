// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "eegfmri/tensor.hpp"

namespace eegfmri {

enum class LayerKind { Conv, ConvTranspose, Dense, GRU, Dropout, Reshape };
enum class Activation { None, ReLU, Tanh, Sigmoid };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);
LayerKind layer_kind_from_string(std::string_view name);
Activation activation_from_string(std::string_view name);

/// Hyperparameters of one layer. Which fields are meaningful depends on the
/// kind:
///   Conv / ConvTranspose: in/out_channels, kernel, stride, padding
///   Dense: in_channels = input features, out_channels = output features
///   GRU: in_channels = input features, out_channels = hidden units
///   Dropout: drop_probability
///   Reshape: target_shape
struct LayerHyper {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> stride;
  std::vector<std::size_t> padding;
  double drop_probability = 0.0;
  Shape target_shape;
  Activation activation = Activation::None;

  friend bool operator==(const LayerHyper&, const LayerHyper&) = default;
};

/// Trainable state of one layer.
///
/// Weight layouts (row-major):
///   Conv          [out_channels, in_channels, k_1 .. k_n], bias [out_channels]
///   ConvTranspose [in_channels, out_channels, k_1 .. k_n], bias [out_channels]
///   Dense         [in_features, out_features],            bias [out_features]
///   GRU           [in + hidden, 3 * hidden] (input rows then recurrent rows;
///                 column blocks update | reset | candidate), bias [2, 3 * hidden]
///                 (input bias row then recurrent bias row)
/// The ConvTranspose layout is bit-compatible with the Conv layout of the
/// adjoint convolution, so one weight tensor can drive both directions.
struct LayerParams {
  LayerKind kind = LayerKind::Dense;
  Tensor weights;
  Tensor biases;
  LayerHyper hyper;

  bool has_weights() const { return kind != LayerKind::Dropout && kind != LayerKind::Reshape; }
};

/// Valid (or padded, per hyper.padding) strided convolution. Input
/// [C_in, s_1..s_n]; output [C_out, o_1..o_n] with
/// o = floor((s + 2p - k) / stride) + 1.
Tensor conv_forward(const Tensor& input, const LayerParams& layer);

/// Adjoint of conv_forward. Input [C_in, o_1..o_n]; output
/// [C_out, (o - 1) * stride + k - 2p, ...].
Tensor conv_transpose_forward(const Tensor& input, const LayerParams& layer);

/// y = x W + b along the last axis.
Tensor dense_forward(const Tensor& input, const LayerParams& layer);

/// Sequence-to-sequence GRU over input [T, F] from a zero hidden state;
/// returns every hidden state [T, H].
Tensor gru_seq2seq_forward(const Tensor& input, const LayerParams& layer);

/// Inverted dropout: survivors are scaled by 1 / (1 - p) so inference is
/// the identity.
Tensor dropout_forward(const Tensor& input, double p, bool training, std::uint64_t rng_seed);

Tensor apply_activation(const Tensor& x, Activation act);

/// Output shape the layer produces for `input`, or ShapeMismatch.
Shape layer_output_shape(const Shape& input, LayerKind kind, const LayerHyper& hyper);

/// Shapes of the trainable tensors for a layer kind/hyper combination.
Shape weight_shape(LayerKind kind, const LayerHyper& hyper);
Shape bias_shape(LayerKind kind, const LayerHyper& hyper);

LayerParams make_layer(LayerKind kind, LayerHyper hyper, Tensor weights, Tensor biases);

}  // namespace eegfmri

// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/network.hpp"

#include <cmath>
#include <string>

#include "eegfmri/error.hpp"
#include "eegfmri/ops.hpp"
#include "eegfmri/random.hpp"

namespace eegfmri {
namespace {

constexpr NetworkRole kRoles[] = {NetworkRole::EEGEncoder, NetworkRole::FMRIEncoder, NetworkRole::Decoder,
                                  NetworkRole::Discriminator, NetworkRole::TemporalHead};

bool parametric(LayerKind k) { return k != LayerKind::Dropout && k != LayerKind::Reshape; }

std::pair<double, double> fans(LayerKind kind, const Shape& w) {
  switch (kind) {
    case LayerKind::Conv:
    case LayerKind::ConvTranspose: {
      double receptive = 1;
      for (std::size_t a = 2; a < w.size(); ++a) receptive *= double(w[a]);
      // Conv [out, in, k..] and ConvTranspose [in, out, k..]; both map
      // w[1] * receptive inputs to w[0] * receptive outputs up to orientation.
      return {double(w[1]) * receptive, double(w[0]) * receptive};
    }
    default: return {double(w[0]), double(w[1])};
  }
}

Tensor run_layer(const LayerParams& layer, const Tensor& x, const ForwardContext& ctx, std::size_t index) {
  switch (layer.kind) {
    case LayerKind::Conv: return apply_activation(conv_forward(x, layer), layer.hyper.activation);
    case LayerKind::ConvTranspose:
      return apply_activation(conv_transpose_forward(x, layer), layer.hyper.activation);
    case LayerKind::Dense: return apply_activation(dense_forward(x, layer), layer.hyper.activation);
    case LayerKind::GRU: return gru_seq2seq_forward(x, layer);
    case LayerKind::Dropout:
      return dropout_forward(x, layer.hyper.drop_probability, ctx.training, derive_seed(ctx.seed, {index}));
    case LayerKind::Reshape: return reshape(x, layer.hyper.target_shape);
  }
  return x;
}

}  // namespace

std::string_view to_string(NetworkRole role) {
  switch (role) {
    case NetworkRole::EEGEncoder: return "eeg_encoder";
    case NetworkRole::FMRIEncoder: return "fmri_encoder";
    case NetworkRole::Decoder: return "decoder";
    case NetworkRole::Discriminator: return "discriminator";
    case NetworkRole::TemporalHead: return "temporal_head";
  }
  return "?";
}

NetworkRole network_role_from_string(std::string_view name) {
  for (auto r : kRoles)
    if (to_string(r) == name) return r;
  fail(ErrorKind::InvalidArgument, "unknown network role '" + std::string(name) + "'");
}

std::vector<LayerSpec> expanded_layers(const NetworkSpec& spec) {
  std::size_t last_parametric = spec.layers.size();
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (parametric(spec.layers[i].kind)) last_parametric = i;
  std::vector<LayerSpec> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    out.push_back(spec.layers[i]);
    if (spec.insert_dropout && spec.dropout_p > 0 && parametric(spec.layers[i].kind) && i != last_parametric) {
      LayerSpec d{LayerKind::Dropout, {}};
      d.hyper.drop_probability = spec.dropout_p;
      out.push_back(d);
    }
  }
  return out;
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty()) fail(ErrorKind::ShapeCompositionError, "network needs at least one layer");
  if (spec.input_shape.empty() || numel(spec.input_shape) == 0)
    fail(ErrorKind::ShapeCompositionError, "network input shape is empty");
  std::vector<Shape> shapes;
  Shape cur = spec.input_shape;
  const auto layers = expanded_layers(spec);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      cur = layer_output_shape(cur, layers[i].kind, layers[i].hyper);
    } catch (const Error& e) {
      fail(ErrorKind::ShapeCompositionError, std::string(to_string(spec.role)) + " layer " + std::to_string(i) +
                                                 " (" + std::string(to_string(layers[i].kind)) +
                                                 "): " + e.what());
    }
    shapes.push_back(cur);
  }
  return shapes;
}

Network::Network(NetworkSpec spec, std::vector<LayerParams> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  output_shape_ = infer_shapes(spec_).back();
}

Tensor Network::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (x.shape() != spec_.input_shape)
    fail(ErrorKind::ShapeMismatch, std::string(to_string(spec_.role)) + " expects input " +
                                       to_string(spec_.input_shape) + ", got " + to_string(x.shape()));
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = run_layer(layers_[i], h, ctx, i);
  return h;
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_)
    if (l.has_weights()) {
      out.push_back(l.weights);
      out.push_back(l.biases);
    }
  return out;
}

std::vector<Tensor> Network::weights() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_)
    if (l.has_weights()) out.push_back(l.weights);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

double Network::l1_norm() const {
  double s = 0;
  for (const auto& w : weights()) s += w.data().cwiseAbs().sum();
  return s;
}

Tensor Network::l1_penalty() const {
  std::vector<Tensor> terms;
  for (const auto& w : weights()) terms.push_back(sum_abs(w));
  return add_all(terms);
}

Network Network::clone() const {
  std::vector<Tensor> params;
  for (const auto& p : parameters()) params.push_back(p.clone(true));
  return assemble_network(spec_, params);
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed, double gain) {
  infer_shapes(spec);
  if (!(gain > 0) || !std::isfinite(gain)) fail(ErrorKind::InvalidArgument, "init gain must be positive");
  const auto specs = expanded_layers(spec);
  std::vector<LayerParams> layers;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& ls = specs[i];
    if (!parametric(ls.kind)) {
      layers.push_back(make_layer(ls.kind, ls.hyper, Tensor(), Tensor()));
      continue;
    }
    const Shape ws = weight_shape(ls.kind, ls.hyper);
    const auto [fan_in, fan_out] = fans(ls.kind, ws);
    const double limit = gain * std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(derive_seed(seed, {i, 0x57}));
    Vector w(static_cast<Eigen::Index>(numel(ws)));
    for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = rng.uniform(-limit, limit);
    layers.push_back(make_layer(ls.kind, ls.hyper, Tensor(ws, std::move(w), true),
                                Tensor::zeros(bias_shape(ls.kind, ls.hyper), true)));
  }
  return Network(spec, std::move(layers));
}

Network assemble_network(const NetworkSpec& spec, const std::vector<Tensor>& parameters) {
  infer_shapes(spec);
  const auto specs = expanded_layers(spec);
  std::vector<LayerParams> layers;
  std::size_t next = 0;
  for (const auto& ls : specs) {
    if (!parametric(ls.kind)) {
      layers.push_back(make_layer(ls.kind, ls.hyper, Tensor(), Tensor()));
      continue;
    }
    if (next + 2 > parameters.size())
      fail(ErrorKind::ShapeMismatch, "not enough parameter tensors for " + std::string(to_string(spec.role)));
    Tensor w = parameters[next].is_leaf() && parameters[next].requires_grad() ? parameters[next]
                                                                              : parameters[next].clone(true);
    Tensor b = parameters[next + 1].is_leaf() && parameters[next + 1].requires_grad()
                   ? parameters[next + 1]
                   : parameters[next + 1].clone(true);
    layers.push_back(make_layer(ls.kind, ls.hyper, w, b));
    next += 2;
  }
  if (next != parameters.size())
    fail(ErrorKind::ShapeMismatch, "too many parameter tensors for " + std::string(to_string(spec.role)));
  return Network(spec, std::move(layers));
}

}  // namespace eegfmri

// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/layers.hpp"

#include <memory>
#include <string>

#include "eegfmri/error.hpp"
#include "eegfmri/ops.hpp"
#include "eegfmri/random.hpp"

namespace eegfmri {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "Conv";
    case LayerKind::ConvTranspose: return "ConvTranspose";
    case LayerKind::Dense: return "Dense";
    case LayerKind::GRU: return "GRU";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Reshape: return "Reshape";
  }
  return "?";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::Conv, LayerKind::ConvTranspose, LayerKind::Dense, LayerKind::GRU,
                 LayerKind::Dropout, LayerKind::Reshape})
    if (to_string(k) == name) return k;
  fail(ErrorKind::FormatError, "unknown layer kind '" + std::string(name) + "'");
}

Activation activation_from_string(std::string_view name) {
  for (auto a : {Activation::None, Activation::ReLU, Activation::Tanh, Activation::Sigmoid})
    if (to_string(a) == name) return a;
  fail(ErrorKind::InvalidArgument, "unknown activation '" + std::string(name) + "'");
}

namespace {

using detail::Node;

Eigen::Map<const Vector> flat(const RowMatrix& m) { return {m.data(), m.size()}; }

/// Gather map of a strided convolution over the spatial axes: for kernel
/// offset kk and output position pp, the flat input position read (or -1
/// when it falls into zero padding).
struct ConvGeometry {
  Shape in_spatial;
  Shape out_spatial;
  std::size_t kernel_volume = 1;
  std::size_t in_positions = 1;
  std::size_t out_positions = 1;
  std::vector<std::ptrdiff_t> gather;  // [kernel_volume * out_positions]

  std::ptrdiff_t at(std::size_t kk, std::size_t pp) const { return gather[kk * out_positions + pp]; }
};

std::vector<std::size_t> or_default(const std::vector<std::size_t>& v, std::size_t n, std::size_t value) {
  if (v.empty()) return std::vector<std::size_t>(n, value);
  return v;
}

ConvGeometry make_geometry(const Shape& in_spatial, const LayerHyper& hyper, const char* op) {
  const std::size_t n = in_spatial.size();
  if (n == 0) fail(ErrorKind::ShapeMismatch, std::string(op) + ": input has no spatial axes");
  if (hyper.kernel.size() != n)
    fail(ErrorKind::ShapeMismatch, std::string(op) + ": kernel rank " +
                                       std::to_string(hyper.kernel.size()) +
                                       " does not match spatial rank " + std::to_string(n));
  const auto stride = or_default(hyper.stride, n, 1);
  const auto pad = or_default(hyper.padding, n, 0);
  if (stride.size() != n || pad.size() != n)
    fail(ErrorKind::ShapeMismatch, std::string(op) + ": stride/padding rank mismatch");

  ConvGeometry g;
  g.in_spatial = in_spatial;
  g.out_spatial.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    if (stride[a] < 1) fail(ErrorKind::InvalidArgument, std::string(op) + ": stride must be >= 1");
    if (hyper.kernel[a] < 1) fail(ErrorKind::ShapeMismatch, std::string(op) + ": empty kernel");
    if (in_spatial[a] + 2 * pad[a] < hyper.kernel[a])
      fail(ErrorKind::ShapeMismatch, std::string(op) + ": kernel " + to_string(hyper.kernel) +
                                         " larger than input " + to_string(in_spatial));
    g.out_spatial[a] = (in_spatial[a] + 2 * pad[a] - hyper.kernel[a]) / stride[a] + 1;
    g.kernel_volume *= hyper.kernel[a];
    g.in_positions *= in_spatial[a];
    g.out_positions *= g.out_spatial[a];
  }

  std::vector<std::size_t> in_strides(n, 1);
  for (std::size_t a = n; a-- > 1;) in_strides[a - 1] = in_strides[a] * in_spatial[a];

  g.gather.assign(g.kernel_volume * g.out_positions, -1);
  std::vector<std::size_t> k_idx(n, 0);
  for (std::size_t kk = 0; kk < g.kernel_volume; ++kk) {
    std::vector<std::size_t> o_idx(n, 0);
    for (std::size_t pp = 0; pp < g.out_positions; ++pp) {
      std::ptrdiff_t flat_in = 0;
      bool inside = true;
      for (std::size_t a = 0; a < n; ++a) {
        const auto c = static_cast<std::ptrdiff_t>(o_idx[a] * stride[a] + k_idx[a]) -
                       static_cast<std::ptrdiff_t>(pad[a]);
        if (c < 0 || c >= static_cast<std::ptrdiff_t>(in_spatial[a])) {
          inside = false;
          break;
        }
        flat_in += c * static_cast<std::ptrdiff_t>(in_strides[a]);
      }
      g.gather[kk * g.out_positions + pp] = inside ? flat_in : -1;
      for (std::size_t a = n; a-- > 0;) {
        if (++o_idx[a] < g.out_spatial[a]) break;
        o_idx[a] = 0;
      }
    }
    for (std::size_t a = n; a-- > 0;) {
      if (++k_idx[a] < hyper.kernel[a]) break;
      k_idx[a] = 0;
    }
  }
  return g;
}

/// im2col: [C * K, P] patches of a [C, S] signal.
RowMatrix im2col(const Vector& x, std::size_t channels, const ConvGeometry& g) {
  RowMatrix cols = RowMatrix::Zero(Eigen::Index(channels * g.kernel_volume), Eigen::Index(g.out_positions));
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = x.data() + c * g.in_positions;
    for (std::size_t kk = 0; kk < g.kernel_volume; ++kk) {
      double* row = cols.data() + (c * g.kernel_volume + kk) * g.out_positions;
      const std::ptrdiff_t* map = g.gather.data() + kk * g.out_positions;
      for (std::size_t pp = 0; pp < g.out_positions; ++pp)
        if (map[pp] >= 0) row[pp] = src[map[pp]];
    }
  }
  return cols;
}

/// col2im: scatter-add of [C * K, P] patches back into a [C, S] signal.
Vector col2im(const RowMatrix& cols, std::size_t channels, const ConvGeometry& g) {
  Vector x = Vector::Zero(Eigen::Index(channels * g.in_positions));
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = x.data() + c * g.in_positions;
    for (std::size_t kk = 0; kk < g.kernel_volume; ++kk) {
      const double* row = cols.data() + (c * g.kernel_volume + kk) * g.out_positions;
      const std::ptrdiff_t* map = g.gather.data() + kk * g.out_positions;
      for (std::size_t pp = 0; pp < g.out_positions; ++pp)
        if (map[pp] >= 0) dst[map[pp]] += row[pp];
    }
  }
  return x;
}

Shape spatial_of(const Shape& s) { return Shape(s.begin() + 1, s.end()); }

void check_param_shapes(const LayerParams& layer, const char* op) {
  const Shape ws = weight_shape(layer.kind, layer.hyper);
  const Shape bs = bias_shape(layer.kind, layer.hyper);
  if (layer.weights.shape() != ws)
    fail(ErrorKind::ShapeMismatch, std::string(op) + ": weights " + to_string(layer.weights.shape()) +
                                       ", expected " + to_string(ws));
  if (layer.biases.shape() != bs)
    fail(ErrorKind::ShapeMismatch, std::string(op) + ": biases " + to_string(layer.biases.shape()) +
                                       ", expected " + to_string(bs));
}

}  // namespace

Shape weight_shape(LayerKind kind, const LayerHyper& h) {
  switch (kind) {
    case LayerKind::Conv: {
      Shape s{h.out_channels, h.in_channels};
      s.insert(s.end(), h.kernel.begin(), h.kernel.end());
      return s;
    }
    case LayerKind::ConvTranspose: {
      Shape s{h.in_channels, h.out_channels};
      s.insert(s.end(), h.kernel.begin(), h.kernel.end());
      return s;
    }
    case LayerKind::Dense: return {h.in_channels, h.out_channels};
    case LayerKind::GRU: return {h.in_channels + h.out_channels, 3 * h.out_channels};
    case LayerKind::Dropout:
    case LayerKind::Reshape: return {0};
  }
  return {0};
}

Shape bias_shape(LayerKind kind, const LayerHyper& h) {
  switch (kind) {
    case LayerKind::Conv:
    case LayerKind::ConvTranspose:
    case LayerKind::Dense: return {h.out_channels};
    case LayerKind::GRU: return {2, 3 * h.out_channels};
    case LayerKind::Dropout:
    case LayerKind::Reshape: return {0};
  }
  return {0};
}

LayerParams make_layer(LayerKind kind, LayerHyper hyper, Tensor weights, Tensor biases) {
  LayerParams p;
  p.kind = kind;
  p.hyper = std::move(hyper);
  p.weights = std::move(weights);
  p.biases = std::move(biases);
  if (kind == LayerKind::Dropout) {
    if (!(p.hyper.drop_probability >= 0.0 && p.hyper.drop_probability <= 1.0))
      fail(ErrorKind::InvalidProbability, "drop probability " + std::to_string(p.hyper.drop_probability));
  } else if (p.has_weights()) {
    check_param_shapes(p, "make_layer");
  }
  return p;
}

Shape layer_output_shape(const Shape& input, LayerKind kind, const LayerHyper& h) {
  switch (kind) {
    case LayerKind::Conv: {
      if (input.size() < 2 || input[0] != h.in_channels)
        fail(ErrorKind::ShapeMismatch, "Conv expects [" + std::to_string(h.in_channels) +
                                           ", ...], got " + to_string(input));
      const auto g = make_geometry(spatial_of(input), h, "Conv");
      Shape out{h.out_channels};
      out.insert(out.end(), g.out_spatial.begin(), g.out_spatial.end());
      return out;
    }
    case LayerKind::ConvTranspose: {
      if (input.size() < 2 || input[0] != h.in_channels)
        fail(ErrorKind::ShapeMismatch, "ConvTranspose expects [" + std::to_string(h.in_channels) +
                                           ", ...], got " + to_string(input));
      const std::size_t n = input.size() - 1;
      if (h.kernel.size() != n)
        fail(ErrorKind::ShapeMismatch, "ConvTranspose: kernel rank does not match spatial rank");
      const auto stride = or_default(h.stride, n, 1);
      const auto pad = or_default(h.padding, n, 0);
      Shape out{h.out_channels};
      for (std::size_t a = 0; a < n; ++a) {
        const std::size_t full = (input[a + 1] - 1) * stride[a] + h.kernel[a];
        if (full <= 2 * pad[a])
          fail(ErrorKind::ShapeMismatch, "ConvTranspose: padding consumes the whole output");
        out.push_back(full - 2 * pad[a]);
      }
      return out;
    }
    case LayerKind::Dense: {
      if (input.empty() || input.back() != h.in_channels)
        fail(ErrorKind::ShapeMismatch, "Dense expects last axis " + std::to_string(h.in_channels) +
                                           ", got " + to_string(input));
      Shape out = input;
      out.back() = h.out_channels;
      return out;
    }
    case LayerKind::GRU: {
      if (input.size() != 2 || input[1] != h.in_channels)
        fail(ErrorKind::ShapeMismatch, "GRU expects [T, " + std::to_string(h.in_channels) +
                                           "], got " + to_string(input));
      return {input[0], h.out_channels};
    }
    case LayerKind::Dropout: return input;
    case LayerKind::Reshape: {
      if (numel(h.target_shape) != numel(input))
        fail(ErrorKind::ShapeMismatch, "Reshape " + to_string(input) + " -> " + to_string(h.target_shape));
      return h.target_shape;
    }
  }
  return input;
}

Tensor conv_forward(const Tensor& input, const LayerParams& layer) {
  if (layer.kind != LayerKind::Conv) fail(ErrorKind::InvalidArgument, "conv_forward on a non-Conv layer");
  check_param_shapes(layer, "conv_forward");
  if (input.rank() < 2 || input.dim(0) != layer.hyper.in_channels)
    fail(ErrorKind::ShapeMismatch, "conv_forward: input " + to_string(input.shape()) +
                                       " for " + std::to_string(layer.hyper.in_channels) + " channels");
  const std::size_t c_in = layer.hyper.in_channels, c_out = layer.hyper.out_channels;
  auto geom = std::make_shared<const ConvGeometry>(make_geometry(spatial_of(input.shape()), layer.hyper, "conv_forward"));

  RowMatrix cols = im2col(input.data(), c_in, *geom);
  const auto w = layer.weights.as_matrix(c_out);
  RowMatrix y = w * cols;
  y.colwise() += layer.biases.data();

  Shape out_shape{c_out};
  out_shape.insert(out_shape.end(), geom->out_spatial.begin(), geom->out_spatial.end());
  Tensor x = input, wt = layer.weights, bt = layer.biases;
  return Tensor::make_result(
      out_shape, flat(y), {x, wt, bt},
      [x, wt, bt, geom, cols = std::move(cols), c_in, c_out](Node& self) {
        ConstMatrixMap dy(self.grad.data(), Eigen::Index(c_out), Eigen::Index(geom->out_positions));
        if (wt.requires_grad()) {
          RowMatrix dw = dy * cols.transpose();
          wt.node()->accumulate(flat(dw));
        }
        if (bt.requires_grad()) bt.node()->accumulate(dy.rowwise().sum());
        if (x.requires_grad()) {
          RowMatrix dcols = wt.as_matrix(c_out).transpose() * dy;
          x.node()->accumulate(col2im(dcols, c_in, *geom));
        }
      },
      "conv_forward");
}

Tensor conv_transpose_forward(const Tensor& input, const LayerParams& layer) {
  if (layer.kind != LayerKind::ConvTranspose)
    fail(ErrorKind::InvalidArgument, "conv_transpose_forward on a non-ConvTranspose layer");
  check_param_shapes(layer, "conv_transpose_forward");
  const Shape out_shape = layer_output_shape(input.shape(), LayerKind::ConvTranspose, layer.hyper);
  const std::size_t c_in = layer.hyper.in_channels, c_out = layer.hyper.out_channels;
  auto geom = std::make_shared<const ConvGeometry>(
      make_geometry(spatial_of(out_shape), layer.hyper, "conv_transpose_forward"));
  if (geom->out_positions * c_in != input.size())
    fail(ErrorKind::ShapeMismatch, "conv_transpose_forward: geometry does not round-trip");

  const auto w = layer.weights.as_matrix(c_in);  // [C_in, C_out * K]
  const auto xm = input.as_matrix(c_in);         // [C_in, P]
  RowMatrix cols = w.transpose() * xm;           // [C_out * K, P]
  Vector y = col2im(cols, c_out, *geom);
  for (std::size_t c = 0; c < c_out; ++c)
    y.segment(Eigen::Index(c * geom->in_positions), Eigen::Index(geom->in_positions)).array() +=
        layer.biases[c];

  Tensor x = input, wt = layer.weights, bt = layer.biases;
  return Tensor::make_result(
      out_shape, std::move(y), {x, wt, bt},
      [x, wt, bt, geom, c_in, c_out](Node& self) {
        RowMatrix dcols = im2col(self.grad, c_out, *geom);  // [C_out * K, P]
        if (x.requires_grad()) {
          RowMatrix dx = wt.as_matrix(c_in) * dcols;
          x.node()->accumulate(flat(dx));
        }
        if (wt.requires_grad()) {
          RowMatrix dw = x.as_matrix(c_in) * dcols.transpose();
          wt.node()->accumulate(flat(dw));
        }
        if (bt.requires_grad()) {
          ConstMatrixMap g(self.grad.data(), Eigen::Index(c_out), Eigen::Index(geom->in_positions));
          bt.node()->accumulate(g.rowwise().sum());
        }
      },
      "conv_transpose_forward");
}

Tensor dense_forward(const Tensor& input, const LayerParams& layer) {
  if (layer.kind != LayerKind::Dense) fail(ErrorKind::InvalidArgument, "dense_forward on a non-Dense layer");
  check_param_shapes(layer, "dense_forward");
  const Shape out_shape = layer_output_shape(input.shape(), LayerKind::Dense, layer.hyper);
  const std::size_t in = layer.hyper.in_channels, out = layer.hyper.out_channels;
  const std::size_t rows = input.size() / in;
  RowMatrix y = input.as_matrix(rows) * layer.weights.as_matrix(in);
  y.rowwise() += layer.biases.data().transpose();

  Tensor x = input, wt = layer.weights, bt = layer.biases;
  return Tensor::make_result(
      out_shape, flat(y), {x, wt, bt},
      [x, wt, bt, rows, in, out](Node& self) {
        ConstMatrixMap dy(self.grad.data(), Eigen::Index(rows), Eigen::Index(out));
        if (x.requires_grad()) {
          RowMatrix dx = dy * wt.as_matrix(in).transpose();
          x.node()->accumulate(flat(dx));
        }
        if (wt.requires_grad()) {
          RowMatrix dw = x.as_matrix(rows).transpose() * dy;
          wt.node()->accumulate(flat(dw));
        }
        if (bt.requires_grad()) bt.node()->accumulate(dy.colwise().sum().transpose());
      },
      "dense_forward");
}

namespace {

double sigm(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor gru_seq2seq_forward(const Tensor& input, const LayerParams& layer) {
  if (layer.kind != LayerKind::GRU) fail(ErrorKind::InvalidArgument, "gru_seq2seq_forward on a non-GRU layer");
  check_param_shapes(layer, "gru_seq2seq_forward");
  const Shape out_shape = layer_output_shape(input.shape(), LayerKind::GRU, layer.hyper);
  const Eigen::Index T = Eigen::Index(input.dim(0));
  const Eigen::Index F = Eigen::Index(layer.hyper.in_channels);
  const Eigen::Index H = Eigen::Index(layer.hyper.out_channels);

  const auto W = layer.weights.as_matrix(std::size_t(F + H));
  const auto Wx = W.topRows(F);
  const auto Wh = W.bottomRows(H);
  const auto B = layer.biases.as_matrix(2);
  const auto X = input.as_matrix(std::size_t(T));

  // Per-step caches for the backward pass.
  RowMatrix h_prev(T, H), z(T, H), r(T, H), n(T, H), ghn(T, H);
  RowMatrix out(T, H);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(H);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::RowVectorXd gx = X.row(t) * Wx + B.row(0);
    const Eigen::RowVectorXd gh = h * Wh + B.row(1);
    h_prev.row(t) = h;
    for (Eigen::Index j = 0; j < H; ++j) {
      z(t, j) = sigm(gx[j] + gh[j]);
      r(t, j) = sigm(gx[H + j] + gh[H + j]);
      ghn(t, j) = gh[2 * H + j];
      n(t, j) = std::tanh(gx[2 * H + j] + r(t, j) * ghn(t, j));
    }
    h = (1.0 - z.row(t).array()) * n.row(t).array() + z.row(t).array() * h.array();
    out.row(t) = h;
  }

  Tensor x = input, wt = layer.weights, bt = layer.biases;
  return Tensor::make_result(
      out_shape, flat(out), {x, wt, bt},
      [=](Node& self) {
        ConstMatrixMap dy(self.grad.data(), T, H);
        const auto W = wt.as_matrix(std::size_t(F + H));
        const auto Wx = W.topRows(F);
        const auto Wh = W.bottomRows(H);
        const auto X = x.as_matrix(std::size_t(T));
        RowMatrix dW = RowMatrix::Zero(F + H, 3 * H);
        RowMatrix dB = RowMatrix::Zero(2, 3 * H);
        RowMatrix dX = RowMatrix::Zero(T, F);
        Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(H);
        Eigen::RowVectorXd dgx(3 * H), dgh(3 * H);
        for (Eigen::Index t = T; t-- > 0;) {
          const Eigen::RowVectorXd dh = dy.row(t) + dh_next;
          for (Eigen::Index j = 0; j < H; ++j) {
            const double dz = dh[j] * (h_prev(t, j) - n(t, j));
            const double dn = dh[j] * (1.0 - z(t, j));
            const double an = dn * (1.0 - n(t, j) * n(t, j));
            const double dr = an * ghn(t, j);
            const double az = dz * z(t, j) * (1.0 - z(t, j));
            const double ar = dr * r(t, j) * (1.0 - r(t, j));
            dgx[j] = az;
            dgx[H + j] = ar;
            dgx[2 * H + j] = an;
            dgh[j] = az;
            dgh[H + j] = ar;
            dgh[2 * H + j] = an * r(t, j);
          }
          dW.topRows(F) += X.row(t).transpose() * dgx;
          dW.bottomRows(H) += h_prev.row(t).transpose() * dgh;
          dB.row(0) += dgx;
          dB.row(1) += dgh;
          dX.row(t) = dgx * Wx.transpose();
          dh_next = dh.cwiseProduct(z.row(t)) + dgh * Wh.transpose();
        }
        if (x.requires_grad()) x.node()->accumulate(flat(dX));
        if (wt.requires_grad()) wt.node()->accumulate(flat(dW));
        if (bt.requires_grad()) bt.node()->accumulate(flat(dB));
      },
      "gru_seq2seq_forward");
}

Tensor dropout_forward(const Tensor& input, double p, bool training, std::uint64_t rng_seed) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidProbability, "drop probability " + std::to_string(p));
  if (!training || p == 0.0) return input;
  Vector mask(input.data().size());
  if (p == 1.0) {
    mask.setZero();
  } else {
    Rng rng(rng_seed);
    const double keep_scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
  }
  Tensor x = input;
  return Tensor::make_result(
      input.shape(), input.data().cwiseProduct(mask), {x},
      [x, mask](Node& self) { x.node()->accumulate(self.grad.cwiseProduct(mask)); }, "dropout_forward");
}

Tensor apply_activation(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::None: return x;
    case Activation::ReLU: return relu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
  }
  return x;
}

}  // namespace eegfmri

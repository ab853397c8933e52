// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/ops.hpp"

#include <cmath>

#include "eegfmri/error.hpp"

namespace eegfmri {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::ShapeMismatch, std::string(op) + ": " + to_string(a.shape()) + " vs " +
                                       to_string(b.shape()));
}

using detail::Node;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return Tensor::make_result(
      a.shape(), a.data() + b.data(), {a, b},
      [a, b](Node& self) {
        a.node()->accumulate(self.grad);
        b.node()->accumulate(self.grad);
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return Tensor::make_result(
      a.shape(), a.data() - b.data(), {a, b},
      [a, b](Node& self) {
        a.node()->accumulate(self.grad);
        b.node()->accumulate(-self.grad);
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return Tensor::make_result(
      a.shape(), a.data().cwiseProduct(b.data()), {a, b},
      [a, b](Node& self) {
        if (a.requires_grad()) a.node()->accumulate(self.grad.cwiseProduct(b.data()));
        if (b.requires_grad()) b.node()->accumulate(self.grad.cwiseProduct(a.data()));
      },
      "mul");
}

Tensor scale(const Tensor& a, double s) {
  return Tensor::make_result(
      a.shape(), a.data() * s, {a}, [a, s](Node& self) { a.node()->accumulate(self.grad * s); },
      "scale");
}

Tensor add_scalar(const Tensor& a, double s) {
  return Tensor::make_result(
      a.shape(), a.data().array() + s, {a},
      [a](Node& self) { a.node()->accumulate(self.grad); }, "add_scalar");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) {
  return Tensor::make_result(
      a.shape(), a.data().array().square(), {a},
      [a](Node& self) { a.node()->accumulate(2.0 * self.grad.cwiseProduct(a.data())); },
      "square");
}

Tensor abs(const Tensor& a) {
  return Tensor::make_result(
      a.shape(), a.data().cwiseAbs(), {a},
      [a](Node& self) {
        const Vector sign = a.data().unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
        a.node()->accumulate(self.grad.cwiseProduct(sign));
      },
      "abs");
}

Tensor log(const Tensor& a) {
  return Tensor::make_result(
      a.shape(), a.data().array().log(), {a},
      [a](Node& self) { a.node()->accumulate((self.grad.array() / a.data().array()).matrix()); },
      "log");
}

Tensor exp(const Tensor& a) {
  Vector out = a.data().array().exp();
  return Tensor::make_result(
      a.shape(), out, {a},
      [a, out](Node& self) { a.node()->accumulate(self.grad.cwiseProduct(out)); }, "exp");
}

Tensor sigmoid(const Tensor& a) {
  Vector out = a.data().unaryExpr([](double x) {
    // Split by sign so exp() never overflows.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return Tensor::make_result(
      a.shape(), out, {a},
      [a, out](Node& self) {
        a.node()->accumulate((self.grad.array() * out.array() * (1.0 - out.array())).matrix());
      },
      "sigmoid");
}

Tensor tanh(const Tensor& a) {
  Vector out = a.data().array().tanh();
  return Tensor::make_result(
      a.shape(), out, {a},
      [a, out](Node& self) {
        a.node()->accumulate((self.grad.array() * (1.0 - out.array().square())).matrix());
      },
      "tanh");
}

Tensor relu(const Tensor& a) {
  return Tensor::make_result(
      a.shape(), a.data().cwiseMax(0.0), {a},
      [a](Node& self) {
        const Vector mask = a.data().unaryExpr([](double x) { return x > 0 ? 1.0 : 0.0; });
        a.node()->accumulate(self.grad.cwiseProduct(mask));
      },
      "relu");
}

Tensor sum(const Tensor& a) {
  return Tensor::make_result(
      Shape{1}, Vector::Constant(1, a.data().sum()), {a},
      [a](Node& self) { a.node()->accumulate(Vector::Constant(a.data().size(), self.grad[0])); },
      "sum");
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) fail(ErrorKind::ShapeMismatch, "mean of an empty tensor");
  const double n = static_cast<double>(a.size());
  return Tensor::make_result(
      Shape{1}, Vector::Constant(1, a.data().sum() / n), {a},
      [a, n](Node& self) {
        a.node()->accumulate(Vector::Constant(a.data().size(), self.grad[0] / n));
      },
      "mean");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    fail(ErrorKind::ShapeMismatch, "reshape " + to_string(a.shape()) + " -> " + to_string(shape));
  return Tensor::make_result(
      std::move(shape), a.data(), {a}, [a](Node& self) { a.node()->accumulate(self.grad); },
      "reshape");
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const std::size_t r = a.rank();
  if (perm.size() != r) fail(ErrorKind::ShapeMismatch, "permute rank mismatch");
  std::vector<bool> used(r, false);
  for (auto p : perm) {
    if (p >= r || used[p]) fail(ErrorKind::InvalidArgument, "permute: not a permutation");
    used[p] = true;
  }
  const Shape& in = a.shape();
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[perm[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];

  // Gather map: out flat index -> in flat index.
  const std::size_t n = a.size();
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < r; ++i) s += idx[i] * in_strides[perm[i]];
    src[o] = s;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  Vector v(static_cast<Eigen::Index>(n));
  for (std::size_t o = 0; o < n; ++o) v[Eigen::Index(o)] = a[src[o]];
  return Tensor::make_result(
      out_shape, std::move(v), {a},
      [a, src = std::move(src)](Node& self) {
        Vector g = Vector::Zero(a.data().size());
        for (std::size_t o = 0; o < src.size(); ++o) g[Eigen::Index(src[o])] += self.grad[Eigen::Index(o)];
        a.node()->accumulate(g);
      },
      "permute");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    fail(ErrorKind::ShapeMismatch, "matmul " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  RowMatrix c = a.as_matrix(m) * b.as_matrix(k);
  Vector out = Eigen::Map<const Vector>(c.data(), c.size());
  return Tensor::make_result(
      Shape{m, n}, std::move(out), {a, b},
      [a, b, m, k, n](Node& self) {
        ConstMatrixMap g(self.grad.data(), Eigen::Index(m), Eigen::Index(n));
        if (a.requires_grad()) {
          RowMatrix ga = g * b.as_matrix(k).transpose();
          a.node()->accumulate(Eigen::Map<const Vector>(ga.data(), ga.size()));
        }
        if (b.requires_grad()) {
          RowMatrix gb = a.as_matrix(m).transpose() * g;
          b.node()->accumulate(Eigen::Map<const Vector>(gb.data(), gb.size()));
        }
      },
      "matmul");
}

Tensor mean_abs_diff(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

Tensor sum_abs(const Tensor& a) { return sum(abs(a)); }

Tensor add_all(const std::vector<Tensor>& terms) {
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace eegfmri

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "eegfmri/error.hpp"
#include "eegfmri/gradcheck.hpp"
#include "eegfmri/layers.hpp"
#include "eegfmri/ops.hpp"
#include "eegfmri/random.hpp"
#include "test_util.hpp"

using namespace eegfmri;
using eegfmri::testing::random_tensor;

namespace {

LayerParams conv_layer(std::size_t c_in, std::size_t c_out, Shape kernel, Tensor w, Tensor b,
                       Shape stride = {}) {
  LayerHyper h;
  h.in_channels = c_in;
  h.out_channels = c_out;
  h.kernel = std::move(kernel);
  h.stride = std::move(stride);
  return make_layer(LayerKind::Conv, h, std::move(w), std::move(b));
}

LayerParams convt_layer(std::size_t c_in, std::size_t c_out, Shape kernel, Tensor w, Tensor b,
                        Shape stride = {}) {
  LayerHyper h;
  h.in_channels = c_in;
  h.out_channels = c_out;
  h.kernel = std::move(kernel);
  h.stride = std::move(stride);
  return make_layer(LayerKind::ConvTranspose, h, std::move(w), std::move(b));
}

LayerParams dense_layer(std::size_t in, std::size_t out, Tensor w, Tensor b) {
  LayerHyper h;
  h.in_channels = in;
  h.out_channels = out;
  return make_layer(LayerKind::Dense, h, std::move(w), std::move(b));
}

LayerParams gru_layer(std::size_t in, std::size_t hidden, Tensor w, Tensor b) {
  LayerHyper h;
  h.in_channels = in;
  h.out_channels = hidden;
  return make_layer(LayerKind::GRU, h, std::move(w), std::move(b));
}

}  // namespace

TEST_CASE("conv_forward hand examples") {
  SUBCASE("1-D [1,2,3] * [1,1]") {
    auto y = conv_forward(Tensor::from({1, 3}, {1, 2, 3}),
                          conv_layer(1, 1, {2}, Tensor::from({1, 1, 2}, {1, 1}), Tensor::zeros({1})));
    CHECK(y.shape() == Shape{1, 2});
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 5.0);
  }
  SUBCASE("identity kernel") {
    Tensor x = random_tensor({1, 3, 4, 2}, 7);
    auto y = conv_forward(x, conv_layer(1, 1, {1, 1, 1}, Tensor::full({1, 1, 1, 1, 1}, 1.0),
                                        Tensor::zeros({1})));
    CHECK(y.shape() == x.shape());
    CHECK(y.data() == x.data());
  }
  SUBCASE("2-D 3x3 ones, 2x2 ones kernel") {
    auto y = conv_forward(Tensor::full({1, 3, 3}, 1.0),
                          conv_layer(1, 1, {2, 2}, Tensor::full({1, 1, 2, 2}, 1.0), Tensor::zeros({1})));
    CHECK(y.shape() == Shape{1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == 4.0);
  }
  SUBCASE("stride 2 output size") {
    auto y = conv_forward(Tensor::zeros({2, 7}),
                          conv_layer(2, 3, {3}, Tensor::zeros({3, 2, 3}), Tensor::zeros({3}), {2}));
    CHECK(y.shape() == Shape{3, 3});  // floor((7-3)/2)+1
  }
  SUBCASE("kernel larger than input") {
    CHECK_THROWS_AS_KIND(conv_forward(Tensor::zeros({1, 2}), conv_layer(1, 1, {3}, Tensor::zeros({1, 1, 3}),
                                                                        Tensor::zeros({1}))),
                         ErrorKind::ShapeMismatch);
  }
  SUBCASE("kernel rank mismatch") {
    CHECK_THROWS_AS_KIND(conv_forward(Tensor::zeros({1, 4, 4}), conv_layer(1, 1, {2}, Tensor::zeros({1, 1, 2}),
                                                                            Tensor::zeros({1}))),
                         ErrorKind::ShapeMismatch);
  }
  SUBCASE("non-finite output") {
    auto w = Tensor::full({1, 1, 2}, 1e308);
    CHECK_THROWS_AS_KIND(conv_forward(Tensor::full({1, 3}, 1e308), conv_layer(1, 1, {2}, w, Tensor::zeros({1}))),
                         ErrorKind::NumericOverflow);
  }
}

TEST_CASE("conv_transpose_forward hand examples") {
  SUBCASE("1-D [1,2] with kernel [1,1]") {
    auto y = conv_transpose_forward(Tensor::from({1, 2}, {1, 2}),
                                    convt_layer(1, 1, {2}, Tensor::from({1, 1, 2}, {1, 1}), Tensor::zeros({1})));
    CHECK(y.shape() == Shape{1, 3});
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 3.0);
    CHECK(y[2] == 2.0);
  }
  SUBCASE("identity kernel") {
    Tensor x = random_tensor({2, 5}, 3);
    Tensor w = Tensor::from({2, 2, 1}, {1, 0, 0, 1});
    auto y = conv_transpose_forward(x, convt_layer(2, 2, {1}, w, Tensor::zeros({2})));
    CHECK(y.data() == x.data());
  }
  SUBCASE("stride output size") {
    auto y = conv_transpose_forward(Tensor::zeros({1, 3, 2}),
                                    convt_layer(1, 2, {2, 3}, Tensor::zeros({1, 2, 2, 3}), Tensor::zeros({2}), {2, 1}));
    CHECK(y.shape() == Shape{2, 6, 4});  // (3-1)*2+2, (2-1)*1+3
  }
}

TEST_CASE("conv adjoint identity on 1-D random signals") {
  Tensor x = random_tensor({1, 5}, 11);
  Tensor y = random_tensor({1, 4}, 12);
  Tensor w = random_tensor({1, 1, 2}, 13);
  auto cx = conv_forward(x, conv_layer(1, 1, {2}, w, Tensor::zeros({1})));
  auto cty = conv_transpose_forward(y, convt_layer(1, 1, {2}, w, Tensor::zeros({1})));
  // Direct inner products.
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < 4; ++i) lhs += cx[i] * y[i];
  for (std::size_t i = 0; i < 5; ++i) rhs += x[i] * cty[i];
  CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("dense_forward examples") {
  auto y = dense_forward(Tensor::from({2}, {1, 2}),
                         dense_layer(2, 2, Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2})));
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
  y = dense_forward(Tensor::from({2}, {1, 1}), dense_layer(2, 1, Tensor::from({2, 1}, {2, 3}), Tensor::from({1}, {1})));
  CHECK(y.item() == 6.0);
  y = dense_forward(Tensor::zeros({3}), dense_layer(3, 1, random_tensor({3, 1}, 4), Tensor::from({1}, {5})));
  CHECK(y.item() == 5.0);
  SUBCASE("applies along the last axis") {
    auto z = dense_forward(Tensor::from({2, 2}, {1, 2, 3, 4}),
                           dense_layer(2, 1, Tensor::from({2, 1}, {1, 1}), Tensor::zeros({1})));
    CHECK(z.shape() == Shape{2, 1});
    CHECK(z[0] == 3.0);
    CHECK(z[1] == 7.0);
  }
  CHECK_THROWS_AS_KIND(dense_forward(Tensor::zeros({3}), dense_layer(2, 1, Tensor::zeros({2, 1}), Tensor::zeros({1}))),
                       ErrorKind::ShapeMismatch);
}

TEST_CASE("gru_seq2seq_forward") {
  SUBCASE("zero parameters give zero output") {
    auto y = gru_seq2seq_forward(random_tensor({6, 3}, 5), gru_layer(3, 4, Tensor::zeros({7, 12}), Tensor::zeros({2, 12})));
    CHECK(y.shape() == Shape{6, 4});
    CHECK(y.data().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single step matches hand-evaluated cell") {
    // rows: input weights then recurrent weights; columns: update, reset, candidate
    Tensor w = Tensor::from({2, 3}, {0.2, -0.3, 0.8, 0.7, -0.4, 0.6});
    Tensor b = Tensor::from({2, 3}, {0.1, 0.0, -0.2, 0.05, 0.1, 0.3});
    const double x = 0.5;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    // h0 = 0, so recurrent products vanish and only the recurrent biases remain.
    const double z = sig(x * 0.2 + 0.1 + 0.05);
    const double r = sig(x * -0.3 + 0.0 + 0.1);
    const double n = std::tanh(x * 0.8 - 0.2 + r * 0.3);
    const double expected = (1 - z) * n;
    auto y = gru_seq2seq_forward(Tensor::from({1, 1}, {x}), gru_layer(1, 1, w, b));
    CHECK(y.item() == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("sequence length preserved") {
    for (std::size_t t : {1u, 3u, 14u}) {
      auto y = gru_seq2seq_forward(random_tensor({t, 2}, t), gru_layer(2, 3, random_tensor({5, 9}, 1), random_tensor({2, 9}, 2)));
      CHECK(y.dim(0) == t);
    }
  }
  CHECK_THROWS_AS_KIND(gru_seq2seq_forward(Tensor::zeros({3, 2}), gru_layer(3, 1, Tensor::zeros({4, 3}), Tensor::zeros({2, 3}))),
                       ErrorKind::ShapeMismatch);
}

TEST_CASE("dropout_forward") {
  Tensor x = random_tensor({50}, 9);
  CHECK(dropout_forward(x, 0.0, true, 1).data() == x.data());
  CHECK(dropout_forward(x, 0.7, false, 1).data() == x.data());
  Tensor ones = Tensor::full({100000}, 1.0);
  const double m = dropout_forward(ones, 0.5, true, 42).data().mean();
  CHECK(std::abs(m - 1.0) < 0.02);
  CHECK(dropout_forward(ones, 0.5, true, 42).data() == dropout_forward(ones, 0.5, true, 42).data());
  CHECK_THROWS_AS_KIND(dropout_forward(x, 1.5, true, 1), ErrorKind::InvalidProbability);
  CHECK_THROWS_AS_KIND(dropout_forward(x, -0.1, false, 1), ErrorKind::InvalidProbability);
}

TEST_CASE("backward examples") {
  SUBCASE("sum") {
    Tensor x = random_tensor({2, 3}, 1).clone(true);
    backward(sum(x));
    CHECK(x.grad() == Vector::Ones(6));
  }
  SUBCASE("sum of squares") {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    backward(sum(square(x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);
    CHECK(x.grad()[2] == 6.0);
  }
  SUBCASE("constant loss") {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    Tensor c = Tensor::scalar(4.0);
    auto map = backward(c);
    CHECK(x.grad() == Vector::Zero(3));
    CHECK(map.leaves.empty());
    CHECK_THROWS_AS_KIND(backward(c, {.require_connected = {x}}), ErrorKind::DisconnectedGraph);
  }
  SUBCASE("repeated calls accumulate") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    Tensor loss = sum(square(x));
    backward(loss);
    backward(loss);
    CHECK(x.grad()[0] == 4.0);
    x.zero_grad();
    backward(loss);
    CHECK(x.grad()[0] == 2.0);
  }
  SUBCASE("non-scalar loss") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS_AS_KIND(backward(square(x)), ErrorKind::NotScalar);
  }
  SUBCASE("shared subexpression") {
    Tensor x = Tensor::from({1}, {3}, true);
    Tensor y = square(x);
    backward(sum(mul(y, y)));  // x^4 -> 4x^3
    CHECK(x.grad()[0] == doctest::Approx(108.0));
  }
  SUBCASE("gradient map lists reached leaves") {
    Tensor a = Tensor::from({1}, {1}, true), b = Tensor::from({1}, {2}, true), c = Tensor::from({1}, {3}, true);
    auto map = backward(sum(mul(a, b)));
    CHECK(map.contains(a));
    CHECK(map.contains(b));
    CHECK_FALSE(map.contains(c));
  }
}

TEST_CASE("no silent broadcasting") {
  CHECK_THROWS_AS_KIND(add(Tensor::zeros({2}), Tensor::zeros({3})), ErrorKind::ShapeMismatch);
  CHECK_THROWS_AS_KIND(mul(Tensor::zeros({2, 1}), Tensor::zeros({1, 2})), ErrorKind::ShapeMismatch);
  CHECK_THROWS_AS_KIND(reshape(Tensor::zeros({2, 3}), {4}), ErrorKind::ShapeMismatch);
}

TEST_CASE("permute gathers and scatters") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto y = permute(x, {1, 0});
  CHECK(y.shape() == Shape{3, 2});
  CHECK(y[1] == 4.0);
  CHECK(y[2] == 2.0);
  Tensor w = random_tensor({3, 2}, 8);
  backward(sum(mul(y, w)));
  CHECK(x.grad()[1] == w[2]);
}

TEST_CASE("finite_diff_check examples") {
  SUBCASE("sum of squares") {
    auto r = finite_diff_check([](const Tensor& x) { return sum(square(x)); }, random_tensor({8}, 21), 1e-5);
    CHECK(r.max_relative_error < 1e-6);
  }
  SUBCASE("conv -> dense -> sum chain") {
    Tensor w = random_tensor({2, 1, 2, 2}, 22), b = random_tensor({2}, 23);
    Tensor dw = random_tensor({3, 2}, 24), db = random_tensor({2}, 25);
    auto f = [&](const Tensor& x) {
      auto c = tanh(conv_forward(x, conv_layer(1, 2, {2, 2}, w, b)));  // [2, 2, 3]
      auto d = dense_forward(c, dense_layer(3, 2, dw, db));
      return sum(square(d));
    };
    CHECK(finite_diff_check(f, random_tensor({1, 3, 4}, 26)).max_relative_error < 1e-4);
    auto fw = [&](const Tensor& wt) {
      auto c = tanh(conv_forward(random_tensor({1, 3, 4}, 26), conv_layer(1, 2, {2, 2}, wt, b)));
      return sum(square(dense_forward(c, dense_layer(3, 2, dw, db))));
    };
    CHECK(finite_diff_check(fw, w).max_relative_error < 1e-4);
  }
  SUBCASE("GRU -> sum") {
    Tensor w = random_tensor({5, 9}, 31), b = random_tensor({2, 9}, 32);
    Tensor x = random_tensor({4, 2}, 33);
    auto fx = [&](const Tensor& in) { return sum(gru_seq2seq_forward(in, gru_layer(2, 3, w, b))); };
    auto fw = [&](const Tensor& wt) { return sum(gru_seq2seq_forward(x, gru_layer(2, 3, wt, b))); };
    auto fb = [&](const Tensor& bt) { return sum(gru_seq2seq_forward(x, gru_layer(2, 3, w, bt))); };
    CHECK(finite_diff_check(fx, x).max_relative_error < 1e-4);
    CHECK(finite_diff_check(fw, w).max_relative_error < 1e-4);
    CHECK(finite_diff_check(fb, b).max_relative_error < 1e-4);
  }
}

TEST_CASE("forward ops are deterministic") {
  Tensor x = random_tensor({1, 6, 5}, 40);
  auto layer = conv_layer(1, 2, {2, 3}, random_tensor({2, 1, 2, 3}, 41), random_tensor({2}, 42));
  CHECK(conv_forward(x, layer).data() == conv_forward(x, layer).data());
}

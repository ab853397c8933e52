// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace eegfmri {

using Shape = std::vector<std::size_t>;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct GradientMap;
struct BackwardOptions;

namespace detail {

struct Node {
  Shape shape;
  Vector value;
  // Leaves keep this as a persistent accumulator; interior nodes only hold
  // it for the duration of one backward pass.
  Vector grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into the parents that require grad.
  std::function<void(Node& self)> backward;

  void accumulate(const Vector& g);
};

}  // namespace detail

/// Dense row-major double tensor with optional reverse-mode gradient
/// tracking. Copies share the underlying node, like a handle; values are
/// immutable except through mutable_data() on leaves (parameter updates).
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Vector values, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::initializer_list<double> values,
                     bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return static_cast<std::size_t>(node_->value.size()); }
  std::size_t dim(std::size_t axis) const;

  const Vector& data() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[static_cast<Eigen::Index>(i)]; }
  /// Value of a single-element tensor.
  double item() const;

  /// Row-major matrix view [rows x size/rows].
  ConstMatrixMap as_matrix(std::size_t rows) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return !node_->backward; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->value.size() > 0; }
  /// Gradient (zeros if none was accumulated yet).
  Vector grad() const;
  void zero_grad();

  /// Direct write access for optimizer updates; only legal on leaves.
  Vector& mutable_data();

  /// Same values, no history, gradient tracking off.
  Tensor detach() const;
  /// Deep copy as a fresh leaf.
  Tensor clone(bool requires_grad) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Builds an interior node. Parents that do not require grad are kept out
  /// of the graph; if none requires grad the result is a plain constant.
  static Tensor make_result(Shape shape, Vector value, std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward, const char* op_name);

 private:
  friend GradientMap backward(const Tensor& loss, const BackwardOptions& options);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

struct BackwardOptions {
  /// When non-empty, every listed tensor must be reachable from the loss,
  /// otherwise DisconnectedGraph is raised (their grads stay zero).
  std::vector<Tensor> require_connected;
};

/// Leaf tensors reached by a backward pass, in first-visit order.
struct GradientMap {
  std::vector<Tensor> leaves;
  bool contains(const Tensor& t) const;
};

/// Reverse-mode accumulation from a scalar loss into every reachable leaf
/// with requires_grad. Leaf gradients accumulate across calls until
/// zero_grad().
GradientMap backward(const Tensor& loss, const BackwardOptions& options = {});

void zero_grad(std::span<const Tensor> tensors);

}  // namespace eegfmri

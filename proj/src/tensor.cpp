// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "eegfmri/error.hpp"

namespace eegfmri {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

void Node::accumulate(const Vector& g) {
  if (!requires_grad) return;
  if (grad.size() != value.size()) grad = Vector::Zero(value.size());
  grad += g;
}

}  // namespace detail

Tensor::Tensor() : Tensor(Shape{0}, Vector(), false) {}

Tensor::Tensor(Shape shape, Vector values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (numel(shape) != static_cast<std::size_t>(values.size()))
    fail(ErrorKind::ShapeMismatch, "shape " + to_string(shape) + " does not hold " +
                                       std::to_string(values.size()) + " values");
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, Vector::Zero(static_cast<Eigen::Index>(numel(shape))), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, Vector::Constant(static_cast<Eigen::Index>(numel(shape)), value),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, Vector::Constant(1, value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::initializer_list<double> values, bool requires_grad) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  std::copy(values.begin(), values.end(), v.data());
  return Tensor(shape, std::move(v), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    fail(ErrorKind::ShapeMismatch, "axis " + std::to_string(axis) + " out of range for " +
                                       to_string(shape()));
  return shape()[axis];
}

double Tensor::item() const {
  if (size() != 1) fail(ErrorKind::NotScalar, "tensor of shape " + to_string(shape()));
  return node_->value[0];
}

ConstMatrixMap Tensor::as_matrix(std::size_t rows) const {
  if (rows == 0 || size() % rows != 0)
    fail(ErrorKind::ShapeMismatch, "cannot view " + to_string(shape()) + " with " +
                                       std::to_string(rows) + " rows");
  return ConstMatrixMap(node_->value.data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(size() / rows));
}

Vector Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Vector::Zero(node_->value.size());
}

void Tensor::zero_grad() {
  if (node_->grad.size() == node_->value.size())
    node_->grad.setZero();
  else
    node_->grad = Vector::Zero(node_->value.size());
}

Vector& Tensor::mutable_data() {
  if (!is_leaf()) fail(ErrorKind::InvalidArgument, "mutable_data() on a non-leaf tensor");
  return node_->value;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

Tensor Tensor::clone(bool requires_grad) const { return Tensor(node_->shape, node_->value, requires_grad); }

Tensor Tensor::make_result(Shape shape, Vector value, std::vector<Tensor> parents,
                           std::function<void(detail::Node&)> backward, const char* op_name) {
  if (!value.allFinite())
    fail(ErrorKind::NumericOverflow, std::string(op_name) + " produced non-finite values");
  Tensor out(std::move(shape), std::move(value), false);
  for (auto& p : parents) {
    if (p.requires_grad()) out.node_->parents.push_back(p.node_);
  }
  if (!out.node_->parents.empty()) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
  }
  return out;
}

bool GradientMap::contains(const Tensor& t) const {
  return std::any_of(leaves.begin(), leaves.end(), [&](const Tensor& l) { return l.same_node(t); });
}

GradientMap backward(const Tensor& loss, const BackwardOptions& options) {
  if (loss.size() != 1)
    fail(ErrorKind::NotScalar, "backward() needs a scalar loss, got " + to_string(loss.shape()));

  GradientMap result;
  const auto& root = loss.node();

  // Iterative post-order DFS; reversed it is a valid processing order.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> visited;
  if (root->requires_grad) {
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    if (!root->backward) result.leaves.push_back(loss);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        const auto& parent = node->parents[next++];
        if (visited.insert(parent.get()).second) {
          if (!parent->backward) result.leaves.push_back(Tensor(parent));
          stack.emplace_back(parent.get(), 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  for (auto* n : order) {
    if (n->backward) n->grad = Vector::Zero(n->value.size());
  }

  for (const auto& t : options.require_connected) {
    if (!visited.count(t.node().get()))
      fail(ErrorKind::DisconnectedGraph, "tensor of shape " + to_string(t.shape()) +
                                             " is not reachable from the loss");
  }

  if (root->requires_grad) root->accumulate(Vector::Ones(1));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }

  for (auto* n : order) {
    if (n->backward) n->grad = Vector();
  }
  return result;
}

void zero_grad(std::span<const Tensor> tensors) {
  for (auto t : tensors) t.zero_grad();
}

}  // namespace eegfmri

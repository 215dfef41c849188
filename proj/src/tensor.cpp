// Copyright 2026 The OP-NAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "opnas/tensor.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

#include "opnas/errors.hpp"

namespace opnas {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace detail {

void Node::accumulate(const Matrix& contribution) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = contribution;
  } else {
    grad += contribution;
  }
}

}  // namespace detail

namespace {

std::pair<Eigen::Index, Eigen::Index> storage_dims(const Shape& shape) {
  switch (shape.size()) {
    case 0:
      return {1, 1};
    case 1:
      return {1, static_cast<Eigen::Index>(shape[0])};
    case 2:
      return {static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1])};
    default:
      throw ShapeError("tensors of rank > 2 are not supported: " + shape_string(shape));
  }
}

std::shared_ptr<detail::Node> make_leaf(Shape shape, Matrix value, bool requires_grad) {
  for (auto s : shape) {
    if (s == 0) throw ShapeError("shape dimensions must be positive: " + shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  auto [rows, cols] = storage_dims(shape);
  if (static_cast<std::size_t>(rows * cols) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape));
  }
  Matrix value = Eigen::Map<const Matrix>(data.data(), rows, cols);
  node_ = make_leaf(std::move(shape), std::move(value), requires_grad);
}

Tensor Tensor::from_matrix(Matrix value, bool requires_grad) {
  Shape shape{static_cast<std::size_t>(value.rows()), static_cast<std::size_t>(value.cols())};
  return Tensor(make_leaf(std::move(shape), std::move(value), requires_grad));
}

Tensor Tensor::from_vector(std::span<const double> values, bool requires_grad) {
  return Tensor(Shape{values.size()}, std::vector<double>(values.begin(), values.end()),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::numel() const { return static_cast<std::size_t>(node_->value.size()); }

const Matrix& Tensor::value() const { return node_->value; }

std::span<const double> Tensor::data() const {
  return {node_->value.data(), static_cast<std::size_t>(node_->value.size())};
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_string(shape()));
  return node_->value(0, 0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::has_grad() const { return node_->grad.size() != 0; }

const Matrix& Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

Matrix& Tensor::mutable_value() { return node_->value; }

Tensor Tensor::detach() const { return Tensor(make_leaf(shape(), value(), false)); }

void Tensor::backward() const {
  if (!shape().empty()) {
    throw ShapeError("backward() needs a scalar loss, got " + shape_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (node->backward) node->grad.resize(0, 0);
  }
  node_->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward || node->grad.size() == 0) continue;
    node->backward(*node);
  }
}

Tensor make_op_result(Shape shape, Matrix value, std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backward, const char* op_name) {
  if (!value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name);
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Parameter::Parameter(std::string name, Matrix value)
    : name_(std::move(name)), tensor_(Tensor::from_matrix(std::move(value), true)) {}

Parameter::Parameter(std::string name, Shape shape, std::vector<double> data)
    : name_(std::move(name)), tensor_(std::move(shape), std::move(data), true) {}

void adam_step(std::span<Parameter> params, AdamState& state, double learning_rate,
               const AdamConfig& config) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.push_back(Matrix::Zero(p.tensor().rows(), p.tensor().cols()));
      state.second_moment.push_back(Matrix::Zero(p.tensor().rows(), p.tensor().cols()));
    }
    state.step = 0;
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor();
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (t.has_grad()) {
      m = config.beta1 * m + (1.0 - config.beta1) * t.grad();
      v = config.beta2 * v + (1.0 - config.beta2) * t.grad().cwiseProduct(t.grad());
    } else {
      m *= config.beta1;
      v *= config.beta2;
    }
    const Matrix m_hat = m / correction1;
    const Matrix v_hat = v / correction2;
    t.mutable_value().array() -=
        learning_rate * m_hat.array() / (v_hat.array().sqrt() + config.epsilon);
  }
}

}  // namespace opnas

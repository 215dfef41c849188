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

// Dense 64-bit tensors of rank 0, 1 or 2 with reverse-mode autodiff.
//
// A Tensor is a cheap handle onto an immutable graph node. Results of ops on
// tensors that require gradients keep their parents alive until the handle is
// dropped; `backward()` on a scalar walks that graph once.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace opnas {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  // Rank 2: rows x cols. Rank 1: 1 x n. Rank 0: 1 x 1.
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& contribution);
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor from_matrix(Matrix value, bool requires_grad = false);
  static Tensor from_vector(std::span<const double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  const Matrix& value() const;
  std::span<const double> data() const;
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Accumulated gradient; zero-sized when nothing has flowed in yet.
  const Matrix& grad() const;
  void zero_grad();

  /// Writable access for optimizers. Only valid on leaves.
  Matrix& mutable_value();

  /// Reverse-mode sweep from a scalar. Leaf gradients accumulate.
  void backward() const;

  /// Same values, no history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_op_result(Shape, Matrix, std::vector<Tensor>, std::function<void(detail::Node&)>,
                               const char*);

  std::shared_ptr<detail::Node> node_;
};

/// Builds an op result. Checks finiteness and only records history when a
/// parent requires a gradient.
Tensor make_op_result(Shape shape, Matrix value, std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backward, const char* op_name);

/// A named trainable leaf.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix value);
  Parameter(std::string name, Shape shape, std::vector<double> data);

  const std::string& name() const { return name_; }
  const Tensor& tensor() const { return tensor_; }
  Tensor& tensor() { return tensor_; }
  operator const Tensor&() const { return tensor_; }  // NOLINT(google-explicit-constructor)

 private:
  std::string name_;
  Tensor tensor_;
};

// Primitive operation set of the attention search space.
enum class UnaryOpKind { kNeg, kTranspose, kScale, kSoftmax, kLogSigmoid, kSoftsign };
enum class BinaryOpKind { kAdd, kMatmul, kCosine, kEuclidean };

Tensor apply_unary(UnaryOpKind op, const Tensor& x);
Tensor apply_binary(BinaryOpKind op, const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
/// Swaps the last two axes; rank >= 2.
Tensor transpose(const Tensor& x);
/// x / sqrt(size of last axis).
Tensor scale(const Tensor& x);
/// Over the last axis.
Tensor softmax(const Tensor& x);
Tensor logsigmoid(const Tensor& x);
Tensor softsign(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
/// Row-pairwise cosine similarity, (r x c, r x c) -> r x r. Zero rows give 0.
Tensor cosine(const Tensor& a, const Tensor& b);
/// Row-pairwise euclidean distance, (r x c, r x c) -> r x r.
Tensor euclidean(const Tensor& a, const Tensor& b);

Tensor linear(const Tensor& x, const Tensor& w);

/// Per-channel 1-D convolution with same-length zero padding. The kernel
/// (k x d, k odd) is softmax-normalized along k before it is applied.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel);

/// n x 2d -> n x d: first half gated by sigmoid of the second half.
Tensor glu(const Tensor& x);

inline constexpr double kLayerNormEpsilon = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Mean negative log-likelihood over positions where mask is set.
Tensor masked_cross_entropy(const Tensor& logits, std::span<const int> targets,
                            const std::vector<bool>& mask);

// Glue used by the model builder and tests.
Tensor sum(const Tensor& x);
Tensor multiply(const Tensor& a, const Tensor& b);
/// Adds a 1 x c row (or c-vector) to every row of an r x c matrix.
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor scale_by(const Tensor& x, double factor);
/// Gathers rows of a V x d table.
Tensor embedding(const Tensor& table, std::span<const int> ids);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
};

/// One bias-corrected Adam update over `params` in order. Parameters with no
/// accumulated gradient are treated as having a zero gradient.
void adam_step(std::span<Parameter> params, AdamState& state, double learning_rate,
               const AdamConfig& config = {});

}  // namespace opnas

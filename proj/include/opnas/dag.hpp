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

// Attention structures as DAGs of primitive operations over the projected
// input nodes Q, K, V and P.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opnas/tensor.hpp"

namespace opnas {

enum class OpKind : std::uint8_t {
  kNeg,
  kTranspose,
  kScale,
  kSoftmax,
  kLogSigmoid,
  kSoftsign,
  kAdd,
  kMatmul,
  kCosine,
  kEuclidean,
};

inline constexpr int kNumOps = 10;
inline constexpr std::array<OpKind, kNumOps> kAllOps{
    OpKind::kNeg,     OpKind::kTranspose, OpKind::kScale,  OpKind::kSoftmax, OpKind::kLogSigmoid,
    OpKind::kSoftsign, OpKind::kAdd,      OpKind::kMatmul, OpKind::kCosine,  OpKind::kEuclidean};

int arity(OpKind op);
std::string_view op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);
inline int op_index(OpKind op) { return static_cast<int>(op); }

enum class InputNode : std::uint8_t { kQ, kK, kV, kP };
inline constexpr int kNumInputNodes = 4;
std::string_view input_name(InputNode input);
std::optional<InputNode> input_from_name(std::string_view name);

/// An operand: one of the input nodes or the result of an earlier node.
struct ValueRef {
  enum class Kind : std::uint8_t { kInput, kNode };
  Kind kind = Kind::kInput;
  int index = 0;

  static ValueRef input(InputNode in) { return {Kind::kInput, static_cast<int>(in)}; }
  static ValueRef node(int i) { return {Kind::kNode, i}; }
  bool is_input() const { return kind == Kind::kInput; }
  bool operator==(const ValueRef&) const = default;
};

struct DagNode {
  OpKind op = OpKind::kNeg;
  std::vector<ValueRef> args;
  bool operator==(const DagNode&) const = default;
};

/// Nodes are topologically ordered; node i may only reference inputs and
/// nodes < i. The last node is the output.
struct AttentionDag {
  std::vector<InputNode> inputs;
  std::vector<DagNode> nodes;

  std::size_t size() const { return nodes.size(); }
  bool uses_input(InputNode in) const;
  bool operator==(const AttentionDag&) const = default;
};

inline constexpr int kMaxPathLength = 12;
inline constexpr int kGenerationBudget = 200;
inline constexpr int kMutationRetryBudget = 50;

// Symbolic shapes over the sequence length n and the head width d_h.
enum class Dim : std::uint8_t { kSeq, kHead };

struct ShapeExpr {
  bool is_scalar = false;
  Dim rows = Dim::kSeq;
  Dim cols = Dim::kHead;

  static ShapeExpr matrix(Dim r, Dim c) { return {false, r, c}; }
  static ShapeExpr scalar() { return {true, Dim::kSeq, Dim::kSeq}; }
  std::string str() const;
  bool operator==(const ShapeExpr&) const = default;
};

/// Result shape of one op on symbolic operands, or nullopt if illegal.
std::optional<ShapeExpr> result_shape(OpKind op, std::span<const ShapeExpr> args,
                                      std::string* reason = nullptr);

struct IllegalGraph {
  int node = 0;
  std::string reason;
};

struct ShapeInference {
  std::vector<ShapeExpr> shapes;
  std::optional<IllegalGraph> error;
  bool legal() const { return !error.has_value(); }
};

/// Propagates symbolic shapes node by node (all inputs start as n x d_h) and
/// requires the output to be n x d_h. Stops at the first violation.
ShapeInference infer_shapes(const AttentionDag& dag);

struct Validation {
  bool valid = true;
  std::string reason;
  explicit operator bool() const { return valid; }
};

/// Structural checks (2-4 inputs in canonical order, arities, references,
/// every input used, no dead nodes, length bound) followed by shape inference.
Validation validate(const AttentionDag& dag, int max_length = kMaxPathLength);

/// Removes nodes that do not feed the output and compacts references.
AttentionDag prune_dead_nodes(const AttentionDag& dag);

/// Evaluates the dag on concrete input tensors indexed by InputNode.
Tensor evaluate_dag(const AttentionDag& dag, const std::array<Tensor, kNumInputNodes>& inputs);

using OpDistribution = std::array<double, kNumOps>;
OpDistribution uniform_op_distribution();

/// Rejection sampling of a valid dag. Throws GenerationExhausted when
/// `attempt_budget` whole-dag attempts all fail.
AttentionDag random_dag(std::mt19937_64& rng, int max_length = kMaxPathLength,
                        int attempt_budget = kGenerationBudget);

enum class IntraMutation { kReplaceOp, kInsertNode, kDeleteNode, kToggleInput };

/// One structural edit with ops drawn from per-position distributions
/// (positions past the end of `position_dists` use the uniform one). Returns
/// the parent unchanged if no valid child is found within the retry budget.
AttentionDag mutate_intra(const AttentionDag& parent, std::span<const OpDistribution> position_dists,
                          std::mt19937_64& rng, int max_length = kMaxPathLength,
                          IntraMutation* applied = nullptr);

// Reference structures.

/// softmax(Q K^T / sqrt(d_h)) V, with the scaling applied to Q.
AttentionDag standard_attention_dag();
/// softmax(Q log(1 + exp(K^T)) / sqrt(d_h)) (K + Q).
AttentionDag autobert_l2_dag();
/// softmax(Q (K / sqrt(d_h) + V)^T / sqrt(d_h)) V.
AttentionDag autobert_l12_dag();

}  // namespace opnas

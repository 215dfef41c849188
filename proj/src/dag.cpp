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

#include "opnas/dag.hpp"

#include <algorithm>
#include <numeric>

#include "opnas/errors.hpp"

namespace opnas {

namespace {

constexpr std::array<std::string_view, kNumOps> kOpNames{
    "neg", "transpose", "scale", "softmax", "logsigmoid", "softsign", "add", "matmul", "cosine", "euclidean"};
constexpr std::array<std::string_view, kNumInputNodes> kInputNames{"Q", "K", "V", "P"};

std::string ref_string(const ValueRef& ref) {
  if (ref.is_input()) return std::string(kInputNames[static_cast<std::size_t>(ref.index)]);
  return "node " + std::to_string(ref.index);
}

std::string dim_string(Dim d) { return d == Dim::kSeq ? "n" : "d_h"; }

bool is_elementwise(OpKind op) {
  switch (op) {
    case OpKind::kNeg:
    case OpKind::kScale:
    case OpKind::kSoftmax:
    case OpKind::kLogSigmoid:
    case OpKind::kSoftsign:
      return true;
    default:
      return false;
  }
}

UnaryOpKind to_unary(OpKind op) {
  switch (op) {
    case OpKind::kNeg:
      return UnaryOpKind::kNeg;
    case OpKind::kTranspose:
      return UnaryOpKind::kTranspose;
    case OpKind::kScale:
      return UnaryOpKind::kScale;
    case OpKind::kSoftmax:
      return UnaryOpKind::kSoftmax;
    case OpKind::kLogSigmoid:
      return UnaryOpKind::kLogSigmoid;
    case OpKind::kSoftsign:
      return UnaryOpKind::kSoftsign;
    default:
      throw std::invalid_argument("not a unary op");
  }
}

BinaryOpKind to_binary(OpKind op) {
  switch (op) {
    case OpKind::kAdd:
      return BinaryOpKind::kAdd;
    case OpKind::kMatmul:
      return BinaryOpKind::kMatmul;
    case OpKind::kCosine:
      return BinaryOpKind::kCosine;
    case OpKind::kEuclidean:
      return BinaryOpKind::kEuclidean;
    default:
      throw std::invalid_argument("not a binary op");
  }
}

int sample_index(std::mt19937_64& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

OpKind sample_op(std::mt19937_64& rng, const OpDistribution& dist) {
  std::discrete_distribution<int> pick(dist.begin(), dist.end());
  return kAllOps[static_cast<std::size_t>(pick(rng))];
}

// All operands visible to a node inserted at `position`.
std::vector<ValueRef> visible_refs(const AttentionDag& dag, int position) {
  std::vector<ValueRef> refs;
  for (auto in : dag.inputs) refs.push_back(ValueRef::input(in));
  for (int i = 0; i < position; ++i) refs.push_back(ValueRef::node(i));
  return refs;
}

ValueRef sample_ref(std::mt19937_64& rng, const AttentionDag& dag, int position) {
  auto refs = visible_refs(dag, position);
  return refs[static_cast<std::size_t>(sample_index(rng, static_cast<int>(refs.size())))];
}

std::size_t ref_slot(const ValueRef& ref) {
  return ref.is_input() ? static_cast<std::size_t>(ref.index) : static_cast<std::size_t>(kNumInputNodes + ref.index);
}

// Favors operands nothing has consumed yet so that sampled graphs tend to
// use every declared input and leave few dead nodes behind.
ValueRef sample_generation_ref(std::mt19937_64& rng, const AttentionDag& dag, int position,
                               const std::vector<bool>& consumed) {
  std::vector<ValueRef> fresh;
  for (const auto& ref : visible_refs(dag, position)) {
    if (!consumed[ref_slot(ref)]) fresh.push_back(ref);
  }
  if (!fresh.empty() && std::bernoulli_distribution(0.9)(rng)) {
    return fresh[static_cast<std::size_t>(sample_index(rng, static_cast<int>(fresh.size())))];
  }
  return sample_ref(rng, dag, position);
}

const OpDistribution& distribution_at(std::span<const OpDistribution> dists, int position,
                                      const OpDistribution& fallback) {
  if (position >= 0 && static_cast<std::size_t>(position) < dists.size()) {
    return dists[static_cast<std::size_t>(position)];
  }
  return fallback;
}

bool is_canonical_input_set(const std::vector<InputNode>& inputs) {
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    if (static_cast<int>(inputs[i - 1]) >= static_cast<int>(inputs[i])) return false;
  }
  return true;
}

}  // namespace

int arity(OpKind op) {
  switch (op) {
    case OpKind::kAdd:
    case OpKind::kMatmul:
    case OpKind::kCosine:
    case OpKind::kEuclidean:
      return 2;
    default:
      return 1;
  }
}

std::string_view op_name(OpKind op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<OpKind> op_from_name(std::string_view name) {
  for (int i = 0; i < kNumOps; ++i) {
    if (kOpNames[static_cast<std::size_t>(i)] == name) return kAllOps[static_cast<std::size_t>(i)];
  }
  return std::nullopt;
}

std::string_view input_name(InputNode input) { return kInputNames[static_cast<std::size_t>(input)]; }

std::optional<InputNode> input_from_name(std::string_view name) {
  for (int i = 0; i < kNumInputNodes; ++i) {
    if (kInputNames[static_cast<std::size_t>(i)] == name) return static_cast<InputNode>(i);
  }
  return std::nullopt;
}

bool AttentionDag::uses_input(InputNode in) const {
  const ValueRef target = ValueRef::input(in);
  for (const auto& node : nodes) {
    for (const auto& arg : node.args) {
      if (arg == target) return true;
    }
  }
  return false;
}

std::string ShapeExpr::str() const {
  if (is_scalar) return "scalar";
  return dim_string(rows) + "x" + dim_string(cols);
}

std::optional<ShapeExpr> result_shape(OpKind op, std::span<const ShapeExpr> args, std::string* reason) {
  auto fail = [&](std::string why) -> std::optional<ShapeExpr> {
    if (reason) *reason = std::string(op_name(op)) + ": " + std::move(why);
    return std::nullopt;
  };
  if (static_cast<int>(args.size()) != arity(op)) return fail("wrong number of operands");
  if (is_elementwise(op)) return args[0];
  switch (op) {
    case OpKind::kTranspose:
      if (args[0].is_scalar) return fail("cannot transpose a scalar");
      return ShapeExpr::matrix(args[0].cols, args[0].rows);
    case OpKind::kAdd:
      if (!(args[0] == args[1])) return fail("operand shapes differ (" + args[0].str() + " vs " + args[1].str() + ")");
      return args[0];
    case OpKind::kMatmul:
      if (args[0].is_scalar || args[1].is_scalar) return fail("scalar operand");
      if (args[0].cols != args[1].rows) {
        return fail("inner dimensions differ (" + args[0].str() + " vs " + args[1].str() + ")");
      }
      return ShapeExpr::matrix(args[0].rows, args[1].cols);
    case OpKind::kCosine:
    case OpKind::kEuclidean:
      if (args[0].is_scalar || !(args[0] == args[1])) {
        return fail("row-pairwise op needs two identical matrix shapes (" + args[0].str() + " vs " + args[1].str() + ")");
      }
      return ShapeExpr::matrix(args[0].rows, args[0].rows);
    default:
      return fail("unknown op");
  }
}

ShapeInference infer_shapes(const AttentionDag& dag) {
  ShapeInference result;
  const ShapeExpr input_shape = ShapeExpr::matrix(Dim::kSeq, Dim::kHead);
  for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
    const DagNode& node = dag.nodes[i];
    std::vector<ShapeExpr> operand_shapes;
    for (const auto& arg : node.args) {
      if (arg.is_input()) {
        operand_shapes.push_back(input_shape);
      } else if (arg.index >= 0 && static_cast<std::size_t>(arg.index) < i) {
        operand_shapes.push_back(result.shapes[static_cast<std::size_t>(arg.index)]);
      } else {
        result.error = IllegalGraph{static_cast<int>(i), "reference to " + ref_string(arg) + " is not earlier"};
        return result;
      }
    }
    std::string reason;
    auto shape = result_shape(node.op, operand_shapes, &reason);
    if (!shape) {
      result.error = IllegalGraph{static_cast<int>(i), reason};
      return result;
    }
    result.shapes.push_back(*shape);
  }
  if (dag.nodes.empty()) {
    result.error = IllegalGraph{0, "graph has no nodes"};
  } else if (!(result.shapes.back() == input_shape)) {
    result.error = IllegalGraph{static_cast<int>(dag.nodes.size()) - 1,
                                "output is " + result.shapes.back().str() + ", expected n x d_h"};
  }
  return result;
}

Validation validate(const AttentionDag& dag, int max_length) {
  auto invalid = [](std::string why) { return Validation{false, std::move(why)}; };
  if (dag.inputs.size() < 2 || dag.inputs.size() > 4) {
    return invalid("expected 2-4 input nodes, got " + std::to_string(dag.inputs.size()));
  }
  if (!is_canonical_input_set(dag.inputs)) return invalid("inputs must be distinct and ordered Q, K, V, P");
  if (dag.nodes.empty()) return invalid("graph has no nodes");
  if (static_cast<int>(dag.nodes.size()) > max_length) {
    return invalid("path length " + std::to_string(dag.nodes.size()) + " exceeds " + std::to_string(max_length));
  }
  for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
    const DagNode& node = dag.nodes[i];
    if (static_cast<int>(node.args.size()) != arity(node.op)) {
      return invalid("node " + std::to_string(i) + " (" + std::string(op_name(node.op)) + ") has " +
                     std::to_string(node.args.size()) + " operands");
    }
    for (const auto& arg : node.args) {
      if (arg.is_input()) {
        if (arg.index < 0 || arg.index >= kNumInputNodes ||
            std::find(dag.inputs.begin(), dag.inputs.end(), static_cast<InputNode>(arg.index)) == dag.inputs.end()) {
          return invalid("node " + std::to_string(i) + " uses undeclared input");
        }
      } else if (arg.index < 0 || static_cast<std::size_t>(arg.index) >= i) {
        return invalid("node " + std::to_string(i) + " references a later node");
      }
    }
  }
  for (auto in : dag.inputs) {
    if (!dag.uses_input(in)) return invalid("input " + std::string(input_name(in)) + " is never used");
  }
  if (prune_dead_nodes(dag).nodes.size() != dag.nodes.size()) return invalid("graph has nodes that do not reach the output");
  auto shapes = infer_shapes(dag);
  if (!shapes.legal()) {
    return invalid("illegal at node " + std::to_string(shapes.error->node) + ": " + shapes.error->reason);
  }
  return {};
}

AttentionDag prune_dead_nodes(const AttentionDag& dag) {
  if (dag.nodes.empty()) return dag;
  std::vector<bool> live(dag.nodes.size(), false);
  live.back() = true;
  for (std::size_t i = dag.nodes.size(); i-- > 0;) {
    if (!live[i]) continue;
    for (const auto& arg : dag.nodes[i].args) {
      if (!arg.is_input() && arg.index >= 0 && static_cast<std::size_t>(arg.index) < i) {
        live[static_cast<std::size_t>(arg.index)] = true;
      }
    }
  }
  std::vector<int> remap(dag.nodes.size(), -1);
  AttentionDag out;
  out.inputs = dag.inputs;
  for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
    if (!live[i]) continue;
    DagNode node = dag.nodes[i];
    for (auto& arg : node.args) {
      if (!arg.is_input() && arg.index >= 0 && static_cast<std::size_t>(arg.index) < i) {
        arg.index = remap[static_cast<std::size_t>(arg.index)];
      }
    }
    remap[i] = static_cast<int>(out.nodes.size());
    out.nodes.push_back(std::move(node));
  }
  return out;
}

Tensor evaluate_dag(const AttentionDag& dag, const std::array<Tensor, kNumInputNodes>& inputs) {
  if (dag.nodes.empty()) throw std::invalid_argument("evaluate_dag: empty graph");
  std::vector<Tensor> values;
  values.reserve(dag.nodes.size());
  auto resolve = [&](const ValueRef& ref) -> const Tensor& {
    if (ref.is_input()) {
      const Tensor& t = inputs[static_cast<std::size_t>(ref.index)];
      if (!t.defined()) throw std::invalid_argument("evaluate_dag: missing input " + ref_string(ref));
      return t;
    }
    return values.at(static_cast<std::size_t>(ref.index));
  };
  for (const auto& node : dag.nodes) {
    if (arity(node.op) == 1) {
      values.push_back(apply_unary(to_unary(node.op), resolve(node.args[0])));
    } else {
      values.push_back(apply_binary(to_binary(node.op), resolve(node.args[0]), resolve(node.args[1])));
    }
  }
  return values.back();
}

OpDistribution uniform_op_distribution() {
  OpDistribution d;
  d.fill(1.0 / kNumOps);
  return d;
}

AttentionDag random_dag(std::mt19937_64& rng, int max_length, int attempt_budget) {
  if (max_length < 1) throw std::invalid_argument("random_dag: max_length must be >= 1");
  const OpDistribution uniform = uniform_op_distribution();
  const ShapeExpr input_shape = ShapeExpr::matrix(Dim::kSeq, Dim::kHead);
  constexpr int kNodeRetries = 50;
  for (int attempt = 0; attempt < attempt_budget; ++attempt) {
    AttentionDag dag;
    std::array<InputNode, 4> order{InputNode::kQ, InputNode::kK, InputNode::kV, InputNode::kP};
    std::shuffle(order.begin(), order.end(), rng);
    const int input_count = 2 + sample_index(rng, 3);
    dag.inputs.assign(order.begin(), order.begin() + input_count);
    std::sort(dag.inputs.begin(), dag.inputs.end());

    const int length = 1 + sample_index(rng, max_length);
    std::vector<ShapeExpr> shapes;
    std::vector<bool> consumed(static_cast<std::size_t>(kNumInputNodes + length), false);
    bool ok = true;
    for (int i = 0; i < length && ok; ++i) {
      ok = false;
      for (int retry = 0; retry < kNodeRetries; ++retry) {
        DagNode node{sample_op(rng, uniform), {}};
        std::vector<ShapeExpr> operand_shapes;
        for (int a = 0; a < arity(node.op); ++a) {
          ValueRef ref = sample_generation_ref(rng, dag, i, consumed);
          node.args.push_back(ref);
          operand_shapes.push_back(ref.is_input() ? input_shape : shapes[static_cast<std::size_t>(ref.index)]);
        }
        auto shape = result_shape(node.op, operand_shapes);
        if (shape && i + 1 == length && !(*shape == input_shape)) shape.reset();
        if (shape) {
          for (const auto& arg : node.args) consumed[ref_slot(arg)] = true;
          shapes.push_back(*shape);
          dag.nodes.push_back(std::move(node));
          ok = true;
          break;
        }
      }
    }
    if (!ok) continue;
    AttentionDag pruned = prune_dead_nodes(dag);
    if (validate(pruned, max_length)) return pruned;
  }
  throw GenerationExhausted("random_dag: no valid graph within " + std::to_string(attempt_budget) + " attempts");
}

namespace {

std::optional<AttentionDag> try_replace(const AttentionDag& parent, std::span<const OpDistribution> dists,
                                        const OpDistribution& uniform, std::mt19937_64& rng) {
  AttentionDag child = parent;
  const int pos = sample_index(rng, static_cast<int>(child.nodes.size()));
  DagNode& node = child.nodes[static_cast<std::size_t>(pos)];
  const OpKind op = sample_op(rng, distribution_at(dists, pos, uniform));
  if (op == node.op) return std::nullopt;
  node.op = op;
  node.args.resize(1);
  if (arity(op) == 2) node.args.push_back(sample_ref(rng, child, pos));
  return child;
}

std::optional<AttentionDag> try_insert(const AttentionDag& parent, std::span<const OpDistribution> dists,
                                       const OpDistribution& uniform, std::mt19937_64& rng) {
  AttentionDag child = parent;
  const int len = static_cast<int>(child.nodes.size());
  const int pos = sample_index(rng, len + 1);
  DagNode inserted{sample_op(rng, distribution_at(dists, pos, uniform)), {}};
  for (int a = 0; a < arity(inserted.op); ++a) inserted.args.push_back(sample_ref(rng, child, pos));
  for (int i = pos; i < len; ++i) {
    for (auto& arg : child.nodes[static_cast<std::size_t>(i)].args) {
      if (!arg.is_input() && arg.index >= pos) ++arg.index;
    }
  }
  child.nodes.insert(child.nodes.begin() + pos, std::move(inserted));
  if (pos < len) {
    // Redirect one operand slot of a later node to the new node.
    std::vector<std::pair<int, int>> slots;
    for (int i = pos + 1; i <= len; ++i) {
      for (int a = 0; a < static_cast<int>(child.nodes[static_cast<std::size_t>(i)].args.size()); ++a) {
        slots.emplace_back(i, a);
      }
    }
    auto [i, a] = slots[static_cast<std::size_t>(sample_index(rng, static_cast<int>(slots.size())))];
    child.nodes[static_cast<std::size_t>(i)].args[static_cast<std::size_t>(a)] = ValueRef::node(pos);
  }
  return child;
}

std::optional<AttentionDag> try_delete(const AttentionDag& parent, std::mt19937_64& rng) {
  const int len = static_cast<int>(parent.nodes.size());
  if (len <= 1) return std::nullopt;
  AttentionDag child = parent;
  const int pos = sample_index(rng, len);
  const DagNode removed = child.nodes[static_cast<std::size_t>(pos)];
  child.nodes.erase(child.nodes.begin() + pos);
  for (int i = pos; i < len - 1; ++i) {
    for (auto& arg : child.nodes[static_cast<std::size_t>(i)].args) {
      if (arg.is_input()) continue;
      if (arg.index == pos) {
        // Consumers fall back to one of the removed node's operands.
        arg = removed.args[static_cast<std::size_t>(sample_index(rng, static_cast<int>(removed.args.size())))];
      } else if (arg.index > pos) {
        --arg.index;
      }
    }
  }
  return child;
}

std::optional<AttentionDag> try_toggle_input(const AttentionDag& parent, std::mt19937_64& rng) {
  AttentionDag child = parent;
  const InputNode target = sample_index(rng, 2) == 0 ? InputNode::kV : InputNode::kP;
  auto it = std::find(child.inputs.begin(), child.inputs.end(), target);
  if (it != child.inputs.end()) {
    if (child.inputs.size() <= 2) return std::nullopt;
    child.inputs.erase(it);
    for (auto& node : child.nodes) {
      for (auto& arg : node.args) {
        if (arg == ValueRef::input(target)) {
          arg = ValueRef::input(child.inputs[static_cast<std::size_t>(sample_index(rng, static_cast<int>(child.inputs.size())))]);
        }
      }
    }
    return child;
  }
  if (child.inputs.size() >= 4) return std::nullopt;
  std::vector<ValueRef*> input_slots;
  for (auto& node : child.nodes) {
    for (auto& arg : node.args) {
      if (arg.is_input()) input_slots.push_back(&arg);
    }
  }
  if (input_slots.empty()) return std::nullopt;
  *input_slots[static_cast<std::size_t>(sample_index(rng, static_cast<int>(input_slots.size())))] = ValueRef::input(target);
  child.inputs.push_back(target);
  std::sort(child.inputs.begin(), child.inputs.end());
  return child;
}

}  // namespace

AttentionDag mutate_intra(const AttentionDag& parent, std::span<const OpDistribution> position_dists,
                          std::mt19937_64& rng, int max_length, IntraMutation* applied) {
  const OpDistribution uniform = uniform_op_distribution();
  for (int attempt = 0; attempt < kMutationRetryBudget; ++attempt) {
    const auto kind = static_cast<IntraMutation>(sample_index(rng, 4));
    std::optional<AttentionDag> child;
    switch (kind) {
      case IntraMutation::kReplaceOp:
        child = try_replace(parent, position_dists, uniform, rng);
        break;
      case IntraMutation::kInsertNode:
        child = try_insert(parent, position_dists, uniform, rng);
        break;
      case IntraMutation::kDeleteNode:
        child = try_delete(parent, rng);
        break;
      case IntraMutation::kToggleInput:
        child = try_toggle_input(parent, rng);
        break;
    }
    if (!child) continue;
    AttentionDag pruned = prune_dead_nodes(*child);
    if (pruned == parent || !validate(pruned, max_length)) continue;
    if (applied) *applied = kind;
    return pruned;
  }
  return parent;
}

AttentionDag standard_attention_dag() {
  using enum OpKind;
  const auto q = ValueRef::input(InputNode::kQ);
  const auto k = ValueRef::input(InputNode::kK);
  const auto v = ValueRef::input(InputNode::kV);
  AttentionDag dag;
  dag.inputs = {InputNode::kQ, InputNode::kK, InputNode::kV};
  dag.nodes = {
      {kTranspose, {k}},                                   // 0: K^T
      {kScale, {q}},                                       // 1: Q / sqrt(d_h)
      {kMatmul, {ValueRef::node(1), ValueRef::node(0)}},   // 2
      {kSoftmax, {ValueRef::node(2)}},                     // 3
      {kMatmul, {ValueRef::node(3), v}},                   // 4
  };
  return dag;
}

AttentionDag autobert_l2_dag() {
  using enum OpKind;
  const auto q = ValueRef::input(InputNode::kQ);
  const auto k = ValueRef::input(InputNode::kK);
  AttentionDag dag;
  dag.inputs = {InputNode::kQ, InputNode::kK};
  dag.nodes = {
      {kTranspose, {k}},                                   // 0: K^T
      {kNeg, {ValueRef::node(0)}},                         // 1
      {kLogSigmoid, {ValueRef::node(1)}},                  // 2
      {kNeg, {ValueRef::node(2)}},                         // 3: log(1 + exp(K^T))
      {kScale, {q}},                                       // 4
      {kMatmul, {ValueRef::node(4), ValueRef::node(3)}},   // 5
      {kSoftmax, {ValueRef::node(5)}},                     // 6
      {kAdd, {k, q}},                                      // 7
      {kMatmul, {ValueRef::node(6), ValueRef::node(7)}},   // 8
  };
  return dag;
}

AttentionDag autobert_l12_dag() {
  using enum OpKind;
  const auto q = ValueRef::input(InputNode::kQ);
  const auto k = ValueRef::input(InputNode::kK);
  const auto v = ValueRef::input(InputNode::kV);
  AttentionDag dag;
  dag.inputs = {InputNode::kQ, InputNode::kK, InputNode::kV};
  dag.nodes = {
      {kScale, {k}},                                       // 0
      {kAdd, {ValueRef::node(0), v}},                      // 1
      {kTranspose, {ValueRef::node(1)}},                   // 2
      {kScale, {q}},                                       // 3
      {kMatmul, {ValueRef::node(3), ValueRef::node(2)}},   // 4
      {kSoftmax, {ValueRef::node(4)}},                     // 5
      {kMatmul, {ValueRef::node(5), v}},                   // 6
  };
  return dag;
}

}  // namespace opnas

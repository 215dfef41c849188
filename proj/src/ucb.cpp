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

#include "opnas/ucb.hpp"

#include <stdexcept>
#include <string>

namespace opnas {

double ucb_value(double mean, double alpha, long total, long visits) {
  if (visits <= 0) return kUnseenArm;
  const double n = static_cast<double>(std::max(total, 1L));
  return mean + alpha * std::sqrt(2.0 * std::log(n) / static_cast<double>(visits));
}

namespace {

template <typename T>
T at_or(const std::vector<T>& v, int i, T fallback) {
  return i >= 0 && static_cast<std::size_t>(i) < v.size() ? v[static_cast<std::size_t>(i)] : fallback;
}

template <typename Row>
Row row_at(const std::vector<Row>& v, int i) {
  return i >= 0 && static_cast<std::size_t>(i) < v.size() ? v[static_cast<std::size_t>(i)] : Row{};
}

}  // namespace

long UcbStats::position_total(int position) const { return at_or(position_totals_, position, 0L); }

long UcbStats::visits(int position, OpKind op) const { return row_at(op_visits_, position)[static_cast<std::size_t>(op_index(op))]; }

double UcbStats::score_sum(int position, OpKind op) const {
  return row_at(op_sums_, position)[static_cast<std::size_t>(op_index(op))];
}

double UcbStats::mean(int position, OpKind op) const {
  const long n = visits(position, op);
  return n > 0 ? score_sum(position, op) / static_cast<double>(n) : 0.0;
}

long UcbStats::layer_conv_total(int layer) const { return at_or(kernel_totals_, layer, 0L); }

long UcbStats::kernel_visits(int layer, int kernel) const {
  return row_at(kernel_visits_, layer)[static_cast<std::size_t>(kernel_index(kernel))];
}

double UcbStats::kernel_score_sum(int layer, int kernel) const {
  return row_at(kernel_sums_, layer)[static_cast<std::size_t>(kernel_index(kernel))];
}

void UcbStats::record(const BackboneSpec& spec, double score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw std::invalid_argument("UcbStats::record: score " + std::to_string(score) + " outside [0, 1]");
  }
  if (kernel_totals_.size() < spec.layers.size()) {
    kernel_totals_.resize(spec.layers.size(), 0);
    kernel_visits_.resize(spec.layers.size(), std::array<long, kNumKernels>{});
    kernel_sums_.resize(spec.layers.size(), std::array<double, kNumKernels>{});
  }
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (const auto* att = std::get_if<AttentionLayer>(&spec.layers[l])) {
      const auto& nodes = att->dag.nodes;
      if (position_totals_.size() < nodes.size()) {
        position_totals_.resize(nodes.size(), 0);
        op_visits_.resize(nodes.size(), std::array<long, kNumOps>{});
        op_sums_.resize(nodes.size(), std::array<double, kNumOps>{});
      }
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const auto i = static_cast<std::size_t>(op_index(nodes[j].op));
        ++position_totals_[j];
        ++op_visits_[j][i];
        op_sums_[j][i] += score;
      }
    } else {
      const auto k = static_cast<std::size_t>(kernel_index(std::get<ConvLayer>(spec.layers[l]).kernel));
      ++kernel_totals_[l];
      ++kernel_visits_[l][k];
      kernel_sums_[l][k] += score;
    }
  }
}

nlohmann::ordered_json UcbStats::to_json() const {
  nlohmann::ordered_json j;
  j["position_totals"] = position_totals_;
  j["op_visits"] = op_visits_;
  j["op_sums"] = op_sums_;
  j["kernel_totals"] = kernel_totals_;
  j["kernel_visits"] = kernel_visits_;
  j["kernel_sums"] = kernel_sums_;
  return j;
}

UcbStats UcbStats::from_json(const nlohmann::ordered_json& j) {
  UcbStats s;
  j.at("position_totals").get_to(s.position_totals_);
  j.at("op_visits").get_to(s.op_visits_);
  j.at("op_sums").get_to(s.op_sums_);
  j.at("kernel_totals").get_to(s.kernel_totals_);
  j.at("kernel_visits").get_to(s.kernel_visits_);
  j.at("kernel_sums").get_to(s.kernel_sums_);
  if (s.op_visits_.size() != s.position_totals_.size() || s.op_sums_.size() != s.position_totals_.size() ||
      s.kernel_visits_.size() != s.kernel_totals_.size() || s.kernel_sums_.size() != s.kernel_totals_.size()) {
    throw std::invalid_argument("UcbStats: inconsistent table sizes");
  }
  return s;
}

double ucb_score(const UcbStats& stats, int position, OpKind op, double alpha) {
  return ucb_value(stats.mean(position, op), alpha, stats.position_total(position), stats.visits(position, op));
}

OpDistribution op_distribution(const UcbStats& stats, int position, double alpha) {
  OpDistribution u;
  for (OpKind op : kAllOps) u[static_cast<std::size_t>(op_index(op))] = ucb_score(stats, position, op, alpha);
  return ucb_softmax(u);
}

std::vector<OpDistribution> op_distributions(const UcbStats& stats, double alpha) {
  std::vector<OpDistribution> out;
  for (int j = 0; j < stats.max_path_length(); ++j) out.push_back(op_distribution(stats, j, alpha));
  return out;
}

KernelDistribution kernel_distribution(const UcbStats& stats, int layer, double alpha) {
  KernelDistribution u;
  const long total = stats.layer_conv_total(layer);
  for (int i = 0; i < kNumKernels; ++i) {
    const int k = kKernelMenu[static_cast<std::size_t>(i)];
    const long n = stats.kernel_visits(layer, k);
    const double mean = n > 0 ? stats.kernel_score_sum(layer, k) / static_cast<double>(n) : 0.0;
    u[static_cast<std::size_t>(i)] = ucb_value(mean, alpha, total, n);
  }
  return ucb_softmax(u);
}

std::vector<KernelDistribution> kernel_distributions(const UcbStats& stats, int layers, double alpha) {
  std::vector<KernelDistribution> out;
  for (int l = 0; l < layers; ++l) out.push_back(kernel_distribution(stats, l, alpha));
  return out;
}

}  // namespace opnas

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

// Upper-confidence-bound statistics that steer mutation: one arm set per
// position along an attention path (the ten primitive ops) and one per layer
// for conv kernel sizes.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "json.hpp"
#include "opnas/backbone.hpp"

namespace opnas {

/// Score given to arms that were never pulled; ranks above any finite value.
inline constexpr double kUnseenArm = std::numeric_limits<double>::infinity();

/// mean + alpha * sqrt(2 ln(total) / visits); kUnseenArm when visits == 0.
double ucb_value(double mean, double alpha, long total, long visits);

/// Softmax over finite scores. If any score is kUnseenArm the unseen arms
/// share all of the probability mass evenly.
template <std::size_t M>
std::array<double, M> ucb_softmax(const std::array<double, M>& scores) {
  std::array<double, M> p{};
  std::size_t unseen = 0;
  for (double u : scores) unseen += std::isinf(u) ? 1 : 0;
  if (unseen > 0) {
    for (std::size_t i = 0; i < M; ++i) p[i] = std::isinf(scores[i]) ? 1.0 / static_cast<double>(unseen) : 0.0;
    return p;
  }
  double top = scores[0];
  for (double u : scores) top = std::max(top, u);
  double z = 0;
  for (std::size_t i = 0; i < M; ++i) z += (p[i] = std::exp(scores[i] - top));
  for (auto& v : p) v /= z;
  return p;
}

class UcbStats {
 public:
  UcbStats() = default;

  /// Longest attention path recorded so far.
  int max_path_length() const { return static_cast<int>(position_totals_.size()); }
  int layer_count() const { return static_cast<int>(kernel_totals_.size()); }

  long position_total(int position) const;
  long visits(int position, OpKind op) const;
  double score_sum(int position, OpKind op) const;
  /// Mean score of paths with `op` at `position`; 0 when never visited.
  double mean(int position, OpKind op) const;

  long layer_conv_total(int layer) const;
  long kernel_visits(int layer, int kernel) const;
  double kernel_score_sum(int layer, int kernel) const;

  /// Credits `score` to every (position, op) along each attention path and
  /// to each conv layer's kernel. Throws std::invalid_argument unless the
  /// score lies in [0, 1].
  void record(const BackboneSpec& spec, double score);

  nlohmann::ordered_json to_json() const;
  static UcbStats from_json(const nlohmann::ordered_json& j);

  bool operator==(const UcbStats&) const = default;

 private:
  std::vector<long> position_totals_;
  std::vector<std::array<long, kNumOps>> op_visits_;
  std::vector<std::array<double, kNumOps>> op_sums_;
  std::vector<long> kernel_totals_;
  std::vector<std::array<long, kNumKernels>> kernel_visits_;
  std::vector<std::array<double, kNumKernels>> kernel_sums_;
};

double ucb_score(const UcbStats& stats, int position, OpKind op, double alpha);
OpDistribution op_distribution(const UcbStats& stats, int position, double alpha);
/// One distribution per recorded position.
std::vector<OpDistribution> op_distributions(const UcbStats& stats, double alpha);

KernelDistribution kernel_distribution(const UcbStats& stats, int layer, double alpha);
std::vector<KernelDistribution> kernel_distributions(const UcbStats& stats, int layers, double alpha);

}  // namespace opnas

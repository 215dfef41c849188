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

// Layer-level genome: an ordered stack of attention DAGs and lightweight
// convolutions.

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "opnas/dag.hpp"
#include "opnas/model_config.hpp"

namespace opnas {

inline constexpr int kNumKernels = 7;
inline constexpr std::array<int, kNumKernels> kKernelMenu{3, 5, 7, 9, 15, 31, 65};
inline constexpr int kMaxKernel = 65;

bool is_menu_kernel(int k);
/// Position of k in kKernelMenu; throws for sizes off the menu.
int kernel_index(int k);

struct AttentionLayer {
  AttentionDag dag;
  bool operator==(const AttentionLayer&) const = default;
};

struct ConvLayer {
  int kernel = kMaxKernel;
  bool operator==(const ConvLayer&) const = default;
};

using LayerSpec = std::variant<AttentionLayer, ConvLayer>;

struct BackboneSpec {
  std::vector<LayerSpec> layers;

  std::size_t size() const { return layers.size(); }
  bool has_attention() const;
  bool operator==(const BackboneSpec&) const = default;
};

inline bool is_attention(const LayerSpec& layer) { return std::holds_alternative<AttentionLayer>(layer); }

struct BackboneValidation {
  bool valid = true;
  std::string reason;
  /// Set for a conv-only stack, which is representable but suspicious.
  bool conv_only = false;
  explicit operator bool() const { return valid; }
};

BackboneValidation validate(const BackboneSpec& spec, int max_length = kMaxPathLength);

using KernelDistribution = std::array<double, kNumKernels>;
KernelDistribution uniform_kernel_distribution();

/// Each layer is attention or conv with equal odds; at least one attention.
BackboneSpec random_backbone(std::mt19937_64& rng, int layers, int max_length = kMaxPathLength);

/// Picks one layer uniformly. Attention layers flip to conv (kernel drawn from
/// that layer's distribution). Conv layers either flip to attention (fresh
/// random dag or a copy of another layer's dag, even odds) or resample their
/// kernel. Layers past the end of `kernel_dists` use the uniform one.
BackboneSpec mutate_inter(const BackboneSpec& parent, std::span<const KernelDistribution> kernel_dists,
                          std::mt19937_64& rng, int max_length = kMaxPathLength);

/// Alternating conv/attention stack with descending kernels, the published L2
/// structure in the first attention layer and the L12 structure elsewhere.
BackboneSpec autobert_zero_backbone(int layers = 12);
/// Every layer is standard scaled dot-product attention.
BackboneSpec standard_backbone(int layers = 12);

struct ParamCount {
  long attention = 0;
  long conv = 0;
  /// Embeddings, layer norms and feed-forward blocks.
  long other = 0;
  long total() const { return attention + conv + other; }
};

ParamCount count_params(const BackboneSpec& spec, const ModelConfig& config);

}  // namespace opnas

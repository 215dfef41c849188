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

#include "opnas/backbone.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace opnas {

namespace {

int sample_index(std::mt19937_64& rng, int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

int sample_kernel(std::mt19937_64& rng, const KernelDistribution& dist) {
  std::discrete_distribution<int> pick(dist.begin(), dist.end());
  return kKernelMenu[static_cast<std::size_t>(pick(rng))];
}

// Conv kernels for a stack with `count` conv layers, widest first.
std::vector<int> descending_kernels(int count) {
  static constexpr std::array<int, 6> kDefault{65, 31, 15, 9, 5, 3};
  static constexpr std::array<int, 7> kMenuDescending{65, 31, 15, 9, 7, 5, 3};
  std::vector<int> out;
  if (count == 1) return {65};
  for (int i = 0; i < count; ++i) {
    if (count <= 6) {
      // Round half up of i * 5 / (count - 1).
      const int idx = (2 * i * 5 + (count - 1)) / (2 * (count - 1));
      out.push_back(kDefault[static_cast<std::size_t>(idx)]);
    } else {
      out.push_back(kMenuDescending[static_cast<std::size_t>(i * 7 / count)]);
    }
  }
  return out;
}

}  // namespace

bool is_menu_kernel(int k) { return std::find(kKernelMenu.begin(), kKernelMenu.end(), k) != kKernelMenu.end(); }

int kernel_index(int k) {
  auto it = std::find(kKernelMenu.begin(), kKernelMenu.end(), k);
  if (it == kKernelMenu.end()) throw std::invalid_argument("kernel size " + std::to_string(k) + " is not on the menu");
  return static_cast<int>(it - kKernelMenu.begin());
}

bool BackboneSpec::has_attention() const { return std::any_of(layers.begin(), layers.end(), is_attention); }

BackboneValidation validate(const BackboneSpec& spec, int max_length) {
  BackboneValidation out;
  if (spec.layers.empty()) return {false, "backbone has no layers", false};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      if (!is_menu_kernel(conv->kernel)) {
        return {false, "layer " + std::to_string(i) + ": kernel " + std::to_string(conv->kernel) + " is not on the menu",
                false};
      }
    } else {
      auto v = validate(std::get<AttentionLayer>(layer).dag, max_length);
      if (!v) return {false, "layer " + std::to_string(i) + ": " + v.reason, false};
    }
  }
  out.conv_only = !spec.has_attention();
  return out;
}

KernelDistribution uniform_kernel_distribution() {
  KernelDistribution d;
  d.fill(1.0 / kNumKernels);
  return d;
}

BackboneSpec random_backbone(std::mt19937_64& rng, int layers, int max_length) {
  if (layers < 1) throw std::invalid_argument("random_backbone: layers must be >= 1");
  BackboneSpec spec;
  const KernelDistribution uniform = uniform_kernel_distribution();
  for (int i = 0; i < layers; ++i) {
    if (sample_index(rng, 2) == 0) {
      spec.layers.emplace_back(AttentionLayer{random_dag(rng, max_length)});
    } else {
      spec.layers.emplace_back(ConvLayer{sample_kernel(rng, uniform)});
    }
  }
  if (!spec.has_attention()) {
    spec.layers[static_cast<std::size_t>(sample_index(rng, layers))] = AttentionLayer{random_dag(rng, max_length)};
  }
  return spec;
}

BackboneSpec mutate_inter(const BackboneSpec& parent, std::span<const KernelDistribution> kernel_dists,
                          std::mt19937_64& rng, int max_length) {
  if (parent.layers.empty()) throw std::invalid_argument("mutate_inter: empty backbone");
  const KernelDistribution uniform = uniform_kernel_distribution();
  BackboneSpec child = parent;
  const int pos = sample_index(rng, static_cast<int>(child.layers.size()));
  const KernelDistribution& dist =
      static_cast<std::size_t>(pos) < kernel_dists.size() ? kernel_dists[static_cast<std::size_t>(pos)] : uniform;
  LayerSpec& layer = child.layers[static_cast<std::size_t>(pos)];

  if (is_attention(layer)) {
    layer = ConvLayer{sample_kernel(rng, dist)};
    return child;
  }
  if (sample_index(rng, 2) == 0) {
    std::get<ConvLayer>(layer).kernel = sample_kernel(rng, dist);
    return child;
  }
  std::vector<const AttentionDag*> donors;
  for (const auto& other : parent.layers) {
    if (const auto* att = std::get_if<AttentionLayer>(&other)) donors.push_back(&att->dag);
  }
  if (!donors.empty() && sample_index(rng, 2) == 0) {
    layer = AttentionLayer{*donors[static_cast<std::size_t>(sample_index(rng, static_cast<int>(donors.size())))]};
  } else {
    layer = AttentionLayer{random_dag(rng, max_length)};
  }
  return child;
}

BackboneSpec autobert_zero_backbone(int layers) {
  if (layers < 2 || layers % 2 != 0) {
    throw std::invalid_argument("autobert_zero_backbone: layer count must be even, got " + std::to_string(layers));
  }
  const std::vector<int> kernels = descending_kernels(layers / 2);
  BackboneSpec spec;
  for (int i = 0; i < layers; ++i) {
    if (i % 2 == 0) {
      spec.layers.emplace_back(ConvLayer{kernels[static_cast<std::size_t>(i / 2)]});
    } else if (i == 1 && layers > 2) {
      spec.layers.emplace_back(AttentionLayer{autobert_l2_dag()});
    } else {
      spec.layers.emplace_back(AttentionLayer{autobert_l12_dag()});
    }
  }
  return spec;
}

BackboneSpec standard_backbone(int layers) {
  BackboneSpec spec;
  for (int i = 0; i < layers; ++i) spec.layers.emplace_back(AttentionLayer{standard_attention_dag()});
  return spec;
}

ParamCount count_params(const BackboneSpec& spec, const ModelConfig& config) {
  const long d = config.hidden;
  const long dh = config.head_dim();
  const long heads = config.heads;
  ParamCount count;
  count.other = static_cast<long>(config.vocab) * d + static_cast<long>(config.seq_len) * d;
  for (const auto& layer : spec.layers) {
    if (const auto* att = std::get_if<AttentionLayer>(&layer)) {
      const long projections = static_cast<long>(att->dag.inputs.size()) + 1;
      count.attention += projections * d * dh * heads;
      const long ffn = config.ffn_ratio * d;
      // Feed-forward weights and biases, then two layer norms.
      count.other += 2 * d * ffn + ffn + d + 4 * d;
    } else {
      const long k = std::get<ConvLayer>(layer).kernel;
      // GLU projection and kernel slice, plus a transform below the widest kernel.
      count.conv += 2 * d * d + k * d + (k < kMaxKernel ? k * k : 0);
      count.other += 2 * d;
    }
  }
  return count;
}

}  // namespace opnas

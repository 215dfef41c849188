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


// Bi-branch weight-sharing store. Every layer keeps a maximal attention
// branch (all four input projections per head plus the output projection)
// and a maximal conv branch (projection, a 65-wide kernel and one k x k
// transformation per smaller kernel size). Candidates are initialized from
// it and the best child of each generation writes its trained weights back.
//
// Checkpoint layout (little-endian):
//
//   8 bytes   magic "OPNASSN\x01"
//   8 bytes   uint64 header length H
//   H bytes   JSON header {format, version, config, seed, rng, layer_versions,
//             arrays: [{name, rows, cols}, ...]}
//   then      the arrays' doubles, row-major, in header order
//
// Arrays are declared in this order: token and position embeddings; then for
// each layer, per head W_Q, W_K, W_V, W_P, W_O; the attention block's ln1
// gain/bias, ffn w1/b1/w2/b2, ln2 gain/bias; the conv block's proj, kernel,
// transforms for k = 3..31 ascending, ln gain/bias.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "opnas/backbone.hpp"
#include "opnas/model.hpp"

namespace opnas {

/// Index of the center tap of the widest kernel.
inline constexpr int kKernelCenter = (kMaxKernel - 1) / 2;
/// Above this condition number write-back uses a pseudo-inverse.
inline constexpr double kTransformConditionLimit = 1e8;
inline constexpr int kSupernetFormatVersion = 1;

/// First row of the k-wide center slice of the widest kernel.
inline constexpr int center_slice_begin(int k) { return kKernelCenter - (k - 1) / 2; }

struct AttentionWeights {
  std::vector<InputNode> inputs;
  /// [head][i] is the projection for inputs[i], d x d_h.
  std::vector<std::vector<Matrix>> projections;
  /// [head], d x d_h.
  std::vector<Matrix> output;
};

class Supernet {
 public:
  Supernet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  /// The k x d kernel a candidate starts from: transform * center slice.
  /// Throws std::invalid_argument for sizes off the menu.
  Matrix extract_conv_kernel(int layer, int k) const;
  /// Identity-initialized k x k matrix; k must be on the menu and below 65.
  const Matrix& kernel_transform(int layer, int k) const;
  AttentionWeights extract_attention_weights(int layer, std::span<const InputNode> used) const;

  /// Overwrites the used projections and W_O. Bumps the layer version.
  void write_back_attention(int layer, const AttentionWeights& weights);
  /// Stores `transform` and writes transform^-1 * kernel into the center
  /// slice (the full kernel when k = 65). Bumps the layer version.
  void write_back_conv(int layer, const Matrix& kernel, const Matrix& transform, const Matrix& projection);

  long version(int layer) const;

  /// Parameter set for `spec`, named as Model expects.
  ParameterSet init_candidate(const BackboneSpec& spec) const;
  /// Writes every layer of a trained candidate plus its non-searched weights.
  void write_back(const BackboneSpec& spec, const ParameterSet& trained);

  /// Raw access to a stored array by name.
  const Matrix& weight(const std::string& name) const;
  const std::vector<std::string>& declared_order() const { return order_; }

  void save(const std::filesystem::path& path) const;
  /// Throws CheckpointError on a bad magic, version or layout.
  static Supernet load(const std::filesystem::path& path);

  bool operator==(const Supernet& other) const;

 private:
  Supernet() = default;
  void declare(const std::string& name, Matrix value);
  Matrix& slot(const std::string& name);
  void check_layer(int layer) const;
  void overwrite(const std::string& name, const Matrix& value);

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::mt19937_64 rng_;
  std::vector<std::string> order_;
  std::map<std::string, Matrix> weights_;
  std::vector<long> versions_;
};

}  // namespace opnas

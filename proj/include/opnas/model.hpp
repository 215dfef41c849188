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


// Executable encoder built from a BackboneSpec: token and position
// embeddings, a stack of attention or conv blocks, and a tied MLM head.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "opnas/backbone.hpp"
#include "opnas/model_config.hpp"
#include "opnas/tensor.hpp"

namespace opnas {

/// Named parameters in insertion order.
class ParameterSet {
 public:
  /// Throws std::invalid_argument if the name is taken.
  Parameter& add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return index_.contains(name); }
  /// Throws std::out_of_range for unknown names.
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::span<Parameter> all() { return params_; }
  std::span<const Parameter> all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  long numel() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameter names shared by the model builder and the supernet.
namespace param_names {
inline const std::string kTokenEmbedding = "embed.token";
inline const std::string kPositionEmbedding = "embed.position";
std::string layer_prefix(int layer);
/// layer<l>.attn.head<h>.W_<Q|K|V|P|O>
std::string head_projection(int layer, int head, char which);
std::string attention(int layer, const std::string& leaf);
std::string conv(int layer, const std::string& leaf);
}  // namespace param_names

class Model {
 public:
  /// Checks that `params` holds every weight the spec needs with the right
  /// shape; throws ConfigError otherwise.
  Model(BackboneSpec spec, ModelConfig config, ParameterSet params);

  /// n x V logits for one sequence of n <= seq_len token ids.
  Tensor forward(std::span<const int> tokens) const;
  /// Hidden states after the embedding (index 0) and after every layer.
  std::vector<Tensor> hidden_states(std::span<const int> tokens) const;

  const BackboneSpec& spec() const { return spec_; }
  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

 private:
  Tensor attention_block(int layer, const AttentionDag& dag, const Tensor& x) const;
  Tensor conv_block(int layer, int kernel, const Tensor& x) const;
  Tensor run(std::span<const int> tokens, std::vector<Tensor>* states) const;

  BackboneSpec spec_;
  ModelConfig config_;
  ParameterSet params_;
};

/// Fresh random initialization, identical to what a newly built supernet
/// with the same seed would hand out for `spec`.
ParameterSet fresh_parameters(const BackboneSpec& spec, const ModelConfig& config, std::uint64_t seed);

/// Standard deviation of every randomly initialized weight.
inline constexpr double kInitStd = 0.02;

}  // namespace opnas

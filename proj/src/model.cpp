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


#include "opnas/model.hpp"

#include <numeric>
#include <stdexcept>

#include "opnas/errors.hpp"
#include "opnas/supernet.hpp"

namespace opnas {

Parameter& ParameterSet::add(const std::string& name, Matrix value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  index_.emplace(name, params_.size());
  params_.emplace_back(name, std::move(value));
  return params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second];
}

long ParameterSet::numel() const {
  long n = 0;
  for (const auto& p : params_) n += static_cast<long>(p.tensor().numel());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor().zero_grad();
}

namespace param_names {

std::string layer_prefix(int layer) { return "layer" + std::to_string(layer); }

std::string head_projection(int layer, int head, char which) {
  return layer_prefix(layer) + ".attn.head" + std::to_string(head) + ".W_" + which;
}

std::string attention(int layer, const std::string& leaf) { return layer_prefix(layer) + ".attn." + leaf; }

std::string conv(int layer, const std::string& leaf) { return layer_prefix(layer) + ".conv." + leaf; }

}  // namespace param_names

namespace {

using namespace param_names;

constexpr char kInputLetters[kNumInputNodes] = {'Q', 'K', 'V', 'P'};

void expect(const ParameterSet& params, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (!params.contains(name)) throw ConfigError("model is missing parameter " + name);
  const auto& t = params.at(name).tensor();
  if (t.rows() != rows || t.cols() != cols) {
    throw ConfigError(name + " has shape " + shape_string(t.shape()) + ", expected [" + std::to_string(rows) + ", " +
                      std::to_string(cols) + "]");
  }
}

}  // namespace

Model::Model(BackboneSpec spec, ModelConfig config, ParameterSet params)
    : spec_(std::move(spec)), config_(config), params_(std::move(params)) {
  config_.validate();
  if (static_cast<int>(spec_.size()) != config_.layers) {
    throw ConfigError("spec has " + std::to_string(spec_.size()) + " layers but the config asks for " +
                      std::to_string(config_.layers));
  }
  const Eigen::Index d = config_.hidden;
  const Eigen::Index dh = config_.head_dim();
  const Eigen::Index ffn = static_cast<Eigen::Index>(config_.ffn_ratio) * d;
  expect(params_, kTokenEmbedding, config_.vocab, d);
  expect(params_, kPositionEmbedding, config_.seq_len, d);
  for (int l = 0; l < config_.layers; ++l) {
    const auto& layer = spec_.layers[static_cast<std::size_t>(l)];
    if (const auto* att = std::get_if<AttentionLayer>(&layer)) {
      for (int h = 0; h < config_.heads; ++h) {
        for (auto in : att->dag.inputs) expect(params_, head_projection(l, h, kInputLetters[static_cast<int>(in)]), d, dh);
        expect(params_, head_projection(l, h, 'O'), d, dh);
      }
      for (const char* ln : {"ln1", "ln2"}) {
        expect(params_, attention(l, std::string(ln) + ".gain"), 1, d);
        expect(params_, attention(l, std::string(ln) + ".bias"), 1, d);
      }
      expect(params_, attention(l, "ffn.w1"), d, ffn);
      expect(params_, attention(l, "ffn.b1"), 1, ffn);
      expect(params_, attention(l, "ffn.w2"), ffn, d);
      expect(params_, attention(l, "ffn.b2"), 1, d);
    } else {
      const int k = std::get<ConvLayer>(layer).kernel;
      expect(params_, conv(l, "proj"), d, 2 * d);
      expect(params_, conv(l, "kernel"), k, d);
      if (k < kMaxKernel) expect(params_, conv(l, "transform"), k, k);
      expect(params_, conv(l, "ln.gain"), 1, d);
      expect(params_, conv(l, "ln.bias"), 1, d);
    }
  }
}

Tensor Model::attention_block(int l, const AttentionDag& dag, const Tensor& x) const {
  Tensor mixed;
  for (int h = 0; h < config_.heads; ++h) {
    std::array<Tensor, kNumInputNodes> inputs;
    for (auto in : dag.inputs) {
      const int i = static_cast<int>(in);
      inputs[static_cast<std::size_t>(i)] = matmul(x, params_.at(head_projection(l, h, kInputLetters[i])));
    }
    // Summing per-head W_O products equals concatenating heads and applying
    // the full output projection.
    Tensor out = matmul(evaluate_dag(dag, inputs), transpose(params_.at(head_projection(l, h, 'O'))));
    mixed = mixed.defined() ? add(mixed, out) : out;
  }
  Tensor y = layer_norm(add(x, mixed), params_.at(attention(l, "ln1.gain")), params_.at(attention(l, "ln1.bias")));
  Tensor hidden = softsign(add_row(matmul(y, params_.at(attention(l, "ffn.w1"))), params_.at(attention(l, "ffn.b1"))));
  Tensor ffn = add_row(matmul(hidden, params_.at(attention(l, "ffn.w2"))), params_.at(attention(l, "ffn.b2")));
  return layer_norm(add(y, ffn), params_.at(attention(l, "ln2.gain")), params_.at(attention(l, "ln2.bias")));
}

Tensor Model::conv_block(int l, int k, const Tensor& x) const {
  Tensor gated = glu(matmul(x, params_.at(conv(l, "proj"))));
  Tensor kernel = params_.at(conv(l, "kernel"));
  if (k < kMaxKernel) kernel = matmul(params_.at(conv(l, "transform")), kernel);
  Tensor mixed = depthwise_conv1d(gated, kernel);
  return layer_norm(add(x, mixed), params_.at(conv(l, "ln.gain")), params_.at(conv(l, "ln.bias")));
}

Tensor Model::run(std::span<const int> tokens, std::vector<Tensor>* states) const {
  if (tokens.empty() || tokens.size() > static_cast<std::size_t>(config_.seq_len)) {
    throw ShapeError("sequence length " + std::to_string(tokens.size()) + " outside [1, " +
                     std::to_string(config_.seq_len) + "]");
  }
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab) throw std::out_of_range("token id " + std::to_string(t) + " outside vocab");
  }
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  const Tensor& table = params_.at(kTokenEmbedding);
  Tensor x = add(embedding(table, tokens), embedding(params_.at(kPositionEmbedding), positions));
  if (states) states->push_back(x);
  for (int l = 0; l < config_.layers; ++l) {
    const auto& layer = spec_.layers[static_cast<std::size_t>(l)];
    if (const auto* att = std::get_if<AttentionLayer>(&layer)) {
      x = attention_block(l, att->dag, x);
    } else {
      x = conv_block(l, std::get<ConvLayer>(layer).kernel, x);
    }
    if (states) states->push_back(x);
  }
  return matmul(x, transpose(table));
}

Tensor Model::forward(std::span<const int> tokens) const { return run(tokens, nullptr); }

std::vector<Tensor> Model::hidden_states(std::span<const int> tokens) const {
  std::vector<Tensor> states;
  run(tokens, &states);
  return states;
}

ParameterSet fresh_parameters(const BackboneSpec& spec, const ModelConfig& config, std::uint64_t seed) {
  return Supernet(config, seed).init_candidate(spec);
}

}  // namespace opnas

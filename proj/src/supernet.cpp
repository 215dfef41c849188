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


#include "opnas/supernet.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "json.hpp"
#include "opnas/errors.hpp"

namespace opnas {

using namespace param_names;

namespace {

constexpr char kInputLetters[kNumInputNodes] = {'Q', 'K', 'V', 'P'};
constexpr char kMagic[8] = {'O', 'P', 'N', 'A', 'S', 'S', 'N', '\x01'};

std::string transform_name(int layer, int k) { return conv(layer, "transform" + std::to_string(k)); }

Matrix normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// T^-1 * K, through a pseudo-inverse when T is close to singular.
Matrix solve_transform(const Matrix& transform, const Matrix& kernel) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(transform, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cond = s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
  if (cond <= kTransformConditionLimit) return Eigen::PartialPivLU<Eigen::MatrixXd>(transform).solve(kernel);
  std::clog << "warning: kernel transform is ill-conditioned (cond " << cond << "), using a pseudo-inverse\n";
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  const double tol = s(0) / kTransformConditionLimit;
  for (Eigen::Index i = 0; i < s.size(); ++i) inv(i) = s(i) > tol ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * kernel;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw CheckpointError("truncated supernet checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

nlohmann::ordered_json config_json(const ModelConfig& c) {
  return {{"layers", c.layers}, {"hidden", c.hidden}, {"heads", c.heads},
          {"vocab", c.vocab},   {"seq_len", c.seq_len}, {"ffn_ratio", c.ffn_ratio}};
}

}  // namespace

Supernet::Supernet(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed), rng_(seed) {
  config_.validate();
  const Eigen::Index d = config_.hidden;
  const Eigen::Index dh = config_.head_dim();
  const Eigen::Index ffn = static_cast<Eigen::Index>(config_.ffn_ratio) * d;
  declare(kTokenEmbedding, normal_matrix(rng_, config_.vocab, d));
  declare(kPositionEmbedding, normal_matrix(rng_, config_.seq_len, d));
  for (int l = 0; l < config_.layers; ++l) {
    for (int h = 0; h < config_.heads; ++h) {
      for (char which : {'Q', 'K', 'V', 'P', 'O'}) declare(head_projection(l, h, which), normal_matrix(rng_, d, dh));
    }
    declare(attention(l, "ln1.gain"), Matrix::Ones(1, d));
    declare(attention(l, "ln1.bias"), Matrix::Zero(1, d));
    declare(attention(l, "ffn.w1"), normal_matrix(rng_, d, ffn));
    declare(attention(l, "ffn.b1"), Matrix::Zero(1, ffn));
    declare(attention(l, "ffn.w2"), normal_matrix(rng_, ffn, d));
    declare(attention(l, "ffn.b2"), Matrix::Zero(1, d));
    declare(attention(l, "ln2.gain"), Matrix::Ones(1, d));
    declare(attention(l, "ln2.bias"), Matrix::Zero(1, d));
    declare(conv(l, "proj"), normal_matrix(rng_, d, 2 * d));
    declare(conv(l, "kernel"), normal_matrix(rng_, kMaxKernel, d));
    for (int k : kKernelMenu) {
      if (k < kMaxKernel) declare(transform_name(l, k), Matrix::Identity(k, k));
    }
    declare(conv(l, "ln.gain"), Matrix::Ones(1, d));
    declare(conv(l, "ln.bias"), Matrix::Zero(1, d));
  }
  versions_.assign(static_cast<std::size_t>(config_.layers), 0);
}

void Supernet::declare(const std::string& name, Matrix value) {
  order_.push_back(name);
  weights_.emplace(name, std::move(value));
}

const Matrix& Supernet::weight(const std::string& name) const {
  auto it = weights_.find(name);
  if (it == weights_.end()) throw std::out_of_range("supernet has no array " + name);
  return it->second;
}

Matrix& Supernet::slot(const std::string& name) { return const_cast<Matrix&>(weight(name)); }

void Supernet::overwrite(const std::string& name, const Matrix& value) {
  Matrix& dst = slot(name);
  if (dst.rows() != value.rows() || dst.cols() != value.cols()) {
    throw ShapeError("write_back: " + name + " expects " + std::to_string(dst.rows()) + "x" +
                     std::to_string(dst.cols()) + ", got " + std::to_string(value.rows()) + "x" +
                     std::to_string(value.cols()));
  }
  dst = value;
}

void Supernet::check_layer(int layer) const {
  if (layer < 0 || layer >= config_.layers) throw std::out_of_range("supernet layer " + std::to_string(layer));
}

long Supernet::version(int layer) const {
  check_layer(layer);
  return versions_[static_cast<std::size_t>(layer)];
}

const Matrix& Supernet::kernel_transform(int layer, int k) const {
  check_layer(layer);
  kernel_index(k);
  if (k == kMaxKernel) throw std::invalid_argument("the widest kernel has no transform");
  return weight(transform_name(layer, k));
}

Matrix Supernet::extract_conv_kernel(int layer, int k) const {
  check_layer(layer);
  kernel_index(k);
  const Matrix& full = weight(conv(layer, "kernel"));
  if (k == kMaxKernel) return full;
  return kernel_transform(layer, k) * full.middleRows(center_slice_begin(k), k);
}

AttentionWeights Supernet::extract_attention_weights(int layer, std::span<const InputNode> used) const {
  check_layer(layer);
  if (used.empty()) throw std::invalid_argument("extract_attention_weights: no inputs");
  AttentionWeights w;
  w.inputs.assign(used.begin(), used.end());
  for (int h = 0; h < config_.heads; ++h) {
    std::vector<Matrix> per_head;
    for (auto in : used) per_head.push_back(weight(head_projection(layer, h, kInputLetters[static_cast<int>(in)])));
    w.projections.push_back(std::move(per_head));
    w.output.push_back(weight(head_projection(layer, h, 'O')));
  }
  return w;
}

void Supernet::write_back_attention(int layer, const AttentionWeights& w) {
  check_layer(layer);
  if (w.projections.size() != static_cast<std::size_t>(config_.heads) ||
      w.output.size() != static_cast<std::size_t>(config_.heads)) {
    throw ShapeError("write_back_attention: expected weights for " + std::to_string(config_.heads) + " heads");
  }
  for (int h = 0; h < config_.heads; ++h) {
    const auto& per_head = w.projections[static_cast<std::size_t>(h)];
    if (per_head.size() != w.inputs.size()) throw ShapeError("write_back_attention: projection count mismatch");
    for (std::size_t i = 0; i < w.inputs.size(); ++i) {
      overwrite(head_projection(layer, h, kInputLetters[static_cast<int>(w.inputs[i])]), per_head[i]);
    }
    overwrite(head_projection(layer, h, 'O'), w.output[static_cast<std::size_t>(h)]);
  }
  ++versions_[static_cast<std::size_t>(layer)];
}

void Supernet::write_back_conv(int layer, const Matrix& kernel, const Matrix& transform, const Matrix& projection) {
  check_layer(layer);
  const int k = static_cast<int>(kernel.rows());
  kernel_index(k);
  if (kernel.cols() != config_.hidden) throw ShapeError("write_back_conv: kernel must have d columns");
  overwrite(conv(layer, "proj"), projection);
  Matrix& full = slot(conv(layer, "kernel"));
  if (k == kMaxKernel) {
    full = kernel;
  } else {
    if (transform.rows() != k || transform.cols() != k) throw ShapeError("write_back_conv: transform must be k x k");
    full.middleRows(center_slice_begin(k), k) = solve_transform(transform, kernel);
    slot(transform_name(layer, k)) = transform;
  }
  ++versions_[static_cast<std::size_t>(layer)];
}

ParameterSet Supernet::init_candidate(const BackboneSpec& spec) const {
  if (static_cast<int>(spec.size()) != config_.layers) {
    throw ConfigError("init_candidate: spec has " + std::to_string(spec.size()) + " layers, supernet has " +
                      std::to_string(config_.layers));
  }
  ParameterSet params;
  params.add(kTokenEmbedding, weight(kTokenEmbedding));
  params.add(kPositionEmbedding, weight(kPositionEmbedding));
  for (int l = 0; l < config_.layers; ++l) {
    const auto& layer = spec.layers[static_cast<std::size_t>(l)];
    if (const auto* att = std::get_if<AttentionLayer>(&layer)) {
      const AttentionWeights w = extract_attention_weights(l, att->dag.inputs);
      for (int h = 0; h < config_.heads; ++h) {
        for (std::size_t i = 0; i < w.inputs.size(); ++i) {
          params.add(head_projection(l, h, kInputLetters[static_cast<int>(w.inputs[i])]),
                     w.projections[static_cast<std::size_t>(h)][i]);
        }
        params.add(head_projection(l, h, 'O'), w.output[static_cast<std::size_t>(h)]);
      }
      for (const char* leaf : {"ln1.gain", "ln1.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2", "ln2.gain", "ln2.bias"}) {
        params.add(attention(l, leaf), weight(attention(l, leaf)));
      }
    } else {
      const int k = std::get<ConvLayer>(layer).kernel;
      params.add(conv(l, "proj"), weight(conv(l, "proj")));
      // The candidate trains the raw center slice and the transform jointly;
      // its effective kernel is transform * slice.
      const Matrix& full = weight(conv(l, "kernel"));
      params.add(conv(l, "kernel"), k == kMaxKernel ? full : Matrix(full.middleRows(center_slice_begin(k), k)));
      if (k < kMaxKernel) params.add(conv(l, "transform"), kernel_transform(l, k));
      params.add(conv(l, "ln.gain"), weight(conv(l, "ln.gain")));
      params.add(conv(l, "ln.bias"), weight(conv(l, "ln.bias")));
    }
  }
  return params;
}

void Supernet::write_back(const BackboneSpec& spec, const ParameterSet& trained) {
  if (static_cast<int>(spec.size()) != config_.layers) throw ConfigError("write_back: layer count mismatch");
  auto value = [&](const std::string& name) -> const Matrix& { return trained.at(name).tensor().value(); };
  overwrite(kTokenEmbedding, value(kTokenEmbedding));
  overwrite(kPositionEmbedding, value(kPositionEmbedding));
  for (int l = 0; l < config_.layers; ++l) {
    const auto& layer = spec.layers[static_cast<std::size_t>(l)];
    if (const auto* att = std::get_if<AttentionLayer>(&layer)) {
      AttentionWeights w;
      w.inputs = att->dag.inputs;
      for (int h = 0; h < config_.heads; ++h) {
        std::vector<Matrix> per_head;
        for (auto in : w.inputs) per_head.push_back(value(head_projection(l, h, kInputLetters[static_cast<int>(in)])));
        w.projections.push_back(std::move(per_head));
        w.output.push_back(value(head_projection(l, h, 'O')));
      }
      write_back_attention(l, w);
      for (const char* leaf : {"ln1.gain", "ln1.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2", "ln2.gain", "ln2.bias"}) {
        overwrite(attention(l, leaf), value(attention(l, leaf)));
      }
    } else {
      const int k = std::get<ConvLayer>(layer).kernel;
      const Matrix& slice = value(conv(l, "kernel"));
      if (k == kMaxKernel) {
        write_back_conv(l, slice, Matrix(), value(conv(l, "proj")));
      } else {
        const Matrix& t = value(conv(l, "transform"));
        write_back_conv(l, t * slice, t, value(conv(l, "proj")));
      }
      overwrite(conv(l, "ln.gain"), value(conv(l, "ln.gain")));
      overwrite(conv(l, "ln.bias"), value(conv(l, "ln.bias")));
    }
  }
}

bool Supernet::operator==(const Supernet& other) const {
  return config_ == other.config_ && seed_ == other.seed_ && rng_ == other.rng_ && order_ == other.order_ &&
         weights_ == other.weights_ && versions_ == other.versions_;
}

void Supernet::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "checkpoints are written little-endian");
  nlohmann::ordered_json header;
  header["format"] = "opnas-supernet";
  header["version"] = kSupernetFormatVersion;
  header["config"] = config_json(config_);
  header["seed"] = seed_;
  std::ostringstream rng;
  rng << rng_;
  header["rng"] = rng.str();
  header["layer_versions"] = versions_;
  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  for (const auto& name : order_) {
    const Matrix& m = weights_.at(name);
    arrays.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  header["arrays"] = arrays;
  const std::string text = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out.write(kMagic, sizeof kMagic);
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& name : order_) {
      const Matrix& m = weights_.at(name);
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Supernet Supernet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open supernet checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 7) != 0) throw CheckpointError(path.string() + " is not a supernet checkpoint");
  if (magic[7] != kMagic[7]) throw CheckpointError("unsupported supernet container revision");
  const std::uint64_t length = read_u64(in);
  if (length > (1u << 26)) throw CheckpointError("supernet header is implausibly large");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw CheckpointError("truncated supernet checkpoint");

  Supernet net;
  try {
    const auto header = nlohmann::ordered_json::parse(text);
    if (header.at("format") != "opnas-supernet") throw CheckpointError("not a supernet checkpoint");
    if (header.at("version").get<int>() != kSupernetFormatVersion) {
      throw CheckpointError("supernet checkpoint version " + header.at("version").dump() + " is not supported");
    }
    const auto& c = header.at("config");
    net.config_ = ModelConfig{c.at("layers").get<int>(), c.at("hidden").get<int>(),  c.at("heads").get<int>(),
                              c.at("vocab").get<int>(),  c.at("seq_len").get<int>(), c.at("ffn_ratio").get<int>()};
    net.seed_ = header.at("seed").get<std::uint64_t>();
    std::istringstream rng(header.at("rng").get<std::string>());
    rng >> net.rng_;
    net.versions_ = header.at("layer_versions").get<std::vector<long>>();
    for (const auto& a : header.at("arrays")) {
      Matrix m(a.at("rows").get<Eigen::Index>(), a.at("cols").get<Eigen::Index>());
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!in) throw CheckpointError("truncated supernet checkpoint");
      net.declare(a.at("name").get<std::string>(), std::move(m));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed supernet checkpoint: ") + e.what());
  }
  // The layout must be exactly what this build would declare.
  const Supernet reference(net.config_, net.seed_);
  if (reference.order_ != net.order_) throw CheckpointError("supernet checkpoint layout does not match its config");
  for (const auto& name : net.order_) {
    const Matrix& a = net.weights_.at(name);
    const Matrix& b = reference.weights_.at(name);
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw CheckpointError("array " + name + " has the wrong shape");
  }
  if (net.versions_.size() != static_cast<std::size_t>(net.config_.layers)) {
    throw CheckpointError("supernet checkpoint has the wrong number of layer versions");
  }
  return net;
}

}  // namespace opnas

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

#include "opnas/arch_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "opnas/errors.hpp"

namespace opnas {

using nlohmann::ordered_json;

namespace {

std::string ref_token(const ValueRef& ref) {
  if (ref.is_input()) return std::string(input_name(static_cast<InputNode>(ref.index)));
  return "n" + std::to_string(ref.index);
}

ValueRef parse_ref(const ordered_json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "operand must be a string");
  const auto s = j.get<std::string>();
  if (auto in = input_from_name(s)) return ValueRef::input(*in);
  if (s.size() >= 2 && s[0] == 'n' && s.find_first_not_of("0123456789", 1) == std::string::npos) {
    return ValueRef::node(std::stoi(s.substr(1)));
  }
  throw ParseError(path, "unknown operand '" + s + "'");
}

void require_keys(const ordered_json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ParseError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ParseError(path.empty() ? key : path + "." + key, "unknown field '" + key + "'");
  }
  for (const auto& key : allowed) {
    if (!j.contains(key)) throw ParseError(path.empty() ? key : path + "." + key, "missing field '" + key + "'");
  }
}

// Maps a byte offset to a 1-based line number.
std::string line_of(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return "line " + std::to_string(line);
}

}  // namespace

ordered_json dag_to_json(const AttentionDag& dag) {
  ordered_json j;
  j["type"] = "attention";
  ordered_json inputs = ordered_json::array();
  for (auto in : dag.inputs) inputs.push_back(std::string(input_name(in)));
  j["inputs"] = inputs;
  ordered_json nodes = ordered_json::array();
  for (const auto& node : dag.nodes) {
    ordered_json n;
    n["op"] = std::string(op_name(node.op));
    ordered_json args = ordered_json::array();
    for (const auto& arg : node.args) args.push_back(ref_token(arg));
    n["args"] = args;
    nodes.push_back(n);
  }
  j["nodes"] = nodes;
  return j;
}

ordered_json spec_to_json(const BackboneSpec& spec) {
  ordered_json j;
  j["version"] = kArchitectureFormatVersion;
  ordered_json layers = ordered_json::array();
  for (const auto& layer : spec.layers) {
    if (const auto* att = std::get_if<AttentionLayer>(&layer)) {
      layers.push_back(dag_to_json(att->dag));
    } else {
      ordered_json c;
      c["type"] = "conv";
      c["kernel"] = std::get<ConvLayer>(layer).kernel;
      layers.push_back(c);
    }
  }
  j["layers"] = layers;
  return j;
}

AttentionDag dag_from_json(const ordered_json& j, const std::string& path) {
  require_keys(j, path, {"type", "inputs", "nodes"});
  AttentionDag dag;
  const auto& inputs = j["inputs"];
  if (!inputs.is_array()) throw ParseError(path + ".inputs", "expected an array");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string where = path + ".inputs[" + std::to_string(i) + "]";
    if (!inputs[i].is_string()) throw ParseError(where, "expected an input name");
    auto in = input_from_name(inputs[i].get<std::string>());
    if (!in) throw ParseError(where, "unknown input '" + inputs[i].get<std::string>() + "'");
    dag.inputs.push_back(*in);
  }
  const auto& nodes = j["nodes"];
  if (!nodes.is_array()) throw ParseError(path + ".nodes", "expected an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string where = path + ".nodes[" + std::to_string(i) + "]";
    require_keys(nodes[i], where, {"op", "args"});
    if (!nodes[i]["op"].is_string()) throw ParseError(where + ".op", "expected an op name");
    auto op = op_from_name(nodes[i]["op"].get<std::string>());
    if (!op) throw ParseError(where + ".op", "unknown op '" + nodes[i]["op"].get<std::string>() + "'");
    DagNode node{*op, {}};
    const auto& args = nodes[i]["args"];
    if (!args.is_array()) throw ParseError(where + ".args", "expected an array");
    for (std::size_t a = 0; a < args.size(); ++a) {
      node.args.push_back(parse_ref(args[a], where + ".args[" + std::to_string(a) + "]"));
    }
    dag.nodes.push_back(std::move(node));
  }
  return dag;
}

BackboneSpec spec_from_json(const ordered_json& j, const std::string& path) {
  require_keys(j, path, {"version", "layers"});
  const std::string prefix = path.empty() ? "" : path + ".";
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kArchitectureFormatVersion) {
    throw ParseError(prefix + "version", "unsupported architecture format version");
  }
  const auto& layers = j["layers"];
  if (!layers.is_array()) throw ParseError(prefix + "layers", "expected an array");
  BackboneSpec spec;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = prefix + "layers[" + std::to_string(i) + "]";
    if (!layers[i].is_object() || !layers[i].contains("type") || !layers[i]["type"].is_string()) {
      throw ParseError(where + ".type", "missing layer type");
    }
    const auto type = layers[i]["type"].get<std::string>();
    if (type == "attention") {
      spec.layers.emplace_back(AttentionLayer{dag_from_json(layers[i], where)});
    } else if (type == "conv") {
      require_keys(layers[i], where, {"type", "kernel"});
      if (!layers[i]["kernel"].is_number_integer()) throw ParseError(where + ".kernel", "expected an integer");
      spec.layers.emplace_back(ConvLayer{layers[i]["kernel"].get<int>()});
    } else {
      throw ParseError(where + ".type", "unknown layer type '" + type + "'");
    }
  }
  return spec;
}

std::string serialize(const BackboneSpec& spec) { return spec_to_json(spec).dump(2) + "\n"; }

BackboneSpec deserialize(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_of(text, e.byte), e.what());
  }
  return spec_from_json(j);
}

BackboneSpec read_architecture_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

void write_architecture_file(const std::string& path, const BackboneSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize(spec);
}

}  // namespace opnas

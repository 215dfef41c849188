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

// Architecture files.
//
// Canonical form (keys in this order, two-space indent, trailing newline):
//
//   {"version": 1,
//    "layers": [{"type": "attention", "inputs": ["Q", "K"],
//                "nodes": [{"op": "transpose", "args": ["K"]}, ...]},
//               {"type": "conv", "kernel": 65}, ...]}
//
// Node operands are input names ("Q", "K", "V", "P") or "n<i>" for the
// result of node i. The last node is the output.

#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "opnas/backbone.hpp"

namespace opnas {

inline constexpr int kArchitectureFormatVersion = 1;

nlohmann::ordered_json dag_to_json(const AttentionDag& dag);
nlohmann::ordered_json spec_to_json(const BackboneSpec& spec);

/// `path` prefixes field locations in ParseError messages.
AttentionDag dag_from_json(const nlohmann::ordered_json& j, const std::string& path);
BackboneSpec spec_from_json(const nlohmann::ordered_json& j, const std::string& path = "");

std::string serialize(const BackboneSpec& spec);
/// Parses structure only; run validate() for legality.
BackboneSpec deserialize(std::string_view text);

BackboneSpec read_architecture_file(const std::string& path);
void write_architecture_file(const std::string& path, const BackboneSpec& spec);

}  // namespace opnas

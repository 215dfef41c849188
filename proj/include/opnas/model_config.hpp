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

#pragma once

#include <string>

#include "opnas/errors.hpp"

namespace opnas {

/// Encoder dimensions. Defaults are the desk-scale toy setting.
struct ModelConfig {
  int layers = 12;
  int hidden = 64;
  int heads = 4;
  int vocab = 64;
  int seq_len = 32;
  int ffn_ratio = 4;

  int head_dim() const { return hidden / heads; }

  void validate() const {
    if (layers < 1) throw ConfigError("model.layers must be >= 1");
    if (hidden < 2 || heads < 1 || hidden % heads != 0) {
      throw ConfigError("model.hidden must be divisible by model.heads");
    }
    if (seq_len < 8) throw ConfigError("model.seq_len must be >= 8");
    if (vocab < 16) throw ConfigError("model.vocab must be >= 16");
    if (ffn_ratio < 1) throw ConfigError("model.ffn_ratio must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace opnas

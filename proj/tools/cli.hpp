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


// Command-line driver. Everything runs through run() so tests can call the
// tool in-process with captured streams.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"
#include "opnas/model_config.hpp"
#include "opnas/search.hpp"
#include "opnas/trainer.hpp"

namespace opnas::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitCheckpoint = 3,
  kExitSpec = 4,
  kExitData = 5,
};

struct CorpusConfig {
  std::uint64_t seed = 1;
  int size = 512;
  /// 0 means size / 8.
  int heldout = 0;
  bool operator==(const CorpusConfig&) const = default;
};

enum class EvaluatorKind { kTrain, kSynthetic };

/// Everything a command needs. Flags override the config file, which overrides
/// the defaults. A copy goes into every run directory.
struct RunConfig {
  SearchConfig search;
  SearchAlgorithm algorithm = SearchAlgorithm::kOpNas;
  ModelConfig model;
  TrainConfig train;
  CorpusConfig corpus;
  EvaluatorKind evaluator = EvaluatorKind::kTrain;
  SyntheticEvaluator::Landscape landscape = SyntheticEvaluator::Landscape::kGoodOpFraction;
  /// Initialize and update candidates through a weight-sharing supernet.
  bool biws = false;
  /// Training seeds per spec for the metrics command.
  int metrics_seeds = 3;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::ordered_json run_config_to_json(const RunConfig& config);
/// Fields absent from `j` keep the values in `base`. Throws ConfigError.
RunConfig run_config_from_json(const nlohmann::ordered_json& j, RunConfig base = {});
/// Cross-field checks. Throws ConfigError.
void validate(const RunConfig& config);

/// Parses argv and runs one command. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace opnas::cli

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


// The evolutionary search loop and its two baselines. Everything that is
// random flows from the single engine in SearchState, and candidates are
// generated serially before a generation is evaluated, so a run is a pure
// function of (config, algorithm, evaluator) regardless of thread count.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "opnas/backbone.hpp"
#include "opnas/ucb.hpp"

namespace opnas {

enum class SearchAlgorithm { kOpNas, kVanillaEa, kRandomSearch };

/// "op", "ea" or "rs".
std::string_view algorithm_name(SearchAlgorithm algorithm);
std::optional<SearchAlgorithm> algorithm_from_name(std::string_view name);

struct SearchConfig {
  int population_size = 20;
  /// Parents taken from the top of the population each generation.
  int parents = 5;
  double alpha = 0.5;
  int max_iterations = 50;
  int children_per_parent = 2;
  /// Generations without a new best score before stopping; 0 disables.
  int patience = 10;
  /// Total evaluation cap, initial population included; 0 means no cap.
  long max_evaluations = 0;
  int layers = 12;
  int max_path_length = kMaxPathLength;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const SearchConfig&) const = default;
};

nlohmann::ordered_json search_config_to_json(const SearchConfig& config);
/// Fields absent from `j` keep their defaults; unknown fields throw ConfigError.
SearchConfig search_config_from_json(const nlohmann::ordered_json& j, SearchConfig base = {});

struct Candidate {
  long id = 0;
  std::optional<long> parent_id;
  BackboneSpec spec;
  std::optional<double> score;
  int iteration = 0;
  std::vector<double> loss_curve;
  /// Wall-clock evaluation time. Kept out of the history file.
  double wall_ms = 0;
};

struct Evaluation {
  double score = 0;
  std::vector<double> loss_curve;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  /// May run concurrently for distinct candidates of one generation. Throwing
  /// discards the candidate.
  virtual Evaluation evaluate(const Candidate& candidate, std::uint64_t seed) = 0;

  /// Called once per generation with the surviving candidates in id order.
  virtual void end_generation(std::span<const Candidate> /*scored*/) {}

  /// Persist and restore whatever the evaluator carries between generations.
  virtual void save_state(const std::filesystem::path& /*dir*/) const {}
  virtual void load_state(const std::filesystem::path& /*dir*/) {}
};

/// Noise-free fitness landscapes used to exercise the search without training.
class SyntheticEvaluator : public Evaluator {
 public:
  enum class Landscape {
    /// Fraction of attention nodes, over the whole backbone, whose op is good.
    kGoodOpFraction,
    /// min(1, number of softmax nodes / layer count).
    kSoftmaxCount,
  };

  explicit SyntheticEvaluator(Landscape landscape = Landscape::kGoodOpFraction,
                              std::vector<OpKind> good_ops = {OpKind::kTranspose, OpKind::kScale,
                                                              OpKind::kMatmul, OpKind::kSoftmax});

  Evaluation evaluate(const Candidate& candidate, std::uint64_t seed) override;
  double fitness(const BackboneSpec& spec) const;

 private:
  Landscape landscape_;
  std::vector<OpKind> good_ops_;
};

struct SearchState {
  SearchConfig config;
  SearchAlgorithm algorithm = SearchAlgorithm::kOpNas;
  /// Generations completed after the initial population.
  int iteration = 0;
  long next_id = 0;
  long evaluations = 0;
  /// Records emitted so far; lets a resume trim a history file that ran ahead.
  long history_size = 0;
  std::optional<double> best_score;
  int stall = 0;
  bool initialized = false;
  bool finished = false;
  /// Sorted by (score desc, id asc).
  std::vector<Candidate> population;
  UcbStats stats;
  std::mt19937_64 rng;
};

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::ordered_json checkpoint_to_json(const SearchState& state);
/// Throws CheckpointError on a malformed or incompatible checkpoint.
SearchState checkpoint_from_json(const nlohmann::ordered_json& j);
/// Writes via a temporary file and rename so a crash never leaves half a file.
void write_checkpoint(const std::filesystem::path& path, const SearchState& state);
SearchState read_checkpoint(const std::filesystem::path& path);

/// One history line (without the trailing newline). wall_ms is omitted so
/// that histories compare byte for byte across runs.
std::string history_line(const Candidate& candidate);
Candidate candidate_from_history_json(const nlohmann::ordered_json& j);
/// Throws ParseError("line N", ...) on malformed input.
std::vector<Candidate> read_history(const std::filesystem::path& path);

/// Orders by (score desc, id asc).
bool ranks_before(const Candidate& a, const Candidate& b);

struct SearchCallbacks {
  /// Every scored candidate, in id order.
  std::function<void(const Candidate&)> on_record;
  /// A discarded candidate and why. Defaults to a line on stderr.
  std::function<void(const Candidate&, const std::string&)> on_discard;
  /// After each generation, initial population included. Returning false
  /// stops the run with the state left resumable.
  std::function<bool(const SearchState&)> on_generation;
};

class Search {
 public:
  Search(const SearchConfig& config, SearchAlgorithm algorithm, Evaluator& evaluator, int jobs = 1);
  /// Continues from a checkpointed state.
  Search(SearchState state, Evaluator& evaluator, int jobs = 1);

  /// Runs until convergence or until a callback asks to stop. Returns the
  /// candidates scored by this call.
  std::vector<Candidate> run(const SearchCallbacks& callbacks = {});

  const SearchState& state() const { return state_; }

 private:
  std::vector<Candidate> breed(long budget_left);
  /// Inter-layer mutation of the parent, then intra-layer mutation of one of
  /// the child's attention layers.
  BackboneSpec mutate_child(const BackboneSpec& parent, std::span<const OpDistribution> op_dists,
                            std::span<const KernelDistribution> kernel_dists);
  bool known(const BackboneSpec& spec, const std::vector<Candidate>& batch) const;
  void evaluate_generation(std::vector<Candidate>& batch, std::vector<Candidate>& history,
                           const SearchCallbacks& callbacks);

  SearchState state_;
  Evaluator& evaluator_;
  int jobs_;
};

std::vector<Candidate> search(const SearchConfig& config, Evaluator& evaluator, int jobs = 1);
std::vector<Candidate> random_search(const SearchConfig& config, Evaluator& evaluator, int jobs = 1);
std::vector<Candidate> vanilla_ea(const SearchConfig& config, Evaluator& evaluator, int jobs = 1);

/// Deterministic per-candidate seed for evaluator randomness.
std::uint64_t candidate_seed(std::uint64_t run_seed, long id);

}  // namespace opnas

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


#include "opnas/search.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <limits>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "opnas/arch_io.hpp"
#include "opnas/errors.hpp"

namespace opnas {

using nlohmann::ordered_json;

std::string_view algorithm_name(SearchAlgorithm algorithm) {
  switch (algorithm) {
    case SearchAlgorithm::kOpNas: return "op";
    case SearchAlgorithm::kVanillaEa: return "ea";
    case SearchAlgorithm::kRandomSearch: return "rs";
  }
  return "?";
}

std::optional<SearchAlgorithm> algorithm_from_name(std::string_view name) {
  if (name == "op") return SearchAlgorithm::kOpNas;
  if (name == "ea") return SearchAlgorithm::kVanillaEa;
  if (name == "rs") return SearchAlgorithm::kRandomSearch;
  return std::nullopt;
}

void SearchConfig::validate() const {
  if (parents < 1) throw ConfigError("search.k must be >= 1");
  if (population_size < parents) throw ConfigError("search.population must be >= search.k");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("search.alpha must be >= 0");
  if (max_iterations < 0) throw ConfigError("search.iterations must be >= 0");
  if (children_per_parent < 1) throw ConfigError("search.children_per_parent must be >= 1");
  if (patience < 0) throw ConfigError("search.patience must be >= 0");
  if (max_evaluations < 0) throw ConfigError("search.max_evaluations must be >= 0");
  if (layers < 1) throw ConfigError("search.layers must be >= 1");
  if (max_path_length < 1) throw ConfigError("search.max_path_length must be >= 1");
}

ordered_json search_config_to_json(const SearchConfig& c) {
  ordered_json j;
  j["population"] = c.population_size;
  j["k"] = c.parents;
  j["alpha"] = c.alpha;
  j["iterations"] = c.max_iterations;
  j["children_per_parent"] = c.children_per_parent;
  j["patience"] = c.patience;
  j["max_evaluations"] = c.max_evaluations;
  j["layers"] = c.layers;
  j["max_path_length"] = c.max_path_length;
  j["seed"] = c.seed;
  return j;
}

SearchConfig search_config_from_json(const ordered_json& j, SearchConfig c) {
  if (!j.is_object()) throw ConfigError("search: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "population") c.population_size = value.get<int>();
      else if (key == "k") c.parents = value.get<int>();
      else if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "iterations") c.max_iterations = value.get<int>();
      else if (key == "children_per_parent") c.children_per_parent = value.get<int>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "max_evaluations") c.max_evaluations = value.get<long>();
      else if (key == "layers") c.layers = value.get<int>();
      else if (key == "max_path_length") c.max_path_length = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("search." + key + ": unknown field");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("search." + key + ": " + e.what());
    }
  }
  return c;
}

SyntheticEvaluator::SyntheticEvaluator(Landscape landscape, std::vector<OpKind> good_ops)
    : landscape_(landscape), good_ops_(std::move(good_ops)) {}

double SyntheticEvaluator::fitness(const BackboneSpec& spec) const {
  long good = 0;
  long total = 0;
  long softmax = 0;
  for (const auto& layer : spec.layers) {
    const auto* att = std::get_if<AttentionLayer>(&layer);
    if (att == nullptr) continue;
    for (const auto& node : att->dag.nodes) {
      ++total;
      good += std::find(good_ops_.begin(), good_ops_.end(), node.op) != good_ops_.end() ? 1 : 0;
      softmax += node.op == OpKind::kSoftmax ? 1 : 0;
    }
  }
  if (landscape_ == Landscape::kSoftmaxCount) {
    return std::min(1.0, static_cast<double>(softmax) / static_cast<double>(spec.layers.size()));
  }
  return total == 0 ? 0.0 : static_cast<double>(good) / static_cast<double>(total);
}

Evaluation SyntheticEvaluator::evaluate(const Candidate& candidate, std::uint64_t) {
  return {fitness(candidate.spec), {}};
}

std::uint64_t candidate_seed(std::uint64_t run_seed, long id) {
  // splitmix64 finalizer.
  std::uint64_t z = run_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(id) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool ranks_before(const Candidate& a, const Candidate& b) {
  const double sa = a.score.value_or(-1.0);
  const double sb = b.score.value_or(-1.0);
  if (sa != sb) return sa > sb;
  return a.id < b.id;
}

// Files.

namespace {

ordered_json optional_id(const std::optional<long>& id) { return id ? ordered_json(*id) : ordered_json(nullptr); }

ordered_json candidate_to_json(const Candidate& c, bool with_curve) {
  ordered_json j;
  j["id"] = c.id;
  j["parent_id"] = optional_id(c.parent_id);
  j["iteration"] = c.iteration;
  j["score"] = c.score ? ordered_json(*c.score) : ordered_json(nullptr);
  j["spec"] = spec_to_json(c.spec);
  if (with_curve) j["loss_curve"] = c.loss_curve;
  return j;
}

}  // namespace

std::string history_line(const Candidate& candidate) { return candidate_to_json(candidate, true).dump(); }

Candidate candidate_from_history_json(const ordered_json& j) {
  if (!j.is_object()) throw ParseError("<record>", "expected an object");
  Candidate c;
  try {
    c.id = j.at("id").get<long>();
    if (!j.at("parent_id").is_null()) c.parent_id = j.at("parent_id").get<long>();
    c.iteration = j.at("iteration").get<int>();
    if (!j.at("score").is_null()) c.score = j.at("score").get<double>();
    if (j.contains("loss_curve")) c.loss_curve = j.at("loss_curve").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("<record>", e.what());
  }
  c.spec = spec_from_json(j.at("spec"), "spec");
  return c;
}

std::vector<Candidate> read_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), "cannot open history");
  std::vector<Candidate> out;
  std::string line;
  for (long n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(candidate_from_history_json(ordered_json::parse(line)));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(n), e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(n), e.what());
    }
  }
  return out;
}

ordered_json checkpoint_to_json(const SearchState& s) {
  ordered_json j;
  j["format"] = "opnas-search-checkpoint";
  j["version"] = kCheckpointFormatVersion;
  j["algorithm"] = std::string(algorithm_name(s.algorithm));
  j["config"] = search_config_to_json(s.config);
  j["iteration"] = s.iteration;
  j["next_id"] = s.next_id;
  j["evaluations"] = s.evaluations;
  j["history_size"] = s.history_size;
  j["best_score"] = s.best_score ? ordered_json(*s.best_score) : ordered_json(nullptr);
  j["stall"] = s.stall;
  j["initialized"] = s.initialized;
  j["finished"] = s.finished;
  std::ostringstream rng;
  rng << s.rng;
  j["rng"] = rng.str();
  ordered_json population = ordered_json::array();
  for (const auto& c : s.population) population.push_back(candidate_to_json(c, false));
  j["population"] = population;
  j["stats"] = s.stats.to_json();
  return j;
}

SearchState checkpoint_from_json(const ordered_json& j) {
  try {
    if (j.at("format") != "opnas-search-checkpoint") throw CheckpointError("not a search checkpoint");
    if (j.at("version").get<int>() != kCheckpointFormatVersion) {
      throw CheckpointError("checkpoint version " + j.at("version").dump() + " is not supported (expected " +
                            std::to_string(kCheckpointFormatVersion) + ")");
    }
    SearchState s;
    auto algorithm = algorithm_from_name(j.at("algorithm").get<std::string>());
    if (!algorithm) throw CheckpointError("unknown algorithm in checkpoint");
    s.algorithm = *algorithm;
    s.config = search_config_from_json(j.at("config"));
    s.iteration = j.at("iteration").get<int>();
    s.next_id = j.at("next_id").get<long>();
    s.evaluations = j.at("evaluations").get<long>();
    s.history_size = j.at("history_size").get<long>();
    if (!j.at("best_score").is_null()) s.best_score = j.at("best_score").get<double>();
    s.stall = j.at("stall").get<int>();
    s.initialized = j.at("initialized").get<bool>();
    s.finished = j.at("finished").get<bool>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    if (rng.fail()) throw CheckpointError("corrupt rng state");
    for (const auto& c : j.at("population")) s.population.push_back(candidate_from_history_json(c));
    s.stats = UcbStats::from_json(j.at("stats"));
    return s;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const SearchState& state) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out << checkpoint_to_json(state).dump(2) << "\n";
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

SearchState read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint: " + std::string(e.what()));
  }
  return checkpoint_from_json(j);
}

// The loop.

Search::Search(const SearchConfig& config, SearchAlgorithm algorithm, Evaluator& evaluator, int jobs)
    : evaluator_(evaluator), jobs_(std::max(1, jobs)) {
  config.validate();
  state_.config = config;
  state_.algorithm = algorithm;
  state_.rng.seed(config.seed);
}

Search::Search(SearchState state, Evaluator& evaluator, int jobs)
    : state_(std::move(state)), evaluator_(evaluator), jobs_(std::max(1, jobs)) {
  state_.config.validate();
}

namespace {

// Children identical to a population member or a sibling are redrawn this
// many times before being accepted anyway.
constexpr int kDuplicateRetries = 20;

}  // namespace

BackboneSpec Search::mutate_child(const BackboneSpec& parent, std::span<const OpDistribution> op_dists,
                                  std::span<const KernelDistribution> kernel_dists) {
  const int max_length = state_.config.max_path_length;
  BackboneSpec spec = mutate_inter(parent, kernel_dists, state_.rng, max_length);
  std::vector<std::size_t> attention;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (is_attention(spec.layers[l])) attention.push_back(l);
  }
  if (!attention.empty()) {
    const auto pick = std::uniform_int_distribution<std::size_t>(0, attention.size() - 1)(state_.rng);
    auto& dag = std::get<AttentionLayer>(spec.layers[attention[pick]]).dag;
    dag = mutate_intra(dag, op_dists, state_.rng, max_length);
  }
  return spec;
}

bool Search::known(const BackboneSpec& spec, const std::vector<Candidate>& batch) const {
  auto same = [&](const Candidate& c) { return c.spec == spec; };
  return std::any_of(state_.population.begin(), state_.population.end(), same) ||
         std::any_of(batch.begin(), batch.end(), same);
}

std::vector<Candidate> Search::breed(long budget_left) {
  const SearchConfig& cfg = state_.config;
  std::vector<Candidate> batch;
  auto add = [&](BackboneSpec spec, std::optional<long> parent) {
    Candidate c;
    c.id = state_.next_id++;
    c.parent_id = parent;
    c.spec = std::move(spec);
    c.iteration = state_.iteration;
    batch.push_back(std::move(c));
  };

  if (!state_.initialized) {
    const long n = std::min<long>(cfg.population_size, budget_left);
    for (long i = 0; i < n; ++i) add(random_backbone(state_.rng, cfg.layers, cfg.max_path_length), std::nullopt);
    return batch;
  }

  const long want = std::min<long>(static_cast<long>(cfg.parents) * cfg.children_per_parent, budget_left);
  if (state_.algorithm == SearchAlgorithm::kRandomSearch) {
    for (long i = 0; i < want; ++i) add(random_backbone(state_.rng, cfg.layers, cfg.max_path_length), std::nullopt);
    return batch;
  }

  std::vector<OpDistribution> op_dists;
  std::vector<KernelDistribution> kernel_dists;
  if (state_.algorithm == SearchAlgorithm::kOpNas) {
    op_dists = op_distributions(state_.stats, cfg.alpha);
    kernel_dists = kernel_distributions(state_.stats, cfg.layers, cfg.alpha);
  }
  const int parents = std::min<int>(cfg.parents, static_cast<int>(state_.population.size()));
  for (int p = 0; p < parents && static_cast<long>(batch.size()) < want; ++p) {
    const Candidate& parent = state_.population[static_cast<std::size_t>(p)];
    for (int c = 0; c < cfg.children_per_parent && static_cast<long>(batch.size()) < want; ++c) {
      BackboneSpec spec;
      for (int attempt = 0; attempt < kDuplicateRetries; ++attempt) {
        spec = mutate_child(parent.spec, op_dists, kernel_dists);
        if (!known(spec, batch)) break;
      }
      add(std::move(spec), parent.id);
    }
  }
  return batch;
}

void Search::evaluate_generation(std::vector<Candidate>& batch, std::vector<Candidate>& history,
                                 const SearchCallbacks& callbacks) {
  std::vector<std::string> failures(batch.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < batch.size(); i = next++) {
      Candidate& c = batch[i];
      const auto start = std::chrono::steady_clock::now();
      try {
        auto v = validate(c.spec, state_.config.max_path_length);
        if (!v) throw std::runtime_error("invalid spec: " + v.reason);
        Evaluation e = evaluator_.evaluate(c, candidate_seed(state_.config.seed, c.id));
        if (!(e.score >= 0.0 && e.score <= 1.0)) {
          throw std::runtime_error("score " + std::to_string(e.score) + " outside [0, 1]");
        }
        c.score = e.score;
        c.loss_curve = std::move(e.loss_curve);
      } catch (const std::exception& ex) {
        failures[i] = ex.what();
        if (failures[i].empty()) failures[i] = "evaluation failed";
      }
      c.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const int threads = std::min<int>(jobs_, static_cast<int>(batch.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  state_.evaluations += static_cast<long>(batch.size());
  std::vector<Candidate> scored;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Candidate& c = batch[i];
    if (!c.score) {
      if (callbacks.on_discard) {
        callbacks.on_discard(c, failures[i]);
      } else {
        std::cerr << "discarded candidate " << c.id << ": " << failures[i] << "\n";
      }
      continue;
    }
    state_.stats.record(c.spec, *c.score);
    ++state_.history_size;
    if (callbacks.on_record) callbacks.on_record(c);
    history.push_back(c);
    scored.push_back(std::move(c));
  }
  evaluator_.end_generation(scored);

  for (auto& c : scored) {
    c.loss_curve.clear();
    state_.population.push_back(std::move(c));
  }
  std::sort(state_.population.begin(), state_.population.end(), ranks_before);
  if (state_.population.size() > static_cast<std::size_t>(state_.config.population_size)) {
    state_.population.resize(static_cast<std::size_t>(state_.config.population_size));
  }
}

std::vector<Candidate> Search::run(const SearchCallbacks& callbacks) {
  const SearchConfig& cfg = state_.config;
  std::vector<Candidate> history;
  while (!state_.finished) {
    const long budget_left =
        cfg.max_evaluations > 0 ? cfg.max_evaluations - state_.evaluations : std::numeric_limits<long>::max();
    if (state_.initialized && (state_.iteration >= cfg.max_iterations || budget_left <= 0)) {
      state_.finished = true;
      if (callbacks.on_generation) callbacks.on_generation(state_);
      break;
    }
    if (state_.initialized) ++state_.iteration;
    std::vector<Candidate> batch = breed(budget_left);
    evaluate_generation(batch, history, callbacks);
    state_.initialized = true;

    const double best = state_.population.empty() ? -1.0 : *state_.population.front().score;
    if (!state_.best_score || best > *state_.best_score) {
      state_.best_score = best;
      state_.stall = 0;
    } else {
      ++state_.stall;
    }
    const bool stalled = state_.algorithm != SearchAlgorithm::kRandomSearch && cfg.patience > 0 &&
                         state_.stall >= cfg.patience;
    const bool spent = cfg.max_evaluations > 0 && state_.evaluations >= cfg.max_evaluations;
    if (stalled || spent || state_.iteration >= cfg.max_iterations || batch.empty()) state_.finished = true;
    if (callbacks.on_generation && !callbacks.on_generation(state_)) break;
  }
  return history;
}

std::vector<Candidate> search(const SearchConfig& config, Evaluator& evaluator, int jobs) {
  return Search(config, SearchAlgorithm::kOpNas, evaluator, jobs).run();
}

std::vector<Candidate> random_search(const SearchConfig& config, Evaluator& evaluator, int jobs) {
  return Search(config, SearchAlgorithm::kRandomSearch, evaluator, jobs).run();
}

std::vector<Candidate> vanilla_ea(const SearchConfig& config, Evaluator& evaluator, int jobs) {
  return Search(config, SearchAlgorithm::kVanillaEa, evaluator, jobs).run();
}

}  // namespace opnas

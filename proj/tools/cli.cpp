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


#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "opnas/arch_io.hpp"
#include "opnas/errors.hpp"
#include "opnas/metrics.hpp"

namespace opnas::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kConfigFile = "config.json";
constexpr const char* kHistoryFile = "history.jsonl";
constexpr const char* kTimingFile = "timing.jsonl";
constexpr const char* kCheckpointFile = "checkpoint.json";
constexpr const char* kBestFile = "best.json";
constexpr const char* kDefaultOutDir = "opnas-out";

/// A failure that maps straight to an exit code.
struct CommandError : std::runtime_error {
  CommandError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<int> population;
  std::optional<int> k;
  std::optional<double> alpha;
  std::optional<std::string> baseline;
  bool resume = false;
  int jobs = 1;
  std::string out_dir = kDefaultOutDir;
  bool dry_run = false;
  std::optional<std::string> biws;
  int halt_after = 0;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  std::ifstream in(path, std::ios::binary);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

ordered_json parse_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Layers `flags` and the config file over `base`.
RunConfig resolve(const Flags& flags, RunConfig base) {
  RunConfig c = std::move(base);
  bool k_given = flags.k.has_value();
  if (flags.config) {
    const ordered_json j = parse_config_file(*flags.config);
    c = run_config_from_json(j, c);
    k_given = k_given || (j.contains("search") && j["search"].is_object() && j["search"].contains("k"));
  }
  if (flags.seed) c.search.seed = *flags.seed;
  if (flags.iterations) c.search.max_iterations = *flags.iterations;
  if (flags.population) c.search.population_size = *flags.population;
  if (flags.k) c.search.parents = *flags.k;
  if (flags.alpha) c.search.alpha = *flags.alpha;
  if (flags.baseline) {
    auto a = algorithm_from_name(*flags.baseline);
    if (!a) throw ConfigError("--baseline: expected op, ea or rs");
    c.algorithm = *a;
  }
  if (flags.biws) c.biws = true;
  // A small population with the default K would otherwise be rejected.
  if (!k_given) c.search.parents = std::min(c.search.parents, c.search.population_size);
  validate(c);
  return c;
}

Corpus make_corpus(const RunConfig& c) {
  return synth_corpus(c.corpus.seed, c.corpus.size, c.model.vocab, c.model.seq_len, c.corpus.heldout);
}

Supernet load_supernet(const std::string& path, const ModelConfig& expected) {
  Supernet net = Supernet::load(path);
  if (!(net.config() == expected)) throw CheckpointError(path + ": supernet config differs from the model config");
  return net;
}

std::unique_ptr<Evaluator> make_evaluator(const RunConfig& c, const Flags& flags) {
  if (c.evaluator == EvaluatorKind::kSynthetic) return std::make_unique<SyntheticEvaluator>(c.landscape);
  std::optional<Supernet> net;
  if (c.biws) net = flags.biws ? load_supernet(*flags.biws, c.model) : Supernet(c.model, c.search.seed);
  return std::make_unique<TrainingEvaluator>(c.model, c.train, make_corpus(c), std::move(net));
}

BackboneSpec load_spec(const std::string& path) {
  BackboneSpec spec;
  try {
    spec = read_architecture_file(path);
  } catch (const ParseError& e) {
    throw CommandError(kExitSpec, path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw CommandError(kExitSpec, e.what());
  }
  auto v = validate(spec, kMaxPathLength);
  if (!v) throw CommandError(kExitSpec, path + ": " + v.reason);
  return spec;
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

// search ---------------------------------------------------------------------

int cmd_search(const Flags& flags, std::ostream& out) {
  const fs::path dir = flags.out_dir;
  const fs::path checkpoint_path = dir / kCheckpointFile;
  RunConfig config;
  std::optional<SearchState> resumed;

  if (flags.resume) {
    if (!fs::exists(checkpoint_path)) throw CheckpointError("no checkpoint in " + dir.string());
    RunConfig saved;
    try {
      saved = run_config_from_json(ordered_json::parse(read_text(dir / kConfigFile)));
    } catch (const std::exception& e) {
      throw CheckpointError(std::string("saved run config: ") + e.what());
    }
    config = resolve(flags, saved);
    if (!(config == saved)) throw CheckpointError("resume flags or config differ from the saved run config");
    resumed = read_checkpoint(checkpoint_path);
    if (!(resumed->config == config.search) || resumed->algorithm != config.algorithm) {
      throw CheckpointError("checkpoint does not match the saved run config");
    }
  } else {
    config = resolve(flags, RunConfig{});
    if (fs::exists(checkpoint_path)) {
      throw ConfigError(dir.string() + " already holds a search; pass --resume or choose another --out-dir");
    }
  }
  if (flags.dry_run) {
    out << run_config_to_json(config).dump(2) << "\n";
    return kExitOk;
  }

  fs::create_directories(dir);
  std::unique_ptr<Evaluator> evaluator = make_evaluator(config, flags);
  const auto open_mode = std::ios::binary | (resumed ? std::ios::app : std::ios::trunc);
  if (resumed) {
    // The history may have run ahead of the checkpoint before an interruption.
    const auto keep = static_cast<std::size_t>(resumed->history_size);
    std::vector<std::string> history = read_lines(dir / kHistoryFile);
    if (history.size() < keep) throw CheckpointError("history is shorter than the checkpoint records");
    history.resize(keep);
    std::vector<std::string> timing = read_lines(dir / kTimingFile);
    timing.resize(std::min(timing.size(), keep));
    std::string h;
    for (const auto& line : history) h += line + "\n";
    write_text(dir / kHistoryFile, h);
    std::string t;
    for (const auto& line : timing) t += line + "\n";
    write_text(dir / kTimingFile, t);
    evaluator->load_state(dir);
  } else {
    write_text(dir / kConfigFile, run_config_to_json(config).dump(2) + "\n");
  }
  std::ofstream history(dir / kHistoryFile, open_mode);
  std::ofstream timing(dir / kTimingFile, open_mode);
  if (!history || !timing) throw std::runtime_error("cannot write history in " + dir.string());

  Search search = resumed ? Search(std::move(*resumed), *evaluator, flags.jobs)
                          : Search(config.search, config.algorithm, *evaluator, flags.jobs);
  int generations = 0;
  SearchCallbacks callbacks;
  callbacks.on_record = [&](const Candidate& c) {
    history << history_line(c) << "\n";
    timing << ordered_json{{"id", c.id}, {"wall_ms", c.wall_ms}}.dump() << "\n";
  };
  callbacks.on_generation = [&](const SearchState& state) {
    history.flush();
    timing.flush();
    evaluator->save_state(dir);
    write_checkpoint(checkpoint_path, state);
    ++generations;
    return flags.halt_after <= 0 || generations < flags.halt_after;
  };
  search.run(callbacks);

  const SearchState& state = search.state();
  ordered_json summary;
  summary["finished"] = state.finished;
  summary["algorithm"] = algorithm_name(state.algorithm);
  summary["iterations"] = state.iteration;
  summary["evaluations"] = state.evaluations;
  if (!state.population.empty()) {
    const Candidate& best = state.population.front();
    summary["best_id"] = best.id;
    summary["best_score"] = *best.score;
    if (state.finished) write_architecture_file((dir / kBestFile).string(), best.spec);
  }
  out << summary.dump() << "\n";
  return kExitOk;
}

// eval -----------------------------------------------------------------------

int cmd_eval(const Flags& flags, const std::string& spec_path, std::ostream& out) {
  RunConfig config = resolve(flags, RunConfig{});
  BackboneSpec spec;
  try {
    spec = load_spec(spec_path);
  } catch (const CommandError& e) {
    out << ordered_json{{"spec", spec_path}, {"valid", false}, {"reason", e.what()}}.dump(2) << "\n";
    throw;
  }
  std::optional<Supernet> net;
  if (flags.biws) {
    net = Supernet::load(*flags.biws);
    config.model = net->config();
    if (config.model.layers != static_cast<int>(spec.size())) {
      throw CheckpointError("supernet has " + std::to_string(config.model.layers) + " layers but the spec has " +
                            std::to_string(spec.size()));
    }
  }
  config.model.layers = static_cast<int>(spec.size());
  config.search.layers = config.model.layers;
  validate(config);

  const ParamCount count = count_params(spec, config.model);
  ordered_json result;
  result["spec"] = spec_path;
  result["valid"] = true;
  result["layers"] = spec.size();
  result["params"] = {{"attention", count.attention}, {"conv", count.conv}, {"other", count.other},
                      {"total", count.total()}};
  if (!flags.dry_run) {
    if (config.evaluator == EvaluatorKind::kSynthetic) {
      result["score"] = SyntheticEvaluator(config.landscape).fitness(spec);
    } else {
      const Corpus corpus = make_corpus(config);
      ParameterSet params = net ? net->init_candidate(spec) : fresh_parameters(spec, config.model, config.search.seed);
      Model model(spec, config.model, std::move(params));
      const std::vector<double> curve = mlm_pretrain(model, corpus, config.train, config.search.seed);
      result["score"] = proxy_evaluate(model, corpus);
      result["final_loss"] = curve.back();
    }
  }
  out << result.dump(2) << "\n";
  return kExitOk;
}

// export-arch ----------------------------------------------------------------

int cmd_export(const Flags& flags, const std::string& name, std::optional<int> layers,
               std::optional<std::string> output, std::ostream& out) {
  BackboneSpec spec;
  try {
    if (name == "autobert-zero") {
      spec = autobert_zero_backbone(layers.value_or(12));
    } else if (name == "standard-attention") {
      spec = standard_backbone(layers.value_or(1));
    } else {
      throw ConfigError("unknown architecture '" + name + "' (expected autobert-zero or standard-attention)");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (spec.layers.empty()) throw ConfigError("--layers must be >= 1");
  const fs::path path = output ? fs::path(*output) : fs::path(flags.out_dir) / (name + ".json");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_architecture_file(path.string(), spec);
  out << path.string() << "\n";
  return kExitOk;
}

// metrics --------------------------------------------------------------------

int cmd_metrics(const Flags& flags, const std::vector<std::string>& spec_paths, std::ostream& out) {
  RunConfig config = resolve(flags, RunConfig{});
  std::vector<BackboneSpec> specs;
  for (const auto& p : spec_paths) specs.push_back(load_spec(p));
  config.model.layers = static_cast<int>(specs.front().size());
  config.search.layers = config.model.layers;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].size() != specs.front().size()) {
      throw ConfigError(spec_paths[i] + " has " + std::to_string(specs[i].size()) + " layers; all specs must match");
    }
  }
  validate(config);
  const Corpus corpus = make_corpus(config);

  std::ostringstream csv;
  csv << "model,cosine,residual,seed\n";
  for (int s = 0; s < config.metrics_seeds; ++s) {
    const std::uint64_t seed = config.search.seed + static_cast<std::uint64_t>(s);
    std::vector<Model> models;
    models.reserve(specs.size());
    for (const auto& spec : specs) {
      models.emplace_back(spec, config.model, fresh_parameters(spec, config.model, seed));
      if (!flags.dry_run) mlm_pretrain(models.back(), corpus, config.train, seed);
    }
    std::vector<ReportEntry> entries;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      entries.push_back({fs::path(spec_paths[i]).stem().string(), seed, &models[i]});
    }
    for (const auto& r : uniformity_report(entries, corpus)) {
      csv << r.model << "," << format_double(r.cosine) << "," << format_double(r.residual) << "," << r.seed << "\n";
    }
  }
  fs::create_directories(flags.out_dir);
  write_text(fs::path(flags.out_dir) / "metrics.csv", csv.str());
  out << csv.str();
  return kExitOk;
}

// plot-data ------------------------------------------------------------------

std::string history_tag(const fs::path& history) {
  const fs::path config = history.parent_path() / kConfigFile;
  if (fs::exists(config)) {
    try {
      return ordered_json::parse(read_text(config)).at("algorithm").get<std::string>();
    } catch (const std::exception&) {
      // Fall through to the file name.
    }
  }
  return history.stem().string();
}

int cmd_plot_data(const Flags& flags, const std::vector<std::string>& inputs, std::ostream& out) {
  std::ostringstream csv;
  csv << "algorithm,evaluations,score,best\n";
  for (const auto& input : inputs) {
    // Either PATH or TAG=PATH.
    const auto eq = input.find('=');
    const fs::path path = eq == std::string::npos ? input : input.substr(eq + 1);
    const std::string tag = eq == std::string::npos ? history_tag(path) : input.substr(0, eq);
    std::vector<Candidate> records;
    try {
      if (!fs::exists(path)) throw std::runtime_error("cannot open " + path.string());
      records = read_history(path);
    } catch (const std::exception& e) {
      throw CommandError(kExitData, path.string() + ": " + e.what());
    }
    double best = -1;
    long n = 0;
    for (const auto& c : records) {
      if (!c.score) throw CommandError(kExitData, path.string() + ": record " + std::to_string(c.id) + " has no score");
      best = std::max(best, *c.score);
      csv << tag << "," << ++n << "," << format_double(*c.score) << "," << format_double(best) << "\n";
    }
  }
  fs::create_directories(flags.out_dir);
  write_text(fs::path(flags.out_dir) / "plot.csv", csv.str());
  out << csv.str();
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Operation-priority architecture search for language-model backbones.", "opnas"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags flags;
  if (const char* env = std::getenv("OPNAS_OUT_DIR"); env != nullptr && *env != '\0') flags.out_dir = env;
  app.add_option("--config", flags.config, "JSON run config; flags override its fields");
  app.add_option("--seed", flags.seed, "Run seed");
  app.add_option("--iterations", flags.iterations, "Maximum generations after the initial population");
  app.add_option("--population", flags.population, "Population size");
  app.add_option("--k", flags.k, "Parents per generation (clamped to the population unless given)");
  app.add_option("--alpha", flags.alpha, "UCB exploration weight");
  app.add_option("--baseline", flags.baseline, "Search algorithm")->check(CLI::IsMember({"op", "ea", "rs"}));
  app.add_flag("--resume", flags.resume, "Continue the search checkpointed in --out-dir");
  app.add_option("--jobs", flags.jobs, "Worker threads for candidate evaluation")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", flags.out_dir, "Run directory (default: $OPNAS_OUT_DIR or ./opnas-out)");
  app.add_flag("--dry-run", flags.dry_run, "Resolve and check inputs without training");
  app.add_option("--biws", flags.biws, "Supernet checkpoint to initialize candidates from");
  app.add_option("--halt-after", flags.halt_after, "Stop after N checkpointed generations")->group("");

  auto* search = app.add_subcommand("search", "Run a search and write history, checkpoints and the best spec");
  auto* eval = app.add_subcommand("eval", "Validate a spec, count parameters and score it");
  std::string eval_spec;
  eval->add_option("spec", eval_spec, "Architecture file")->required();
  auto* export_arch = app.add_subcommand("export-arch", "Write a reference architecture file");
  std::string export_name;
  std::optional<int> export_layers;
  std::optional<std::string> export_output;
  export_arch->add_option("name", export_name, "autobert-zero or standard-attention")->required();
  export_arch->add_option("--layers", export_layers, "Layer count (default 12, or 1 for standard-attention)");
  export_arch->add_option("-o,--output", export_output, "Output path (default: <out-dir>/<name>.json)");
  auto* metrics = app.add_subcommand("metrics", "Train specs and report token-uniformity metrics as CSV");
  std::vector<std::string> metric_specs;
  metrics->add_option("specs", metric_specs, "Architecture files")->required();
  auto* plot = app.add_subcommand("plot-data", "Best-score-so-far CSV from search histories");
  std::vector<std::string> histories;
  plot->add_option("histories", histories, "history.jsonl paths, optionally TAG=PATH")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*search) return cmd_search(flags, out);
    if (*eval) return cmd_eval(flags, eval_spec, out);
    if (*export_arch) return cmd_export(flags, export_name, export_layers, export_output, out);
    if (*metrics) return cmd_metrics(flags, metric_specs, out);
    if (*plot) return cmd_plot_data(flags, histories, out);
  } catch (const CommandError& e) {
    err << "error: " << e.what() << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace opnas::cli

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


#include <string>

#include "cli.hpp"
#include "opnas/errors.hpp"

namespace opnas::cli {

using nlohmann::ordered_json;

namespace {

std::string_view evaluator_name(EvaluatorKind kind) { return kind == EvaluatorKind::kTrain ? "train" : "synthetic"; }

std::string_view landscape_name(SyntheticEvaluator::Landscape l) {
  return l == SyntheticEvaluator::Landscape::kGoodOpFraction ? "good-op-fraction" : "softmax-count";
}

template <typename T>
T field(const std::string& path, const ordered_json& value) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void require_object(const std::string& path, const ordered_json& j) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

ModelConfig model_from_json(const ordered_json& j, ModelConfig c) {
  require_object("model", j);
  for (const auto& [key, value] : j.items()) {
    const std::string path = "model." + key;
    if (key == "layers") c.layers = field<int>(path, value);
    else if (key == "hidden") c.hidden = field<int>(path, value);
    else if (key == "heads") c.heads = field<int>(path, value);
    else if (key == "vocab") c.vocab = field<int>(path, value);
    else if (key == "seq_len") c.seq_len = field<int>(path, value);
    else if (key == "ffn_ratio") c.ffn_ratio = field<int>(path, value);
    else throw ConfigError(path + ": unknown field");
  }
  return c;
}

TrainConfig train_from_json(const ordered_json& j, TrainConfig c) {
  require_object("train", j);
  for (const auto& [key, value] : j.items()) {
    const std::string path = "train." + key;
    if (key == "steps") c.steps = field<int>(path, value);
    else if (key == "batch_size") c.batch_size = field<int>(path, value);
    else if (key == "learning_rate") c.learning_rate = field<double>(path, value);
    else if (key == "warmup_steps") c.warmup_steps = field<int>(path, value);
    else if (key == "adam") {
      require_object(path, value);
      for (const auto& [akey, avalue] : value.items()) {
        const std::string apath = path + "." + akey;
        if (akey == "beta1") c.adam.beta1 = field<double>(apath, avalue);
        else if (akey == "beta2") c.adam.beta2 = field<double>(apath, avalue);
        else if (akey == "epsilon") c.adam.epsilon = field<double>(apath, avalue);
        else throw ConfigError(apath + ": unknown field");
      }
    } else {
      throw ConfigError(path + ": unknown field");
    }
  }
  return c;
}

CorpusConfig corpus_from_json(const ordered_json& j, CorpusConfig c) {
  require_object("corpus", j);
  for (const auto& [key, value] : j.items()) {
    const std::string path = "corpus." + key;
    if (key == "seed") c.seed = field<std::uint64_t>(path, value);
    else if (key == "size") c.size = field<int>(path, value);
    else if (key == "heldout") c.heldout = field<int>(path, value);
    else throw ConfigError(path + ": unknown field");
  }
  return c;
}

}  // namespace

ordered_json run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["algorithm"] = algorithm_name(c.algorithm);
  j["evaluator"] = evaluator_name(c.evaluator);
  j["landscape"] = landscape_name(c.landscape);
  j["biws"] = c.biws;
  j["search"] = search_config_to_json(c.search);
  j["model"] = {{"layers", c.model.layers}, {"hidden", c.model.hidden},   {"heads", c.model.heads},
                {"vocab", c.model.vocab},   {"seq_len", c.model.seq_len}, {"ffn_ratio", c.model.ffn_ratio}};
  j["train"] = {{"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"warmup_steps", c.train.warmup_steps},
                {"adam", {{"beta1", c.train.adam.beta1}, {"beta2", c.train.adam.beta2}, {"epsilon", c.train.adam.epsilon}}}};
  j["corpus"] = {{"seed", c.corpus.seed}, {"size", c.corpus.size}, {"heldout", c.corpus.heldout}};
  j["metrics"] = {{"seeds", c.metrics_seeds}};
  return j;
}

RunConfig run_config_from_json(const ordered_json& j, RunConfig c) {
  require_object("config", j);
  bool search_layers = false;
  bool model_layers = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "algorithm") {
      auto a = algorithm_from_name(field<std::string>(key, value));
      if (!a) throw ConfigError("algorithm: expected op, ea or rs");
      c.algorithm = *a;
    } else if (key == "evaluator") {
      const auto name = field<std::string>(key, value);
      if (name == "train") c.evaluator = EvaluatorKind::kTrain;
      else if (name == "synthetic") c.evaluator = EvaluatorKind::kSynthetic;
      else throw ConfigError("evaluator: expected train or synthetic");
    } else if (key == "landscape") {
      const auto name = field<std::string>(key, value);
      if (name == "good-op-fraction") c.landscape = SyntheticEvaluator::Landscape::kGoodOpFraction;
      else if (name == "softmax-count") c.landscape = SyntheticEvaluator::Landscape::kSoftmaxCount;
      else throw ConfigError("landscape: expected good-op-fraction or softmax-count");
    } else if (key == "biws") {
      c.biws = field<bool>(key, value);
    } else if (key == "search") {
      c.search = search_config_from_json(value, c.search);
      search_layers = value.contains("layers");
    } else if (key == "model") {
      c.model = model_from_json(value, c.model);
      model_layers = value.contains("layers");
    } else if (key == "train") {
      c.train = train_from_json(value, c.train);
    } else if (key == "corpus") {
      c.corpus = corpus_from_json(value, c.corpus);
    } else if (key == "metrics") {
      require_object(key, value);
      for (const auto& [mkey, mvalue] : value.items()) {
        if (mkey == "seeds") c.metrics_seeds = field<int>("metrics.seeds", mvalue);
        else throw ConfigError("metrics." + mkey + ": unknown field");
      }
    } else {
      throw ConfigError(key + ": unknown field");
    }
  }
  // One depth setting is enough; mirror it into the other section.
  if (model_layers && !search_layers) c.search.layers = c.model.layers;
  if (search_layers && !model_layers) c.model.layers = c.search.layers;
  return c;
}

void validate(const RunConfig& c) {
  c.search.validate();
  c.model.validate();
  c.train.validate();
  if (c.search.layers != c.model.layers) {
    throw ConfigError("search.layers (" + std::to_string(c.search.layers) + ") and model.layers (" +
                      std::to_string(c.model.layers) + ") differ");
  }
  if (c.corpus.size < 2) throw ConfigError("corpus.size must be >= 2");
  if (c.corpus.heldout < 0 || c.corpus.heldout >= c.corpus.size) {
    throw ConfigError("corpus.heldout must be in [0, corpus.size)");
  }
  if (c.metrics_seeds < 1) throw ConfigError("metrics.seeds must be >= 1");
  if (c.biws && c.evaluator != EvaluatorKind::kTrain) throw ConfigError("biws needs the train evaluator");
}

}  // namespace opnas::cli

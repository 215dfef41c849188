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


// MLM pretraining, the proxy score and the evaluator that plugs training
// into the search loop.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "opnas/corpus.hpp"
#include "opnas/model.hpp"
#include "opnas/search.hpp"
#include "opnas/supernet.hpp"

namespace opnas {

struct TrainConfig {
  int steps = 600;
  int batch_size = 8;
  double learning_rate = 1e-3;
  /// Linear warmup from 0; constant afterwards.
  int warmup_steps = 60;
  AdamConfig adam;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

double learning_rate_at(const TrainConfig& config, int step);

/// Mean cross-entropy over the masked positions of one corrupted batch.
Tensor mlm_loss(const Model& model, const MaskedBatch& batch);

/// Returns the per-step training loss. Batches are drawn with replacement
/// from corpus.train. `on_step(step, loss)` may return false to stop early.
/// A non-finite loss throws NumericError naming the step.
std::vector<double> mlm_pretrain(Model& model, const Corpus& corpus, const TrainConfig& config, std::uint64_t seed,
                                 const std::function<bool(int, double)>& on_step = {});

inline constexpr std::uint64_t kEvalMaskSeed = 0x5eedULL;

/// Masked-token accuracy on corpus.heldout. Each sequence gets
/// round(15%) positions replaced by the mask token, chosen by a generator
/// seeded from `seed` and the sequence's own tokens, so the score does not
/// depend on sequence order. The mask token is never predicted.
double proxy_evaluate(const Model& model, const Corpus& corpus, std::uint64_t seed = kEvalMaskSeed);

/// Trains every candidate and scores it by proxy accuracy. With a supernet
/// candidates start from BIWS weights, and at the end of each generation the
/// best-scoring child (lowest id on ties) writes its weights back.
class TrainingEvaluator : public Evaluator {
 public:
  TrainingEvaluator(ModelConfig model, TrainConfig train, Corpus corpus, std::optional<Supernet> supernet = {});

  Evaluation evaluate(const Candidate& candidate, std::uint64_t seed) override;
  void end_generation(std::span<const Candidate> scored) override;
  void save_state(const std::filesystem::path& dir) const override;
  void load_state(const std::filesystem::path& dir) override;

  const std::optional<Supernet>& supernet() const { return supernet_; }

 private:
  ModelConfig model_;
  TrainConfig train_;
  Corpus corpus_;
  std::optional<Supernet> supernet_;
  std::mutex mutex_;
  std::map<long, ParameterSet> trained_;
};

}  // namespace opnas

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


#include "opnas/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <string>

#include "opnas/errors.hpp"

namespace opnas {

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train.steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
  if (warmup_steps < 0) throw ConfigError("train.warmup_steps must be >= 0");
}

double learning_rate_at(const TrainConfig& config, int step) {
  if (step < config.warmup_steps) {
    return config.learning_rate * static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps);
  }
  return config.learning_rate;
}

Tensor mlm_loss(const Model& model, const MaskedBatch& batch) {
  Tensor total;
  for (std::size_t s = 0; s < batch.inputs.size(); ++s) {
    const auto count = std::count(batch.mask[s].begin(), batch.mask[s].end(), true);
    if (count == 0) continue;
    Tensor ce = masked_cross_entropy(model.forward(batch.inputs[s]), batch.targets[s], batch.mask[s]);
    // Weight each sequence's mean by its share of the masked positions.
    ce = scale_by(ce, static_cast<double>(count) / static_cast<double>(batch.masked));
    total = total.defined() ? add(total, ce) : ce;
  }
  return total;
}

std::vector<double> mlm_pretrain(Model& model, const Corpus& corpus, const TrainConfig& config, std::uint64_t seed,
                                 const std::function<bool(int, double)>& on_step) {
  config.validate();
  if (corpus.train.empty()) throw std::invalid_argument("mlm_pretrain: empty training split");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.train.size() - 1);
  AdamState adam;
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(config.steps));
  std::vector<std::vector<int>> sequences(static_cast<std::size_t>(config.batch_size));
  for (int step = 0; step < config.steps; ++step) {
    for (auto& s : sequences) s = corpus.train[pick(rng)];
    const MaskedBatch batch = mask_batch(sequences, corpus.vocab, rng);
    double loss_value = 0;
    try {
      Tensor loss = mlm_loss(model, batch);
      loss_value = loss.item();
      loss.backward();
    } catch (const NumericError& e) {
      throw NumericError("training step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss_value)) throw NumericError("training step " + std::to_string(step) + ": loss is not finite");
    adam_step(model.parameters().all(), adam, learning_rate_at(config, step), config.adam);
    model.parameters().zero_grad();
    curve.push_back(loss_value);
    if (on_step && !on_step(step, loss_value)) break;
  }
  return curve;
}

double proxy_evaluate(const Model& model, const Corpus& corpus, std::uint64_t seed) {
  if (corpus.heldout.empty()) throw std::invalid_argument("proxy_evaluate: empty heldout split");
  long correct = 0;
  long total = 0;
  for (const auto& seq : corpus.heldout) {
    std::uint64_t h = seed;
    for (int t : seq) h = (h ^ static_cast<std::uint64_t>(t)) * 0x100000001b3ULL;
    std::mt19937_64 rng(h);
    std::vector<std::size_t> order(seq.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto count = static_cast<std::size_t>(std::max(1L, std::lround(kMaskFraction * static_cast<double>(seq.size()))));
    std::vector<int> input = seq;
    for (std::size_t i = 0; i < count; ++i) input[order[i]] = kMaskToken;
    const Tensor out = model.forward(input);
    const Matrix& logits = out.value();
    for (std::size_t i = 0; i < count; ++i) {
      const auto row = static_cast<Eigen::Index>(order[i]);
      Eigen::Index best = 0;
      logits.row(row).tail(logits.cols() - 1).maxCoeff(&best);
      correct += (best + 1 == seq[order[i]]) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainingEvaluator::TrainingEvaluator(ModelConfig model, TrainConfig train, Corpus corpus,
                                     std::optional<Supernet> supernet)
    : model_(model), train_(train), corpus_(std::move(corpus)), supernet_(std::move(supernet)) {
  model_.validate();
  train_.validate();
  if (supernet_ && !(supernet_->config() == model_)) throw ConfigError("supernet config differs from the model config");
}

Evaluation TrainingEvaluator::evaluate(const Candidate& candidate, std::uint64_t seed) {
  ParameterSet params = supernet_ ? supernet_->init_candidate(candidate.spec)
                                  : fresh_parameters(candidate.spec, model_, seed);
  Model model(candidate.spec, model_, std::move(params));
  Evaluation e;
  e.loss_curve = mlm_pretrain(model, corpus_, train_, seed);
  e.score = proxy_evaluate(model, corpus_);
  if (supernet_) {
    std::lock_guard lock(mutex_);
    trained_.insert_or_assign(candidate.id, std::move(model.parameters()));
  }
  return e;
}

void TrainingEvaluator::end_generation(std::span<const Candidate> scored) {
  if (!supernet_) return;
  const Candidate* best = nullptr;
  for (const auto& c : scored) {
    if (trained_.contains(c.id) && (best == nullptr || ranks_before(c, *best))) best = &c;
  }
  if (best != nullptr) supernet_->write_back(best->spec, trained_.at(best->id));
  trained_.clear();
}

void TrainingEvaluator::save_state(const std::filesystem::path& dir) const {
  if (supernet_) supernet_->save(dir / "supernet.bin");
}

void TrainingEvaluator::load_state(const std::filesystem::path& dir) {
  if (!supernet_) return;
  Supernet loaded = Supernet::load(dir / "supernet.bin");
  if (!(loaded.config() == model_)) throw CheckpointError("supernet checkpoint config differs from the model config");
  supernet_ = std::move(loaded);
}

}  // namespace opnas

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


#include "opnas/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "opnas/errors.hpp"

namespace opnas {

std::vector<UniformityRecord> uniformity_report(const std::vector<ReportEntry>& models, const Corpus& corpus,
                                                std::uint64_t batch_seed, int batch_size) {
  if (models.empty()) return {};
  if (corpus.heldout.empty()) throw std::invalid_argument("uniformity_report: empty heldout split");
  for (const auto& entry : models) {
    if (entry.model == nullptr) throw std::invalid_argument("uniformity_report: null model for " + entry.name);
    if (!(entry.model->config() == models.front().model->config())) {
      throw ConfigError("uniformity_report: " + entry.name + " has a different model config");
    }
  }

  // One draw shared by every model.
  std::vector<std::size_t> order(corpus.heldout.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(batch_seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), static_cast<std::size_t>(std::max(1, batch_size))));

  std::vector<UniformityRecord> out;
  for (const auto& entry : models) {
    UniformityRecord rec{entry.name, entry.seed, 0, 0};
    for (std::size_t i : order) {
      const Tensor final_layer = entry.model->hidden_states(corpus.heldout[i]).back();
      rec.cosine += mean_pairwise_cosine(final_layer.value());
      rec.residual += relative_residual_norm(final_layer.value());
    }
    rec.cosine /= static_cast<double>(order.size());
    rec.residual /= static_cast<double>(order.size());
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace opnas

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


#include "opnas/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace opnas {

Corpus synth_corpus(std::uint64_t seed, int size, int vocab, int seq_len, int heldout) {
  if (vocab < 16) throw std::invalid_argument("synth_corpus: vocab must be >= 16");
  if (seq_len < 2 + kMinSentinelGap) throw std::invalid_argument("synth_corpus: sequences are too short");
  if (size < 2) throw std::invalid_argument("synth_corpus: need at least two sequences");
  if (heldout <= 0) heldout = std::max(1, size / 8);
  if (heldout >= size) throw std::invalid_argument("synth_corpus: heldout must leave training data");

  std::mt19937_64 rng(seed);
  Corpus c;
  c.vocab = vocab;
  c.seq_len = seq_len;
  c.sentinel_pairs = std::max(1, vocab / 16);
  c.first_sentinel = vocab - 2 * c.sentinel_pairs;
  const int regular = c.regular_count();

  std::vector<int> perm(static_cast<std::size_t>(regular));
  std::iota(perm.begin(), perm.end(), 1);
  std::shuffle(perm.begin(), perm.end(), rng);
  c.successor.assign(static_cast<std::size_t>(vocab), -1);
  for (int t = 1; t <= regular; ++t) c.successor[static_cast<std::size_t>(t)] = perm[static_cast<std::size_t>(t - 1)];

  std::uniform_int_distribution<int> any_regular(1, regular);
  std::uniform_int_distribution<int> pair(0, c.sentinel_pairs - 1);
  std::bernoulli_distribution follow(kSuccessorProbability);
  for (int s = 0; s < size; ++s) {
    std::vector<int> seq(static_cast<std::size_t>(seq_len), 0);
    const int open = std::uniform_int_distribution<int>(0, seq_len - 1 - kMinSentinelGap)(rng);
    const int close = std::uniform_int_distribution<int>(open + kMinSentinelGap, seq_len - 1)(rng);
    const int p = pair(rng);
    seq[static_cast<std::size_t>(open)] = c.first_sentinel + 2 * p;
    seq[static_cast<std::size_t>(close)] = c.first_sentinel + 2 * p + 1;
    int prev = 0;
    for (int t = 0; t < seq_len; ++t) {
      if (t == open || t == close) continue;
      const int tok = prev != 0 && follow(rng) ? c.successor[static_cast<std::size_t>(prev)] : any_regular(rng);
      seq[static_cast<std::size_t>(t)] = tok;
      prev = tok;
    }
    (s < size - heldout ? c.train : c.heldout).push_back(std::move(seq));
  }
  return c;
}

MaskedBatch mask_batch(std::span<const std::vector<int>> sequences, int vocab, std::mt19937_64& rng) {
  MaskedBatch b;
  std::vector<std::pair<std::size_t, std::size_t>> positions;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    b.inputs.push_back(sequences[s]);
    b.targets.push_back(sequences[s]);
    b.mask.emplace_back(sequences[s].size(), false);
    for (std::size_t t = 0; t < sequences[s].size(); ++t) positions.emplace_back(s, t);
  }
  const auto total = static_cast<long>(positions.size());
  b.masked = std::max(1L, std::lround(kMaskFraction * static_cast<double>(total)));
  b.replaced_with_mask = std::lround(0.8 * static_cast<double>(b.masked));
  b.replaced_random = std::lround(0.1 * static_cast<double>(b.masked));
  b.kept = b.masked - b.replaced_with_mask - b.replaced_random;

  // Partial Fisher-Yates: the first `masked` entries become the selection.
  for (long i = 0; i < b.masked; ++i) {
    const long j = std::uniform_int_distribution<long>(i, total - 1)(rng);
    std::swap(positions[static_cast<std::size_t>(i)], positions[static_cast<std::size_t>(j)]);
  }
  std::uniform_int_distribution<int> random_token(1, vocab - 1);
  for (long i = 0; i < b.masked; ++i) {
    const auto [s, t] = positions[static_cast<std::size_t>(i)];
    b.mask[s][t] = true;
    if (i < b.replaced_with_mask) {
      b.inputs[s][t] = kMaskToken;
    } else if (i < b.replaced_with_mask + b.replaced_random) {
      b.inputs[s][t] = random_token(rng);
    }
  }
  return b;
}

}  // namespace opnas

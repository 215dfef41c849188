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


// Synthetic masked-language-modeling corpus.
//
// Token 0 is the mask token and never appears in text. The top 2S ids are S
// sentinel pairs (opener 2i, closer 2i + 1 counted from the first sentinel
// id). Every sequence holds exactly one pair, the closer at least
// kMinSentinelGap positions after its opener. All other positions follow a
// bigram chain over the regular ids 1..R: the next regular token is the
// designated successor of the previous regular token with probability
// kSuccessorProbability, otherwise uniform over the regular ids. Sentinels
// do not break the chain.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace opnas {

inline constexpr int kMaskToken = 0;
inline constexpr double kSuccessorProbability = 0.8;
inline constexpr int kMinSentinelGap = 8;

struct Corpus {
  int vocab = 0;
  int seq_len = 0;
  std::vector<std::vector<int>> train;
  std::vector<std::vector<int>> heldout;
  /// successor[t] for regular t; -1 elsewhere.
  std::vector<int> successor;
  int first_sentinel = 0;
  int sentinel_pairs = 0;

  int regular_count() const { return first_sentinel - 1; }
  bool is_regular(int t) const { return t >= 1 && t < first_sentinel; }
  bool is_opener(int t) const { return t >= first_sentinel && (t - first_sentinel) % 2 == 0; }
  bool is_closer(int t) const { return t >= first_sentinel && (t - first_sentinel) % 2 == 1; }
};

/// `size` sequences in total, of which `heldout` (at least one) are held out.
/// Requires vocab >= 16 and seq_len >= 2 + kMinSentinelGap.
Corpus synth_corpus(std::uint64_t seed, int size, int vocab, int seq_len, int heldout = 0);

/// A batch with MLM corruption applied.
struct MaskedBatch {
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> targets;
  std::vector<std::vector<bool>> mask;
  long masked = 0;
  long replaced_with_mask = 0;
  long replaced_random = 0;
  long kept = 0;
};

inline constexpr double kMaskFraction = 0.15;

/// Selects round(15%) of the batch's positions; of those round(80%) become
/// the mask token, round(10%) a random non-mask token and the rest stay.
MaskedBatch mask_batch(std::span<const std::vector<int>> sequences, int vocab, std::mt19937_64& rng);

}  // namespace opnas

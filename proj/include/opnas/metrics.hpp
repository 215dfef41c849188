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


// Token-uniformity diagnostics: how far a layer's token representations have
// collapsed toward one another.

#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "opnas/corpus.hpp"
#include "opnas/model.hpp"

namespace opnas {

/// Mean of cos(x_i, x_j) over all row pairs i < j. A zero row contributes 0
/// to every pair it is in. Throws std::invalid_argument for fewer than 2 rows.
template <typename Derived>
double mean_pairwise_cosine(const Eigen::MatrixBase<Derived>& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw std::invalid_argument("mean_pairwise_cosine needs at least 2 rows, got " + std::to_string(n));
  Eigen::MatrixXd unit = x;
  long zero_rows = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0) {
      unit.row(i) /= norm;
    } else {
      ++zero_rows;
    }
  }
  if (zero_rows > 0) std::clog << "warning: " << zero_rows << " zero rows contribute no similarity\n";
  const Eigen::MatrixXd gram = unit * unit.transpose();
  const double off_diagonal = gram.sum() - gram.trace();
  return off_diagonal / static_cast<double>(n * (n - 1));
}

/// ||X - 1 m^T||_F / ||X||_F with m the column mean, which is the closest
/// matrix with identical rows. Throws std::invalid_argument for a zero matrix.
template <typename Derived>
double relative_residual_norm(const Eigen::MatrixBase<Derived>& x) {
  const double norm = x.norm();
  if (!(norm > 0)) throw std::invalid_argument("relative_residual_norm of a zero matrix");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return (x.rowwise() - mean).norm() / norm;
}

struct UniformityRecord {
  std::string model;
  std::uint64_t seed = 0;
  double cosine = 0;
  double residual = 0;
  bool operator==(const UniformityRecord&) const = default;
};

struct ReportEntry {
  std::string name;
  /// Training seed, carried through to the record.
  std::uint64_t seed = 0;
  const Model* model = nullptr;
};

inline constexpr std::uint64_t kReportBatchSeed = 0x7e57ULL;
inline constexpr int kReportBatchSize = 32;

/// Final-layer metrics for each model, averaged over the same seeded draw of
/// heldout sequences. Throws ConfigError when the models' configs differ.
std::vector<UniformityRecord> uniformity_report(const std::vector<ReportEntry>& models, const Corpus& corpus,
                                                std::uint64_t batch_seed = kReportBatchSeed,
                                                int batch_size = kReportBatchSize);

}  // namespace opnas

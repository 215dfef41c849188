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


#include <cmath>
#include <numeric>

#include "doctest.h"
#include "opnas/errors.hpp"
#include "opnas/metrics.hpp"
#include "test_support.hpp"

using namespace opnas;

namespace {

double loop_cosine(const Matrix& x) {
  double total = 0;
  long pairs = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      double dot = 0;
      double ni = 0;
      double nj = 0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        dot += x(i, c) * x(j, c);
        ni += x(i, c) * x(i, c);
        nj += x(j, c) * x(j, c);
      }
      total += dot / std::sqrt(ni * nj);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double loop_residual(const Matrix& x) {
  double num = 0;
  double den = 0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double mean = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) mean += x(i, c);
    mean /= static_cast<double>(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      num += (x(i, c) - mean) * (x(i, c) - mean);
      den += x(i, c) * x(i, c);
    }
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("mean pairwise cosine") {
  std::mt19937_64 rng(1);
  const Eigen::RowVectorXd v = testing::random_matrix(rng, 1, 8);
  CHECK(mean_pairwise_cosine(Matrix(v.replicate(5, 1))) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mean_pairwise_cosine(Matrix(Matrix::Identity(2, 3))) == 0.0);
  CHECK_THROWS_AS(mean_pairwise_cosine(Matrix(1, 4)), std::invalid_argument);

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = testing::random_matrix(rng, 5, 8);
    const double c = mean_pairwise_cosine(x);
    CHECK(std::abs(c - loop_cosine(x)) < 1e-9);
    CHECK(c >= -1);
    CHECK(c <= 1);
    Matrix scaled = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) scaled.row(i) *= 0.1 + static_cast<double>(i);
    CHECK(std::abs(mean_pairwise_cosine(scaled) - c) < 1e-12);
  }

  Matrix with_zero = testing::random_matrix(rng, 3, 4);
  with_zero.row(1).setZero();
  const double cos02 = with_zero.row(0).dot(with_zero.row(2)) / (with_zero.row(0).norm() * with_zero.row(2).norm());
  CHECK(mean_pairwise_cosine(with_zero) == doctest::Approx(cos02 / 3));
}

TEST_CASE("relative residual norm") {
  std::mt19937_64 rng(2);
  const Eigen::RowVectorXd v = testing::random_matrix(rng, 1, 4);
  CHECK(relative_residual_norm(Matrix(v.replicate(6, 1))) < 1e-15);
  Matrix centered = testing::random_matrix(rng, 6, 4);
  centered.rowwise() -= centered.colwise().mean();
  CHECK(relative_residual_norm(centered) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(relative_residual_norm(Matrix(Matrix::Zero(3, 3))), std::invalid_argument);

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = testing::random_matrix(rng, 6, 4);
    const double r = relative_residual_norm(x);
    CHECK(std::abs(r - loop_residual(x)) < 1e-9);
    CHECK(r >= 0);
    CHECK(r <= 1);
    CHECK(std::abs(relative_residual_norm(Matrix(-3.5 * x)) - r) < 1e-12);
    Matrix swapped = x;
    swapped.row(0).swap(swapped.row(5));
    swapped.row(2).swap(swapped.row(3));
    CHECK(std::abs(relative_residual_norm(swapped) - r) < 1e-12);
    // The column mean is the best uniform-row fit: any other row does worse.
    const Eigen::RowVectorXd other = x.colwise().mean() + testing::random_matrix(rng, 1, 4, -0.1, 0.1);
    CHECK((x.rowwise() - other).norm() / x.norm() >= r);
  }
}

TEST_CASE("uniformity report") {
  const Corpus corpus = synth_corpus(1, 128, 64, 32);
  ModelConfig mc;
  mc.layers = 2;
  mc.hidden = 16;
  mc.heads = 2;
  const Model a(standard_backbone(2), mc, fresh_parameters(standard_backbone(2), mc, 1));
  const Model h(autobert_zero_backbone(2), mc, fresh_parameters(autobert_zero_backbone(2), mc, 1));

  const auto rows = uniformity_report({{"att", 1, &a}, {"att", 1, &a}, {"hybrid", 7, &h}}, corpus);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == rows[1]);
  CHECK(rows[2].model == "hybrid");
  CHECK(rows[2].seed == 7);
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.cosine));
    CHECK(r.residual > 0);
    CHECK(r.residual <= 1);
  }

  // Oracle over the same draw, one sequence at a time.
  const auto one = uniformity_report({{"att", 1, &a}}, corpus, 3, 1);
  std::vector<std::size_t> order(corpus.heldout.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(order.begin(), order.end(), rng);
  const Matrix final_layer = a.hidden_states(corpus.heldout[order[0]]).back().value();
  CHECK(one[0].cosine == doctest::Approx(loop_cosine(final_layer)).epsilon(1e-12));
  CHECK(one[0].residual == doctest::Approx(loop_residual(final_layer)).epsilon(1e-12));

  ModelConfig other = mc;
  other.hidden = 32;
  const Model wide(standard_backbone(2), other, fresh_parameters(standard_backbone(2), other, 1));
  CHECK_THROWS_AS(uniformity_report({{"a", 1, &a}, {"w", 1, &wide}}, corpus), ConfigError);
  CHECK(uniformity_report({}, corpus).empty());
}

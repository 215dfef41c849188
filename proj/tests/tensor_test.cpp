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
#include <random>

#include "doctest.h"
#include "opnas/errors.hpp"
#include "opnas/tensor.hpp"
#include "test_support.hpp"

using namespace opnas;
using opnas::testing::gradient_check;
using opnas::testing::random_matrix;

namespace {

Tensor mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return Tensor::from_matrix(m);
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2, 2}, std::vector<double>(8)), ShapeError);
  Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.value()(1, 0) == 4);
  Tensor s = Tensor::scalar(3.5);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 3.5);
}

TEST_CASE("non-finite results raise") {
  Tensor x = mat({{1e308, 1e308}});
  CHECK_THROWS_AS(add(x, x), NumericError);
}

TEST_CASE("unary primitives") {
  SUBCASE("softmax rows sum to one and are positive") {
    std::mt19937_64 rng(1);
    Tensor x = Tensor::from_matrix(random_matrix(rng, 6, 9, -30, 30));
    Tensor y = softmax(x);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      CHECK(std::abs(y.value().row(r).sum() - 1.0) < 1e-9);
      CHECK(y.value().row(r).minCoeff() > 0.0);
    }
  }
  SUBCASE("logsigmoid(0) = -ln 2") {
    CHECK(logsigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("softsign") {
    Tensor y = softsign(mat({{1, -1}}));
    CHECK(y.value()(0, 0) == 0.5);
    CHECK(y.value()(0, 1) == -0.5);
  }
  SUBCASE("scale divides by sqrt of the last axis") {
    Tensor y = scale(Tensor::from_matrix(Matrix::Constant(3, 4, 2.0)));
    CHECK(y.value()(2, 3) == doctest::Approx(1.0));
  }
  SUBCASE("transpose needs rank 2") {
    CHECK_THROWS_AS(transpose(Tensor::scalar(1.0)), ShapeError);
    CHECK_THROWS_AS(transpose(Tensor(Shape{3}, {1, 2, 3})), ShapeError);
    Tensor y = transpose(Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
    CHECK(y.shape() == Shape{3, 2});
  }
  SUBCASE("involutions are exact") {
    std::mt19937_64 rng(2);
    Tensor x = Tensor::from_matrix(random_matrix(rng, 5, 3));
    CHECK(transpose(transpose(x)).value() == x.value());
    CHECK(neg(neg(x)).value() == x.value());
  }
}

TEST_CASE("binary primitives") {
  std::mt19937_64 rng(3);
  SUBCASE("identity matmul") {
    Matrix m = random_matrix(rng, 2, 2);
    Tensor y = matmul(Tensor::from_matrix(Matrix::Identity(2, 2)), Tensor::from_matrix(m));
    CHECK(y.value() == m);
  }
  SUBCASE("matmul shape error") {
    CHECK_THROWS_AS(matmul(Tensor::from_matrix(Matrix::Zero(2, 3)), Tensor::from_matrix(Matrix::Zero(2, 3))),
                    ShapeError);
    CHECK_THROWS_AS(add(Tensor::from_matrix(Matrix::Zero(2, 3)), Tensor::from_matrix(Matrix::Zero(3, 2))),
                    ShapeError);
  }
  SUBCASE("euclidean self distance has zero diagonal") {
    Tensor x = Tensor::from_matrix(random_matrix(rng, 5, 4));
    Tensor d = euclidean(x, x);
    for (int i = 0; i < 5; ++i) CHECK(d.value()(i, i) == 0.0);
    CHECK(d.value().minCoeff() >= 0.0);
  }
  SUBCASE("cosine self similarity has unit diagonal") {
    Tensor x = Tensor::from_matrix(random_matrix(rng, 5, 4));
    Tensor c = cosine(x, x);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(c.value()(i, i) - 1.0) < 1e-9);
  }
  SUBCASE("cosine against per-pair dot/norm oracle") {
    Matrix a = random_matrix(rng, 3, 4);
    Matrix b = random_matrix(rng, 3, 4);
    Tensor c = cosine(Tensor::from_matrix(a), Tensor::from_matrix(b));
    CHECK(c.shape() == Shape{3, 3});
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double dot = 0, na = 0, nb = 0;
        for (int k = 0; k < 4; ++k) {
          dot += a(i, k) * b(j, k);
          na += a(i, k) * a(i, k);
          nb += b(j, k) * b(j, k);
        }
        CHECK(std::abs(c.value()(i, j) - dot / std::sqrt(na * nb)) < 1e-12);
        CHECK(std::abs(c.value()(i, j)) <= 1.0 + 1e-12);
      }
    }
  }
  SUBCASE("cosine with a zero row is zero") {
    Matrix a = random_matrix(rng, 3, 4);
    a.row(1).setZero();
    Tensor c = cosine(Tensor::from_matrix(a), Tensor::from_matrix(a));
    CHECK(c.value().row(1).isZero());
    CHECK(c.value().col(1).isZero());
  }
}

TEST_CASE("linear against naive triple loop") {
  CHECK(linear(Tensor::from_matrix(Matrix::Zero(2, 3)), Tensor::from_matrix(Matrix::Ones(3, 5))).value().isZero());
  std::mt19937_64 rng(4);
  Matrix x = random_matrix(rng, 4, 3);
  Matrix w = random_matrix(rng, 3, 2);
  CHECK(linear(Tensor::from_matrix(x), Tensor::from_matrix(Matrix::Identity(3, 3))).value() == x);
  Tensor y = linear(Tensor::from_matrix(x), Tensor::from_matrix(w));
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 2; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += x(i, k) * w(k, j);
      CHECK(std::abs(y.value()(i, j) - acc) < 1e-12);
    }
  }
}

TEST_CASE("depthwise_conv1d") {
  SUBCASE("k = 1 is the identity") {
    std::mt19937_64 rng(5);
    Matrix x = random_matrix(rng, 6, 3);
    Tensor y = depthwise_conv1d(Tensor::from_matrix(x), Tensor::from_matrix(random_matrix(rng, 1, 3)));
    CHECK((y.value() - x).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("even kernels are rejected") {
    CHECK_THROWS_AS(depthwise_conv1d(Tensor::from_matrix(Matrix::Zero(5, 2)), Tensor::from_matrix(Matrix::Zero(4, 2))),
                    ShapeError);
  }
  SUBCASE("constant input stays constant away from the padding") {
    Tensor y = depthwise_conv1d(Tensor::from_matrix(Matrix::Constant(9, 2, 3.0)),
                                Tensor::from_matrix(Matrix::Zero(3, 2)));
    for (int t = 1; t < 8; ++t) CHECK(y.value()(t, 0) == doctest::Approx(3.0));
  }
  SUBCASE("k = 3 ramp against a sliding-window sum") {
    Matrix x(5, 1);
    x << 1, 2, 3, 4, 5;
    Matrix w(3, 1);
    w << 0.3, -0.2, 0.9;
    // Softmax-normalized taps.
    double z = std::exp(0.3) + std::exp(-0.2) + std::exp(0.9);
    double taps[3] = {std::exp(0.3) / z, std::exp(-0.2) / z, std::exp(0.9) / z};
    Tensor y = depthwise_conv1d(Tensor::from_matrix(x), Tensor::from_matrix(w));
    for (int t = 0; t < 5; ++t) {
      double acc = 0;
      for (int j = 0; j < 3; ++j) {
        int src = t + j - 1;
        if (src >= 0 && src < 5) acc += taps[j] * x(src, 0);
      }
      CHECK(std::abs(y.value()(t, 0) - acc) < 1e-12);
    }
  }
}

TEST_CASE("glu") {
  std::mt19937_64 rng(6);
  SUBCASE("zero gate halves") {
    Matrix x = random_matrix(rng, 3, 4);
    x.rightCols(2).setZero();
    Tensor y = glu(Tensor::from_matrix(x));
    CHECK((y.value() - x.leftCols(2) / 2).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("saturated gate passes through") {
    Matrix x = random_matrix(rng, 3, 4);
    x.rightCols(2).setConstant(60.0);
    Tensor y = glu(Tensor::from_matrix(x));
    CHECK((y.value() - x.leftCols(2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("elementwise oracle") {
    Matrix x = random_matrix(rng, 2, 4);
    Tensor y = glu(Tensor::from_matrix(x));
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(y.value()(i, j) - x(i, j) / (1 + std::exp(-x(i, j + 2)))) < 1e-14);
      }
    }
  }
  SUBCASE("odd width rejected") { CHECK_THROWS_AS(glu(Tensor::from_matrix(Matrix::Zero(2, 3))), ShapeError); }
}

TEST_CASE("layer_norm") {
  Tensor gain = Tensor::from_matrix(Matrix::Ones(1, 2));
  Tensor bias = Tensor::from_matrix(Matrix::Zero(1, 2));
  CHECK(layer_norm(mat({{4, 4}}), gain, bias).value().isZero());
  Tensor y = layer_norm(mat({{1, -1}}), gain, bias);
  CHECK(y.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(y.value()(0, 1) == doctest::Approx(-1.0).epsilon(1e-5));

  std::mt19937_64 rng(7);
  Matrix x = random_matrix(rng, 1, 6);
  Matrix g = random_matrix(rng, 1, 6);
  Matrix b = random_matrix(rng, 1, 6);
  Tensor out = layer_norm(Tensor::from_matrix(x), Tensor::from_matrix(g), Tensor::from_matrix(b));
  double mean = x.sum() / 6, var = 0;
  for (int i = 0; i < 6; ++i) var += (x(0, i) - mean) * (x(0, i) - mean) / 6;
  for (int i = 0; i < 6; ++i) {
    double expected = (x(0, i) - mean) / std::sqrt(var + 1e-5) * g(0, i) + b(0, i);
    CHECK(std::abs(out.value()(0, i) - expected) < 1e-12);
  }
}

TEST_CASE("masked_cross_entropy") {
  const int V = 10;
  std::vector<int> targets{1, 2, 3};
  SUBCASE("uniform logits give ln V") {
    Tensor loss = masked_cross_entropy(Tensor::from_matrix(Matrix::Zero(3, V)), targets, {true, false, true});
    CHECK(loss.item() == doctest::Approx(std::log(V)).epsilon(1e-14));
  }
  SUBCASE("confident correct logits give ~0") {
    Matrix logits = Matrix::Zero(3, V);
    for (int i = 0; i < 3; ++i) logits(i, targets[i]) = 50;
    CHECK(masked_cross_entropy(Tensor::from_matrix(logits), targets, {true, true, true}).item() < 1e-20);
  }
  SUBCASE("direct per-position computation") {
    std::mt19937_64 rng(8);
    Matrix logits = random_matrix(rng, 3, V);
    double expected = 0;
    for (int i : {0, 2}) {
      double z = 0;
      for (int v = 0; v < V; ++v) z += std::exp(logits(i, v));
      expected += -std::log(std::exp(logits(i, targets[i])) / z);
    }
    expected /= 2;
    Tensor loss = masked_cross_entropy(Tensor::from_matrix(logits), targets, {true, false, true});
    CHECK(std::abs(loss.item() - expected) < 1e-12);
  }
  SUBCASE("empty mask") {
    CHECK_THROWS(masked_cross_entropy(Tensor::from_matrix(Matrix::Zero(3, V)), targets, {false, false, false}));
  }
}

TEST_CASE("backward") {
  SUBCASE("sum gives ones") {
    Parameter w("w", Matrix::Constant(2, 3, 0.7));
    sum(w).backward();
    CHECK(w.tensor().grad() == Matrix::Ones(2, 3));
  }
  SUBCASE("half squared norm gives w") {
    std::mt19937_64 rng(9);
    Parameter w("w", random_matrix(rng, 3, 2));
    scale_by(sum(multiply(w, w)), 0.5).backward();
    CHECK((w.tensor().grad() - w.tensor().value()).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("non-scalar loss rejected") {
    Parameter w("w", Matrix::Ones(2, 2));
    CHECK_THROWS_AS(neg(w).backward(), ShapeError);
  }
  SUBCASE("unreachable gradients untouched") {
    Parameter used("used", Matrix::Ones(2, 2));
    Parameter unused("unused", Matrix::Ones(2, 2));
    sum(used).backward();
    CHECK(!unused.tensor().has_grad());
  }
  SUBCASE("finite differences for every op") {
    std::mt19937_64 rng(10);
    auto fd = [&](auto f, std::vector<Matrix> xs) { return gradient_check(f, xs, rng); };
    for (int rep = 0; rep < 3; ++rep) {
      for (auto op : {UnaryOpKind::kNeg, UnaryOpKind::kTranspose, UnaryOpKind::kScale, UnaryOpKind::kSoftmax,
                      UnaryOpKind::kLogSigmoid, UnaryOpKind::kSoftsign}) {
        CHECK(fd([op](const std::vector<Tensor>& t) { return apply_unary(op, t[0]); },
                 {random_matrix(rng, 4, 3)}) < 1e-4);
      }
      for (auto op : {BinaryOpKind::kAdd, BinaryOpKind::kCosine, BinaryOpKind::kEuclidean}) {
        CHECK(fd([op](const std::vector<Tensor>& t) { return apply_binary(op, t[0], t[1]); },
                 {random_matrix(rng, 4, 3), random_matrix(rng, 4, 3)}) < 1e-4);
      }
      CHECK(fd([](const std::vector<Tensor>& t) { return matmul(t[0], t[1]); },
               {random_matrix(rng, 4, 3), random_matrix(rng, 3, 5)}) < 1e-4);
      CHECK(fd([](const std::vector<Tensor>& t) { return depthwise_conv1d(t[0], t[1]); },
               {random_matrix(rng, 6, 3), random_matrix(rng, 5, 3)}) < 1e-4);
      CHECK(fd([](const std::vector<Tensor>& t) { return glu(t[0]); }, {random_matrix(rng, 3, 6)}) < 1e-4);
      CHECK(fd([](const std::vector<Tensor>& t) { return layer_norm(t[0], t[1], t[2]); },
               {random_matrix(rng, 3, 5), random_matrix(rng, 1, 5), random_matrix(rng, 1, 5)}) < 1e-4);
      CHECK(fd([](const std::vector<Tensor>& t) { return masked_cross_entropy(t[0], std::vector<int>{0, 3, 1},
                                                                              {true, false, true}); },
               {random_matrix(rng, 3, 4)}) < 1e-4);
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<Parameter> params{Parameter("w", Matrix::Constant(2, 2, 0.3))};
    AdamState state;
    adam_step(params, state, 1e-2);
    CHECK(params[0].tensor().value() == Matrix::Constant(2, 2, 0.3));
  }
  SUBCASE("one scalar step matches the hand formula") {
    std::vector<Parameter> params{Parameter("w", Matrix::Constant(1, 1, 1.5))};
    // loss = w^2 => grad = 3.0.
    sum(multiply(params[0], params[0])).backward();
    AdamState state;
    adam_step(params, state, 0.1);
    // m = 0.1 * 3, v = 0.001 * 9; m_hat = 3, v_hat = 9 => step = 0.1 * 3 / (3 + 1e-8).
    const double expected = 1.5 - 0.1 * 3.0 / (3.0 + 1e-8);
    CHECK(std::abs(params[0].tensor().value()(0, 0) - expected) < 1e-15);
  }
  SUBCASE("deterministic") {
    auto run = [] {
      std::mt19937_64 rng(11);
      std::vector<Parameter> params{Parameter("w", random_matrix(rng, 3, 3))};
      AdamState state;
      for (int i = 0; i < 5; ++i) {
        params[0].tensor().zero_grad();
        sum(softsign(matmul(params[0], params[0]))).backward();
        adam_step(params, state, 1e-2);
      }
      return params[0].tensor().value();
    };
    CHECK(run() == run());
  }
}

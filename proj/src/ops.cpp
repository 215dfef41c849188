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
#include <string>

#include "opnas/errors.hpp"
#include "opnas/tensor.hpp"

namespace opnas {

namespace {

using detail::Node;

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void require_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(op) + " needs a rank-2 operand, got " + shape_string(x.shape()));
  }
}

Matrix row_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

double stable_logsigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Rows divided by their norms; zero rows stay zero. Returns the norms too.
Matrix normalize_rows(const Matrix& x, Vector& norms) {
  norms = x.rowwise().norm();
  Matrix out = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (norms(r) > 0) out.row(r) /= norms(r);
  }
  return out;
}

// Backward of row normalization: d(x/|x|) applied to upstream gradient g.
Matrix normalize_rows_backward(const Matrix& normalized, const Vector& norms, const Matrix& g) {
  Matrix out = Matrix::Zero(g.rows(), g.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    if (norms(r) == 0) continue;
    const double radial = g.row(r).dot(normalized.row(r));
    out.row(r) = (g.row(r) - radial * normalized.row(r)) / norms(r);
  }
  return out;
}

}  // namespace

Tensor neg(const Tensor& x) {
  return make_op_result(x.shape(), -x.value(), {x},
                        [](Node& self) { parent(self, 0).accumulate(-self.grad); }, "neg");
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) {
    throw ShapeError("transpose needs rank >= 2, got " + shape_string(x.shape()));
  }
  Shape shape{x.shape()[1], x.shape()[0]};
  return make_op_result(std::move(shape), x.value().transpose(), {x},
                        [](Node& self) { parent(self, 0).accumulate(self.grad.transpose()); },
                        "transpose");
}

Tensor scale(const Tensor& x) {
  const double last = x.rank() == 0 ? 1.0 : static_cast<double>(x.shape().back());
  const double factor = 1.0 / std::sqrt(last);
  return make_op_result(x.shape(), x.value() * factor, {x},
                        [factor](Node& self) { parent(self, 0).accumulate(self.grad * factor); },
                        "scale");
}

Tensor softmax(const Tensor& x) {
  Matrix y = row_softmax(x.value());
  return make_op_result(x.shape(), y, {x},
                        [](Node& self) {
                          const Matrix& y = self.value;
                          Vector inner = self.grad.cwiseProduct(y).rowwise().sum();
                          Matrix dx = y.cwiseProduct(self.grad.colwise() - inner);
                          parent(self, 0).accumulate(dx);
                        },
                        "softmax");
}

Tensor logsigmoid(const Tensor& x) {
  Matrix y = x.value().unaryExpr([](double v) { return stable_logsigmoid(v); });
  return make_op_result(x.shape(), std::move(y), {x},
                        [](Node& self) {
                          const Matrix& in = parent(self, 0).value;
                          Matrix d = in.unaryExpr([](double v) { return stable_sigmoid(-v); });
                          parent(self, 0).accumulate(self.grad.cwiseProduct(d));
                        },
                        "logsigmoid");
}

Tensor softsign(const Tensor& x) {
  Matrix y = x.value().array() / (1.0 + x.value().array().abs());
  return make_op_result(x.shape(), std::move(y), {x},
                        [](Node& self) {
                          const Matrix& in = parent(self, 0).value;
                          Matrix d = (1.0 + in.array().abs()).square().inverse();
                          parent(self, 0).accumulate(self.grad.cwiseProduct(d));
                        },
                        "softsign");
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add needs identical shapes, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  return make_op_result(a.shape(), a.value() + b.value(), {a, b},
                        [](Node& self) {
                          parent(self, 0).accumulate(self.grad);
                          parent(self, 1).accumulate(self.grad);
                        },
                        "add");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul inner dimensions differ: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Shape shape{a.shape()[0], b.shape()[1]};
  Matrix y = a.value() * b.value();
  return make_op_result(std::move(shape), std::move(y), {a, b},
                        [](Node& self) {
                          Node& lhs = parent(self, 0);
                          Node& rhs = parent(self, 1);
                          if (lhs.requires_grad) lhs.accumulate(self.grad * rhs.value.transpose());
                          if (rhs.requires_grad) rhs.accumulate(lhs.value.transpose() * self.grad);
                        },
                        "matmul");
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  require_rank2(a, "cosine");
  if (a.shape() != b.shape()) {
    throw ShapeError("cosine needs identical shapes, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Vector a_norms, b_norms;
  Matrix an = normalize_rows(a.value(), a_norms);
  Matrix bn = normalize_rows(b.value(), b_norms);
  Matrix y = an * bn.transpose();
  Shape shape{a.shape()[0], a.shape()[0]};
  return make_op_result(
      std::move(shape), std::move(y), {a, b},
      [an, bn, a_norms, b_norms](Node& self) {
        parent(self, 0).accumulate(normalize_rows_backward(an, a_norms, self.grad * bn));
        parent(self, 1).accumulate(
            normalize_rows_backward(bn, b_norms, self.grad.transpose() * an));
      },
      "cosine");
}

Tensor euclidean(const Tensor& a, const Tensor& b) {
  require_rank2(a, "euclidean");
  if (a.shape() != b.shape()) {
    throw ShapeError("euclidean needs identical shapes, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Eigen::Index r = av.rows();
  Matrix y(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) y(i, j) = (av.row(i) - bv.row(j)).norm();
  }
  Shape shape{a.shape()[0], a.shape()[0]};
  return make_op_result(std::move(shape), y, {a, b},
                        [](Node& self) {
                          const Matrix& av = parent(self, 0).value;
                          const Matrix& bv = parent(self, 1).value;
                          // Subgradient 0 where the distance vanishes.
                          Matrix w = Matrix::Zero(self.value.rows(), self.value.cols());
                          for (Eigen::Index i = 0; i < w.rows(); ++i) {
                            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                              if (self.value(i, j) > 1e-12) w(i, j) = self.grad(i, j) / self.value(i, j);
                            }
                          }
                          Vector row_sums = w.rowwise().sum();
                          Vector col_sums = w.colwise().sum().transpose();
                          parent(self, 0).accumulate(row_sums.asDiagonal() * av - w * bv);
                          parent(self, 1).accumulate(col_sums.asDiagonal() * bv -
                                                     w.transpose() * av);
                        },
                        "euclidean");
}

Tensor apply_unary(UnaryOpKind op, const Tensor& x) {
  switch (op) {
    case UnaryOpKind::kNeg:
      return neg(x);
    case UnaryOpKind::kTranspose:
      return transpose(x);
    case UnaryOpKind::kScale:
      return scale(x);
    case UnaryOpKind::kSoftmax:
      return softmax(x);
    case UnaryOpKind::kLogSigmoid:
      return logsigmoid(x);
    case UnaryOpKind::kSoftsign:
      return softsign(x);
  }
  throw std::invalid_argument("unknown unary op");
}

Tensor apply_binary(BinaryOpKind op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case BinaryOpKind::kAdd:
      return add(a, b);
    case BinaryOpKind::kMatmul:
      return matmul(a, b);
    case BinaryOpKind::kCosine:
      return cosine(a, b);
    case BinaryOpKind::kEuclidean:
      return euclidean(a, b);
  }
  throw std::invalid_argument("unknown binary op");
}

Tensor linear(const Tensor& x, const Tensor& w) { return matmul(x, w); }

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel) {
  require_rank2(x, "depthwise_conv1d");
  require_rank2(kernel, "depthwise_conv1d");
  const Eigen::Index k = kernel.rows();
  if (k % 2 == 0) throw ShapeError("depthwise_conv1d needs an odd kernel size, got " + std::to_string(k));
  if (kernel.cols() != x.cols()) {
    throw ShapeError("depthwise_conv1d channel mismatch: " + shape_string(x.shape()) + " vs kernel " +
                     shape_string(kernel.shape()));
  }
  const Eigen::Index n = x.rows();
  const Eigen::Index pad = (k - 1) / 2;
  // Softmax along the kernel axis, independently per channel.
  Matrix weights = row_softmax(kernel.value().transpose()).transpose();
  const Matrix& xv = x.value();
  Matrix y = Matrix::Zero(n, x.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index src = t + j - pad;
      if (src < 0 || src >= n) continue;
      y.row(t) += weights.row(j).cwiseProduct(xv.row(src));
    }
  }
  return make_op_result(
      x.shape(), std::move(y), {x, kernel},
      [weights, pad](Node& self) {
        Node& input = parent(self, 0);
        Node& kern = parent(self, 1);
        const Eigen::Index n = self.grad.rows();
        const Eigen::Index k = weights.rows();
        Matrix dx = Matrix::Zero(n, self.grad.cols());
        Matrix dw = Matrix::Zero(k, self.grad.cols());
        for (Eigen::Index t = 0; t < n; ++t) {
          for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Index src = t + j - pad;
            if (src < 0 || src >= n) continue;
            dx.row(src) += self.grad.row(t).cwiseProduct(weights.row(j));
            dw.row(j) += self.grad.row(t).cwiseProduct(input.value.row(src));
          }
        }
        input.accumulate(dx);
        if (kern.requires_grad) {
          Eigen::RowVectorXd inner = dw.cwiseProduct(weights).colwise().sum();
          kern.accumulate(weights.cwiseProduct(dw.rowwise() - inner));
        }
      },
      "depthwise_conv1d");
}

Tensor glu(const Tensor& x) {
  require_rank2(x, "glu");
  if (x.cols() % 2 != 0) {
    throw ShapeError("glu needs an even last axis, got " + shape_string(x.shape()));
  }
  const Eigen::Index half = x.cols() / 2;
  Matrix gate = x.value().rightCols(half).unaryExpr([](double v) { return stable_sigmoid(v); });
  Matrix y = x.value().leftCols(half).cwiseProduct(gate);
  Shape shape{x.shape()[0], static_cast<std::size_t>(half)};
  return make_op_result(std::move(shape), std::move(y), {x},
                        [gate, half](Node& self) {
                          const Matrix& in = parent(self, 0).value;
                          Matrix dx(in.rows(), in.cols());
                          dx.leftCols(half) = self.grad.cwiseProduct(gate);
                          dx.rightCols(half) = self.grad.cwiseProduct(in.leftCols(half))
                                                   .cwiseProduct(gate)
                                                   .cwiseProduct((1.0 - gate.array()).matrix());
                          parent(self, 0).accumulate(dx);
                        },
                        "glu");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_rank2(x, "layer_norm");
  const Eigen::Index d = x.cols();
  if (d < 2) throw ShapeError("layer_norm needs at least 2 features");
  if (gain.numel() != static_cast<std::size_t>(d) || bias.numel() != static_cast<std::size_t>(d)) {
    throw ShapeError("layer_norm affine parameters must have " + std::to_string(d) + " entries");
  }
  const Matrix& xv = x.value();
  Vector mean = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mean;
  Vector inv_std = (centered.array().square().rowwise().mean() + kLayerNormEpsilon).rsqrt();
  Matrix normalized = inv_std.asDiagonal() * centered;
  Eigen::RowVectorXd g = Eigen::Map<const Eigen::RowVectorXd>(gain.value().data(), d);
  Eigen::RowVectorXd b = Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), d);
  Matrix y = (normalized.array().rowwise() * g.array()).rowwise() + b.array();
  return make_op_result(
      x.shape(), std::move(y), {x, gain, bias},
      [normalized, inv_std, g](Node& self) {
        const double d = static_cast<double>(self.grad.cols());
        Node& input = parent(self, 0);
        if (input.requires_grad) {
          Matrix dn = self.grad.array().rowwise() * g.array();
          Vector mean_dn = dn.rowwise().sum() / d;
          Vector mean_dn_n = dn.cwiseProduct(normalized).rowwise().sum() / d;
          Matrix dx = (dn.colwise() - mean_dn) - mean_dn_n.asDiagonal() * normalized;
          input.accumulate(inv_std.asDiagonal() * dx);
        }
        Matrix dg = self.grad.cwiseProduct(normalized).colwise().sum();
        Matrix db = self.grad.colwise().sum();
        parent(self, 1).accumulate(dg);
        parent(self, 2).accumulate(db);
      },
      "layer_norm");
}

Tensor masked_cross_entropy(const Tensor& logits, std::span<const int> targets,
                            const std::vector<bool>& mask) {
  require_rank2(logits, "masked_cross_entropy");
  const Eigen::Index n = logits.rows();
  if (targets.size() != static_cast<std::size_t>(n) || mask.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("masked_cross_entropy: targets and mask must have one entry per row");
  }
  std::size_t count = 0;
  for (bool m : mask) count += m ? 1 : 0;
  if (count == 0) throw std::invalid_argument("masked_cross_entropy: mask selects no positions");
  Matrix probs = row_softmax(logits.value());
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const int t = targets[i];
    if (t < 0 || t >= logits.cols()) throw std::out_of_range("masked_cross_entropy: target id out of range");
    const double m = logits.value().row(i).maxCoeff();
    const double lse = m + std::log((logits.value().row(i).array() - m).exp().sum());
    total += lse - logits.value()(i, t);
  }
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<int> tgt(targets.begin(), targets.end());
  return make_op_result(Shape{}, Matrix::Constant(1, 1, total * inv), {logits},
                        [probs, tgt, mask, inv](Node& self) {
                          Matrix d = Matrix::Zero(probs.rows(), probs.cols());
                          for (Eigen::Index i = 0; i < probs.rows(); ++i) {
                            if (!mask[i]) continue;
                            d.row(i) = probs.row(i);
                            d(i, tgt[i]) -= 1.0;
                          }
                          parent(self, 0).accumulate(d * (inv * self.grad(0, 0)));
                        },
                        "masked_cross_entropy");
}

Tensor sum(const Tensor& x) {
  return make_op_result(Shape{}, Matrix::Constant(1, 1, x.value().sum()), {x},
                        [](Node& self) {
                          const Node& in = parent(self, 0);
                          parent(self, 0).accumulate(
                              Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
                        },
                        "sum");
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_rank2(x, "add_row");
  if (row.numel() != static_cast<std::size_t>(x.cols())) {
    throw ShapeError("add_row: row of " + std::to_string(row.numel()) + " entries for " + shape_string(x.shape()));
  }
  Matrix y = x.value().rowwise() + Eigen::Map<const Eigen::RowVectorXd>(row.value().data(), x.cols());
  return make_op_result(x.shape(), std::move(y), {x, row},
                        [](Node& self) {
                          parent(self, 0).accumulate(self.grad);
                          Node& r = parent(self, 1);
                          if (r.requires_grad) {
                            Matrix g = self.grad.colwise().sum();
                            g.resize(r.value.rows(), r.value.cols());
                            r.accumulate(g);
                          }
                        },
                        "add_row");
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("multiply needs identical shapes, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  return make_op_result(a.shape(), a.value().cwiseProduct(b.value()), {a, b},
                        [](Node& self) {
                          Node& lhs = parent(self, 0);
                          Node& rhs = parent(self, 1);
                          if (lhs.requires_grad) lhs.accumulate(self.grad.cwiseProduct(rhs.value));
                          if (rhs.requires_grad) rhs.accumulate(self.grad.cwiseProduct(lhs.value));
                        },
                        "multiply");
}

Tensor scale_by(const Tensor& x, double factor) {
  return make_op_result(x.shape(), x.value() * factor, {x},
                        [factor](Node& self) { parent(self, 0).accumulate(self.grad * factor); },
                        "scale_by");
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "embedding");
  Matrix y(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw std::out_of_range("embedding: id out of range");
    y.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> rows(ids.begin(), ids.end());
  Shape shape{ids.size(), table.shape()[1]};
  return make_op_result(std::move(shape), std::move(y), {table},
                        [rows](Node& self) {
                          Node& tab = parent(self, 0);
                          Matrix d = Matrix::Zero(tab.value.rows(), tab.value.cols());
                          for (std::size_t i = 0; i < rows.size(); ++i) {
                            d.row(rows[i]) += self.grad.row(static_cast<Eigen::Index>(i));
                          }
                          tab.accumulate(d);
                        },
                        "embedding");
}

}  // namespace opnas

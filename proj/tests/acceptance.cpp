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


// Acceptance checks, one line per criterion. Each criterion rebuilds its
// inputs from fixed seeds and compares against an oracle written here rather
// than reusing library code paths.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "opnas/dag.hpp"
#include "opnas/metrics.hpp"
#include "opnas/search.hpp"
#include "opnas/supernet.hpp"
#include "opnas/trainer.hpp"
#include "opnas/ucb.hpp"
#include "test_support.hpp"

using namespace opnas;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double max_abs(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  return (a - b).cwiseAbs().maxCoeff();
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double top = m.row(i).maxCoeff();
    double z = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) z += std::exp(m(i, j) - top);
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = std::exp(m(i, j) - top) / z;
  }
  return out;
}

Tensor leaf(const Matrix& m) { return Tensor::from_matrix(m); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1 ---------------------------------------------------------------------------

Outcome gradients() {
  using testing::gradient_check;
  using testing::random_matrix;
  using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
  std::mt19937_64 rng(101);
  auto dim = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  struct Case {
    std::string name;
    Fn f;
    std::function<std::vector<Matrix>()> inputs;
  };
  auto unary = [&](std::string name, UnaryOpKind op) {
    return Case{std::move(name), [op](const std::vector<Tensor>& t) { return apply_unary(op, t[0]); },
                [&] { return std::vector<Matrix>{random_matrix(rng, dim(2, 6), dim(2, 5))}; }};
  };
  auto same_shape_binary = [&](std::string name, BinaryOpKind op) {
    return Case{std::move(name), [op](const std::vector<Tensor>& t) { return apply_binary(op, t[0], t[1]); },
                [&] {
                  const int r = dim(2, 6);
                  const int c = dim(2, 5);
                  return std::vector<Matrix>{random_matrix(rng, r, c), random_matrix(rng, r, c)};
                }};
  };
  std::vector<int> targets;
  std::vector<bool> mask;
  const std::vector<Case> cases{
      unary("neg", UnaryOpKind::kNeg),
      unary("transpose", UnaryOpKind::kTranspose),
      unary("scale", UnaryOpKind::kScale),
      unary("softmax", UnaryOpKind::kSoftmax),
      unary("logsigmoid", UnaryOpKind::kLogSigmoid),
      unary("softsign", UnaryOpKind::kSoftsign),
      same_shape_binary("add", BinaryOpKind::kAdd),
      {"matmul", [](const std::vector<Tensor>& t) { return matmul(t[0], t[1]); },
       [&] {
         const int k = dim(2, 5);
         return std::vector<Matrix>{random_matrix(rng, dim(2, 6), k), random_matrix(rng, k, dim(2, 5))};
       }},
      same_shape_binary("cosine", BinaryOpKind::kCosine),
      same_shape_binary("euclidean", BinaryOpKind::kEuclidean),
      {"linear", [](const std::vector<Tensor>& t) { return linear(t[0], t[1]); },
       [&] {
         const int k = dim(2, 5);
         return std::vector<Matrix>{random_matrix(rng, dim(2, 6), k), random_matrix(rng, k, dim(2, 5))};
       }},
      {"conv", [](const std::vector<Tensor>& t) { return depthwise_conv1d(t[0], t[1]); },
       [&] {
         const int c = dim(2, 4);
         return std::vector<Matrix>{random_matrix(rng, dim(3, 8), c), random_matrix(rng, 2 * dim(0, 3) + 1, c)};
       }},
      {"glu", [](const std::vector<Tensor>& t) { return glu(t[0]); },
       [&] { return std::vector<Matrix>{random_matrix(rng, dim(2, 6), 2 * dim(1, 4))}; }},
      {"layer_norm", [](const std::vector<Tensor>& t) { return layer_norm(t[0], t[1], t[2]); },
       [&] {
         const int c = dim(2, 6);
         return std::vector<Matrix>{random_matrix(rng, dim(2, 6), c), random_matrix(rng, 1, c), random_matrix(rng, 1, c)};
       }},
      {"loss", [&](const std::vector<Tensor>& t) { return masked_cross_entropy(t[0], targets, mask); },
       [&] {
         const int n = dim(2, 6);
         const int v = dim(3, 8);
         targets.assign(static_cast<std::size_t>(n), 0);
         mask.assign(static_cast<std::size_t>(n), false);
         for (int i = 0; i < n; ++i) {
           targets[static_cast<std::size_t>(i)] = dim(0, v - 1);
           mask[static_cast<std::size_t>(i)] = i == 0 || dim(0, 1) == 1;
         }
         return std::vector<Matrix>{random_matrix(rng, n, v)};
       }},
  };

  double worst = 0;
  std::string worst_name;
  int checks = 0;
  for (const auto& c : cases) {
    for (int rep = 0; rep < 20; ++rep) {
      const double err = gradient_check(c.f, c.inputs(), rng, 1e-5);
      ++checks;
      if (!(err <= worst)) {
        worst = err;
        worst_name = c.name;
      }
    }
  }
  return {worst < 1e-4, std::to_string(cases.size()) + " ops x 20 instances, worst relative error " + fmt(worst) +
                            " (" + worst_name + ")"};
}

// 2 ---------------------------------------------------------------------------

Outcome shape_inference() {
  long total = 0;
  long legal = 0;
  long disagreements = 0;
  testing::enumerate_dags(3, [&](const AttentionDag& dag) {
    ++total;
    const ShapeInference symbolic = infer_shapes(dag);
    const std::optional<int> concrete = testing::concrete_failure(dag, 7, 5);
    legal += symbolic.legal() ? 1 : 0;
    if (symbolic.legal() != !concrete.has_value()) {
      ++disagreements;
    } else if (!symbolic.legal() && symbolic.error->node != *concrete) {
      ++disagreements;
    }
  });
  return {disagreements == 0, std::to_string(total) + " dags (" + std::to_string(legal) + " legal), " +
                                  std::to_string(disagreements) + " disagreements"};
}

// 3 ---------------------------------------------------------------------------

Outcome standard_attention() {
  std::mt19937_64 rng(303);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 12)(rng);
    const int dh = std::uniform_int_distribution<int>(2, 16)(rng);
    const Matrix q = testing::random_matrix(rng, n, dh);
    const Matrix k = testing::random_matrix(rng, n, dh);
    const Matrix v = testing::random_matrix(rng, n, dh);
    const Matrix want = softmax_rows(q * k.transpose() / std::sqrt(static_cast<double>(dh))) * v;
    const Tensor got = evaluate_dag(standard_attention_dag(), {leaf(q), leaf(k), leaf(v), Tensor()});
    worst = std::max(worst, max_abs(got.value(), want));
  }
  return {worst < 1e-6, "50 random inputs, max abs error " + fmt(worst)};
}

// 4 ---------------------------------------------------------------------------

Outcome published_formulas() {
  std::mt19937_64 rng(404);
  const int n = 4;
  const int dh = 8;
  const double root = std::sqrt(static_cast<double>(dh));
  double worst = 0;
  bool shapes_ok = true;
  for (const auto& dag : {autobert_l2_dag(), autobert_l12_dag()}) {
    const ShapeInference s = infer_shapes(dag);
    shapes_ok = shapes_ok && static_cast<bool>(validate(dag)) && s.legal() &&
                s.shapes.back() == ShapeExpr::matrix(Dim::kSeq, Dim::kHead);
  }
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix q = testing::random_matrix(rng, n, dh);
    const Matrix k = testing::random_matrix(rng, n, dh);
    const Matrix v = testing::random_matrix(rng, n, dh);
    // L2: softmax(Q log(1 + exp(K^T)) / sqrt(d_h)) (K + Q).
    const Matrix soft_kt = k.transpose().unaryExpr([](double x) { return std::log1p(std::exp(x)); });
    const Matrix l2 = softmax_rows(q * soft_kt / root) * (k + q);
    // L12: softmax(Q (K / sqrt(d_h) + V)^T / sqrt(d_h)) V.
    const Matrix l12 = softmax_rows(q * (k / root + v).transpose() / root) * v;
    const Tensor got2 = evaluate_dag(autobert_l2_dag(), {leaf(q), leaf(k), Tensor(), Tensor()});
    const Tensor got12 = evaluate_dag(autobert_l12_dag(), {leaf(q), leaf(k), leaf(v), Tensor()});
    worst = std::max({worst, max_abs(got2.value(), l2), max_abs(got12.value(), l12)});
  }
  return {shapes_ok && worst < 1e-9, std::string(shapes_ok ? "both validate with n x d_h output" : "shape check failed") +
                                         ", max abs error " + fmt(worst) + " on 50 random 4x8 inputs"};
}

// 5 ---------------------------------------------------------------------------

Outcome ucb_arithmetic() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> unit(0, 1);
  double worst = 0;
  bool identity = true;
  for (int trial = 0; trial < 100; ++trial) {
    const double mean = unit(rng);
    const double alpha = trial % 10 == 0 ? 0.0 : 3 * unit(rng);
    const long total = std::uniform_int_distribution<long>(1, 5000)(rng);
    const long visits = std::uniform_int_distribution<long>(1, total)(rng);
    const double want = mean + alpha * std::sqrt(2 * std::log(static_cast<double>(total)) / static_cast<double>(visits));
    worst = std::max(worst, std::abs(ucb_value(mean, alpha, total, visits) - want));
    if (alpha == 0.0) identity = identity && ucb_value(mean, 0.0, total, visits) == mean;
  }

  UcbStats empty;
  const OpDistribution unseen = op_distribution(empty, 0, 0.5);
  bool uniform = true;
  for (double p : unseen) uniform = uniform && std::abs(p - 1.0 / kNumOps) < 1e-12;

  UcbStats stats;
  double worst_sum = std::abs(std::accumulate(unseen.begin(), unseen.end(), 0.0) - 1);
  for (int i = 0; i < 60; ++i) {
    stats.record(random_backbone(rng, 3), unit(rng));
    for (int pos = 0; pos < stats.max_path_length(); ++pos) {
      const OpDistribution d = op_distribution(stats, pos, 0.5);
      worst_sum = std::max(worst_sum, std::abs(std::accumulate(d.begin(), d.end(), 0.0) - 1));
    }
  }
  return {worst < 1e-6 && identity && uniform && worst_sum < 1e-9,
          "max abs error " + fmt(worst) + " on 100 tuples, alpha=0 identity " + (identity ? "holds" : "broken") +
              ", unseen distribution " + (uniform ? "uniform" : "not uniform") + ", worst |sum-1| " + fmt(worst_sum)};
}

// 6 ---------------------------------------------------------------------------

Outcome search_efficiency() {
  constexpr long kBudget = 300;
  constexpr double kTarget = 0.9;
  constexpr double kNever = std::numeric_limits<double>::infinity();
  auto evaluations_to_target = [&](SearchAlgorithm algorithm, std::uint64_t seed) {
    SearchConfig c;  // population 20, K 5, two children per parent, alpha 0.5, 12 layers
    c.seed = seed;
    c.max_evaluations = kBudget;
    c.max_iterations = 1000;
    c.patience = 0;
    SyntheticEvaluator landscape;
    const std::vector<Candidate> history = Search(c, algorithm, landscape).run();
    for (std::size_t i = 0; i < history.size(); ++i) {
      if (*history[i].score >= kTarget) return static_cast<double>(i + 1);
    }
    return kNever;
  };
  auto show = [&](double v) { return v == kNever ? std::string("-") : fmt(v, 6); };

  int wins = 0;
  std::vector<double> op;
  std::vector<double> ea;
  std::string table;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double o = evaluations_to_target(SearchAlgorithm::kOpNas, seed);
    const double r = evaluations_to_target(SearchAlgorithm::kRandomSearch, seed);
    const double e = evaluations_to_target(SearchAlgorithm::kVanillaEa, seed);
    wins += o < r ? 1 : 0;
    op.push_back(o);
    ea.push_back(e);
    table += " " + show(o) + "/" + show(r) + "/" + show(e);
  }
  const double op_median = median(op);
  const double ea_median = median(ea);
  return {wins >= 4 && op_median <= ea_median,
          "OP beats RS in " + std::to_string(wins) + "/5 seeds, median OP " + show(op_median) + " vs EA " +
              show(ea_median) + "; evaluations to 0.9 (op/rs/ea):" + table};
}

// 7 ---------------------------------------------------------------------------

// Trailing mean over a window, so single noisy batches do not decide.
std::vector<double> smoothed(const std::vector<double>& curve, int window) {
  std::vector<double> out(curve.size(), std::numeric_limits<double>::infinity());
  double acc = 0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    acc += curve[i];
    if (i >= static_cast<std::size_t>(window)) acc -= curve[i - static_cast<std::size_t>(window)];
    if (i + 1 >= static_cast<std::size_t>(window)) out[i] = acc / window;
  }
  return out;
}

Outcome biws_speedup() {
  constexpr int kWindow = 20;
  ModelConfig mc;
  mc.layers = 4;
  const Corpus corpus = synth_corpus(1, 512, mc.vocab, mc.seq_len);
  const TrainConfig tc;
  std::vector<double> ratios;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    // Pretrain a parent through the supernet and write it back.
    Supernet net(mc, seed);
    const BackboneSpec parent = autobert_zero_backbone(mc.layers);
    Model trained_parent(parent, mc, net.init_candidate(parent));
    mlm_pretrain(trained_parent, corpus, tc, seed);
    net.write_back(parent, trained_parent.parameters());

    // A one-edit child of the parent.
    std::mt19937_64 rng(seed);
    BackboneSpec child;
    do {
      child = mutate_inter(parent, {}, rng);
    } while (child == parent || !validate(child));

    const std::uint64_t train_seed = 1000 + seed;
    Model scratch(child, mc, fresh_parameters(child, mc, train_seed));
    const std::vector<double> scratch_curve = smoothed(mlm_pretrain(scratch, corpus, tc, train_seed), kWindow);
    const double target = scratch_curve.back();

    Model shared(child, mc, net.init_candidate(child));
    const std::vector<double> shared_curve = smoothed(mlm_pretrain(shared, corpus, tc, train_seed), kWindow);
    int reached = tc.steps + 1;
    for (std::size_t i = 0; i < shared_curve.size(); ++i) {
      if (shared_curve[i] <= target) {
        reached = static_cast<int>(i) + 1;
        break;
      }
    }
    ratios.push_back(static_cast<double>(reached) / tc.steps);
    detail += " " + std::to_string(reached);
  }
  const double m = median(ratios);
  return {m <= 0.5, "median steps ratio " + fmt(m, 3) + " (steps to the scratch run's step-" +
                        std::to_string(tc.steps) + " loss:" + detail + ")"};
}

// 8 ---------------------------------------------------------------------------

Outcome biws_round_trips() {
  ModelConfig mc;
  mc.layers = 2;
  mc.hidden = 32;
  Supernet net(mc, 8);
  const Matrix full = net.weight(param_names::conv(0, "kernel"));
  bool slices_exact = full.rows() == 65;
  for (int k : kKernelMenu) {
    const int first = 32 - (k - 1) / 2;
    const Matrix got = net.extract_conv_kernel(0, k);
    slices_exact = slices_exact && got.rows() == k && (got - full.middleRows(first, k)).cwiseAbs().maxCoeff() == 0 &&
                   first + (k - 1) == 64 - first;
  }

  std::mt19937_64 rng(808);
  double worst = 0;
  for (int rep = 0; rep < 5; ++rep) {
    for (int k : kKernelMenu) {
      Matrix t;
      if (k < kMaxKernel) t = Matrix::Identity(k, k) + 0.3 * testing::random_matrix(rng, k, k, -1, 1) / std::sqrt(k);
      const Matrix trained = testing::random_matrix(rng, k, mc.hidden);
      net.write_back_conv(1, trained, t, net.weight(param_names::conv(1, "proj")));
      const Matrix once = net.extract_conv_kernel(1, k);
      net.write_back_conv(1, once, t, net.weight(param_names::conv(1, "proj")));
      worst = std::max({worst, max_abs(once, trained), max_abs(net.extract_conv_kernel(1, k), trained)});
    }
    const std::array<InputNode, 3> qkv{InputNode::kQ, InputNode::kK, InputNode::kV};
    AttentionWeights w = net.extract_attention_weights(0, qkv);
    for (auto& head : w.projections) {
      for (auto& m : head) m = testing::random_matrix(rng, m.rows(), m.cols());
    }
    net.write_back_attention(0, w);
    const AttentionWeights back = net.extract_attention_weights(0, qkv);
    for (std::size_t h = 0; h < w.projections.size(); ++h) {
      for (std::size_t i = 0; i < w.projections[h].size(); ++i) {
        worst = std::max(worst, max_abs(back.projections[h][i], w.projections[h][i]));
      }
    }
  }
  return {slices_exact && worst < 1e-7, std::string("center slices ") + (slices_exact ? "exact" : "WRONG") +
                                            " for all 7 kernels, worst round-trip error " + fmt(worst)};
}

// 9 ---------------------------------------------------------------------------

double loop_cosine(const Matrix& x) {
  double total = 0;
  long pairs = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      double dot = 0, a = 0, b = 0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        dot += x(i, c) * x(j, c);
        a += x(i, c) * x(i, c);
        b += x(j, c) * x(j, c);
      }
      total += dot / std::sqrt(a * b);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double closed_form_residual(const Matrix& x) {
  Matrix fit(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) fit.col(c).setConstant(x.col(c).sum() / static_cast<double>(x.rows()));
  return (x - fit).norm() / x.norm();
}

Outcome token_uniformity() {
  std::mt19937_64 rng(909);
  double oracle_error = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = testing::random_matrix(rng, std::uniform_int_distribution<int>(2, 10)(rng), 8);
    oracle_error = std::max({oracle_error, std::abs(mean_pairwise_cosine(x) - loop_cosine(x)),
                             std::abs(relative_residual_norm(x) - closed_form_residual(x))});
  }

  ModelConfig mc;
  mc.layers = 4;
  const Corpus corpus = synth_corpus(1, 512, mc.vocab, mc.seq_len);
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Model attention(standard_backbone(mc.layers), mc, fresh_parameters(standard_backbone(mc.layers), mc, seed));
    Model hybrid(autobert_zero_backbone(mc.layers), mc, fresh_parameters(autobert_zero_backbone(mc.layers), mc, seed));
    mlm_pretrain(attention, corpus, TrainConfig{}, seed);
    mlm_pretrain(hybrid, corpus, TrainConfig{}, seed);
    const auto rows = uniformity_report({{"attention", seed, &attention}, {"hybrid", seed, &hybrid}}, corpus);
    wins += rows[0].cosine > rows[1].cosine ? 1 : 0;
    detail += " " + fmt(rows[0].cosine, 3) + "/" + fmt(rows[1].cosine, 3);
  }
  return {wins >= 2 && oracle_error < 1e-9, "attention-only cosine above hybrid in " + std::to_string(wins) +
                                                "/3 seeds (attention/hybrid:" + detail + "), oracle error " +
                                                fmt(oracle_error)};
}

// 10 --------------------------------------------------------------------------

Outcome parameter_accounting() {
  const ModelConfig mc;
  const long searched = count_params(autobert_zero_backbone(mc.layers), mc).attention;
  const long standard = count_params(standard_backbone(mc.layers), mc).attention;
  const long one_layer = count_params(standard_backbone(1), mc).attention;
  const long formula = 4L * mc.hidden * mc.head_dim() * mc.heads;
  return {searched < standard && one_layer == formula,
          "attention params " + std::to_string(searched) + " (searched) vs " + std::to_string(standard) +
              " (standard); one standard layer " + std::to_string(one_layer) + " vs 4*d*d_h*H = " +
              std::to_string(formula)};
}

// 11 --------------------------------------------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int quiet_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "opnas");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream sink;
  return cli::run(static_cast<int>(argv.size()), argv.data(), sink, sink);
}

Outcome determinism_and_resume() {
  const fs::path root = fs::temp_directory_path() / "opnas_acceptance_resume";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream(root / "synthetic.json") << R"({"evaluator": "synthetic", "search": {"patience": 0}})";
    std::ofstream(root / "biws.json") << R"({"evaluator": "train", "biws": true,
      "model": {"layers": 2, "hidden": 16, "heads": 2}, "train": {"steps": 20, "warmup_steps": 4},
      "corpus": {"size": 64}})";
  }
  struct Run {
    std::string name;
    std::vector<std::string> args;
    std::vector<std::string> files;
  };
  const std::vector<Run> runs{
      {"synthetic", {"search", "--seed", "11", "--iterations", "10", "--config", (root / "synthetic.json").string()},
       {"history.jsonl", "checkpoint.json", "best.json"}},
      {"biws", {"search", "--seed", "12", "--iterations", "3", "--population", "4", "--config", (root / "biws.json").string()},
       {"history.jsonl", "checkpoint.json", "best.json", "supernet.bin"}},
  };
  bool ok = true;
  std::string detail;
  for (const auto& run : runs) {
    auto with = [&](std::vector<std::string> extra, const std::string& dir) {
      std::vector<std::string> args = run.args;
      args.insert(args.end(), extra.begin(), extra.end());
      args.push_back("--out-dir");
      args.push_back((root / (run.name + "_" + dir)).string());
      return quiet_cli(args);
    };
    ok = ok && with({}, "a") == 0 && with({"--jobs", "3"}, "b") == 0;
    ok = ok && with({"--halt-after", "2"}, "cut") == 0 && with({"--resume"}, "cut") == 0;
    bool same = ok;
    for (const auto& f : run.files) {
      const std::string a = slurp(root / (run.name + "_a") / f);
      same = same && !a.empty() && a == slurp(root / (run.name + "_b") / f) && a == slurp(root / (run.name + "_cut") / f);
    }
    ok = ok && same;
    detail += " " + run.name + (same ? " identical" : " DIFFERS");
  }
  fs::remove_all(root);
  return {ok, "repeat, 3-worker and interrupted+resumed runs:" + detail};
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*check)();
};

const std::vector<Criterion> kCriteria{
    {1, "gradient correctness", gradients},
    {2, "shape inference matches execution", shape_inference},
    {3, "standard attention fidelity", standard_attention},
    {4, "published formula fidelity", published_formulas},
    {5, "UCB arithmetic", ucb_arithmetic},
    {6, "search efficiency direction", search_efficiency},
    {7, "weight-sharing speedup direction", biws_speedup},
    {8, "weight-sharing round trips", biws_round_trips},
    {9, "token-uniformity direction", token_uniformity},
    {10, "parameter accounting", parameter_accounting},
    {11, "determinism and resume", determinism_and_resume},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("-c,--criterion", only, "Run only these criteria (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.detail << " ["
              << fmt(seconds, 3) << " s]" << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}

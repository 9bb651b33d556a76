// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "diar/error.hpp"
#include "diar/neural.hpp"
#include "diar/synth.hpp"
#include "test_util.hpp"

using namespace diar;

namespace {

using Vec = std::vector<double>;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One direction of a plain LSTM over `xs`, visiting positions in `order`.
std::vector<Vec> run_direction(const LstmDirection& p, const std::vector<Vec>& xs, bool reverse) {
  const std::size_t h = static_cast<std::size_t>(p.w_rec.cols());
  const std::size_t in = static_cast<std::size_t>(p.w_in.cols());
  std::vector<Vec> out(xs.size(), Vec(h));
  Vec hs(h, 0.0), cs(h, 0.0);
  for (std::size_t step = 0; step < xs.size(); ++step) {
    const std::size_t t = reverse ? xs.size() - 1 - step : step;
    Vec z(4 * h);
    for (std::size_t g = 0; g < 4 * h; ++g) {
      double acc = p.bias(static_cast<Eigen::Index>(g));
      for (std::size_t k = 0; k < in; ++k) acc += p.w_in(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(k)) * xs[t][k];
      for (std::size_t k = 0; k < h; ++k) acc += p.w_rec(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(k)) * hs[k];
      z[g] = acc;
    }
    for (std::size_t k = 0; k < h; ++k) {
      const double i = sig(z[k]), f = sig(z[h + k]), g = std::tanh(z[2 * h + k]), o = sig(z[3 * h + k]);
      cs[k] = f * cs[k] + i * g;
      hs[k] = o * std::tanh(cs[k]);
    }
    out[t] = hs;
  }
  return out;
}

// Reference forward pass written directly from the cell equations.
Eigen::MatrixXd oracle_forward(const PairSeqModel& m, const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols) {
  Eigen::MatrixXd out(rows.rows(), cols.rows());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    std::vector<Vec> xs;
    for (Eigen::Index c = 0; c < cols.rows(); ++c) {
      Vec x;
      for (Eigen::Index k = 0; k < rows.cols(); ++k) x.push_back(rows(r, k));
      for (Eigen::Index k = 0; k < cols.cols(); ++k) x.push_back(cols(c, k));
      xs.push_back(x);
    }
    for (const BiLstmLayer& layer : m.layers) {
      const auto f = run_direction(layer.fwd, xs, false);
      const auto b = run_direction(layer.bwd, xs, true);
      for (std::size_t t = 0; t < xs.size(); ++t) {
        xs[t] = f[t];
        xs[t].insert(xs[t].end(), b[t].begin(), b[t].end());
      }
    }
    for (std::size_t t = 0; t < xs.size(); ++t) {
      double logit = m.fc2_b(0);
      for (Eigen::Index u = 0; u < m.fc1_w.rows(); ++u) {
        double a = m.fc1_b(u);
        for (std::size_t k = 0; k < xs[t].size(); ++k) a += m.fc1_w(u, static_cast<Eigen::Index>(k)) * xs[t][k];
        logit += m.fc2_w(0, u) * std::max(a, 0.0);
      }
      out(r, static_cast<Eigen::Index>(t)) = sig(logit);
    }
  }
  return out;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = g(rng);
  return m;
}

EmbeddingSequence random_sequence(std::mt19937_64& rng, int n, int d) {
  EmbeddingSequence s{"r", {}, random_matrix(rng, n, d)};
  for (int i = 0; i < n; ++i) s.segments.push_back({0.75 * i, 0.75 * i + 1.5});
  return s;
}

}  // namespace

TEST_CASE("build_pair_batch layout") {
  EmbeddingSequence s{"r", {{0, 1.5}, {0.75, 2.25}}, Eigen::MatrixXd(2, 1)};
  s.vectors << 3.0, 7.0;
  const PairBatch b = build_pair_batch(s);
  CHECK(b.rows() == 2);
  CHECK(b.cols() == 2);
  CHECK(b.element(0, 0) == Eigen::Vector2d(3, 3));
  CHECK(b.element(0, 1) == Eigen::Vector2d(3, 7));
  CHECK(b.element(1, 0) == Eigen::Vector2d(7, 3));
  CHECK(b.element(1, 1) == Eigen::Vector2d(7, 7));
  for (int j = 0; j < 2; ++j) CHECK(b.element(1, j).head(1) == b.element(1, 0).head(1));

  EmbeddingSequence one{"r", {{0, 1.5}}, Eigen::MatrixXd::Constant(1, 2, 4.0)};
  CHECK(build_pair_batch(one).element(0, 0) == Eigen::Vector4d(4, 4, 4, 4));
  CHECK_THROWS_AS(build_pair_batch(s, Eigen::MatrixXd::Ones(3, 3)), Error);
}

TEST_CASE("partition_blocks examples") {
  auto b = partition_blocks(400, 400);
  REQUIRE(b.size() == 1);
  CHECK(b[0].rows == IndexRange{0, 400});
  b = partition_blocks(900, 400);
  REQUIRE(b.size() == 9);
  for (const auto& blk : b) {
    CHECK(blk.rows.size() == 300);
    CHECK(blk.cols.size() == 300);
  }
  b = partition_blocks(401, 400);
  REQUIRE(b.size() == 4);
  CHECK(b[0].rows == IndexRange{0, 201});
  CHECK(b[3].rows == IndexRange{201, 401});
  CHECK_THROWS_AS(partition_blocks(0, 4), Error);
  CHECK_THROWS_AS(partition_blocks(4, 0), Error);
}

TEST_CASE("partition_blocks covers every cell exactly once") {
  for (int max_block : {1, 7, 64, 400}) {
    const int n_max = max_block == 1 ? 60 : 1000;
    for (int n = 1; n <= n_max; ++n) {
      const auto blocks = partition_blocks(n, max_block);
      const int chunks = (n + max_block - 1) / max_block;
      REQUIRE(blocks.size() == static_cast<std::size_t>(chunks) * chunks);
      // 2D difference array of block coverage.
      std::vector<int> diff(static_cast<std::size_t>(n + 1) * (n + 1), 0);
      auto at = [&](int r, int c) -> int& { return diff[static_cast<std::size_t>(r) * (n + 1) + c]; };
      int min_len = n, max_len = 0;
      for (const auto& b : blocks) {
        REQUIRE(b.rows.size() <= max_block);
        min_len = std::min(min_len, b.rows.size());
        max_len = std::max(max_len, b.rows.size());
        ++at(b.rows.begin, b.cols.begin);
        --at(b.rows.end, b.cols.begin);
        --at(b.rows.begin, b.cols.end);
        ++at(b.rows.end, b.cols.end);
      }
      CHECK(max_len - min_len <= 1);
      bool exact = true;
      for (int r = 0; r <= n; ++r)
        for (int c = 0; c <= n; ++c) {
          if (r > 0) at(r, c) += at(r - 1, c);
          if (c > 0) at(r, c) += at(r, c - 1);
          if (r > 0 && c > 0) at(r, c) -= at(r - 1, c - 1);
          if (r < n && c < n && at(r, c) != 1) exact = false;
        }
      REQUIRE(exact);
    }
  }
}

TEST_CASE("forward matches the straight-line oracle") {
  std::mt19937_64 rng(42);
  const PairSeqDims dims{2, 3, 5, 2};
  const PairSeqModel m = PairSeqModel::initialize(dims, 9);
  for (int n : {1, 3, 6}) {
    const EmbeddingSequence s = random_sequence(rng, n, 2);
    const Eigen::MatrixXd got = forward(m, build_pair_batch(s));
    const Eigen::MatrixXd want = oracle_forward(m, s.vectors, s.vectors);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10);
  }
  // Rectangular block.
  const Eigen::MatrixXd rows = random_matrix(rng, 2, 2), cols = random_matrix(rng, 5, 2);
  PairBatch b{rows, cols, std::nullopt};
  CHECK((forward(m, b) - oracle_forward(m, rows, cols)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("forward output range and zero model") {
  std::mt19937_64 rng(1);
  const EmbeddingSequence s = random_sequence(rng, 7, 3);
  const PairSeqDims dims{3, 4, 4, 2};
  const Eigen::MatrixXd p = forward(PairSeqModel::initialize(dims, 2), build_pair_batch(s));
  CHECK(p.minCoeff() > 0.0);
  CHECK(p.maxCoeff() < 1.0);
  const Eigen::MatrixXd z = forward(PairSeqModel::zeros(dims), build_pair_batch(s));
  CHECK((z.array() == 0.5).all());
  EmbeddingSequence bad = s;
  bad.vectors(0, 0) = std::nan("");
  PairBatch nb{bad.vectors, bad.vectors, std::nullopt};
  CHECK_THROWS_AS(forward(PairSeqModel::initialize(dims, 2), nb), Error);
}

TEST_CASE("backward direction mirrors the forward direction on the reversed sequence") {
  std::mt19937_64 rng(4);
  const PairSeqDims dims{2, 3, 4, 2};
  const PairSeqModel m = PairSeqModel::initialize(dims, 5);
  // Swap directions; deeper layers and fc1 see their input halves swapped.
  PairSeqModel swapped = m;
  const Eigen::Index h = dims.hidden;
  auto swap_halves = [h](Eigen::MatrixXd& w) {
    Eigen::MatrixXd t = w;
    w.leftCols(h) = t.rightCols(h);
    w.rightCols(h) = t.leftCols(h);
  };
  for (std::size_t l = 0; l < swapped.layers.size(); ++l) {
    std::swap(swapped.layers[l].fwd, swapped.layers[l].bwd);
    if (l > 0) {
      swap_halves(swapped.layers[l].fwd.w_in);
      swap_halves(swapped.layers[l].bwd.w_in);
    }
  }
  swap_halves(swapped.fc1_w);

  const Eigen::MatrixXd rows = random_matrix(rng, 3, 2), cols = random_matrix(rng, 6, 2);
  const Eigen::MatrixXd rev = cols.colwise().reverse();
  const PairBatch a{rows, cols, std::nullopt}, b{rows, rev, std::nullopt};
  const auto ha = forward_hidden_states(m, a);
  const auto hb = forward_hidden_states(swapped, b);
  const int R = 3, C = 6;
  for (std::size_t l = 0; l < ha.size(); ++l)
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < R; ++r) {
        const auto col_a = ha[l].col(c * R + r);
        const auto col_b = hb[l].col((C - 1 - c) * R + r);
        CHECK((col_a.tail(h) - col_b.head(h)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((col_a.head(h) - col_b.tail(h)).cwiseAbs().maxCoeff() < 1e-14);
      }
  const Eigen::MatrixXd pa = forward(m, a), pb = forward(swapped, b);
  CHECK((pa - pb.rowwise().reverse()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bce_loss") {
  Eigen::Matrix2d p, t;
  p << 0.9, 0.1, 0.1, 0.9;
  t << 1, 0, 0, 1;
  CHECK(bce_loss(p, t) == doctest::Approx(0.10536).epsilon(1e-4));
  CHECK(bce_loss(t, t) < 1e-11);
  const Eigen::Matrix2d half = Eigen::Matrix2d::Constant(0.5);
  CHECK(bce_loss(half, t) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(half, Eigen::Matrix2d::Ones()) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(bce_loss(half, Eigen::Matrix3d::Ones()), Error);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(12);
  const PairSeqDims dims{2, 3, 4, 2};
  const PairSeqModel m = PairSeqModel::initialize(dims, 77);
  const EmbeddingSequence s = random_sequence(rng, 4, 2);
  const std::vector<std::string> labels{"a", "b", "a", "c"};
  const PairBatch batch = build_pair_batch(s, reference_matrix(labels));
  const double worst = test::max_gradient_error(m, batch, 1e-5);
  CHECK(worst < 1e-4);
}

TEST_CASE("learning rate schedule") {
  const TrainConfig cfg;
  CHECK(learning_rate(cfg, 1) == 0.01);
  CHECK(learning_rate(cfg, 40) == 0.01);
  CHECK(learning_rate(cfg, 41) == doctest::Approx(0.001));
  CHECK(learning_rate(cfg, 80) == doctest::Approx(0.001));
  CHECK(learning_rate(cfg, 81) == doctest::Approx(0.0001));
  CHECK(learning_rate(cfg, 100) == doctest::Approx(0.0001));
}

namespace {

std::vector<TrainingExample> synthetic_examples(int count, int dim, std::uint64_t seed) {
  std::vector<TrainingExample> out;
  for (int i = 0; i < count; ++i) {
    SynthConfig sc;
    sc.num_speakers = 2;
    sc.duration = 20;
    sc.embedding_dim = dim;
    sc.seed = seed + static_cast<std::uint64_t>(i);
    Conversation c = gen_conversation(sc);
    out.push_back({c.embeddings, c.labels});
  }
  return out;
}

bool same_parameters(const PairSeqModel& a, const PairSeqModel& b) {
  std::vector<double> va, vb;
  a.for_each_tensor([&](const std::string&, const double* p, Eigen::Index r, Eigen::Index c) { va.insert(va.end(), p, p + r * c); });
  b.for_each_tensor([&](const std::string&, const double* p, Eigen::Index r, Eigen::Index c) { vb.insert(vb.end(), p, p + r * c); });
  return va.size() == vb.size() && std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("training with zero learning rate leaves parameters unchanged") {
  const auto ex = synthetic_examples(2, 3, 100);
  TrainConfig cfg;
  cfg.lr0 = 0.0;
  cfg.epochs = 2;
  cfg.seed = 8;
  const PairSeqDims dims{3, 3, 4, 2};
  const TrainResult r = train(ex, cfg, dims);
  CHECK(same_parameters(r.model, PairSeqModel::initialize(dims, 8)));
  CHECK(r.history.size() == 2);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const auto ex = synthetic_examples(3, 3, 200);
  TrainConfig cfg;
  cfg.lr0 = 0.5;
  cfg.epochs = 20;
  cfg.max_block = 16;
  cfg.seed = 3;
  const PairSeqDims dims{3, 4, 4, 2};
  const TrainResult a = train(ex, cfg, dims);
  const TrainResult b = train(ex, cfg, dims);
  CHECK(same_parameters(a.model, b.model));
  REQUIRE(a.history.size() == 20);
  CHECK(a.history.back().mean_loss < a.history.front().mean_loss);
  for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].mean_loss == b.history[e].mean_loss);

  TrainConfig sampled = cfg;
  sampled.sample_block = 8;
  sampled.samples_per_recording = 3;
  const TrainResult c = train(ex, sampled, dims);
  const TrainResult d = train(ex, sampled, dims);
  CHECK(same_parameters(c.model, d.model));
  CHECK_FALSE(same_parameters(a.model, c.model));
}

TEST_CASE("single-speaker corpus drives predictions above 0.9") {
  std::mt19937_64 rng(6);
  std::vector<TrainingExample> ex;
  for (int i = 0; i < 4; ++i) {
    EmbeddingSequence s = random_sequence(rng, 10, 2);
    ex.push_back({s, std::vector<std::string>(10, "only")});
  }
  TrainConfig cfg;
  cfg.lr0 = 1.0;
  cfg.epochs = 50;
  cfg.seed = 1;
  const TrainResult r = train(ex, cfg, PairSeqDims{2, 3, 4, 2});
  double mean = 0;
  for (const auto& e : ex) mean += predict_matrix(r.model, e.sequence, 400).mean();
  CHECK(mean / 4 > 0.9);
}

TEST_CASE("training rejects bad input") {
  const auto ex = synthetic_examples(1, 3, 300);
  TrainConfig cfg;
  CHECK_THROWS_AS(train({}, cfg, PairSeqDims{3, 2, 2, 1}), Error);
  CHECK_THROWS_AS(train(ex, cfg, PairSeqDims{4, 2, 2, 1}), Error);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(ex, cfg, PairSeqDims{3, 2, 2, 1}), Error);
  TrainConfig diverge;
  diverge.lr0 = std::numeric_limits<double>::infinity();
  diverge.epochs = 3;
  CHECK_THROWS_AS(train(ex, diverge, PairSeqDims{3, 2, 2, 1}), Error);
}

TEST_CASE("predict_matrix pastes block outputs") {
  std::mt19937_64 rng(10);
  const PairSeqDims dims{2, 3, 3, 1};
  const PairSeqModel m = PairSeqModel::initialize(dims, 4);
  const EmbeddingSequence small = random_sequence(rng, 30, 2);
  CHECK(predict_matrix(m, small, 400) == forward(m, build_pair_batch(small)));

  const EmbeddingSequence big = random_sequence(rng, 900, 2);
  const SimilarityMatrix s = predict_matrix(m, big, 400);
  const auto blocks = partition_blocks(900, 400);
  REQUIRE(blocks.size() == 9);
  for (const auto& b : blocks) {
    const Eigen::MatrixXd part = forward(m, block_batch(big.vectors, b));
    CHECK(s.block(b.rows.begin, b.cols.begin, b.rows.size(), b.cols.size()) == part);
  }
  CHECK(s.minCoeff() > 0.0);
  CHECK(s.maxCoeff() < 1.0);
}

TEST_CASE("parameter tensors") {
  const PairSeqDims dims{2, 3, 4, 2};
  const PairSeqModel m = PairSeqModel::initialize(dims, 1);
  // Layer 0: 4h x 2d, layer 1: 4h x 2h, both plus 4h x h and 4h, per direction.
  const std::size_t lstm = 2 * (12 * 4 + 12 * 3 + 12) + 2 * (12 * 6 + 12 * 3 + 12);
  CHECK(m.parameter_count() == lstm + 4 * 6 + 4 + 4 + 1);
  int count = 0;
  m.for_each_tensor([&](const std::string&, const double*, Eigen::Index, Eigen::Index) { ++count; });
  CHECK(count == 2 * 6 + 4);
  // Forget-gate bias starts at one.
  CHECK((m.layers[0].fwd.bias.segment(3, 3).array() == 1.0).all());
}

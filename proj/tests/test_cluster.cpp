// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "diar/cluster.hpp"
#include "diar/error.hpp"
#include "diar/eval.hpp"

using namespace diar;

namespace {

Eigen::MatrixXd block_matrix(const std::vector<int>& sizes) {
  const int n = std::accumulate(sizes.begin(), sizes.end(), 0);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  int at = 0;
  for (int b : sizes) {
    s.block(at, at, b, b).setOnes();
    at += b;
  }
  return s;
}

// True when the two labelings induce the same partition.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [it1, new1] = ab.emplace(a[i], b[i]);
    auto [it2, new2] = ba.emplace(b[i], a[i]);
    if (it1->second != b[i] || it2->second != a[i]) return false;
  }
  return true;
}

std::vector<int> block_labels(const std::vector<int>& sizes) {
  std::vector<int> out;
  for (std::size_t b = 0; b < sizes.size(); ++b) out.insert(out.end(), static_cast<std::size_t>(sizes[b]), static_cast<int>(b));
  return out;
}

}  // namespace

TEST_CASE("laplacian examples") {
  Eigen::Matrix2d s;
  s << 0, 1, 1, 0;
  Eigen::Matrix2d l;
  l << 1, -1, -1, 1;
  Laplacian lap = laplacian(s);
  CHECK(lap.degrees == Eigen::Vector2d(1, 1));
  CHECK(lap.l_norm == Eigen::MatrixXd(l));
  CHECK(laplacian(Eigen::Matrix2d::Ones()).l_norm == Eigen::MatrixXd(l));

  Eigen::Matrix4d two;
  two << 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0;
  Eigen::Matrix4d want = Eigen::Matrix4d::Zero();
  want.topLeftCorner(2, 2) = l;
  want.bottomRightCorner(2, 2) = l;
  CHECK(laplacian(two).l_norm == Eigen::MatrixXd(want));

  Eigen::Matrix3d iso;
  iso << 1, 0.5, 0, 0.5, 1, 0, 0, 0, 1;
  lap = laplacian(iso);
  CHECK(lap.degrees(2) == 0.0);
  CHECK(lap.l_norm.row(2).isZero());
}

TEST_CASE("estimate_k examples") {
  CHECK(estimate_k(std::vector<double>{0, 2}, 0.5) == 1);
  CHECK(estimate_k(std::vector<double>{0, 0, 1.3, 2.0}, 0.5) == 2);
  CHECK(estimate_k(std::vector<double>{0.6, 1.1}, 0.5) == 1);
}

TEST_CASE("spectral embedding matches the random-walk Laplacian") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 9;
    Eigen::MatrixXd s(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = u(rng);
    const SpectralEmbedding emb = spectral_embedding(s);
    const Eigen::MatrixXd l = laplacian(s).l_norm;
    CHECK(emb.eigenvalues.minCoeff() > -1e-9);
    CHECK(emb.eigenvalues.maxCoeff() < 2.0 + 1e-9);
    for (int k = 0; k < n; ++k) {
      const Eigen::VectorXd v = emb.vectors.col(k);
      CHECK((l * v - emb.eigenvalues(k) * v).norm() < 1e-9 * std::max(1.0, v.norm()));
    }
    for (int k = 1; k < n; ++k) CHECK(emb.eigenvalues(k) >= emb.eigenvalues(k - 1));
  }
}

TEST_CASE("spectral clustering recovers binary blocks") {
  const std::vector<std::vector<int>> cases{{3, 2}, {1}, {1, 1}, {2, 1, 3}, {6, 6, 6, 6, 6}, {1, 2, 3, 4, 5}};
  for (const auto& sizes : cases) {
    const Eigen::MatrixXd s = block_matrix(sizes);
    const SpectralEmbedding emb = spectral_embedding(s);
    int zeros = 0;
    for (Eigen::Index k = 0; k < emb.eigenvalues.size(); ++k) zeros += std::abs(emb.eigenvalues(k)) < 1e-9;
    CHECK(zeros == static_cast<int>(sizes.size()));
    for (double beta : {0.1, 0.5, 0.9}) {
      SpectralConfig cfg;
      cfg.beta = beta;
      CHECK(same_partition(spectral_cluster(s, cfg), block_labels(sizes)));
    }
  }
  CHECK(spectral_cluster(Eigen::MatrixXd::Ones(1, 1), {}) == std::vector<int>{0});
}

TEST_CASE("spectral clustering on a noisy three-speaker matrix") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  const std::vector<int> truth{0, 1, 2, 0, 0, 1, 2, 2, 1, 0, 1, 2};
  const int n = static_cast<int>(truth.size());
  Eigen::MatrixXd s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = (truth[i] == truth[j] ? 0.9 : 0.1) + noise(rng);
  const auto labels = spectral_cluster(s, {});
  // Best relabeling by brute force over the 3! permutations.
  std::vector<int> perm{0, 1, 2};
  int best = 0;
  do {
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += perm[static_cast<std::size_t>(labels[i])] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(best == n);
}

TEST_CASE("spectral clustering honours k_override and clamps k") {
  SpectralConfig cfg;
  cfg.k_override = 2;
  const auto labels = spectral_cluster(Eigen::MatrixXd::Ones(4, 4), cfg);
  CHECK(*std::max_element(labels.begin(), labels.end()) == 1);
  cfg.k_override = 9;
  const auto all = spectral_cluster(Eigen::MatrixXd::Ones(3, 3), cfg);
  CHECK(canonical_labels(all) == std::vector<int>{0, 1, 2});
}

TEST_CASE("kmeans inertia never increases within a restart") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  Eigen::MatrixXd pts(60, 3);
  for (Eigen::Index k = 0; k < pts.size(); ++k) pts.data()[k] = g(rng);
  const KMeansResult r = kmeans(pts, 4, 10, 300, 7);
  REQUIRE(r.histories.size() == 10);
  for (const auto& h : r.histories) {
    REQUIRE_FALSE(h.empty());
    for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1] + 1e-12);
  }
  double best = r.histories[0].back();
  for (const auto& h : r.histories) best = std::min(best, h.back());
  CHECK(r.inertia == doctest::Approx(best));
  const KMeansResult again = kmeans(pts, 4, 10, 300, 7);
  CHECK(again.labels == r.labels);
}

TEST_CASE("ahc examples") {
  Eigen::Matrix3d s;
  s << 1, 0.9, 0.1, 0.9, 1, 0.1, 0.1, 0.1, 1;
  CHECK(same_partition(ahc(s, {0.5}), {0, 0, 1}));
  CHECK(same_partition(ahc(s, {0.95}), {0, 1, 2}));
  CHECK(same_partition(ahc(s, {0.0}), {0, 0, 0}));
  const auto merges = ahc_merges(s);
  REQUIRE(merges.size() == 2);
  CHECK(merges[0].a == 0);
  CHECK(merges[0].b == 1);
  CHECK(merges[0].similarity == doctest::Approx(0.9));
  CHECK(merges[1].similarity == doctest::Approx(0.1));
}

namespace {

// Quadratic-per-merge average linkage on the max-symmetrized matrix.
std::vector<int> naive_ahc(const Eigen::MatrixXd& s0, double alpha) {
  const Eigen::MatrixXd s = s0.cwiseMax(s0.transpose());
  const int n = static_cast<int>(s.rows());
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < n; ++i) clusters.push_back({i});
  while (clusters.size() > 1) {
    double best = -1;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double sum = 0;
        for (int i : clusters[a])
          for (int j : clusters[b]) sum += s(i, j);
        const double avg = sum / static_cast<double>(clusters[a].size() * clusters[b].size());
        if (avg > best) best = avg, ba = a, bb = b;
      }
    if (best < alpha) break;
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<long>(bb));
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (int i : clusters[c]) labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
  return labels;
}

}  // namespace

TEST_CASE("ahc agrees with a naive implementation and is permutation equivariant") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 150; ++trial) {
    const int n = 1 + trial % 15;
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = u(rng);
    const double alpha = u(rng);
    const auto labels = ahc(s, {alpha});
    CHECK(same_partition(labels, naive_ahc(s, alpha)));
    const int clusters = *std::max_element(labels.begin(), labels.end()) + 1;
    std::size_t applied = 0;
    const auto merges = ahc_merges(s);
    while (applied < merges.size() && merges[applied].similarity >= alpha) ++applied;
    CHECK(static_cast<int>(applied) == n - clusters);
    for (std::size_t m = 1; m < merges.size(); ++m) CHECK(merges[m].similarity <= merges[m - 1].similarity + 1e-12);

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd ps(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) ps(i, j) = s(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    const auto plabels = ahc(ps, {alpha});
    std::vector<int> back(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) back[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = plabels[static_cast<std::size_t>(i)];
    CHECK(same_partition(back, labels));
  }
}

TEST_CASE("spectral clustering is permutation equivariant") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> noise(0.0, 0.1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> truth;
    for (int i = 0; i < 15; ++i) truth.push_back(static_cast<int>(rng() % 3));
    const int n = 15;
    Eigen::MatrixXd s(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = (truth[i] == truth[j] ? 0.85 : 0.05) + noise(rng);
    std::vector<int> perm(15);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd ps(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) ps(i, j) = s(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    const auto a = spectral_cluster(s, {});
    const auto pb = spectral_cluster(ps, {});
    std::vector<int> back(15);
    for (int i = 0; i < n; ++i) back[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = pb[static_cast<std::size_t>(i)];
    CHECK(same_partition(a, back));
  }
}

TEST_CASE("canonical_labels") {
  CHECK(canonical_labels(std::vector<int>{5, 5, 2, 9, 2}) == std::vector<int>{0, 0, 1, 2, 1});
  CHECK(canonical_labels(std::vector<int>{}).empty());
}

TEST_CASE("clustering rejects bad matrices") {
  CHECK_THROWS_AS(laplacian(Eigen::MatrixXd(0, 0)), Error);
  CHECK_THROWS_AS(spectral_cluster(Eigen::MatrixXd::Ones(2, 3), {}), Error);
  CHECK_THROWS_AS(ahc(-Eigen::MatrixXd::Ones(2, 2), {}), Error);
}

namespace {

struct TuneFixture {
  std::vector<EmbeddingSequence> seqs;
  std::vector<Annotation> refs;
  std::vector<SimilarityMatrix> mats;
};

TuneFixture tune_fixture() {
  TuneFixture f;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> noise(0.0, 0.3);
  for (int r = 0; r < 3; ++r) {
    EmbeddingSequence seq{"r" + std::to_string(r), {}, Eigen::MatrixXd::Ones(16, 1)};
    Annotation ref{seq.recording_id, {}};
    std::vector<int> truth;
    for (int i = 0; i < 16; ++i) {
      seq.segments.push_back({1.5 * i, 1.5 * i + 1.5});
      truth.push_back((i / 4) % 2);
      ref.regions.push_back({{1.5 * i, 1.5 * i + 1.5}, truth.back() ? "B" : "A"});
    }
    Eigen::MatrixXd s(16, 16);
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = (truth[i] == truth[j] ? 0.6 : 0.1) + noise(rng);
    f.seqs.push_back(seq);
    f.refs.push_back(ref);
    f.mats.push_back(s);
  }
  return f;
}

}  // namespace

TEST_CASE("tune_threshold returns the grid point with the lowest DER") {
  const TuneFixture f = tune_fixture();
  std::vector<TuneItem> items;
  for (int r = 0; r < 3; ++r) items.push_back({&f.mats[r], &f.refs[r], &f.seqs[r]});
  const std::vector<double> grid{0.9, 0.1, 0.3, 0.5, 0.7, 0.2, 0.4, 0.6, 0.8};
  for (Backend backend : {Backend::kSpectral, Backend::kAhc}) {
    const TuneResult t = tune_threshold(items, backend, grid);
    REQUIRE(t.grid.size() == grid.size());
    CHECK(std::is_sorted(t.grid.begin(), t.grid.end()));
    // Independent evaluation of every grid point.
    double best = 1e9;
    double best_threshold = 0;
    for (double g : t.grid) {
      DerReport total;
      for (int r = 0; r < 3; ++r) {
        std::vector<int> labels;
        if (backend == Backend::kAhc) {
          labels = ahc(f.mats[r], {g});
        } else {
          SpectralConfig sc;
          sc.beta = g;
          labels = spectral_cluster(f.mats[r], sc);
        }
        total += der(f.refs[r], labels_to_annotation(f.seqs[r].segments, labels, f.seqs[r].recording_id));
      }
      if (total.der < best) best = total.der, best_threshold = g;
    }
    CHECK(t.threshold == best_threshold);
    CHECK(*std::min_element(t.ders.begin(), t.ders.end()) == doctest::Approx(best));
  }
  const std::vector<double> single{0.37};
  CHECK(tune_threshold(items, Backend::kAhc, single).threshold == 0.37);
  CHECK_THROWS_AS(tune_threshold(items, Backend::kAhc, std::vector<double>{}), Error);
}

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/cluster.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>

#include "diar/error.hpp"

namespace diar {

namespace {

void check_square_nonnegative(const SimilarityMatrix& s, const char* who) {
  if (s.rows() < 1 || s.rows() != s.cols())
    throw parameter_error(std::string(who) + ": matrix must be square and nonempty");
  if (!s.allFinite()) throw parameter_error(std::string(who) + ": non-finite entries");
  if ((s.array() < 0.0).any()) throw parameter_error(std::string(who) + ": entries must be nonnegative");
}

Eigen::MatrixXd zero_diagonal(const SimilarityMatrix& s) {
  Eigen::MatrixXd a = s;
  a.diagonal().setZero();
  return a;
}

}  // namespace

Laplacian laplacian(const SimilarityMatrix& s) {
  check_square_nonnegative(s, "laplacian");
  const Eigen::MatrixXd a = zero_diagonal(s);
  Laplacian out;
  out.degrees = a.rowwise().sum();
  const Eigen::Index n = a.rows();
  out.l_norm = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = out.degrees(i);
    if (d <= 0.0) continue;
    out.l_norm.row(i) = -a.row(i) / d;
    out.l_norm(i, i) = 1.0;
  }
  return out;
}

int estimate_k(std::span<const double> eigenvalues, double beta) {
  int k = 0;
  for (double v : eigenvalues)
    if (v < beta) ++k;
  return std::max(k, 1);
}

SpectralEmbedding spectral_embedding(const SimilarityMatrix& s) {
  check_square_nonnegative(s, "spectral clustering");
  const Eigen::MatrixXd a = zero_diagonal(s);
  const Eigen::Index n = a.rows();
  const Eigen::VectorXd degrees = a.rowwise().sum();
  Eigen::VectorXd inv_sqrt(n);
  Eigen::VectorXd back(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inv_sqrt(i) = degrees(i) > 0.0 ? 1.0 / std::sqrt(degrees(i)) : 0.0;
    back(i) = degrees(i) > 0.0 ? inv_sqrt(i) : 1.0;
  }
  Eigen::MatrixXd sym = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  for (Eigen::Index i = 0; i < n; ++i) sym(i, i) = degrees(i) > 0.0 ? 1.0 : 0.0;
  sym = 0.5 * (sym + sym.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw numerical_error("spectral clustering: eigensolver failed");
  SpectralEmbedding out;
  out.eigenvalues = eig.eigenvalues();
  out.vectors = back.asDiagonal() * eig.eigenvectors();
  return out;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int restarts, int max_iter, std::uint64_t seed) {
  const auto n = static_cast<int>(points.rows());
  if (n < 1) throw parameter_error("kmeans: no points");
  if (k < 1 || restarts < 1 || max_iter < 1) throw parameter_error("kmeans: k, restarts and max_iter must be positive");
  k = std::min(k, n);
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < restarts; ++restart) {
    // k-means++ seeding.
    Eigen::MatrixXd centers(k, points.cols());
    std::uniform_int_distribution<int> first(0, n - 1);
    centers.row(0) = points.row(first(rng));
    Eigen::VectorXd d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      int pick = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        pick = n - 1;
        for (int i = 0; i < n; ++i) {
          target -= d2(i);
          if (target < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = first(rng);
      }
      centers.row(c) = points.row(pick);
      d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::vector<double> history;
    for (int iter = 0; iter < max_iter; ++iter) {
      bool changed = false;
      double inertia = 0.0;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double dist = (points.row(i) - centers.row(c)).squaredNorm();
          if (dist < bestd) {
            bestd = dist;
            arg = c;
          }
        }
        inertia += bestd;
        if (labels[static_cast<std::size_t>(i)] != arg) {
          labels[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      history.push_back(inertia);
      if (!changed) break;
      // Empty clusters keep their previous center.
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
    const double final_inertia = history.back();
    best.histories.push_back(history);
    if (final_inertia < best.inertia) {
      best.inertia = final_inertia;
      best.labels = labels;
      best.restart = restart;
    }
  }
  return best;
}

std::vector<int> canonical_labels(std::span<const int> labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
    out.push_back(it->second);
  }
  return out;
}

std::vector<int> cluster_embedding(const SpectralEmbedding& emb, int k, const SpectralConfig& cfg) {
  const auto n = static_cast<int>(emb.vectors.rows());
  k = std::clamp(k, 1, n);
  if (k == 1) return std::vector<int>(static_cast<std::size_t>(n), 0);
  const Eigen::MatrixXd p = emb.vectors.leftCols(k);
  const KMeansResult km = kmeans(p, k, cfg.kmeans_restarts, cfg.kmeans_max_iter, cfg.seed);
  return canonical_labels(km.labels);
}

std::vector<int> spectral_cluster(const SimilarityMatrix& s, const SpectralConfig& cfg) {
  if (s.rows() == 1) return {0};
  const SpectralEmbedding emb = spectral_embedding(s);
  const std::vector<double> ev(emb.eigenvalues.data(), emb.eigenvalues.data() + emb.eigenvalues.size());
  const int k = cfg.k_override ? *cfg.k_override : estimate_k(ev, cfg.beta);
  return cluster_embedding(emb, k, cfg);
}

std::vector<Merge> ahc_merges(const SimilarityMatrix& s) {
  check_square_nonnegative(s, "ahc");
  const auto n = static_cast<int>(s.rows());
  Eigen::MatrixXd sim = s.cwiseMax(s.transpose());
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  std::vector<int> best(static_cast<std::size_t>(n), -1);
  std::vector<double> best_sim(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());

  auto refresh = [&](int i) {
    best[static_cast<std::size_t>(i)] = -1;
    best_sim[static_cast<std::size_t>(i)] = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i || !active[static_cast<std::size_t>(j)]) continue;
      if (sim(i, j) > best_sim[static_cast<std::size_t>(i)]) {
        best_sim[static_cast<std::size_t>(i)] = sim(i, j);
        best[static_cast<std::size_t>(i)] = j;
      }
    }
  };
  for (int i = 0; i < n; ++i) refresh(i);

  std::vector<Merge> merges;
  merges.reserve(static_cast<std::size_t>(std::max(n - 1, 0)));
  for (int step = 0; step + 1 < n; ++step) {
    // Smallest row whose best partner achieves the global maximum; its best
    // partner is the smallest such column, so ties resolve to the
    // lexicographically smallest pair.
    int a = -1;
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      if (a < 0 || best_sim[static_cast<std::size_t>(i)] > best_sim[static_cast<std::size_t>(a)]) a = i;
    }
    int b = best[static_cast<std::size_t>(a)];
    const double value = best_sim[static_cast<std::size_t>(a)];
    if (b < a) std::swap(a, b);
    merges.push_back({a, b, value});

    const auto sa = static_cast<double>(size[static_cast<std::size_t>(a)]);
    const auto sb = static_cast<double>(size[static_cast<std::size_t>(b)]);
    for (int k = 0; k < n; ++k) {
      if (!active[static_cast<std::size_t>(k)] || k == a || k == b) continue;
      const double v = (sa * sim(a, k) + sb * sim(b, k)) / (sa + sb);
      sim(a, k) = v;
      sim(k, a) = v;
    }
    active[static_cast<std::size_t>(b)] = 0;
    size[static_cast<std::size_t>(a)] += size[static_cast<std::size_t>(b)];

    for (int k = 0; k < n; ++k) {
      if (!active[static_cast<std::size_t>(k)]) continue;
      const int bk = best[static_cast<std::size_t>(k)];
      if (k == a || bk == a || bk == b) {
        refresh(k);
      } else if (sim(k, a) > best_sim[static_cast<std::size_t>(k)] ||
                 (sim(k, a) == best_sim[static_cast<std::size_t>(k)] && a < bk)) {
        best_sim[static_cast<std::size_t>(k)] = sim(k, a);
        best[static_cast<std::size_t>(k)] = a;
      }
    }
  }
  return merges;
}

std::vector<int> cut_merges(int n, std::span<const Merge> merges, double alpha) {
  std::vector<int> parent(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (const Merge& m : merges) {
    if (m.similarity < alpha) break;
    parent[static_cast<std::size_t>(find(m.b))] = find(m.a);
  }
  std::vector<int> roots(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) roots[static_cast<std::size_t>(i)] = find(i);
  return canonical_labels(roots);
}

std::vector<int> ahc(const SimilarityMatrix& s, const AhcConfig& cfg) {
  const std::vector<Merge> merges = ahc_merges(s);
  return cut_merges(static_cast<int>(s.rows()), merges, cfg.alpha);
}

}  // namespace diar

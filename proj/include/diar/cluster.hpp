// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "diar/core.hpp"

namespace diar {

struct SpectralConfig {
  double beta = 0.5;  // eigenvalue threshold for the cluster count
  int kmeans_restarts = 10;
  int kmeans_max_iter = 300;
  std::uint64_t seed = 0;
  std::optional<int> k_override;
};

enum class Linkage { kAverage };

struct AhcConfig {
  double alpha = 0.5;  // stop merging below this inter-cluster similarity
  Linkage linkage = Linkage::kAverage;
};

struct Laplacian {
  Eigen::MatrixXd l_norm;   // D^-1 (D - S) with the diagonal of S zeroed
  Eigen::VectorXd degrees;
};

// Zero-degree nodes get an all-zero row: each one is its own component with
// eigenvalue 0.
Laplacian laplacian(const SimilarityMatrix& s);

// Number of eigenvalues below beta, at least 1.
int estimate_k(std::span<const double> eigenvalues, double beta);

// Spectrum of D^-1 L computed through the symmetric form D^-1/2 L D^-1/2.
// Eigenvalues ascend; column j of `vectors` is the D^-1 L eigenvector for
// eigenvalue j.
struct SpectralEmbedding {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd vectors;
};
SpectralEmbedding spectral_embedding(const SimilarityMatrix& s);

struct KMeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
  int restart = 0;                               // index of the winning restart
  std::vector<std::vector<double>> histories;    // inertia per iteration, per restart
};

// Lloyd's algorithm with k-means++ seeding; the lowest inertia wins, ties go
// to the earlier restart.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int restarts, int max_iter, std::uint64_t seed);

// Clusters the rows of the first k eigenvectors. Labels are renumbered in
// order of first appearance.
std::vector<int> cluster_embedding(const SpectralEmbedding& emb, int k, const SpectralConfig& cfg);

std::vector<int> spectral_cluster(const SimilarityMatrix& s, const SpectralConfig& cfg);

struct Merge {
  int a = 0;  // surviving cluster id (the smaller member index)
  int b = 0;
  double similarity = 0.0;
};

// Full average-linkage merge sequence down to one cluster. The input is
// symmetrized by elementwise max.
std::vector<Merge> ahc_merges(const SimilarityMatrix& s);

// Applies merges in order until the first one below alpha.
std::vector<int> cut_merges(int n, std::span<const Merge> merges, double alpha);

std::vector<int> ahc(const SimilarityMatrix& s, const AhcConfig& cfg);

// Renumbers labels 0, 1, ... by order of first appearance.
std::vector<int> canonical_labels(std::span<const int> labels);

}  // namespace diar

namespace diar {

struct Annotation;
struct EmbeddingSequence;

enum class Backend { kSpectral, kAhc };

struct TuneItem {
  const SimilarityMatrix* matrix = nullptr;  // as fed to the clustering backend
  const Annotation* reference = nullptr;
  const EmbeddingSequence* sequence = nullptr;
};

struct TuneResult {
  double threshold = 0.0;
  std::vector<double> grid;  // sorted ascending
  std::vector<double> ders;  // aggregate DER per grid point
};

// Runs clustering, hypothesis construction and DER scoring for every grid
// value and returns the value with the lowest aggregate DER (ties go to the
// smaller threshold). `base` supplies the k-means settings for spectral.
TuneResult tune_threshold(std::span<const TuneItem> items, Backend backend, std::span<const double> grid,
                          const SpectralConfig& base = {});

struct TunedThresholds {
  TuneResult spectral;  // beta
  TuneResult ahc;       // alpha
};

TunedThresholds tune_thresholds(std::span<const TuneItem> items, std::span<const double> beta_grid,
                                std::span<const double> alpha_grid, const SpectralConfig& base = {});

}  // namespace diar

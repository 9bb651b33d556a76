// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diar/core.hpp"

namespace diar {

struct PairSeqModel;

enum class ScorerKind { kCosine, kPlda, kNeural };

std::string_view to_string(ScorerKind kind);
ScorerKind parse_scorer_kind(std::string_view name);

// g(x) = 1 / (1 + exp(-5x)).
double logistic_normalize(double x);

// (1 + cos(a, b)) / 2. Throws a parameter error for a zero vector.
double cosine_score(const Eigen::Ref<const Eigen::VectorXd>& a,
                    const Eigen::Ref<const Eigen::VectorXd>& b);

// Two-covariance PLDA in the whitened, length-normalized space.
//
// Raw vectors x are mapped to u = normalize(W (x - mean)); the model then
// treats u as center + speaker term (covariance between_cov) + residual
// (covariance within_cov). W has one row per retained principal direction,
// so it is r x d with r the rank of the training data.
struct PldaModel {
  Eigen::VectorXd mean;                 // d
  Eigen::MatrixXd whitening_transform;  // r x d
  Eigen::VectorXd center;               // r, mean of the normalized training data
  Eigen::MatrixXd between_cov;          // r x r
  Eigen::MatrixXd within_cov;           // r x r

  int input_dim() const { return static_cast<int>(mean.size()); }
  int effective_dim() const { return static_cast<int>(whitening_transform.rows()); }

  // Whiten and length-normalize one raw vector.
  Eigen::VectorXd transform(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // Precomputes the quadratic form used by plda_score. Must be called after
  // the covariance fields change; plda_fit and the checkpoint loader do it.
  void prepare();

  // Cached scoring terms: llr(u, v) = 0.5 (u'Au + v'Av) + u'Bv + offset,
  // with u and v taken relative to `center`.
  Eigen::MatrixXd self_term;
  Eigen::MatrixXd cross_term;
  double offset = 0.0;
};

struct LabeledVector {
  Eigen::VectorXd vector;
  std::string speaker;
};

inline constexpr double kPldaRegularization = 1e-6;

// Closed-form two-covariance scatter estimates: covariance of speaker means
// and pooled within-speaker covariance. Both get eps * I added.
struct TwoCovariance {
  Eigen::VectorXd center;
  Eigen::MatrixXd between;
  Eigen::MatrixXd within;
};
TwoCovariance estimate_two_covariance(const Eigen::MatrixXd& vectors,
                                      std::span<const std::string> speakers,
                                      double eps = kPldaRegularization);

PldaModel plda_fit(std::span<const LabeledVector> train);

// Same-speaker vs different-speaker log-likelihood ratio for two vectors that
// are already in model space, under N(0, [[B+W, B], [B, B+W]]) versus
// N(0, [[B+W, 0], [0, B+W]]).
double plda_llr(const Eigen::MatrixXd& between, const Eigen::MatrixXd& within,
                const Eigen::Ref<const Eigen::VectorXd>& u,
                const Eigen::Ref<const Eigen::VectorXd>& v);

double plda_score(const PldaModel& model, const Eigen::Ref<const Eigen::VectorXd>& x_i,
                  const Eigen::Ref<const Eigen::VectorXd>& x_j);

struct ScorerModels {
  const PldaModel* plda = nullptr;
  const PairSeqModel* neural = nullptr;
  int max_block = 400;
};

// Full n x n matrix with all entries in [0, 1]. PLDA scores go through
// logistic_normalize; the neural scorer is evaluated block-wise.
SimilarityMatrix similarity_matrix(const EmbeddingSequence& seq, ScorerKind scorer,
                                   const ScorerModels& models = {});

// Elementwise weighted sum; weights are renormalized to sum to one.
SimilarityMatrix fuse(std::span<const SimilarityMatrix> matrices, std::span<const double> weights);

}  // namespace diar

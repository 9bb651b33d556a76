// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/scoring.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "diar/error.hpp"
#include "diar/neural.hpp"

namespace diar {

std::string_view to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::kCosine: return "cosine";
    case ScorerKind::kPlda: return "plda";
    case ScorerKind::kNeural: return "lstm";
  }
  return "?";
}

ScorerKind parse_scorer_kind(std::string_view name) {
  if (name == "cosine") return ScorerKind::kCosine;
  if (name == "plda") return ScorerKind::kPlda;
  if (name == "lstm" || name == "neural") return ScorerKind::kNeural;
  throw config_error("unknown scorer '" + std::string(name) + "'");
}

double logistic_normalize(double x) { return 1.0 / (1.0 + std::exp(-5.0 * x)); }

double cosine_score(const Eigen::Ref<const Eigen::VectorXd>& a,
                    const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw parameter_error("cosine_score: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw parameter_error("cosine_score: zero-norm vector");
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return 0.5 * (1.0 + c);
}

namespace {

Eigen::VectorXd unit_or_zero(Eigen::VectorXd u) {
  const double n = u.norm();
  if (n > 0.0) u /= n;
  return u;
}

}  // namespace

Eigen::VectorXd PldaModel::transform(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != mean.size())
    throw parameter_error("plda: vector dimension " + std::to_string(x.size()) +
                          " does not match model dimension " + std::to_string(mean.size()));
  return unit_or_zero(whitening_transform * (x - mean));
}

void PldaModel::prepare() {
  const Eigen::Index r = between_cov.rows();
  const Eigen::MatrixXd total = between_cov + within_cov;
  Eigen::MatrixXd same(2 * r, 2 * r);
  same << total, between_cov, between_cov, total;
  Eigen::LDLT<Eigen::MatrixXd> same_ldlt(same);
  Eigen::LDLT<Eigen::MatrixXd> total_ldlt(total);
  if (same_ldlt.info() != Eigen::Success || total_ldlt.info() != Eigen::Success)
    throw numerical_error("plda: covariance factorization failed");
  const Eigen::MatrixXd same_inv = same_ldlt.solve(Eigen::MatrixXd::Identity(2 * r, 2 * r));
  const Eigen::MatrixXd total_inv = total_ldlt.solve(Eigen::MatrixXd::Identity(r, r));
  self_term = total_inv - same_inv.topLeftCorner(r, r);
  self_term = 0.5 * (self_term + self_term.transpose()).eval();
  cross_term = -same_inv.topRightCorner(r, r);
  cross_term = 0.5 * (cross_term + cross_term.transpose()).eval();
  const double logdet_same = same_ldlt.vectorD().array().log().sum();
  const double logdet_diff = 2.0 * total_ldlt.vectorD().array().log().sum();
  offset = 0.5 * (logdet_diff - logdet_same);
}

TwoCovariance estimate_two_covariance(const Eigen::MatrixXd& vectors,
                                      std::span<const std::string> speakers, double eps) {
  const Eigen::Index d = vectors.cols();
  std::map<std::string, std::vector<Eigen::Index>> by_speaker;
  for (std::size_t i = 0; i < speakers.size(); ++i)
    by_speaker[speakers[i]].push_back(static_cast<Eigen::Index>(i));

  Eigen::MatrixXd means(static_cast<Eigen::Index>(by_speaker.size()), d);
  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(d, d);
  Eigen::Index s = 0;
  for (const auto& [name, rows] : by_speaker) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
    for (auto i : rows) m += vectors.row(i).transpose();
    m /= static_cast<double>(rows.size());
    for (auto i : rows) {
      const Eigen::VectorXd r = vectors.row(i).transpose() - m;
      within.noalias() += r * r.transpose();
    }
    means.row(s++) = m.transpose();
  }
  TwoCovariance out;
  out.center = means.colwise().mean().transpose();
  const Eigen::MatrixXd centered = means.rowwise() - out.center.transpose();
  out.between = centered.transpose() * centered / static_cast<double>(means.rows());
  out.within = within / static_cast<double>(vectors.rows());
  out.between += eps * Eigen::MatrixXd::Identity(d, d);
  out.within += eps * Eigen::MatrixXd::Identity(d, d);
  return out;
}

PldaModel plda_fit(std::span<const LabeledVector> train) {
  if (train.empty()) throw training_error("plda_fit: empty training set");
  const Eigen::Index d = train.front().vector.size();
  std::map<std::string, int> counts;
  for (const auto& lv : train) {
    if (lv.vector.size() != d) throw parameter_error("plda_fit: inconsistent vector dimensions");
    ++counts[lv.speaker];
  }
  if (counts.size() < 2) throw training_error("plda_fit: need at least 2 speakers");
  bool repeated = false;
  for (const auto& [name, c] : counts) repeated = repeated || c >= 2;
  if (!repeated) throw training_error("plda_fit: need at least one speaker with 2 or more vectors");

  const auto n = static_cast<Eigen::Index>(train.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = train[static_cast<std::size_t>(i)].vector.transpose();

  PldaModel model;
  model.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd xc = x.rowwise() - model.mean.transpose();
  const Eigen::MatrixXd cov = xc.transpose() * xc / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw numerical_error("plda_fit: PCA eigensolver failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double top = lambda(d - 1);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < d; ++k)
    if (top > 0.0 && lambda(k) > top * 1e-10) ++rank;
  if (rank == 0) throw training_error("plda_fit: training data has rank 0 (all vectors equal)");

  // Principal directions in descending variance order, scaled to unit variance.
  model.whitening_transform.resize(rank, d);
  for (Eigen::Index k = 0; k < rank; ++k) {
    const Eigen::Index src = d - 1 - k;
    model.whitening_transform.row(k) = eig.eigenvectors().col(src).transpose() / std::sqrt(lambda(src));
  }

  Eigen::MatrixXd u(n, rank);
  std::vector<std::string> speakers;
  speakers.reserve(train.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    u.row(i) = model.transform(x.row(i).transpose()).transpose();
    speakers.push_back(train[static_cast<std::size_t>(i)].speaker);
  }
  const TwoCovariance tc = estimate_two_covariance(u, speakers);
  model.center = tc.center;
  model.between_cov = tc.between;
  model.within_cov = tc.within;
  model.prepare();
  return model;
}

double plda_llr(const Eigen::MatrixXd& between, const Eigen::MatrixXd& within,
                const Eigen::Ref<const Eigen::VectorXd>& u,
                const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Eigen::Index r = between.rows();
  if (u.size() != r || v.size() != r) throw parameter_error("plda_llr: dimension mismatch");
  const Eigen::MatrixXd total = between + within;
  Eigen::MatrixXd same(2 * r, 2 * r);
  same << total, between, between, total;
  Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(2 * r, 2 * r);
  diff.topLeftCorner(r, r) = total;
  diff.bottomRightCorner(r, r) = total;
  Eigen::VectorXd z(2 * r);
  z << u, v;
  auto log_density = [&](const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw numerical_error("plda_llr: covariance not positive definite");
    const Eigen::VectorXd w = llt.matrixL().solve(z);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (w.squaredNorm() + logdet + static_cast<double>(2 * r) * std::log(2.0 * std::numbers::pi));
  };
  return log_density(same) - log_density(diff);
}

double plda_score(const PldaModel& model, const Eigen::Ref<const Eigen::VectorXd>& x_i,
                  const Eigen::Ref<const Eigen::VectorXd>& x_j) {
  const Eigen::VectorXd u = model.transform(x_i) - model.center;
  const Eigen::VectorXd v = model.transform(x_j) - model.center;
  return 0.5 * (u.dot(model.self_term * u) + v.dot(model.self_term * v)) +
         u.dot(model.cross_term * v) + model.offset;
}

SimilarityMatrix similarity_matrix(const EmbeddingSequence& seq, ScorerKind scorer,
                                   const ScorerModels& models) {
  seq.validate();
  const Eigen::Index n = seq.size();
  switch (scorer) {
    case ScorerKind::kCosine: {
      Eigen::VectorXd norms = seq.vectors.rowwise().norm();
      if ((norms.array() == 0.0).any()) throw parameter_error("cosine scorer: zero-norm embedding");
      const Eigen::MatrixXd unit = norms.cwiseInverse().asDiagonal() * seq.vectors;
      SimilarityMatrix s = unit * unit.transpose();
      s = (0.5 * (1.0 + s.array().min(1.0).max(-1.0))).matrix();
      return s;
    }
    case ScorerKind::kPlda: {
      if (models.plda == nullptr) throw config_error("plda scorer requires a trained PLDA model");
      const PldaModel& m = *models.plda;
      if (seq.dim() != m.input_dim()) throw parameter_error("plda scorer: embedding dimension mismatch");
      Eigen::MatrixXd u(n, m.effective_dim());
      for (Eigen::Index i = 0; i < n; ++i)
        u.row(i) = (m.transform(seq.vectors.row(i).transpose()) - m.center).transpose();
      const Eigen::VectorXd self = (u * m.self_term).cwiseProduct(u).rowwise().sum();
      Eigen::MatrixXd llr = u * m.cross_term * u.transpose();
      llr = (llr.array().colwise() + 0.5 * self.array()).rowwise() + 0.5 * self.transpose().array();
      llr.array() += m.offset;
      // Force exact symmetry; the two GEMM routes can differ in the last ulp.
      llr = 0.5 * (llr + llr.transpose()).eval();
      return llr.unaryExpr([](double x) { return logistic_normalize(x); });
    }
    case ScorerKind::kNeural: {
      if (models.neural == nullptr) throw config_error("lstm scorer requires a trained model");
      return predict_matrix(*models.neural, seq, models.max_block);
    }
  }
  throw config_error("unknown scorer");
}

SimilarityMatrix fuse(std::span<const SimilarityMatrix> matrices, std::span<const double> weights) {
  if (matrices.size() < 2) throw parameter_error("fuse: need at least two matrices");
  if (weights.size() != matrices.size()) throw parameter_error("fuse: one weight per matrix required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw parameter_error("fuse: weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw parameter_error("fuse: weights must not all be zero");
  const auto n = matrices.front().rows();
  SimilarityMatrix out = SimilarityMatrix::Zero(n, n);
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    if (matrices[k].rows() != n || matrices[k].cols() != n)
      throw parameter_error("fuse: matrix size mismatch");
    if (weights[k] == 0.0) continue;
    out += (weights[k] / total) * matrices[k];
  }
  return out;
}

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/enhance.hpp"

#include "diar/error.hpp"

namespace diar {

EnhanceResult enhance_matrix(const SimilarityMatrix& s) {
  if (s.rows() < 1 || s.rows() != s.cols()) throw parameter_error("enhance: matrix must be square and nonempty");
  if (!s.allFinite()) throw parameter_error("enhance: non-finite entries");
  if ((s.array() < 0.0).any()) throw parameter_error("enhance: entries must be nonnegative");

  const Eigen::MatrixXd y = s.cwiseMax(s.transpose());
  Eigen::MatrixXd diffused(y.rows(), y.cols());
  diffused.noalias() = y * y.transpose();

  EnhanceResult out;
  for (Eigen::Index i = 0; i < diffused.rows(); ++i) {
    const double m = diffused.row(i).maxCoeff();
    if (m > 0.0) {
      diffused.row(i) /= m;
    } else {
      diffused.row(i).setZero();
      out.zero_rows.push_back(static_cast<int>(i));
    }
  }
  out.matrix = std::move(diffused);
  return out;
}

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <numeric>
#include <random>

#include "diar/enhance.hpp"
#include "diar/error.hpp"

using namespace diar;

TEST_CASE("enhance worked example") {
  Eigen::Matrix2d s;
  s << 1, 0.2, 0.6, 1;
  const Eigen::MatrixXd e = enhance(s);
  CHECK(e(0, 0) == doctest::Approx(1.0));
  CHECK(e(1, 1) == doctest::Approx(1.0));
  CHECK(e(0, 1) == doctest::Approx(1.2 / 1.36).epsilon(1e-12));
  CHECK(e(1, 0) == doctest::Approx(0.88235).epsilon(1e-5));
}

TEST_CASE("enhance keeps a binary block-diagonal matrix") {
  Eigen::Matrix3d s;
  s << 1, 1, 0, 1, 1, 0, 0, 0, 1;
  CHECK(enhance(s) == Eigen::MatrixXd(s));
  CHECK(enhance(Eigen::MatrixXd::Constant(1, 1, 0.3)) == Eigen::MatrixXd::Ones(1, 1));
}

TEST_CASE("enhance flags zero rows and rejects negative input") {
  Eigen::Matrix3d s;
  s << 1, 0, 0, 0, 0, 0, 0, 0, 1;
  const EnhanceResult r = enhance_matrix(s);
  REQUIRE(r.zero_rows == std::vector<int>{1});
  CHECK(r.matrix.row(1).isZero());
  CHECK(r.matrix(0, 0) == 1.0);
  s(0, 2) = -0.1;
  CHECK_THROWS_AS(enhance(s), Error);
}

TEST_CASE("enhance properties on random matrices") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 12;
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = u(rng);
    const Eigen::MatrixXd e = enhance(s);
    CHECK(e.minCoeff() >= 0.0);
    CHECK(e.maxCoeff() <= 1.0 + 1e-15);
    for (int i = 0; i < n; ++i) CHECK(e.row(i).maxCoeff() == 1.0);

    // Independent route: max-symmetrize, Y Y^T, divide rows by their max.
    const Eigen::MatrixXd y = s.cwiseMax(s.transpose());
    const Eigen::MatrixXd diffused = y * y.transpose();
    CHECK(diffused.isApprox(diffused.transpose()));
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(diffused).eigenvalues().minCoeff() > -1e-10);
    Eigen::MatrixXd want = diffused;
    for (int i = 0; i < n; ++i) want.row(i) /= diffused.row(i).maxCoeff();
    CHECK((e - want).cwiseAbs().maxCoeff() < 1e-12);

    // Permutation equivariance.
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(n);
    for (int i = 0; i < n; ++i) p.indices()(i) = perm[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd ps = p * s * p.transpose();
    CHECK((enhance(ps) - p * e * p.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

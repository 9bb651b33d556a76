// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>

#include "diar/neural.hpp"

namespace diar::test {

// Largest relative difference between analytic and central-difference
// gradients over every parameter. Relative error uses a 1e-6 floor.
inline double max_gradient_error(const PairSeqModel& model, const PairBatch& batch, double step) {
  const LossAndGradient lg = loss_and_gradient(model, batch);
  std::vector<const double*> grads;
  lg.gradient.for_each_tensor([&](const std::string&, const double* p, Eigen::Index, Eigen::Index) { grads.push_back(p); });
  PairSeqModel probe = model;
  std::vector<std::pair<double*, Eigen::Index>> params;
  probe.for_each_tensor([&](const std::string&, double* p, Eigen::Index r, Eigen::Index c) { params.push_back({p, r * c}); });
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index k = 0; k < params[t].second; ++k) {
      double& w = params[t].first[k];
      const double saved = w;
      w = saved + step;
      const double up = bce_loss(forward(probe, batch), *batch.targets);
      w = saved - step;
      const double down = bce_loss(forward(probe, batch), *batch.targets);
      w = saved;
      const double numeric = (up - down) / (2 * step);
      const double analytic = grads[t][k];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace diar::test

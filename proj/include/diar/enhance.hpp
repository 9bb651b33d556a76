// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "diar/core.hpp"

namespace diar {

struct EnhanceResult {
  SimilarityMatrix matrix;
  std::vector<int> zero_rows;  // rows left at zero after diffusion
};

// Symmetrize by elementwise max, diffuse with Y Y^T, then divide each row by
// its maximum. Entries must be nonnegative.
EnhanceResult enhance_matrix(const SimilarityMatrix& s);

inline SimilarityMatrix enhance(const SimilarityMatrix& s) { return enhance_matrix(s).matrix; }

}  // namespace diar

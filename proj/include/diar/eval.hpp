// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diar/core.hpp"

namespace diar {

// Hypothesis timeline from per-segment cluster labels. Where windows with
// different labels overlap, the boundary goes to the middle of the overlap.
Annotation labels_to_annotation(std::span<const Segment> segments, std::span<const int> labels,
                                const std::string& recording_id = {});

struct Assignment {
  std::vector<int> row_to_col;  // -1 when unmatched
  double total = 0.0;
};

// Maximum-weight one-to-one assignment (Hungarian method) on a rows x cols
// weight matrix. The total is summed over rows in increasing order.
Assignment max_weight_assignment(const Eigen::MatrixXd& weights);

// Hypothesis label -> reference label maximizing total overlap duration.
std::map<std::string, std::optional<std::string>> optimal_mapping(const Annotation& reference,
                                                                  const Annotation& hypothesis);

struct DerReport {
  double scored_time = 0.0;
  double false_alarm = 0.0;
  double missed = 0.0;
  double confusion = 0.0;
  double der = 0.0;        // confusion / scored_time
  bool undefined = false;  // scored_time was zero

  DerReport& operator+=(const DerReport& other);
};

inline constexpr double kDefaultCollar = 0.25;

// Speaker-confusion DER. Collars of +-collar around every reference region
// boundary are not scored, nor (with exclude_overlap) is time where two or
// more reference speakers talk at once.
DerReport der(const Annotation& reference, const Annotation& hypothesis, double collar = kDefaultCollar,
              bool exclude_overlap = true);

// Seeded shuffle, then round-robin into k folds.
std::vector<std::vector<std::string>> kfold_split(std::span<const std::string> ids, int k, std::uint64_t seed);

struct TTestResult {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t_value = 0.0;  // (mean_b - mean_a) / pooled standard error
  bool h0_accepted = true;
  bool degenerate = false;  // pooled variance was zero
  int size = 0;             // samples per system
};

inline constexpr double kTCritical = 1.96;

// Two-sample Student's t with pooled variance; H0 is accepted when
// |t| < 1.96.
TTestResult student_t_test(std::span<const double> a, std::span<const double> b);

struct DurationDer {
  double duration = 0.0;
  double der = 0.0;  // percent
};

// Sorts recordings by duration, splits them into `groups` near-equal groups
// and runs student_t_test in each. Both inputs list the same recordings in
// the same order.
std::vector<TTestResult> duration_stratified_ttest(std::span<const DurationDer> results_a,
                                                   std::span<const DurationDer> results_b, int groups = 5);

}  // namespace diar

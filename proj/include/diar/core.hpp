// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace diar {

// Tolerance for comparisons between times in seconds.
inline constexpr double kTimeEps = 1e-9;

struct Segment {
  double start = 0.0;
  double end = 0.0;

  double duration() const { return end - start; }
  bool valid() const;
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Per-segment embeddings for one recording. Row i of `vectors` belongs to
// segments[i].
struct EmbeddingSequence {
  std::string recording_id;
  std::vector<Segment> segments;
  Eigen::MatrixXd vectors;  // n x dim

  int size() const { return static_cast<int>(segments.size()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
  // Throws a parameter error if the invariants do not hold.
  void validate() const;
};

struct Region {
  Segment segment;
  std::string speaker;
  friend bool operator==(const Region&, const Region&) = default;
};

// Reference or hypothesis speaker regions. Reference regions may overlap.
struct Annotation {
  std::string recording_id;
  std::vector<Region> regions;

  std::vector<std::string> speakers() const;  // sorted, unique
  double total_duration() const;              // sum of region lengths
  void validate() const;
};

// n x n pair scores. Indexed in EmbeddingSequence order.
using SimilarityMatrix = Eigen::MatrixXd;

// Sliding-window segmentation of speech regions. Inside a region windows
// start every `step` seconds while they fit; a region shorter than the window
// becomes one segment, and uncovered trailing speech gets a final window that
// ends flush with the region.
std::vector<Segment> uniform_segment(std::span<const Segment> speech_regions,
                                     double window, double step);

// Speaker with the largest overlap against the central half of `segment`.
// Ties go to the lexicographically smallest label.
std::optional<std::string> segment_label(const Segment& segment,
                                         const Annotation& reference);

// Binary same-speaker matrix.
SimilarityMatrix reference_matrix(std::span<const std::string> labels);

}  // namespace diar

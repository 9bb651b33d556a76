// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "diar/error.hpp"

namespace diar {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter: return "parameter error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kNumerical: return "numerical error";
    case ErrorKind::kTraining: return "training error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kChecksum: return "checksum error";
    case ErrorKind::kVersion: return "version error";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

bool Segment::valid() const {
  return std::isfinite(start) && std::isfinite(end) && start >= 0.0 && end > start;
}

void EmbeddingSequence::validate() const {
  if (segments.empty()) throw parameter_error("embedding sequence '" + recording_id + "' is empty");
  if (vectors.rows() != static_cast<Eigen::Index>(segments.size()))
    throw parameter_error("embedding sequence '" + recording_id + "': " +
                          std::to_string(vectors.rows()) + " vectors for " +
                          std::to_string(segments.size()) + " segments");
  if (vectors.cols() < 1) throw parameter_error("embedding dimension must be positive");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (!segments[i].valid())
      throw parameter_error("segment " + std::to_string(i) + " of '" + recording_id + "' is invalid");
    if (i > 0 && segments[i].start + kTimeEps < segments[i - 1].start)
      throw parameter_error("segments of '" + recording_id + "' are not sorted by start");
  }
  if (!vectors.allFinite()) throw parameter_error("embedding sequence '" + recording_id + "' has non-finite values");
}

std::vector<std::string> Annotation::speakers() const {
  std::set<std::string> s;
  for (const auto& r : regions) s.insert(r.speaker);
  return {s.begin(), s.end()};
}

double Annotation::total_duration() const {
  double t = 0.0;
  for (const auto& r : regions) t += r.segment.duration();
  return t;
}

void Annotation::validate() const {
  for (const auto& r : regions) {
    if (r.speaker.empty()) throw parameter_error("annotation '" + recording_id + "' has an empty speaker label");
    if (!r.segment.valid()) throw parameter_error("annotation '" + recording_id + "' has an invalid region");
  }
}

std::vector<Segment> uniform_segment(std::span<const Segment> speech_regions,
                                     double window, double step) {
  if (!(window > 0.0) || !(step > 0.0) || step > window)
    throw parameter_error("uniform_segment: need window > 0 and 0 < step <= window");
  std::vector<Segment> out;
  for (const Segment& r : speech_regions) {
    if (!r.valid()) throw parameter_error("uniform_segment: invalid speech region");
    if (r.duration() < window - kTimeEps) {
      out.push_back(r);
      continue;
    }
    double last_end = r.start;
    for (long k = 0;; ++k) {
      const double s = r.start + static_cast<double>(k) * step;
      if (s + window > r.end + kTimeEps) break;
      out.push_back({s, s + window});
      last_end = s + window;
    }
    if (r.end - last_end > kTimeEps) out.push_back({r.end - window, r.end});
  }
  return out;
}

std::optional<std::string> segment_label(const Segment& segment,
                                         const Annotation& reference) {
  const double quarter = segment.duration() / 4.0;
  const double lo = segment.start + quarter;
  const double hi = segment.end - quarter;
  std::map<std::string, double> overlap;
  for (const auto& r : reference.regions) {
    const double o = std::min(hi, r.segment.end) - std::max(lo, r.segment.start);
    if (o > kTimeEps) overlap[r.speaker] += o;
  }
  std::optional<std::string> best;
  double best_overlap = 0.0;
  // std::map iterates in lexicographic order, so strict '>' keeps the
  // smallest label among ties.
  for (const auto& [speaker, o] : overlap) {
    if (!best || o > best_overlap + kTimeEps) {
      best = speaker;
      best_overlap = o;
    }
  }
  return best;
}

SimilarityMatrix reference_matrix(std::span<const std::string> labels) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  SimilarityMatrix s(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      s(i, j) = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  return s;
}

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "diar/error.hpp"

namespace diar {

Annotation labels_to_annotation(std::span<const Segment> segments, std::span<const int> labels,
                                const std::string& recording_id) {
  if (segments.size() != labels.size())
    throw parameter_error("labels_to_annotation: " + std::to_string(segments.size()) + " segments but " +
                          std::to_string(labels.size()) + " labels");
  Annotation out;
  out.recording_id = recording_id;
  const std::size_t n = segments.size();
  if (n == 0) return out;

  // Owned span of each segment: from the cut with its predecessor to the cut
  // with its successor. Cuts sit in the middle of window overlaps.
  std::vector<double> left(n), right(n);
  for (std::size_t i = 0; i < n; ++i) {
    left[i] = segments[i].start;
    right[i] = segments[i].end;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double overlap_end = segments[i].end;
    const double next_start = segments[i + 1].start;
    if (overlap_end > next_start) {
      const double cut = 0.5 * (next_start + overlap_end);
      right[i] = cut;
      left[i + 1] = cut;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) left[i] = std::max(left[i], left[i - 1]);
    right[i] = std::max(right[i], left[i]);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (right[i] - left[i] <= kTimeEps) continue;
    const std::string speaker = std::to_string(labels[i]);
    if (!out.regions.empty() && out.regions.back().speaker == speaker &&
        left[i] <= out.regions.back().segment.end + kTimeEps) {
      out.regions.back().segment.end = std::max(out.regions.back().segment.end, right[i]);
    } else {
      out.regions.push_back({{left[i], right[i]}, speaker});
    }
  }
  return out;
}

Assignment max_weight_assignment(const Eigen::MatrixXd& weights) {
  Assignment out;
  const auto rows = static_cast<int>(weights.rows());
  const auto cols = static_cast<int>(weights.cols());
  out.row_to_col.assign(static_cast<std::size_t>(rows), -1);
  if (rows == 0 || cols == 0) return out;

  const bool transposed = rows > cols;
  const Eigen::MatrixXd w = transposed ? Eigen::MatrixXd(weights.transpose()) : weights;
  const auto n = static_cast<int>(w.rows());
  const auto m = static_cast<int>(w.cols());
  const double top = w.maxCoeff();

  // Shortest augmenting path formulation with potentials, 1-based; minimizes
  // top - w.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<int> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), kInf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = (top - w(i0 - 1, j - 1)) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= m; ++j) {
    const int i = p[static_cast<std::size_t>(j)];
    if (i == 0) continue;
    if (transposed)
      out.row_to_col[static_cast<std::size_t>(j - 1)] = i - 1;
    else
      out.row_to_col[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  for (int r = 0; r < rows; ++r) {
    const int c = out.row_to_col[static_cast<std::size_t>(r)];
    if (c >= 0) out.total += weights(r, c);
  }
  return out;
}

namespace {

std::map<std::string, std::optional<std::string>> map_from_overlap(const std::vector<std::string>& refs,
                                                                   const std::vector<std::string>& hyps,
                                                                   const Eigen::MatrixXd& overlap) {
  std::map<std::string, std::optional<std::string>> mapping;
  for (const auto& h : hyps) mapping[h] = std::nullopt;
  // Rows are hypothesis labels.
  const Assignment a = max_weight_assignment(overlap);
  for (std::size_t h = 0; h < hyps.size(); ++h) {
    const int r = a.row_to_col[h];
    if (r >= 0) mapping[hyps[h]] = refs[static_cast<std::size_t>(r)];
  }
  return mapping;
}

int index_of(const std::vector<std::string>& v, const std::string& s) {
  return static_cast<int>(std::lower_bound(v.begin(), v.end(), s) - v.begin());
}

}  // namespace

std::map<std::string, std::optional<std::string>> optimal_mapping(const Annotation& reference,
                                                                  const Annotation& hypothesis) {
  const auto refs = reference.speakers();
  const auto hyps = hypothesis.speakers();
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(hyps.size()),
                                                  static_cast<Eigen::Index>(refs.size()));
  for (const auto& h : hypothesis.regions)
    for (const auto& r : reference.regions) {
      const double o = std::min(h.segment.end, r.segment.end) - std::max(h.segment.start, r.segment.start);
      if (o > 0.0) overlap(index_of(hyps, h.speaker), index_of(refs, r.speaker)) += o;
    }
  return map_from_overlap(refs, hyps, overlap);
}

DerReport& DerReport::operator+=(const DerReport& other) {
  scored_time += other.scored_time;
  false_alarm += other.false_alarm;
  missed += other.missed;
  confusion += other.confusion;
  undefined = scored_time <= 0.0;
  der = undefined ? 0.0 : confusion / scored_time;
  return *this;
}

DerReport der(const Annotation& reference, const Annotation& hypothesis, double collar, bool exclude_overlap) {
  if (!(collar >= 0.0)) throw parameter_error("der: collar must be nonnegative");
  reference.validate();
  hypothesis.validate();
  {
    std::vector<Segment> hs;
    for (const auto& r : hypothesis.regions) hs.push_back(r.segment);
    std::sort(hs.begin(), hs.end(), [](const Segment& a, const Segment& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < hs.size(); ++i)
      if (hs[i].start < hs[i - 1].end - kTimeEps) throw parameter_error("der: hypothesis regions overlap");
  }

  const auto refs = reference.speakers();
  const auto hyps = hypothesis.speakers();
  std::vector<Segment> collars;
  std::vector<double> points;
  // Collars go around boundaries inside the reference extent; the first
  // onset and the last offset are left alone.
  double extent_lo = std::numeric_limits<double>::infinity();
  double extent_hi = -std::numeric_limits<double>::infinity();
  for (const auto& r : reference.regions) {
    extent_lo = std::min(extent_lo, r.segment.start);
    extent_hi = std::max(extent_hi, r.segment.end);
  }
  for (const auto& r : reference.regions) {
    for (double b : {r.segment.start, r.segment.end}) {
      const bool interior = b > extent_lo + kTimeEps && b < extent_hi - kTimeEps;
      if (collar > 0.0 && interior) {
        collars.push_back({b - collar, b + collar});
        points.push_back(b - collar);
        points.push_back(b + collar);
      }
      points.push_back(b);
    }
  }
  for (const auto& h : hypothesis.regions) {
    points.push_back(h.segment.start);
    points.push_back(h.segment.end);
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  struct Piece {
    double duration;
    std::vector<int> ref;
    std::vector<int> hyp;
  };
  std::vector<Piece> pieces;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double t0 = points[k];
    const double t1 = points[k + 1];
    if (t1 - t0 <= 0.0) continue;
    const double mid = 0.5 * (t0 + t1);
    bool in_collar = false;
    for (const auto& c : collars)
      if (mid > c.start && mid < c.end) {
        in_collar = true;
        break;
      }
    if (in_collar) continue;
    Piece p{t1 - t0, {}, {}};
    for (const auto& r : reference.regions)
      if (mid > r.segment.start && mid < r.segment.end) p.ref.push_back(index_of(refs, r.speaker));
    for (const auto& h : hypothesis.regions)
      if (mid > h.segment.start && mid < h.segment.end) p.hyp.push_back(index_of(hyps, h.speaker));
    std::sort(p.ref.begin(), p.ref.end());
    p.ref.erase(std::unique(p.ref.begin(), p.ref.end()), p.ref.end());
    std::sort(p.hyp.begin(), p.hyp.end());
    p.hyp.erase(std::unique(p.hyp.begin(), p.hyp.end()), p.hyp.end());
    if (exclude_overlap && p.ref.size() >= 2) continue;
    if (p.ref.empty() && p.hyp.empty()) continue;
    pieces.push_back(std::move(p));
  }

  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(hyps.size()),
                                                  static_cast<Eigen::Index>(refs.size()));
  for (const auto& p : pieces)
    for (int h : p.hyp)
      for (int r : p.ref) overlap(h, r) += p.duration;
  const Assignment a = max_weight_assignment(overlap);

  DerReport rep;
  for (const auto& p : pieces) {
    const auto nref = static_cast<double>(p.ref.size());
    const auto nhyp = static_cast<double>(p.hyp.size());
    rep.scored_time += nref * p.duration;
    rep.missed += std::max(0.0, nref - nhyp) * p.duration;
    rep.false_alarm += std::max(0.0, nhyp - nref) * p.duration;
    double correct = 0.0;
    for (int h : p.hyp) {
      const int mapped = a.row_to_col[static_cast<std::size_t>(h)];
      if (mapped >= 0 && std::binary_search(p.ref.begin(), p.ref.end(), mapped)) correct += 1.0;
    }
    rep.confusion += (std::min(nref, nhyp) - correct) * p.duration;
  }
  rep.undefined = rep.scored_time <= 0.0;
  rep.der = rep.undefined ? 0.0 : rep.confusion / rep.scored_time;
  return rep;
}

std::vector<std::vector<std::string>> kfold_split(std::span<const std::string> ids, int k, std::uint64_t seed) {
  if (k < 1) throw parameter_error("kfold_split: k must be positive");
  if (static_cast<std::size_t>(k) > ids.size())
    throw parameter_error("kfold_split: k = " + std::to_string(k) + " exceeds " + std::to_string(ids.size()) +
                          " recordings");
  std::vector<std::string> shuffled(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < shuffled.size(); ++i) folds[i % static_cast<std::size_t>(k)].push_back(shuffled[i]);
  return folds;
}

TTestResult student_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw parameter_error("t-test: need at least 2 samples per system");
  auto mean = [](std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  };
  auto sum_sq = [](std::span<const double> x, double m) {
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s;
  };
  TTestResult r;
  r.size = static_cast<int>(a.size());
  r.mean_a = mean(a);
  r.mean_b = mean(b);
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  const double pooled = (sum_sq(a, r.mean_a) + sum_sq(b, r.mean_b)) / (na + nb - 2.0);
  const double gap = r.mean_b - r.mean_a;
  if (pooled <= 0.0) {
    r.degenerate = true;
    r.t_value = gap == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), gap);
  } else {
    r.t_value = gap / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  }
  r.h0_accepted = std::abs(r.t_value) < kTCritical;
  return r;
}

std::vector<TTestResult> duration_stratified_ttest(std::span<const DurationDer> results_a,
                                                   std::span<const DurationDer> results_b, int groups) {
  if (results_a.size() != results_b.size()) throw parameter_error("t-test: result lists differ in length");
  if (groups < 1) throw parameter_error("t-test: groups must be positive");
  const std::size_t n = results_a.size();
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(results_a[i].duration - results_b[i].duration) > kTimeEps)
      throw parameter_error("t-test: recording " + std::to_string(i) + " has different durations in the two lists");
  if (n < 2 * static_cast<std::size_t>(groups)) throw parameter_error("t-test: need at least 2 recordings per group");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return results_a[x].duration < results_a[y].duration; });
  std::vector<TTestResult> out;
  std::size_t at = 0;
  for (int g = 0; g < groups; ++g) {
    const std::size_t len = n / static_cast<std::size_t>(groups) + (static_cast<std::size_t>(g) < n % static_cast<std::size_t>(groups) ? 1 : 0);
    std::vector<double> a, b;
    for (std::size_t k = at; k < at + len; ++k) {
      a.push_back(results_a[order[k]].der);
      b.push_back(results_b[order[k]].der);
    }
    at += len;
    out.push_back(student_t_test(a, b));
  }
  return out;
}

}  // namespace diar

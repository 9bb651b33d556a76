// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <limits>
#include <map>

#include "diar/cluster.hpp"
#include "diar/error.hpp"
#include "diar/eval.hpp"

namespace diar {

namespace {

DerReport score_labels(const TuneItem& item, const std::vector<int>& labels) {
  const Annotation hyp = labels_to_annotation(item.sequence->segments, labels, item.sequence->recording_id);
  return der(*item.reference, hyp);
}

}  // namespace

TuneResult tune_threshold(std::span<const TuneItem> items, Backend backend, std::span<const double> grid,
                          const SpectralConfig& base) {
  if (items.empty()) throw parameter_error("tune_threshold: no training items");
  if (grid.empty()) throw parameter_error("tune_threshold: empty grid");
  TuneResult out;
  out.grid.assign(grid.begin(), grid.end());
  std::sort(out.grid.begin(), out.grid.end());
  std::vector<DerReport> totals(out.grid.size());

  for (const TuneItem& item : items) {
    if (item.matrix == nullptr || item.reference == nullptr || item.sequence == nullptr)
      throw parameter_error("tune_threshold: incomplete item");
    const auto n = static_cast<int>(item.matrix->rows());
    if (backend == Backend::kSpectral) {
      std::map<int, DerReport> by_k;
      SpectralEmbedding emb;
      std::vector<double> ev;
      if (n > 1) {
        emb = spectral_embedding(*item.matrix);
        ev.assign(emb.eigenvalues.data(), emb.eigenvalues.data() + emb.eigenvalues.size());
      }
      for (std::size_t g = 0; g < out.grid.size(); ++g) {
        const int k = n > 1 ? std::min(estimate_k(ev, out.grid[g]), n) : 1;
        auto it = by_k.find(k);
        if (it == by_k.end()) {
          const std::vector<int> labels =
              n > 1 ? cluster_embedding(emb, k, base) : std::vector<int>(static_cast<std::size_t>(n), 0);
          it = by_k.emplace(k, score_labels(item, labels)).first;
        }
        totals[g] += it->second;
      }
    } else {
      const std::vector<Merge> merges = ahc_merges(*item.matrix);
      std::map<std::size_t, DerReport> by_cut;
      for (std::size_t g = 0; g < out.grid.size(); ++g) {
        std::size_t applied = 0;
        while (applied < merges.size() && merges[applied].similarity >= out.grid[g]) ++applied;
        auto it = by_cut.find(applied);
        if (it == by_cut.end()) {
          const auto labels = cut_merges(n, std::span(merges).first(applied), -std::numeric_limits<double>::infinity());
          it = by_cut.emplace(applied, score_labels(item, labels)).first;
        }
        totals[g] += it->second;
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t g = 0; g < totals.size(); ++g) {
    out.ders.push_back(totals[g].der);
    if (totals[g].der < totals[best].der) best = g;
  }
  out.threshold = out.grid[best];
  return out;
}

TunedThresholds tune_thresholds(std::span<const TuneItem> items, std::span<const double> beta_grid,
                                std::span<const double> alpha_grid, const SpectralConfig& base) {
  return {tune_threshold(items, Backend::kSpectral, beta_grid, base),
          tune_threshold(items, Backend::kAhc, alpha_grid, base)};
}

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "diar/cluster.hpp"
#include "diar/core.hpp"
#include "diar/eval.hpp"
#include "diar/neural.hpp"
#include "diar/scoring.hpp"

namespace diar {

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view name);

struct PipelineConfig {
  ScorerKind scorer = ScorerKind::kCosine;
  bool enhance = true;
  Backend backend = Backend::kSpectral;
  double beta = 0.5;   // spectral threshold
  double alpha = 0.5;  // AHC threshold
  SpectralConfig spectral;  // k-means settings; beta is taken from above
  int max_block = 400;
  std::uint64_t seed = 0;
};

struct PipelineModels {
  const PldaModel* plda = nullptr;
  const PairSeqModel* neural = nullptr;
};

// Scorer output, enhanced when cfg.enhance is set.
SimilarityMatrix score_matrix(const EmbeddingSequence& seq, const PipelineConfig& cfg, const PipelineModels& models);

std::vector<int> cluster_matrix(const SimilarityMatrix& s, const PipelineConfig& cfg);

// Scoring, optional enhancement, clustering and hypothesis construction.
// Failures are rethrown with the stage name attached.
Annotation diarize(const EmbeddingSequence& seq, const PipelineConfig& cfg, const PipelineModels& models);

// Embeddings and references for a set of recordings, in matching order.
struct Corpus {
  std::vector<EmbeddingSequence> sequences;
  std::vector<Annotation> references;
};

// Reads every `*.emb` file of `dir` (sorted by name) and `dir/reference.rttm`.
Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);

// Per-segment training labels from the reference; segments without
// reference speech get a label of their own.
std::vector<std::string> reference_labels(const EmbeddingSequence& seq, const Annotation& reference);

struct SystemSpec {
  std::string name;
  ScorerKind scorer = ScorerKind::kCosine;
  Backend backend = Backend::kSpectral;
  bool enhance = true;
};

// Weighted sum of the matrices of other systems, clustered with `backend`.
struct FusionSpec {
  std::string name;
  std::vector<std::string> components;
  std::vector<double> weights;
  Backend backend = Backend::kSpectral;
};

// lo, lo + step, ... up to hi inclusive (within half a step).
std::vector<double> threshold_grid(double lo, double hi, double step);

struct ExperimentConfig {
  int folds = 5;
  int max_folds = 0;  // run only the first max_folds folds when positive
  std::uint64_t seed = 0;
  std::vector<SystemSpec> systems;
  std::vector<FusionSpec> fusions;
  std::vector<double> beta_grid = threshold_grid(0.05, 0.95, 0.05);
  std::vector<double> alpha_grid = threshold_grid(0.05, 0.95, 0.05);
  SpectralConfig spectral;
  TrainConfig lstm_train;
  PairSeqDims lstm_dims;  // embedding_dim is taken from the corpus
  int max_block = 400;
  // Fuse raw scorer matrices and enhance the fused one, instead of fusing
  // enhanced matrices.
  bool refuse_enhance_order = false;
  std::optional<std::pair<std::string, std::string>> ttest;  // (system a, system b)
};

struct RecordingResult {
  std::string recording_id;
  int fold = 0;
  double duration = 0.0;
  DerReport report;
};

struct SystemResult {
  std::string name;
  std::vector<RecordingResult> recordings;  // corpus order
  std::vector<DerReport> per_fold;
  std::vector<double> thresholds;  // tuned per fold
  DerReport total;
};

struct FoldInfo {
  int index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct ExperimentReport {
  std::vector<FoldInfo> folds;
  std::vector<SystemResult> systems;
  std::vector<std::vector<EpochLog>> lstm_history;  // per fold
  std::vector<TTestResult> ttest;
  std::string ttest_a, ttest_b;
};

using ProgressFn = std::function<void(const std::string&)>;

ExperimentReport run_experiment(const Corpus& corpus, const ExperimentConfig& cfg, const ProgressFn& progress = {});

// Human-readable DER table, one row per system.
std::string format_report_table(const ExperimentReport& report);

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diar/core.hpp"

namespace diar {

struct PairSeqDims {
  int embedding_dim = 0;  // d; the recurrent input is 2d
  int hidden = 256;       // per direction
  int fc_hidden = 64;
  int layers = 2;

  int input_dim() const { return 2 * embedding_dim; }
  friend bool operator==(const PairSeqDims&, const PairSeqDims&) = default;
};

// One recurrent direction. Gate blocks are stacked as [input, forget,
// candidate, output], each `hidden` rows.
struct LstmDirection {
  Eigen::MatrixXd w_in;   // 4h x in
  Eigen::MatrixXd w_rec;  // 4h x h
  Eigen::VectorXd bias;   // 4h
};

struct BiLstmLayer {
  LstmDirection fwd;
  LstmDirection bwd;
};

// Stacked Bi-LSTM followed by fc1 (ReLU) and fc2 (sigmoid). The same type
// holds gradients.
struct PairSeqModel {
  PairSeqDims dims;
  std::vector<BiLstmLayer> layers;
  Eigen::MatrixXd fc1_w;  // f x 2h
  Eigen::VectorXd fc1_b;  // f
  Eigen::MatrixXd fc2_w;  // 1 x f
  Eigen::VectorXd fc2_b;  // 1

  static PairSeqModel zeros(const PairSeqDims& dims);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; forget-gate biases start at 1.
  static PairSeqModel initialize(const PairSeqDims& dims, std::uint64_t seed);

  std::size_t parameter_count() const;

  // Visits every parameter tensor in a fixed order as (name, data, rows, cols).
  template <class F>
  void for_each_tensor(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    visit(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    auto emit = [&](const std::string& name, auto& m) { f(name, m.data(), m.rows(), m.cols()); };
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      const std::string p = "lstm" + std::to_string(l);
      emit(p + ".fwd.w_in", self.layers[l].fwd.w_in);
      emit(p + ".fwd.w_rec", self.layers[l].fwd.w_rec);
      emit(p + ".fwd.bias", self.layers[l].fwd.bias);
      emit(p + ".bwd.w_in", self.layers[l].bwd.w_in);
      emit(p + ".bwd.w_rec", self.layers[l].bwd.w_rec);
      emit(p + ".bwd.bias", self.layers[l].bwd.bias);
    }
    emit("fc1.w", self.fc1_w);
    emit("fc1.b", self.fc1_b);
    emit("fc2.w", self.fc2_w);
    emit("fc2.b", self.fc2_b);
  }
};

// Pair sequences for one block of the similarity matrix. Sequence r runs
// over positions c = 0..C-1 with element [row_vectors(r); col_vectors(c)].
// The R x C x 2d tensor is never materialized.
struct PairBatch {
  Eigen::MatrixXd row_vectors;  // R x d
  Eigen::MatrixXd col_vectors;  // C x d
  std::optional<Eigen::MatrixXd> targets;  // R x C

  int rows() const { return static_cast<int>(row_vectors.rows()); }
  int cols() const { return static_cast<int>(col_vectors.rows()); }
  Eigen::VectorXd element(int r, int c) const;
};

PairBatch build_pair_batch(const EmbeddingSequence& seq,
                           const std::optional<SimilarityMatrix>& target = std::nullopt);

struct IndexRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct MatrixBlock {
  IndexRange rows;
  IndexRange cols;
};

// ceil(n / max_block) near-equal contiguous chunks per axis; returns their
// cross product in row-major order.
std::vector<MatrixBlock> partition_blocks(int n, int max_block);

PairBatch block_batch(const Eigen::MatrixXd& vectors, const MatrixBlock& block,
                      const SimilarityMatrix* target = nullptr);

// R x C matrix of scores in (0, 1).
Eigen::MatrixXd forward(const PairSeqModel& model, const PairBatch& batch);

// Hidden states of every layer, 2h x (C * R) with column c * R + r; rows
// [0, h) are the forward direction and [h, 2h) the backward direction.
std::vector<Eigen::MatrixXd> forward_hidden_states(const PairSeqModel& model, const PairBatch& batch);

// Mean binary cross entropy; probabilities are clamped to [1e-12, 1 - 1e-12].
double bce_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

struct LossAndGradient {
  double loss = 0.0;
  PairSeqModel gradient;
};

// BCE of the batch against its targets and the gradient with respect to
// every parameter (backpropagation through time in both directions).
LossAndGradient loss_and_gradient(const PairSeqModel& model, const PairBatch& batch);

struct TrainConfig {
  double lr0 = 0.01;
  double lr_decay_factor = 10.0;
  int lr_decay_every = 40;
  int epochs = 100;
  int max_block = 400;
  std::uint64_t seed = 0;
  // Elementwise gradient clipping; 0 disables it.
  double grad_clip = 0.0;
  // When positive, each epoch draws `samples_per_recording` random
  // sample_block x sample_block windows per recording (independent row and
  // column offsets) instead of sweeping the full partition. Off by default.
  int sample_block = 0;
  int samples_per_recording = 1;
};

// Learning rate for a 1-based epoch.
double learning_rate(const TrainConfig& cfg, int epoch);

struct TrainingExample {
  EmbeddingSequence sequence;
  std::vector<std::string> labels;  // one speaker label per segment
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

struct TrainResult {
  PairSeqModel model;
  std::vector<EpochLog> history;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(std::span<const TrainingExample> corpus, const TrainConfig& cfg,
                  const PairSeqDims& dims, const EpochCallback& on_epoch = {});

// Same as above, continuing from an existing model.
TrainResult train(std::span<const TrainingExample> corpus, const TrainConfig& cfg,
                  PairSeqModel model, const EpochCallback& on_epoch = {});

SimilarityMatrix predict_matrix(const PairSeqModel& model, const EmbeddingSequence& seq,
                                int max_block);

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/neural.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "diar/error.hpp"

namespace diar {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

template <class Derived>
void sigmoid_inplace(Eigen::DenseBase<Derived>&& m) {
  m.derived().array() = 1.0 / (1.0 + (-m.derived().array()).exp());
}

// tanh through exp so that the whole gate block vectorizes.
template <class Derived>
void tanh_inplace(Eigen::DenseBase<Derived>&& m) {
  m.derived().array() = 2.0 / (1.0 + (-2.0 * m.derived().array()).exp()) - 1.0;
}

ArrayXXd tanh_of(const Eigen::Ref<const MatrixXd>& m) {
  return 2.0 / (1.0 + (-2.0 * m.array()).exp()) - 1.0;
}

LstmDirection zero_direction(int in, int h) {
  return {MatrixXd::Zero(4 * h, in), MatrixXd::Zero(4 * h, h), VectorXd::Zero(4 * h)};
}

void check_dims(const PairSeqDims& dims) {
  if (dims.embedding_dim < 1 || dims.hidden < 1 || dims.fc_hidden < 1 || dims.layers < 1)
    throw parameter_error("pair-sequence model: all dimensions must be positive");
}

// Activated gates and cell states of one direction, column t * R + r.
struct DirectionTrace {
  MatrixXd gates;  // 4h x CR
  MatrixXd cells;  // h x CR
};

struct ForwardTrace {
  std::vector<MatrixXd> outputs;                      // per layer, 2h x CR
  std::vector<std::array<DirectionTrace, 2>> dirs;    // per layer, fwd/bwd
  MatrixXd fc_pre;                                    // f x CR
  MatrixXd fc_act;                                    // f x CR
  MatrixXd prob;                                      // 1 x CR
};

// Runs one recurrent direction over all positions. `project(t, g)` must write
// the input contribution for position t (bias included) into g.
template <class Project>
void run_direction(const LstmDirection& p, int rows, int cols, bool reverse, Project&& project,
                   Eigen::Ref<MatrixXd> out, DirectionTrace* trace) {
  const Eigen::Index h = p.w_rec.cols();
  MatrixXd g(4 * h, rows);
  MatrixXd hidden = MatrixXd::Zero(h, rows);
  MatrixXd cell = MatrixXd::Zero(h, rows);
  for (int s = 0; s < cols; ++s) {
    const int t = reverse ? cols - 1 - s : s;
    project(t, g);
    if (s > 0) g.noalias() += p.w_rec * hidden;
    sigmoid_inplace(g.topRows(2 * h));
    tanh_inplace(g.middleRows(2 * h, h));
    sigmoid_inplace(g.bottomRows(h));
    cell.array() = g.middleRows(h, h).array() * cell.array() +
                   g.topRows(h).array() * g.middleRows(2 * h, h).array();
    hidden.array() = g.bottomRows(h).array() * tanh_of(cell);
    out.middleCols(static_cast<Eigen::Index>(t) * rows, rows) = hidden;
    if (trace != nullptr) {
      trace->gates.middleCols(static_cast<Eigen::Index>(t) * rows, rows) = g;
      trace->cells.middleCols(static_cast<Eigen::Index>(t) * rows, rows) = cell;
    }
  }
}

void run_forward(const PairSeqModel& model, const PairBatch& batch, ForwardTrace& tr, bool keep) {
  const int R = batch.rows();
  const int C = batch.cols();
  const int d = model.dims.embedding_dim;
  const Eigen::Index h = model.dims.hidden;
  const Eigen::Index cr = static_cast<Eigen::Index>(R) * C;
  if (batch.row_vectors.cols() != d || batch.col_vectors.cols() != d)
    throw parameter_error("forward: batch embedding dimension " + std::to_string(batch.row_vectors.cols()) +
                          " does not match model dimension " + std::to_string(d));
  if (R < 1 || C < 1) throw parameter_error("forward: empty batch");

  tr.outputs.assign(model.layers.size(), MatrixXd());
  if (keep) tr.dirs.assign(model.layers.size(), {});
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    MatrixXd& out = tr.outputs[l];
    out.resize(2 * h, cr);
    for (int dir = 0; dir < 2; ++dir) {
      const LstmDirection& p = dir == 0 ? model.layers[l].fwd : model.layers[l].bwd;
      DirectionTrace* dt = nullptr;
      if (keep) {
        dt = &tr.dirs[l][static_cast<std::size_t>(dir)];
        dt->gates.resize(4 * h, cr);
        dt->cells.resize(h, cr);
      }
      auto out_rows = out.middleRows(dir * h, h);
      if (l == 0) {
        // W [x_r; x_c] = W_row x_r + W_col x_c: project rows and columns once.
        MatrixXd row_part = p.w_in.leftCols(d) * batch.row_vectors.transpose();
        row_part.colwise() += p.bias;
        const MatrixXd col_part = p.w_in.rightCols(d) * batch.col_vectors.transpose();
        run_direction(p, R, C, dir == 1,
                      [&](int t, MatrixXd& g) { g = row_part.colwise() + col_part.col(t); },
                      out_rows, dt);
      } else {
        const MatrixXd& in = tr.outputs[l - 1];
        run_direction(p, R, C, dir == 1,
                      [&](int t, MatrixXd& g) {
                        g.noalias() = p.w_in * in.middleCols(static_cast<Eigen::Index>(t) * R, R);
                        g.colwise() += p.bias;
                      },
                      out_rows, dt);
      }
    }
    if (!out.allFinite())
      throw numerical_error("forward: non-finite hidden state in layer " + std::to_string(l) +
                            " (block " + std::to_string(R) + "x" + std::to_string(C) + ")");
  }

  tr.fc_pre.noalias() = model.fc1_w * tr.outputs.back();
  tr.fc_pre.colwise() += model.fc1_b;
  tr.fc_act = tr.fc_pre.cwiseMax(0.0);
  tr.prob.noalias() = model.fc2_w * tr.fc_act;
  tr.prob.array() += model.fc2_b(0);
  sigmoid_inplace(tr.prob.leftCols(cr));
  if (!tr.prob.allFinite()) throw numerical_error("forward: non-finite output scores");
  if (!keep) {
    tr.fc_pre.resize(0, 0);
    tr.fc_act.resize(0, 0);
  }
}

void backprop_direction(const LstmDirection& p, LstmDirection& grad, const DirectionTrace& tr,
                        const Eigen::Ref<const MatrixXd>& hidden_states,
                        const Eigen::Ref<const MatrixXd>& d_out, int R, int C, bool reverse,
                        const std::function<void(int, const MatrixXd&)>& on_input) {
  const Eigen::Index h = p.w_rec.cols();
  MatrixXd dh_next = MatrixXd::Zero(h, R);
  ArrayXXd dc_next = ArrayXXd::Zero(h, R);
  MatrixXd dpre(4 * h, R);
  for (int s = C - 1; s >= 0; --s) {
    const int t = reverse ? C - 1 - s : s;
    const int t_prev = reverse ? t + 1 : t - 1;
    const Eigen::Index col = static_cast<Eigen::Index>(t) * R;
    const auto gates = tr.gates.middleCols(col, R);
    const auto i = gates.topRows(h).array();
    const auto f = gates.middleRows(h, h).array();
    const auto g = gates.middleRows(2 * h, h).array();
    const auto o = gates.bottomRows(h).array();
    const ArrayXXd tc = tanh_of(tr.cells.middleCols(col, R));
    const ArrayXXd dh = d_out.middleCols(col, R).array() + dh_next.array();
    const ArrayXXd dc = dc_next + dh * o * (1.0 - tc.square());

    dpre.topRows(h).array() = dc * g * i * (1.0 - i);
    if (s > 0) {
      const auto c_prev = tr.cells.middleCols(static_cast<Eigen::Index>(t_prev) * R, R).array();
      dpre.middleRows(h, h).array() = dc * c_prev * f * (1.0 - f);
    } else {
      dpre.middleRows(h, h).setZero();
    }
    dpre.middleRows(2 * h, h).array() = dc * i * (1.0 - g.square());
    dpre.bottomRows(h).array() = dh * tc * o * (1.0 - o);
    dc_next = dc * f;

    grad.bias += dpre.rowwise().sum();
    if (s > 0) {
      grad.w_rec.noalias() +=
          dpre * hidden_states.middleCols(static_cast<Eigen::Index>(t_prev) * R, R).transpose();
      dh_next.noalias() = p.w_rec.transpose() * dpre;
    }
    on_input(t, dpre);
  }
}

}  // namespace

PairSeqModel PairSeqModel::zeros(const PairSeqDims& dims) {
  check_dims(dims);
  PairSeqModel m;
  m.dims = dims;
  const int h = dims.hidden;
  for (int l = 0; l < dims.layers; ++l) {
    const int in = l == 0 ? dims.input_dim() : 2 * h;
    m.layers.push_back({zero_direction(in, h), zero_direction(in, h)});
  }
  m.fc1_w = MatrixXd::Zero(dims.fc_hidden, 2 * h);
  m.fc1_b = VectorXd::Zero(dims.fc_hidden);
  m.fc2_w = MatrixXd::Zero(1, dims.fc_hidden);
  m.fc2_b = VectorXd::Zero(1);
  return m;
}

PairSeqModel PairSeqModel::initialize(const PairSeqDims& dims, std::uint64_t seed) {
  PairSeqModel m = zeros(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](auto& mat, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index k = 0; k < mat.size(); ++k) mat.data()[k] = u(rng);
  };
  const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  for (auto& layer : m.layers) {
    for (LstmDirection* p : {&layer.fwd, &layer.bwd}) {
      fill(p->w_in, lstm_bound);
      fill(p->w_rec, lstm_bound);
      fill(p->bias, lstm_bound);
      p->bias.segment(dims.hidden, dims.hidden).setOnes();
    }
  }
  fill(m.fc1_w, 1.0 / std::sqrt(2.0 * dims.hidden));
  fill(m.fc1_b, 1.0 / std::sqrt(2.0 * dims.hidden));
  fill(m.fc2_w, 1.0 / std::sqrt(static_cast<double>(dims.fc_hidden)));
  fill(m.fc2_b, 1.0 / std::sqrt(static_cast<double>(dims.fc_hidden)));
  return m;
}

std::size_t PairSeqModel::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&n](const std::string&, const double*, Eigen::Index r, Eigen::Index c) {
    n += static_cast<std::size_t>(r * c);
  });
  return n;
}

Eigen::VectorXd PairBatch::element(int r, int c) const {
  VectorXd e(row_vectors.cols() + col_vectors.cols());
  e << row_vectors.row(r).transpose(), col_vectors.row(c).transpose();
  return e;
}

PairBatch build_pair_batch(const EmbeddingSequence& seq, const std::optional<SimilarityMatrix>& target) {
  if (seq.size() < 1) throw parameter_error("build_pair_batch: empty sequence");
  if (target && (target->rows() != seq.size() || target->cols() != seq.size()))
    throw parameter_error("build_pair_batch: target is " + std::to_string(target->rows()) + "x" +
                          std::to_string(target->cols()) + ", expected " + std::to_string(seq.size()));
  PairBatch b;
  b.row_vectors = seq.vectors;
  b.col_vectors = seq.vectors;
  b.targets = target;
  return b;
}

std::vector<MatrixBlock> partition_blocks(int n, int max_block) {
  if (n < 1 || max_block < 1) throw parameter_error("partition_blocks: n and max_block must be positive");
  const int chunks = (n + max_block - 1) / max_block;
  std::vector<IndexRange> ranges;
  const int base = n / chunks;
  const int extra = n % chunks;
  int at = 0;
  for (int k = 0; k < chunks; ++k) {
    const int len = base + (k < extra ? 1 : 0);
    ranges.push_back({at, at + len});
    at += len;
  }
  std::vector<MatrixBlock> blocks;
  blocks.reserve(ranges.size() * ranges.size());
  for (const auto& r : ranges)
    for (const auto& c : ranges) blocks.push_back({r, c});
  return blocks;
}

PairBatch block_batch(const Eigen::MatrixXd& vectors, const MatrixBlock& block,
                      const SimilarityMatrix* target) {
  PairBatch b;
  b.row_vectors = vectors.middleRows(block.rows.begin, block.rows.size());
  b.col_vectors = vectors.middleRows(block.cols.begin, block.cols.size());
  if (target != nullptr)
    b.targets = target->block(block.rows.begin, block.cols.begin, block.rows.size(), block.cols.size());
  return b;
}

Eigen::MatrixXd forward(const PairSeqModel& model, const PairBatch& batch) {
  ForwardTrace tr;
  run_forward(model, batch, tr, false);
  return Eigen::Map<const MatrixXd>(tr.prob.data(), batch.rows(), batch.cols());
}

std::vector<Eigen::MatrixXd> forward_hidden_states(const PairSeqModel& model, const PairBatch& batch) {
  ForwardTrace tr;
  run_forward(model, batch, tr, false);
  return tr.outputs;
}

double bce_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw parameter_error("bce_loss: shape mismatch");
  if (pred.size() == 0) throw parameter_error("bce_loss: empty input");
  constexpr double kClamp = 1e-12;
  const ArrayXXd p = pred.array().max(kClamp).min(1.0 - kClamp);
  if (!p.allFinite()) throw numerical_error("bce_loss: non-finite prediction");
  const ArrayXXd t = target.array();
  const double total = -(t * p.log() + (1.0 - t) * (1.0 - p).log()).sum();
  return total / static_cast<double>(pred.size());
}

LossAndGradient loss_and_gradient(const PairSeqModel& model, const PairBatch& batch) {
  if (!batch.targets) throw parameter_error("loss_and_gradient: batch has no targets");
  const int R = batch.rows();
  const int C = batch.cols();
  const int d = model.dims.embedding_dim;
  const Eigen::Index h = model.dims.hidden;
  const Eigen::Index cr = static_cast<Eigen::Index>(R) * C;
  if (batch.targets->rows() != R || batch.targets->cols() != C)
    throw parameter_error("loss_and_gradient: target shape mismatch");

  ForwardTrace tr;
  run_forward(model, batch, tr, true);

  LossAndGradient out;
  out.gradient = PairSeqModel::zeros(model.dims);
  PairSeqModel& grad = out.gradient;
  const Eigen::Map<const Eigen::RowVectorXd> target(batch.targets->data(), cr);
  out.loss = bce_loss(tr.prob, MatrixXd(target));

  // Sigmoid + mean BCE: d loss / d logit = (p - t) / N.
  const Eigen::RowVectorXd d_logit = (tr.prob.row(0) - target) / static_cast<double>(cr);
  grad.fc2_w.noalias() = d_logit * tr.fc_act.transpose();
  grad.fc2_b(0) = d_logit.sum();
  MatrixXd d_fc = model.fc2_w.transpose() * d_logit;
  d_fc.array() *= (tr.fc_pre.array() > 0.0).cast<double>();
  grad.fc1_w.noalias() = d_fc * tr.outputs.back().transpose();
  grad.fc1_b = d_fc.rowwise().sum();
  MatrixXd d_out = model.fc1_w.transpose() * d_fc;  // 2h x CR
  tr.fc_pre.resize(0, 0);
  tr.fc_act.resize(0, 0);
  d_fc.resize(0, 0);

  for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    MatrixXd d_in;
    if (l > 0) d_in = MatrixXd::Zero(2 * h, cr);
    for (int dir = 0; dir < 2; ++dir) {
      const LstmDirection& p = dir == 0 ? model.layers[lu].fwd : model.layers[lu].bwd;
      LstmDirection& gp = dir == 0 ? grad.layers[lu].fwd : grad.layers[lu].bwd;
      const auto hidden_states = tr.outputs[lu].middleRows(dir * h, h);
      const auto d_dir = d_out.middleRows(dir * h, h);
      if (l == 0) {
        MatrixXd row_sum = MatrixXd::Zero(4 * h, R);
        MatrixXd d_col_w = MatrixXd::Zero(4 * h, d);
        backprop_direction(p, gp, tr.dirs[lu][static_cast<std::size_t>(dir)], hidden_states, d_dir, R, C,
                           dir == 1, [&](int t, const MatrixXd& dpre) {
                             row_sum += dpre;
                             d_col_w.noalias() += dpre.rowwise().sum() * batch.col_vectors.row(t);
                           });
        gp.w_in.leftCols(d).noalias() += row_sum * batch.row_vectors;
        gp.w_in.rightCols(d) += d_col_w;
      } else {
        const MatrixXd& in = tr.outputs[lu - 1];
        backprop_direction(p, gp, tr.dirs[lu][static_cast<std::size_t>(dir)], hidden_states, d_dir, R, C,
                           dir == 1, [&](int t, const MatrixXd& dpre) {
                             const Eigen::Index col = static_cast<Eigen::Index>(t) * R;
                             gp.w_in.noalias() += dpre * in.middleCols(col, R).transpose();
                             d_in.middleCols(col, R).noalias() += p.w_in.transpose() * dpre;
                           });
      }
      tr.dirs[lu][static_cast<std::size_t>(dir)] = {};
    }
    if (l > 0) d_out = std::move(d_in);
  }
  return out;
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  const int drops = (std::max(epoch, 1) - 1) / std::max(cfg.lr_decay_every, 1);
  return cfg.lr0 / std::pow(cfg.lr_decay_factor, drops);
}

TrainResult train(std::span<const TrainingExample> corpus, const TrainConfig& cfg,
                  const PairSeqDims& dims, const EpochCallback& on_epoch) {
  return train(corpus, cfg, PairSeqModel::initialize(dims, cfg.seed), on_epoch);
}

TrainResult train(std::span<const TrainingExample> corpus, const TrainConfig& cfg,
                  PairSeqModel model, const EpochCallback& on_epoch) {
  if (corpus.empty()) throw training_error("train: empty corpus");
  if (cfg.epochs < 1 || cfg.max_block < 1 || cfg.lr_decay_every < 1 || !(cfg.lr0 >= 0.0) ||
      cfg.sample_block < 0 || cfg.samples_per_recording < 1 ||
      !(cfg.lr_decay_factor > 0.0))
    throw parameter_error("train: invalid training configuration");

  std::vector<SimilarityMatrix> targets;
  std::vector<std::vector<MatrixBlock>> blocks;
  for (const auto& ex : corpus) {
    ex.sequence.validate();
    if (ex.sequence.dim() != model.dims.embedding_dim)
      throw parameter_error("train: recording '" + ex.sequence.recording_id + "' has embedding dimension " +
                            std::to_string(ex.sequence.dim()) + ", model expects " +
                            std::to_string(model.dims.embedding_dim));
    if (ex.labels.size() != ex.sequence.segments.size())
      throw parameter_error("train: recording '" + ex.sequence.recording_id + "' label count mismatch");
    targets.push_back(reference_matrix(ex.labels));
    blocks.push_back(partition_blocks(ex.sequence.size(), cfg.max_block));
  }

  TrainResult result;
  std::mt19937_64 rng(cfg.seed ^ 0x5deece66dULL);
  std::vector<std::size_t> order(corpus.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double weight = 0.0;
    for (std::size_t idx : order) {
      const auto& ex = corpus[idx];
      std::vector<MatrixBlock> epoch_blocks;
      if (cfg.sample_block > 0) {
        const int n = ex.sequence.size();
        const int len = std::min(n, cfg.sample_block);
        std::uniform_int_distribution<int> offset(0, n - len);
        for (int k = 0; k < cfg.samples_per_recording; ++k) {
          const int r0 = offset(rng);
          const int c0 = offset(rng);
          epoch_blocks.push_back({{r0, r0 + len}, {c0, c0 + len}});
        }
      }
      const auto& use = cfg.sample_block > 0 ? epoch_blocks : blocks[idx];
      for (std::size_t b = 0; b < use.size(); ++b) {
        const PairBatch batch = block_batch(ex.sequence.vectors, use[b], &targets[idx]);
        LossAndGradient lg;
        try {
          lg = loss_and_gradient(model, batch);
        } catch (const Error& e) {
          throw training_error("train: epoch " + std::to_string(epoch) + ", recording '" +
                               ex.sequence.recording_id + "', block " + std::to_string(b) + ": " + e.what());
        }
        if (!std::isfinite(lg.loss))
          throw training_error("train: loss diverged at epoch " + std::to_string(epoch) + ", recording '" +
                               ex.sequence.recording_id + "', block " + std::to_string(b));
        const double count = static_cast<double>(batch.rows()) * batch.cols();
        loss_sum += lg.loss * count;
        weight += count;

        std::vector<double*> grads;
        lg.gradient.for_each_tensor([&](const std::string&, double* g, Eigen::Index r, Eigen::Index c) {
          if (cfg.grad_clip > 0.0)
            for (Eigen::Index k = 0; k < r * c; ++k) g[k] = std::clamp(g[k], -cfg.grad_clip, cfg.grad_clip);
          grads.push_back(g);
        });
        std::size_t k = 0;
        bool finite = true;
        model.for_each_tensor([&](const std::string&, double* w, Eigen::Index r, Eigen::Index c) {
          const double* g = grads[k++];
          for (Eigen::Index q = 0; q < r * c; ++q) {
            w[q] -= lr * g[q];
            finite = finite && std::isfinite(w[q]);
          }
        });
        if (!finite)
          throw training_error("train: parameters diverged at epoch " + std::to_string(epoch) + ", recording '" +
                               ex.sequence.recording_id + "', block " + std::to_string(b));
      }
    }
    EpochLog log{epoch, lr, loss_sum / weight};
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.model = std::move(model);
  return result;
}

SimilarityMatrix predict_matrix(const PairSeqModel& model, const EmbeddingSequence& seq, int max_block) {
  seq.validate();
  const int n = seq.size();
  SimilarityMatrix s(n, n);
  for (const MatrixBlock& b : partition_blocks(n, max_block)) {
    const PairBatch batch = block_batch(seq.vectors, b);
    s.block(b.rows.begin, b.cols.begin, b.rows.size(), b.cols.size()) = forward(model, batch);
  }
  return s;
}

}  // namespace diar

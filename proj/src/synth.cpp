// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "diar/error.hpp"

namespace diar {

namespace {

void validate(const SynthConfig& cfg) {
  if (cfg.num_speakers < 2) throw parameter_error("synth: num_speakers must be at least 2");
  if (!(cfg.duration > 0.0)) throw parameter_error("synth: duration must be positive");
  if (cfg.embedding_dim < 1) throw parameter_error("synth: embedding_dim must be positive");
  if (!(cfg.turn_hold_prob >= 0.0 && cfg.turn_hold_prob <= 1.0))
    throw parameter_error("synth: turn_hold_prob must be in [0, 1]");
  if (!(cfg.within_spread > 0.0) || !(cfg.between_spread > 0.0))
    throw parameter_error("synth: spreads must be positive");
  if (!(cfg.window > 0.0) || !(cfg.step > 0.0) || cfg.step > cfg.window)
    throw parameter_error("synth: invalid segmentation geometry");
}

std::string speaker_name(int s) { return "spk" + std::to_string(s + 1); }

}  // namespace

Conversation gen_conversation(const SynthConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int n_seg = std::max(1, static_cast<int>(std::lround((cfg.duration - cfg.window) / cfg.step)) + 1);
  const double duration = cfg.window + cfg.step * (n_seg - 1);
  const std::vector<Segment> speech{{0.0, duration}};
  const std::vector<Segment> segments = uniform_segment(speech, cfg.window, cfg.step);

  Eigen::MatrixXd centroids(cfg.num_speakers, cfg.embedding_dim);
  for (Eigen::Index k = 0; k < centroids.size(); ++k) centroids.data()[k] = cfg.between_spread * normal(rng);

  // Stay probability per segmentation step, equivalent to turn_hold_prob per second.
  const double stay = std::pow(cfg.turn_hold_prob, cfg.step);
  std::uniform_int_distribution<int> pick(0, cfg.num_speakers - 1);
  std::uniform_int_distribution<int> other(0, cfg.num_speakers - 2);

  Conversation conv;
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    std::vector<int> turn(static_cast<std::size_t>(n_seg));
    turn[0] = pick(rng);
    for (int k = 1; k < n_seg; ++k) {
      if (unit(rng) < stay) {
        turn[static_cast<std::size_t>(k)] = turn[static_cast<std::size_t>(k - 1)];
      } else {
        const int o = other(rng);
        turn[static_cast<std::size_t>(k)] = o >= turn[static_cast<std::size_t>(k - 1)] ? o + 1 : o;
      }
    }
    // Cell k spans the midpoints between neighbouring segment centres.
    Annotation ref;
    for (int k = 0; k < n_seg; ++k) {
      const double lo = k == 0 ? 0.0 : k * cfg.step + 0.5 * (cfg.window - cfg.step);
      const double hi = k + 1 == n_seg ? duration : k * cfg.step + 0.5 * (cfg.window + cfg.step);
      const std::string who = speaker_name(turn[static_cast<std::size_t>(k)]);
      if (!ref.regions.empty() && ref.regions.back().speaker == who)
        ref.regions.back().segment.end = hi;
      else
        ref.regions.push_back({{lo, hi}, who});
    }
    std::vector<std::string> labels;
    std::set<std::string> seen;
    for (const Segment& s : segments) {
      auto l = segment_label(s, ref);
      if (!l) break;
      seen.insert(*l);
      labels.push_back(*l);
    }
    if (labels.size() == segments.size() && static_cast<int>(seen.size()) == cfg.num_speakers) {
      conv.reference = std::move(ref);
      conv.labels = std::move(labels);
      ok = true;
    }
  }
  if (!ok)
    throw parameter_error("synth: could not place " + std::to_string(cfg.num_speakers) + " speakers in " +
                          std::to_string(duration) + " s after 100 attempts");

  conv.embeddings.recording_id = "synth";
  conv.reference.recording_id = "synth";
  conv.embeddings.segments = segments;
  conv.embeddings.vectors.resize(static_cast<Eigen::Index>(segments.size()), cfg.embedding_dim);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const int spk = std::stoi(conv.labels[i].substr(3)) - 1;
    for (int c = 0; c < cfg.embedding_dim; ++c)
      conv.embeddings.vectors(static_cast<Eigen::Index>(i), c) = centroids(spk, c) + cfg.within_spread * normal(rng);
  }
  return conv;
}

std::vector<Conversation> gen_corpus(const CorpusConfig& cfg) {
  if (cfg.n_recordings < 1) throw parameter_error("gen_corpus: n_recordings must be positive");
  if (cfg.min_speakers < 2 || cfg.max_speakers < cfg.min_speakers)
    throw parameter_error("gen_corpus: invalid speaker-count range");
  if (!(cfg.min_duration > 0.0) || cfg.max_duration < cfg.min_duration)
    throw parameter_error("gen_corpus: invalid duration range");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> speakers(cfg.min_speakers, cfg.max_speakers);
  std::uniform_real_distribution<double> duration(cfg.min_duration, cfg.max_duration);
  std::vector<Conversation> corpus;
  corpus.reserve(static_cast<std::size_t>(cfg.n_recordings));
  for (int r = 0; r < cfg.n_recordings; ++r) {
    SynthConfig c = cfg.base;
    c.num_speakers = speakers(rng);
    c.duration = duration(rng);
    c.seed = rng();
    char id[32];
    std::snprintf(id, sizeof id, "rec%04d", r);
    Conversation conv = gen_conversation(c);
    conv.embeddings.recording_id = id;
    conv.reference.recording_id = id;
    corpus.push_back(std::move(conv));
  }
  return corpus;
}

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diar/core.hpp"

namespace diar {

struct SynthConfig {
  int num_speakers = 2;
  double duration = 120.0;  // seconds
  int embedding_dim = 16;
  double turn_hold_prob = 0.9;  // probability of keeping the floor for one more second
  double within_spread = 0.5;
  double between_spread = 1.0;
  double window = 1.5;
  double step = 0.75;
  std::uint64_t seed = 0;
};

struct Conversation {
  EmbeddingSequence embeddings;
  Annotation reference;
  std::vector<std::string> labels;  // per-segment speaker, from segment_label
};

// Samples one conversation: Gaussian speaker centroids, a first-order Markov
// turn sequence, uniform segmentation and noisy per-segment embeddings.
//
// The duration is rounded to a whole number of segmentation steps. Turns
// change only on the boundaries between consecutive segment centres, so each
// segment's central region holds a single speaker.
Conversation gen_conversation(const SynthConfig& cfg);

struct CorpusConfig {
  int n_recordings = 1;
  int min_speakers = 2;
  int max_speakers = 7;
  double min_duration = 60.0;
  double max_duration = 600.0;
  SynthConfig base;  // num_speakers, duration and seed are drawn per recording
  std::uint64_t seed = 0;
};

std::vector<Conversation> gen_corpus(const CorpusConfig& cfg);

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "diar/core.hpp"
#include "diar/eval.hpp"
#include "diar/neural.hpp"
#include "diar/scoring.hpp"

namespace diar::io {

// RTTM: one `SPEAKER <rec> 1 <onset> <duration> <NA> <NA> <speaker> <NA> <NA>`
// line per region, times with three decimals. Reading groups regions by
// recording in order of first appearance.
void write_rttm(std::ostream& os, std::span<const Annotation> annotations);
void write_rttm(const std::filesystem::path& path, std::span<const Annotation> annotations);
std::vector<Annotation> read_rttm(std::istream& is, const std::string& source = "<stream>");
std::vector<Annotation> read_rttm(const std::filesystem::path& path);

// Embedding archive: `#EMB <recording_id> <dim> <n>` followed by n lines of
// `start end v1 ... vd`. Numbers use the shortest round-trip representation.
void write_embeddings(std::ostream& os, const EmbeddingSequence& seq);
void write_embeddings(const std::filesystem::path& path, const EmbeddingSequence& seq);
EmbeddingSequence read_embeddings(std::istream& is, const std::string& source = "<stream>");
EmbeddingSequence read_embeddings(const std::filesystem::path& path);

// Binary model checkpoint:
//   "DIARCKPT" | u32 version | u32 kind | u64 payload size | payload | u32 crc32(payload)
// The payload holds the architecture, named parameter tensors (raw IEEE
// doubles) and a free-form training-config echo.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint32_t { kPairSeq = 1, kPlda = 2 };

using AnyModel = std::variant<PairSeqModel, PldaModel>;

void save_model(std::ostream& os, const PairSeqModel& model, const std::string& config_echo = {});
void save_model(std::ostream& os, const PldaModel& model, const std::string& config_echo = {});
void save_model(const std::filesystem::path& path, const PairSeqModel& model, const std::string& config_echo = {});
void save_model(const std::filesystem::path& path, const PldaModel& model, const std::string& config_echo = {});

struct LoadedModel {
  AnyModel model;
  std::string config_echo;
};

LoadedModel load_model(std::istream& is);
LoadedModel load_model(const std::filesystem::path& path);
PairSeqModel load_pairseq_model(const std::filesystem::path& path);
PldaModel load_plda_model(const std::filesystem::path& path);

// `<rec> scored=<s> confusion=<s> false_alarm=<s> missed=<s> der=<pct>`
std::string format_der_line(const std::string& recording_id, const DerReport& r);

// Shortest round-trip text for a double.
std::string format_double(double v);

}  // namespace diar::io

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/io.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "diar/error.hpp"

namespace diar::io {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

Error parse_at(const std::string& source, std::size_t line, const std::string& what) {
  return parse_error(source + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view s, const std::string& source, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw parse_at(source, line, "bad number '" + std::string(s) + "'");
  return v;
}

long parse_long(std::string_view s, const std::string& source, std::size_t line) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw parse_at(source, line, "bad integer '" + std::string(s) + "'");
  return v;
}

std::string fixed3(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 3);
  if (ec != std::errc()) throw parameter_error("cannot format time value");
  return {buf, p};
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return is;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw parameter_error("cannot format number");
  return {buf, p};
}

void write_rttm(std::ostream& os, std::span<const Annotation> annotations) {
  for (const auto& a : annotations) {
    if (a.recording_id.empty() || a.recording_id.find_first_of(" \t") != std::string::npos)
      throw parameter_error("rttm: recording id must be a nonempty token");
    for (const auto& r : a.regions) {
      if (r.speaker.find_first_of(" \t") != std::string::npos || r.speaker.empty())
        throw parameter_error("rttm: speaker label must be a nonempty token");
      os << "SPEAKER " << a.recording_id << " 1 " << fixed3(r.segment.start) << ' ' << fixed3(r.segment.duration())
         << " <NA> <NA> " << r.speaker << " <NA> <NA>\n";
    }
  }
}

void write_rttm(const std::filesystem::path& path, std::span<const Annotation> annotations) {
  auto os = open_out(path);
  write_rttm(os, annotations);
  if (!os) throw Error(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

std::vector<Annotation> read_rttm(std::istream& is, const std::string& source) {
  std::vector<Annotation> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 10) throw parse_at(source, lineno, "expected 10 fields, got " + std::to_string(f.size()));
    if (f[0] != "SPEAKER") throw parse_at(source, lineno, "unsupported record type '" + std::string(f[0]) + "'");
    const double onset = parse_double(f[3], source, lineno);
    const double dur = parse_double(f[4], source, lineno);
    if (onset < 0.0 || dur <= 0.0) throw parse_at(source, lineno, "onset must be >= 0 and duration > 0");
    const std::string rec(f[1]);
    auto [it, inserted] = index.emplace(rec, out.size());
    if (inserted) out.push_back({rec, {}});
    out[it->second].regions.push_back({{onset, onset + dur}, std::string(f[7])});
  }
  return out;
}

std::vector<Annotation> read_rttm(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_rttm(is, path.string());
}

void write_embeddings(std::ostream& os, const EmbeddingSequence& seq) {
  seq.validate();
  if (seq.recording_id.empty() || seq.recording_id.find_first_of(" \t") != std::string::npos)
    throw parameter_error("embeddings: recording id must be a nonempty token");
  os << "#EMB " << seq.recording_id << ' ' << seq.dim() << ' ' << seq.size() << '\n';
  for (int i = 0; i < seq.size(); ++i) {
    os << format_double(seq.segments[static_cast<std::size_t>(i)].start) << ' '
       << format_double(seq.segments[static_cast<std::size_t>(i)].end);
    for (int c = 0; c < seq.dim(); ++c) os << ' ' << format_double(seq.vectors(i, c));
    os << '\n';
  }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSequence& seq) {
  auto os = open_out(path);
  write_embeddings(os, seq);
  if (!os) throw Error(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

EmbeddingSequence read_embeddings(std::istream& is, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!split_ws(line).empty()) return true;
    }
    return false;
  };
  if (!next()) throw parse_at(source, lineno, "missing #EMB header");
  const auto h = split_ws(line);
  if (h.size() != 4 || h[0] != "#EMB") throw parse_at(source, lineno, "expected '#EMB <recording_id> <dim> <n>'");
  const long dim = parse_long(h[2], source, lineno);
  const long n = parse_long(h[3], source, lineno);
  if (dim < 1 || n < 1) throw parse_at(source, lineno, "dim and n must be positive");

  EmbeddingSequence seq;
  seq.recording_id = std::string(h[1]);
  seq.vectors.resize(n, dim);
  seq.segments.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    if (!next())
      throw parse_at(source, lineno, "header declares " + std::to_string(n) + " records, found " + std::to_string(i));
    const auto f = split_ws(line);
    if (static_cast<long>(f.size()) != dim + 2)
      throw parse_at(source, lineno, "expected " + std::to_string(dim) + " values, got " +
                                         std::to_string(static_cast<long>(f.size()) - 2));
    seq.segments.push_back({parse_double(f[0], source, lineno), parse_double(f[1], source, lineno)});
    for (long c = 0; c < dim; ++c) seq.vectors(i, c) = parse_double(f[static_cast<std::size_t>(c + 2)], source, lineno);
  }
  if (next()) throw parse_at(source, lineno, "more records than the declared " + std::to_string(n));
  try {
    seq.validate();
  } catch (const Error& e) {
    throw parse_error(source + ": " + e.what());
  }
  return seq;
}

EmbeddingSequence read_embeddings(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_embeddings(is, path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'D', 'I', 'A', 'R', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_tensor(const std::string& name, const double* data, Eigen::Index rows, Eigen::Index cols) {
    put_string(name);
    put(static_cast<std::uint32_t>(rows));
    put(static_cast<std::uint32_t>(cols));
    const auto* p = reinterpret_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + sizeof(double) * static_cast<std::size_t>(rows * cols));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& b) : buf_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(buf_.data() + at_, n);
    at_ += n;
    return s;
  }
  // Reads a tensor into `out` after checking its name and shape.
  void get_tensor(const std::string& name, double* out, Eigen::Index rows, Eigen::Index cols) {
    const std::string got = get_string();
    const auto r = get<std::uint32_t>();
    const auto c = get<std::uint32_t>();
    if (got != name || r != rows || c != cols)
      throw parse_error("checkpoint: expected tensor " + name + " [" + std::to_string(rows) + "x" +
                        std::to_string(cols) + "], found " + got + " [" + std::to_string(r) + "x" +
                        std::to_string(c) + "]");
    const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(rows * cols);
    need(bytes);
    std::memcpy(out, buf_.data() + at_, bytes);
    at_ += bytes;
  }
  bool done() const { return at_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (at_ + n > buf_.size()) throw parse_error("checkpoint: payload ends early");
  }
  const std::vector<char>& buf_;
  std::size_t at_ = 0;
};

std::uint32_t crc_of(const std::vector<char>& payload) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t at = 0;
  while (at < payload.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(payload.size() - at, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data() + at), chunk);
    at += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_container(std::ostream& os, ModelKind kind, const std::vector<char>& payload) {
  os.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kCheckpointVersion;
  const auto k = static_cast<std::uint32_t>(kind);
  const auto size = static_cast<std::uint64_t>(payload.size());
  const std::uint32_t crc = crc_of(payload);
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  os.write(reinterpret_cast<const char*>(&k), sizeof k);
  os.write(reinterpret_cast<const char*>(&size), sizeof size);
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  os.write(reinterpret_cast<const char*>(&crc), sizeof crc);
  if (!os) throw Error(ErrorKind::kIo, "checkpoint: write failed");
}

Error checksum_error(const std::string& m) { return {ErrorKind::kChecksum, "checkpoint: " + m}; }

}  // namespace

void save_model(std::ostream& os, const PairSeqModel& model, const std::string& config_echo) {
  Writer w;
  w.put(static_cast<std::int32_t>(model.dims.embedding_dim));
  w.put(static_cast<std::int32_t>(model.dims.hidden));
  w.put(static_cast<std::int32_t>(model.dims.fc_hidden));
  w.put(static_cast<std::int32_t>(model.dims.layers));
  w.put(static_cast<std::uint64_t>(model.parameter_count()));
  model.for_each_tensor([&](const std::string& name, const double* d, Eigen::Index r, Eigen::Index c) {
    w.put_tensor(name, d, r, c);
  });
  w.put_string(config_echo);
  write_container(os, ModelKind::kPairSeq, w.bytes());
}

void save_model(std::ostream& os, const PldaModel& model, const std::string& config_echo) {
  Writer w;
  w.put(static_cast<std::int32_t>(model.input_dim()));
  w.put(static_cast<std::int32_t>(model.effective_dim()));
  w.put_tensor("mean", model.mean.data(), model.mean.rows(), 1);
  w.put_tensor("whitening_transform", model.whitening_transform.data(), model.whitening_transform.rows(),
               model.whitening_transform.cols());
  w.put_tensor("center", model.center.data(), model.center.rows(), 1);
  w.put_tensor("between_cov", model.between_cov.data(), model.between_cov.rows(), model.between_cov.cols());
  w.put_tensor("within_cov", model.within_cov.data(), model.within_cov.rows(), model.within_cov.cols());
  w.put_string(config_echo);
  write_container(os, ModelKind::kPlda, w.bytes());
}

void save_model(const std::filesystem::path& path, const PairSeqModel& model, const std::string& config_echo) {
  auto os = open_out(path, std::ios::out | std::ios::binary);
  save_model(os, model, config_echo);
}

void save_model(const std::filesystem::path& path, const PldaModel& model, const std::string& config_echo) {
  auto os = open_out(path, std::ios::out | std::ios::binary);
  save_model(os, model, config_echo);
}

LoadedModel load_model(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic)) throw checksum_error("file too short for a header");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw parse_error("checkpoint: bad magic, not a model file");
  std::uint32_t version = 0;
  std::uint32_t kind = 0;
  std::uint64_t size = 0;
  if (!is.read(reinterpret_cast<char*>(&version), sizeof version)) throw checksum_error("file too short for a header");
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::kVersion, "checkpoint: unsupported format version " + std::to_string(version) +
                                         " (expected " + std::to_string(kCheckpointVersion) + ")");
  if (!is.read(reinterpret_cast<char*>(&kind), sizeof kind) || !is.read(reinterpret_cast<char*>(&size), sizeof size))
    throw checksum_error("file too short for a header");
  if (size > (std::uint64_t{1} << 40)) throw checksum_error("implausible payload size");
  std::vector<char> payload(static_cast<std::size_t>(size));
  if (!is.read(payload.data(), static_cast<std::streamsize>(size))) throw checksum_error("payload truncated");
  std::uint32_t crc = 0;
  if (!is.read(reinterpret_cast<char*>(&crc), sizeof crc)) throw checksum_error("checksum missing (truncated file)");
  if (crc != crc_of(payload)) throw checksum_error("checksum mismatch, file is corrupt");

  Reader r(payload);
  LoadedModel out;
  if (kind == static_cast<std::uint32_t>(ModelKind::kPairSeq)) {
    PairSeqDims dims;
    dims.embedding_dim = r.get<std::int32_t>();
    dims.hidden = r.get<std::int32_t>();
    dims.fc_hidden = r.get<std::int32_t>();
    dims.layers = r.get<std::int32_t>();
    const auto count = r.get<std::uint64_t>();
    PairSeqModel m = PairSeqModel::zeros(dims);
    if (count != m.parameter_count())
      throw parse_error("checkpoint: parameter count " + std::to_string(count) + " does not match architecture (" +
                        std::to_string(m.parameter_count()) + ")");
    m.for_each_tensor([&](const std::string& name, double* d, Eigen::Index rows, Eigen::Index cols) {
      r.get_tensor(name, d, rows, cols);
    });
    out.config_echo = r.get_string();
    out.model = std::move(m);
  } else if (kind == static_cast<std::uint32_t>(ModelKind::kPlda)) {
    const auto d = r.get<std::int32_t>();
    const auto rank = r.get<std::int32_t>();
    if (d < 1 || rank < 1 || rank > d) throw parse_error("checkpoint: bad PLDA dimensions");
    PldaModel m;
    m.mean.resize(d);
    m.whitening_transform.resize(rank, d);
    m.center.resize(rank);
    m.between_cov.resize(rank, rank);
    m.within_cov.resize(rank, rank);
    r.get_tensor("mean", m.mean.data(), d, 1);
    r.get_tensor("whitening_transform", m.whitening_transform.data(), rank, d);
    r.get_tensor("center", m.center.data(), rank, 1);
    r.get_tensor("between_cov", m.between_cov.data(), rank, rank);
    r.get_tensor("within_cov", m.within_cov.data(), rank, rank);
    out.config_echo = r.get_string();
    m.prepare();
    out.model = std::move(m);
  } else {
    throw parse_error("checkpoint: unknown model kind " + std::to_string(kind));
  }
  if (!r.done()) throw parse_error("checkpoint: trailing bytes in payload");
  return out;
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto is = open_in(path, std::ios::in | std::ios::binary);
  try {
    return load_model(is);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

PairSeqModel load_pairseq_model(const std::filesystem::path& path) {
  auto m = load_model(path);
  if (auto* p = std::get_if<PairSeqModel>(&m.model)) return std::move(*p);
  throw config_error(path.string() + " is not a Bi-LSTM checkpoint");
}

PldaModel load_plda_model(const std::filesystem::path& path) {
  auto m = load_model(path);
  if (auto* p = std::get_if<PldaModel>(&m.model)) return std::move(*p);
  throw config_error(path.string() + " is not a PLDA checkpoint");
}

std::string format_der_line(const std::string& recording_id, const DerReport& r) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << recording_id << " scored=" << fixed3(r.scored_time) << " confusion=" << fixed3(r.confusion)
     << " false_alarm=" << fixed3(r.false_alarm) << " missed=" << fixed3(r.missed)
     << " der=" << fixed3(100.0 * r.der) << (r.undefined ? " undefined" : "");
  return os.str();
}

}  // namespace diar::io

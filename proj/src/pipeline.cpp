// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#include "diar/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "diar/enhance.hpp"
#include "diar/error.hpp"
#include "diar/io.hpp"

namespace diar {

namespace {

template <typename F>
auto run_stage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw Error(e.kind(), stage, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kNumerical, stage, e.what());
  }
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double recording_duration(const EmbeddingSequence& seq) {
  return seq.segments.empty() ? 0.0 : seq.segments.back().end - seq.segments.front().start;
}

}  // namespace

std::string_view to_string(Backend backend) {
  return backend == Backend::kSpectral ? "sc" : "ahc";
}

Backend parse_backend(std::string_view name) {
  if (name == "sc" || name == "spectral") return Backend::kSpectral;
  if (name == "ahc") return Backend::kAhc;
  throw config_error("unknown clustering backend '" + std::string(name) + "'");
}

SimilarityMatrix score_matrix(const EmbeddingSequence& seq, const PipelineConfig& cfg, const PipelineModels& models) {
  if (cfg.scorer == ScorerKind::kPlda && models.plda == nullptr)
    throw Error(ErrorKind::kConfig, "scoring", "plda scorer requires a PLDA model");
  if (cfg.scorer == ScorerKind::kNeural && models.neural == nullptr)
    throw Error(ErrorKind::kConfig, "scoring", "lstm scorer requires a pair-sequence model");
  SimilarityMatrix s = run_stage("scoring", [&] {
    return similarity_matrix(seq, cfg.scorer, ScorerModels{models.plda, models.neural, cfg.max_block});
  });
  if (!cfg.enhance) return s;
  return run_stage("enhance", [&] { return enhance(s); });
}

std::vector<int> cluster_matrix(const SimilarityMatrix& s, const PipelineConfig& cfg) {
  return run_stage("clustering", [&] {
    if (cfg.backend == Backend::kAhc) return ahc(s, AhcConfig{cfg.alpha, Linkage::kAverage});
    SpectralConfig sc = cfg.spectral;
    sc.beta = cfg.beta;
    sc.seed = cfg.seed;
    return spectral_cluster(s, sc);
  });
}

Annotation diarize(const EmbeddingSequence& seq, const PipelineConfig& cfg, const PipelineModels& models) {
  run_stage("input", [&] { seq.validate(); });
  const SimilarityMatrix s = score_matrix(seq, cfg, models);
  const std::vector<int> labels = cluster_matrix(s, cfg);
  return run_stage("hypothesis", [&] { return labels_to_annotation(seq.segments, labels, seq.recording_id); });
}

Corpus load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "corpus", "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".emb") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::kIo, "corpus", "no .emb files in " + dir.string());

  const fs::path ref_path = dir / "reference.rttm";
  if (!fs::exists(ref_path)) throw Error(ErrorKind::kConfig, "corpus", "missing references: " + ref_path.string());
  const std::vector<Annotation> refs = run_stage("corpus", [&] { return io::read_rttm(ref_path); });
  std::map<std::string, const Annotation*> by_id;
  for (const Annotation& a : refs) by_id[a.recording_id] = &a;

  Corpus corpus;
  std::set<std::string> seen;
  for (const fs::path& f : files) {
    EmbeddingSequence seq = run_stage("corpus", [&] { return io::read_embeddings(f); });
    if (!seen.insert(seq.recording_id).second)
      throw Error(ErrorKind::kConfig, "corpus", "duplicate recording '" + seq.recording_id + "'");
    auto it = by_id.find(seq.recording_id);
    if (it == by_id.end())
      throw Error(ErrorKind::kConfig, "corpus", "missing reference for recording '" + seq.recording_id + "'");
    corpus.references.push_back(*it->second);
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  for (const EmbeddingSequence& seq : corpus.sequences) io::write_embeddings(dir / (seq.recording_id + ".emb"), seq);
  io::write_rttm(dir / "reference.rttm", corpus.references);
}

std::vector<std::string> reference_labels(const EmbeddingSequence& seq, const Annotation& reference) {
  std::vector<std::string> labels;
  labels.reserve(seq.segments.size());
  for (std::size_t i = 0; i < seq.segments.size(); ++i) {
    auto label = segment_label(seq.segments[i], reference);
    labels.push_back(label ? *label : "<none>#" + std::to_string(i));
  }
  return labels;
}

std::vector<double> threshold_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw parameter_error("threshold_grid: invalid range");
  std::vector<double> grid;
  for (int i = 0; lo + i * step <= hi + step / 2; ++i) grid.push_back(lo + i * step);
  return grid;
}

namespace {

void validate_experiment(const Corpus& corpus, const ExperimentConfig& cfg) {
  if (corpus.sequences.empty()) throw config_error("experiment: empty corpus");
  if (corpus.sequences.size() != corpus.references.size())
    throw config_error("experiment: missing references for some recordings");
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i)
    if (corpus.sequences[i].recording_id != corpus.references[i].recording_id)
      throw config_error("experiment: reference order does not match recording '" +
                         corpus.sequences[i].recording_id + "'");
  if (cfg.folds < 2) throw config_error("experiment: need at least 2 folds");
  if (cfg.systems.empty() && cfg.fusions.empty()) throw config_error("experiment: no systems");
  std::set<std::string> names;
  for (const SystemSpec& s : cfg.systems)
    if (!names.insert(s.name).second) throw config_error("experiment: duplicate system '" + s.name + "'");
  for (const FusionSpec& f : cfg.fusions) {
    if (!names.insert(f.name).second) throw config_error("experiment: duplicate system '" + f.name + "'");
    if (f.components.size() < 2) throw config_error("fusion '" + f.name + "': needs at least two components");
    if (f.weights.size() != f.components.size())
      throw config_error("fusion '" + f.name + "': weight count does not match component count");
    for (const std::string& c : f.components)
      if (std::none_of(cfg.systems.begin(), cfg.systems.end(), [&](const SystemSpec& s) { return s.name == c; }))
        throw config_error("fusion '" + f.name + "': unknown component '" + c + "'");
  }
  if (cfg.ttest) {
    for (const std::string& n : {cfg.ttest->first, cfg.ttest->second})
      if (!names.count(n)) throw config_error("t-test: unknown system '" + n + "'");
  }
  if (cfg.beta_grid.empty() || cfg.alpha_grid.empty()) throw config_error("experiment: empty threshold grid");
}

struct MatrixKey {
  ScorerKind scorer;
  bool enhanced;
  auto operator<=>(const MatrixKey&) const = default;
};

}  // namespace

ExperimentReport run_experiment(const Corpus& corpus, const ExperimentConfig& cfg, const ProgressFn& progress) {
  validate_experiment(corpus, cfg);
  auto say = [&](const std::string& m) {
    if (progress) progress(m);
  };

  const std::size_t n_rec = corpus.sequences.size();
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < n_rec; ++i) {
    ids.push_back(corpus.sequences[i].recording_id);
    index_of[ids.back()] = i;
  }
  const auto folds = run_stage("split", [&] { return kfold_split(ids, cfg.folds, cfg.seed); });
  const int fold_count = cfg.max_folds > 0 ? std::min(cfg.max_folds, cfg.folds) : cfg.folds;

  std::set<ScorerKind> scorers;
  for (const SystemSpec& s : cfg.systems) scorers.insert(s.scorer);
  const int dim = corpus.sequences.front().dim();

  ExperimentReport report;
  const std::size_t n_systems = cfg.systems.size() + cfg.fusions.size();
  report.systems.resize(n_systems);
  for (std::size_t s = 0; s < cfg.systems.size(); ++s) report.systems[s].name = cfg.systems[s].name;
  for (std::size_t f = 0; f < cfg.fusions.size(); ++f)
    report.systems[cfg.systems.size() + f].name = cfg.fusions[f].name;
  std::vector<std::vector<std::optional<RecordingResult>>> per_rec(n_systems,
                                                                   std::vector<std::optional<RecordingResult>>(n_rec));

  // Cosine needs no training, so its matrices are shared by all folds.
  std::map<MatrixKey, std::vector<SimilarityMatrix>> shared;

  for (int fold = 0; fold < fold_count; ++fold) {
    FoldInfo info;
    info.index = fold;
    std::vector<std::size_t> train_idx, test_idx;
    std::set<std::string> test_set(folds[fold].begin(), folds[fold].end());
    for (std::size_t i = 0; i < n_rec; ++i) {
      if (test_set.count(ids[i])) {
        test_idx.push_back(i);
        info.test_ids.push_back(ids[i]);
      } else {
        train_idx.push_back(i);
        info.train_ids.push_back(ids[i]);
      }
    }
    if (train_idx.empty() || test_idx.empty()) throw config_error("experiment: fold " + std::to_string(fold) + " is empty");
    say("fold " + std::to_string(fold + 1) + ": " + std::to_string(train_idx.size()) + " train, " +
        std::to_string(test_idx.size()) + " test");

    PldaModel plda;
    PairSeqModel lstm;
    PipelineModels models;
    if (scorers.count(ScorerKind::kPlda)) {
      plda = run_stage("train-plda", [&] {
        std::vector<LabeledVector> data;
        for (std::size_t i : train_idx) {
          const EmbeddingSequence& seq = corpus.sequences[i];
          for (int r = 0; r < seq.size(); ++r) {
            auto label = segment_label(seq.segments[r], corpus.references[i]);
            if (label) data.push_back({seq.vectors.row(r).transpose(), seq.recording_id + "/" + *label});
          }
        }
        return plda_fit(data);
      });
      models.plda = &plda;
    }
    if (scorers.count(ScorerKind::kNeural)) {
      std::vector<TrainingExample> examples;
      for (std::size_t i : train_idx)
        examples.push_back({corpus.sequences[i], reference_labels(corpus.sequences[i], corpus.references[i])});
      TrainConfig tc = cfg.lstm_train;
      tc.seed = mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(fold));
      PairSeqDims dims = cfg.lstm_dims;
      dims.embedding_dim = dim;
      TrainResult tr = run_stage("train-lstm", [&] {
        return train(examples, tc, dims, [&](const EpochLog& log) {
          say("fold " + std::to_string(fold + 1) + " lstm epoch " + std::to_string(log.epoch) +
              " loss " + io::format_double(log.mean_loss));
        });
      });
      lstm = std::move(tr.model);
      report.lstm_history.push_back(std::move(tr.history));
      models.neural = &lstm;
    }

    std::map<MatrixKey, std::vector<SimilarityMatrix>> local;
    auto matrices = [&](MatrixKey key) -> const std::vector<SimilarityMatrix>& {
      auto& cache = key.scorer == ScorerKind::kCosine ? shared : local;
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
      std::vector<SimilarityMatrix> out(n_rec);
      auto raw_it = cache.find({key.scorer, false});
      for (std::size_t i = 0; i < n_rec; ++i) {
        if (key.enhanced && raw_it != cache.end()) {
          out[i] = run_stage("enhance", [&] { return enhance(raw_it->second[i]); });
        } else {
          PipelineConfig pc;
          pc.scorer = key.scorer;
          pc.enhance = key.enhanced;
          pc.max_block = cfg.max_block;
          out[i] = score_matrix(corpus.sequences[i], pc, models);
        }
      }
      return cache.emplace(key, std::move(out)).first->second;
    };
    // Raw neural matrices are the expensive part; compute them once so that
    // both enhanced and fused variants reuse them.
    if (scorers.count(ScorerKind::kNeural)) {
      say("fold " + std::to_string(fold + 1) + ": lstm inference");
      matrices({ScorerKind::kNeural, false});
    }

    SpectralConfig base = cfg.spectral;
    base.seed = cfg.seed;

    auto evaluate = [&](std::size_t sys, Backend backend, const std::vector<const SimilarityMatrix*>& mats) {
      std::vector<TuneItem> items;
      for (std::size_t i : train_idx) {
        if (test_set.count(ids[i])) throw Error(ErrorKind::kConfig, "tuning", "test recording used for tuning");
        items.push_back({mats[i], &corpus.references[i], &corpus.sequences[i]});
      }
      const auto& grid = backend == Backend::kSpectral ? cfg.beta_grid : cfg.alpha_grid;
      const TuneResult tuned = run_stage("tuning", [&] { return tune_threshold(items, backend, grid, base); });
      SystemResult& result = report.systems[sys];
      result.thresholds.push_back(tuned.threshold);
      PipelineConfig pc;
      pc.backend = backend;
      pc.beta = pc.alpha = tuned.threshold;
      pc.spectral = base;
      pc.seed = base.seed;
      DerReport fold_total;
      for (std::size_t i : test_idx) {
        const std::vector<int> labels = cluster_matrix(*mats[i], pc);
        const Annotation hyp = labels_to_annotation(corpus.sequences[i].segments, labels, ids[i]);
        const DerReport r = run_stage("scoring-der", [&] { return der(corpus.references[i], hyp); });
        fold_total += r;
        per_rec[sys][i] = RecordingResult{ids[i], fold, recording_duration(corpus.sequences[i]), r};
      }
      result.per_fold.push_back(fold_total);
      say("fold " + std::to_string(fold + 1) + " " + result.name + ": threshold " + io::format_double(tuned.threshold) +
          ", DER " + io::format_double(fold_total.der * 100.0) + "%");
    };

    for (std::size_t s = 0; s < cfg.systems.size(); ++s) {
      const SystemSpec& spec = cfg.systems[s];
      const auto& mats = matrices({spec.scorer, spec.enhance});
      std::vector<const SimilarityMatrix*> ptrs;
      for (const auto& m : mats) ptrs.push_back(&m);
      evaluate(s, spec.backend, ptrs);
    }

    for (std::size_t f = 0; f < cfg.fusions.size(); ++f) {
      const FusionSpec& fusion = cfg.fusions[f];
      std::vector<const std::vector<SimilarityMatrix>*> parts;
      for (const std::string& c : fusion.components) {
        const SystemSpec& spec =
            *std::find_if(cfg.systems.begin(), cfg.systems.end(), [&](const SystemSpec& s) { return s.name == c; });
        parts.push_back(&matrices({spec.scorer, cfg.refuse_enhance_order ? false : spec.enhance}));
      }
      std::vector<SimilarityMatrix> fused(n_rec);
      for (std::size_t i = 0; i < n_rec; ++i) {
        std::vector<SimilarityMatrix> inputs;
        for (const auto* p : parts) inputs.push_back((*p)[i]);
        fused[i] = run_stage("fusion", [&] { return fuse(inputs, fusion.weights); });
        if (cfg.refuse_enhance_order) fused[i] = run_stage("enhance", [&] { return enhance(fused[i]); });
      }
      std::vector<const SimilarityMatrix*> ptrs;
      for (const auto& m : fused) ptrs.push_back(&m);
      evaluate(cfg.systems.size() + f, fusion.backend, ptrs);
    }

    report.folds.push_back(std::move(info));
  }

  for (std::size_t s = 0; s < n_systems; ++s) {
    SystemResult& result = report.systems[s];
    for (std::size_t i = 0; i < n_rec; ++i) {
      if (!per_rec[s][i]) continue;
      result.total += per_rec[s][i]->report;
      result.recordings.push_back(*per_rec[s][i]);
    }
  }

  if (cfg.ttest) {
    report.ttest_a = cfg.ttest->first;
    report.ttest_b = cfg.ttest->second;
    auto samples = [&](const std::string& name) {
      const auto it = std::find_if(report.systems.begin(), report.systems.end(),
                                   [&](const SystemResult& s) { return s.name == name; });
      std::vector<DurationDer> out;
      for (const RecordingResult& r : it->recordings) out.push_back({r.duration, r.report.der * 100.0});
      return out;
    };
    const auto a = samples(report.ttest_a);
    const auto b = samples(report.ttest_b);
    // Each group needs two recordings; too few test recordings leave the test empty.
    const int groups = static_cast<int>(std::min<std::size_t>(5, a.size() / 2));
    if (groups > 0) report.ttest = run_stage("ttest", [&] { return duration_stratified_ttest(a, b, groups); });
  }
  return report;
}

std::string format_report_table(const ExperimentReport& report) {
  std::size_t name_width = 6;
  for (const SystemResult& s : report.systems) name_width = std::max(name_width, s.name.size());
  const std::size_t folds = report.folds.size();
  std::ostringstream os;
  char buf[64];
  os << "DER (%) on the test folds\n";
  os << std::string(name_width, ' ').replace(0, 6, "System");
  for (std::size_t f = 0; f < folds; ++f) {
    std::snprintf(buf, sizeof buf, "  %7s", ("fold" + std::to_string(f + 1)).c_str());
    os << buf;
  }
  os << "    total\n";
  for (const SystemResult& s : report.systems) {
    os << s.name << std::string(name_width - s.name.size(), ' ');
    for (const DerReport& r : s.per_fold) {
      std::snprintf(buf, sizeof buf, "  %7.2f", r.der * 100.0);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "  %7.2f\n", s.total.der * 100.0);
    os << buf;
  }
  if (!report.ttest.empty()) {
    os << "\nt-test " << report.ttest_a << " vs " << report.ttest_b << " by duration group\n";
    os << "group  size   mean_a   mean_b   t-value  H0\n";
    for (std::size_t g = 0; g < report.ttest.size(); ++g) {
      const TTestResult& t = report.ttest[g];
      std::snprintf(buf, sizeof buf, "%5zu  %4d  %7.2f  %7.2f  %8.3f  ", g + 1, t.size, t.mean_a, t.mean_b, t.t_value);
      os << buf << (t.h0_accepted ? "accept" : "reject") << '\n';
    }
  }
  return os.str();
}

}  // namespace diar

// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: corpus generation, model training, diarization,
// scoring, fusion and the cross-validation experiment driver.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diar/enhance.hpp"
#include "diar/error.hpp"
#include "diar/io.hpp"
#include "diar/pipeline.hpp"
#include "diar/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct LstmOptions {
  int hidden = 256;
  int fc_hidden = 64;
  int layers = 2;
  diar::TrainConfig train;
};

void add_lstm_options(CLI::App* app, LstmOptions& o) {
  app->add_option("--hidden", o.hidden, "LSTM hidden size per direction")->capture_default_str();
  app->add_option("--fc-hidden", o.fc_hidden, "width of the first fully connected layer")->capture_default_str();
  app->add_option("--layers", o.layers, "stacked bidirectional layers")->capture_default_str();
  app->add_option("--epochs", o.train.epochs)->capture_default_str();
  app->add_option("--lr", o.train.lr0, "initial learning rate")->capture_default_str();
  app->add_option("--lr-decay-factor", o.train.lr_decay_factor)->capture_default_str();
  app->add_option("--lr-decay-every", o.train.lr_decay_every, "epochs between decays")->capture_default_str();
  app->add_option("--train-max-block", o.train.max_block, "largest training sub-matrix")->capture_default_str();
  app->add_option("--grad-clip", o.train.grad_clip, "elementwise gradient clip, 0 disables")->capture_default_str();
  app->add_option("--sample-block", o.train.sample_block, "train on random windows of this size, 0 disables")
      ->capture_default_str();
  app->add_option("--samples-per-recording", o.train.samples_per_recording)->capture_default_str();
}

json lstm_echo(const LstmOptions& o, int dim) {
  return {{"embedding_dim", dim},          {"hidden", o.hidden},
          {"fc_hidden", o.fc_hidden},      {"layers", o.layers},
          {"epochs", o.train.epochs},      {"lr0", o.train.lr0},
          {"lr_decay_factor", o.train.lr_decay_factor}, {"lr_decay_every", o.train.lr_decay_every},
          {"max_block", o.train.max_block}, {"grad_clip", o.train.grad_clip},
          {"sample_block", o.train.sample_block}, {"samples_per_recording", o.train.samples_per_recording},
          {"seed", o.train.seed}};
}

// Every option of `app` with its effective value.
json option_values(const CLI::App* app) {
  json out = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    std::string name = opt->get_name();
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    const auto& results = opt->results();
    if (opt->get_items_expected_max() == 0) {
      out[name] = opt->count() > 0;
    } else if (opt->get_expected_max() > 1 || opt->get_items_expected_max() > 1) {
      out[name] = results;
    } else if (!results.empty()) {
      out[name] = results.back();
    } else {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw diar::Error(diar::ErrorKind::kIo, "output", "cannot write " + path.string());
  os << text;
  if (!os) throw diar::Error(diar::ErrorKind::kIo, "output", "write failed for " + path.string());
}

void write_manifest(const fs::path& out_dir, const CLI::App* sub, const std::vector<std::string>& outputs,
                    json extra = json::object()) {
  json m;
  m["command"] = sub->get_name();
  m["options"] = option_values(sub);
  m["outputs"] = outputs;
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<diar::EmbeddingSequence> read_inputs(const fs::path& input) {
  std::vector<diar::EmbeddingSequence> seqs;
  if (fs::is_directory(input)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && e.path().extension() == ".emb") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) seqs.push_back(diar::io::read_embeddings(f));
  } else {
    seqs.push_back(diar::io::read_embeddings(input));
  }
  if (seqs.empty()) throw diar::Error(diar::ErrorKind::kIo, "input", "no embeddings found in " + input.string());
  return seqs;
}

json der_json(const diar::DerReport& r) {
  return {{"scored_time", r.scored_time}, {"confusion", r.confusion}, {"false_alarm", r.false_alarm},
          {"missed", r.missed},           {"der", r.der},             {"undefined", r.undefined}};
}

// "name=scorer:backend[:raw]"
diar::SystemSpec parse_system(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw diar::config_error("system '" + text + "': expected NAME=SCORER:BACKEND");
  diar::SystemSpec s;
  s.name = text.substr(0, eq);
  std::vector<std::string> parts;
  std::string rest = text.substr(eq + 1);
  for (std::size_t pos; (pos = rest.find(':')) != std::string::npos; rest.erase(0, pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  if (parts.size() < 2 || parts.size() > 3) throw diar::config_error("system '" + text + "': expected NAME=SCORER:BACKEND");
  s.scorer = diar::parse_scorer_kind(parts[0]);
  s.backend = diar::parse_backend(parts[1]);
  if (parts.size() == 3) {
    if (parts[2] != "raw") throw diar::config_error("system '" + text + "': unknown flag '" + parts[2] + "'");
    s.enhance = false;
  }
  return s;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string rest = text;
  for (std::size_t pos; (pos = rest.find(sep)) != std::string::npos; rest.erase(0, pos + 1))
    out.push_back(rest.substr(0, pos));
  out.push_back(rest);
  return out;
}

// "name=a,b:wa,wb[:backend]"
diar::FusionSpec parse_fusion(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw diar::config_error("fusion '" + text + "': expected NAME=A,B:WA,WB");
  diar::FusionSpec f;
  f.name = text.substr(0, eq);
  const auto parts = split(text.substr(eq + 1), ':');
  if (parts.size() < 2 || parts.size() > 3) throw diar::config_error("fusion '" + text + "': expected NAME=A,B:WA,WB");
  f.components = split(parts[0], ',');
  for (const std::string& w : split(parts[1], ',')) {
    try {
      f.weights.push_back(std::stod(w));
    } catch (const std::exception&) {
      throw diar::config_error("fusion '" + text + "': bad weight '" + w + "'");
    }
  }
  if (parts.size() == 3) f.backend = diar::parse_backend(parts[2]);
  return f;
}

std::vector<double> parse_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw diar::config_error("grid '" + text + "': expected LO:HI:STEP");
  try {
    return diar::threshold_grid(std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]));
  } catch (const std::invalid_argument&) {
    throw diar::config_error("grid '" + text + "': expected LO:HI:STEP");
  }
}

struct ModelPaths {
  std::string plda;
  std::string lstm;
};

struct LoadedModels {
  std::optional<diar::PldaModel> plda;
  std::optional<diar::PairSeqModel> lstm;
  diar::PipelineModels view() const { return {plda ? &*plda : nullptr, lstm ? &*lstm : nullptr}; }
};

LoadedModels load_models(const ModelPaths& paths) {
  LoadedModels m;
  try {
    if (!paths.plda.empty()) m.plda = diar::io::load_plda_model(paths.plda);
    if (!paths.lstm.empty()) m.lstm = diar::io::load_pairseq_model(paths.lstm);
  } catch (const diar::Error& e) {
    throw diar::Error(e.kind(), "model", e.what());
  }
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker diarization backend toolkit"};
  app.require_subcommand(1);
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "random seed")->capture_default_str();
  };

  // gen
  diar::CorpusConfig gen_cfg;
  gen_cfg.n_recordings = 20;
  auto* gen = app.add_subcommand("gen", "generate a synthetic conversation corpus");
  common(gen);
  gen->add_option("--recordings", gen_cfg.n_recordings)->capture_default_str();
  gen->add_option("--min-speakers", gen_cfg.min_speakers)->capture_default_str();
  gen->add_option("--max-speakers", gen_cfg.max_speakers)->capture_default_str();
  gen->add_option("--min-duration", gen_cfg.min_duration)->capture_default_str();
  gen->add_option("--max-duration", gen_cfg.max_duration)->capture_default_str();
  gen->add_option("--dim", gen_cfg.base.embedding_dim)->capture_default_str();
  gen->add_option("--within-spread", gen_cfg.base.within_spread)->capture_default_str();
  gen->add_option("--between-spread", gen_cfg.base.between_spread)->capture_default_str();
  gen->add_option("--hold-prob", gen_cfg.base.turn_hold_prob, "probability of keeping the floor per second")
      ->capture_default_str();

  // train-plda
  std::string corpus_dir;
  auto* train_plda = app.add_subcommand("train-plda", "fit a PLDA model on a labeled corpus");
  common(train_plda);
  train_plda->add_option("--corpus", corpus_dir, "corpus directory (*.emb + reference.rttm)")->required();

  // train-lstm
  LstmOptions lstm_opts;
  auto* train_lstm = app.add_subcommand("train-lstm", "train the Bi-LSTM pair scorer on a labeled corpus");
  common(train_lstm);
  train_lstm->add_option("--corpus", corpus_dir, "corpus directory (*.emb + reference.rttm)")->required();
  add_lstm_options(train_lstm, lstm_opts);

  // diarize and fuse share the clustering options
  std::string input;
  ModelPaths model_paths;
  diar::PipelineConfig pipe;
  std::string scorer_name = "cosine";
  std::string backend_name = "sc";
  bool no_enhance = false;
  auto clustering_options = [&](CLI::App* sub) {
    sub->add_option("--input", input, "embedding file or directory of *.emb files")->required();
    sub->add_option("--plda", model_paths.plda, "PLDA checkpoint");
    sub->add_option("--lstm", model_paths.lstm, "Bi-LSTM checkpoint");
    sub->add_option("--backend", backend_name, "sc or ahc")->capture_default_str();
    sub->add_option("--beta", pipe.beta, "spectral eigenvalue threshold")->capture_default_str();
    sub->add_option("--alpha", pipe.alpha, "AHC stopping similarity")->capture_default_str();
    sub->add_option("--max-block", pipe.max_block, "largest neural sub-matrix")->capture_default_str();
    sub->add_option("--kmeans-restarts", pipe.spectral.kmeans_restarts)->capture_default_str();
    sub->add_flag("--no-enhance", no_enhance, "skip similarity matrix enhancement");
  };
  auto* diarize = app.add_subcommand("diarize", "diarize embedding sequences");
  common(diarize);
  clustering_options(diarize);
  diarize->add_option("--scorer", scorer_name, "cosine, plda or lstm")->capture_default_str();

  std::vector<std::string> fuse_scorers;
  std::vector<double> fuse_weights;
  bool refuse_order = false;
  auto* fuse_cmd = app.add_subcommand("fuse", "diarize from a weighted sum of similarity matrices");
  common(fuse_cmd);
  clustering_options(fuse_cmd);
  fuse_cmd->add_option("--scorers", fuse_scorers, "scorers to combine")->required()->delimiter(',');
  fuse_cmd->add_option("--weights", fuse_weights, "one weight per scorer")->required()->delimiter(',');
  fuse_cmd->add_flag("--refuse-enhance-order", refuse_order, "fuse raw matrices, then enhance the sum");

  // eval
  std::string ref_path, hyp_path;
  double collar = diar::kDefaultCollar;
  bool keep_overlap = false;
  auto* eval = app.add_subcommand("eval", "score a hypothesis RTTM against a reference RTTM");
  common(eval);
  eval->add_option("--reference", ref_path)->required();
  eval->add_option("--hypothesis", hyp_path)->required();
  eval->add_option("--collar", collar)->capture_default_str();
  eval->add_flag("--keep-overlap", keep_overlap, "score overlapped reference speech too");

  // experiment
  diar::ExperimentConfig exp_cfg;
  std::vector<std::string> system_specs{"plda+ahc=plda:ahc:raw", "plda+sc=plda:sc", "lstm+sc=lstm:sc"};
  std::vector<std::string> fusion_specs;
  std::vector<std::string> ttest_pair;
  std::string beta_grid = "0.05:0.95:0.05";
  std::string alpha_grid = "0.05:0.95:0.05";
  LstmOptions exp_lstm;
  auto* experiment = app.add_subcommand("experiment", "cross-validated comparison of diarization systems");
  common(experiment);
  experiment->add_option("--corpus", corpus_dir, "corpus directory (*.emb + reference.rttm)")->required();
  experiment->add_option("--folds", exp_cfg.folds)->capture_default_str();
  experiment->add_option("--max-folds", exp_cfg.max_folds, "run only the first folds, 0 runs all")
      ->capture_default_str();
  experiment->add_option("--system", system_specs, "NAME=SCORER:BACKEND[:raw], repeatable")->capture_default_str();
  experiment->add_option("--fusion", fusion_specs, "NAME=SYS1,SYS2:W1,W2[:BACKEND], repeatable");
  experiment->add_option("--ttest", ttest_pair, "two systems for the duration-stratified t-test")
      ->delimiter(',')
      ->expected(2);
  experiment->add_option("--beta-grid", beta_grid, "LO:HI:STEP")->capture_default_str();
  experiment->add_option("--alpha-grid", alpha_grid, "LO:HI:STEP")->capture_default_str();
  experiment->add_option("--max-block", exp_cfg.max_block, "largest neural sub-matrix at inference")
      ->capture_default_str();
  experiment->add_option("--kmeans-restarts", exp_cfg.spectral.kmeans_restarts)->capture_default_str();
  experiment->add_flag("--refuse-enhance-order", exp_cfg.refuse_enhance_order,
                       "fuse raw matrices, then enhance the sum");
  add_lstm_options(experiment, exp_lstm);

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out(out_dir);
    fs::create_directories(out);

    if (gen->parsed()) {
      gen_cfg.seed = seed;
      const auto convs = diar::gen_corpus(gen_cfg);
      diar::Corpus corpus;
      for (const auto& c : convs) {
        corpus.sequences.push_back(c.embeddings);
        corpus.references.push_back(c.reference);
      }
      diar::save_corpus(out, corpus);
      std::vector<std::string> outputs;
      for (const auto& s : corpus.sequences) outputs.push_back(s.recording_id + ".emb");
      outputs.push_back("reference.rttm");
      write_manifest(out, gen, outputs);
      std::cout << "wrote " << corpus.sequences.size() << " recordings to " << out.string() << "\n";
    } else if (train_plda->parsed()) {
      const diar::Corpus corpus = diar::load_corpus(corpus_dir);
      std::vector<diar::LabeledVector> data;
      for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
        const auto& seq = corpus.sequences[i];
        for (int r = 0; r < seq.size(); ++r)
          if (auto label = diar::segment_label(seq.segments[r], corpus.references[i]))
            data.push_back({seq.vectors.row(r).transpose(), seq.recording_id + "/" + *label});
      }
      diar::PldaModel model;
      try {
        model = diar::plda_fit(data);
      } catch (const diar::Error& e) {
        throw diar::Error(e.kind(), "train-plda", e.what());
      }
      const json echo = {{"corpus", corpus_dir}, {"vectors", data.size()}, {"seed", seed}};
      diar::io::save_model(out / "plda.ckpt", model, echo.dump());
      write_manifest(out, train_plda, {"plda.ckpt"});
      std::cout << "PLDA: " << model.input_dim() << " -> " << model.effective_dim() << " dims from " << data.size()
                << " vectors\n";
    } else if (train_lstm->parsed()) {
      const diar::Corpus corpus = diar::load_corpus(corpus_dir);
      std::vector<diar::TrainingExample> examples;
      for (std::size_t i = 0; i < corpus.sequences.size(); ++i)
        examples.push_back({corpus.sequences[i], diar::reference_labels(corpus.sequences[i], corpus.references[i])});
      lstm_opts.train.seed = seed;
      diar::PairSeqDims dims{corpus.sequences.front().dim(), lstm_opts.hidden, lstm_opts.fc_hidden, lstm_opts.layers};
      std::ofstream log(out / "train_log.txt", std::ios::binary);
      log << "epoch lr mean_loss\n";
      diar::TrainResult result;
      try {
        result = diar::train(examples, lstm_opts.train, dims, [&](const diar::EpochLog& e) {
          log << e.epoch << ' ' << diar::io::format_double(e.lr) << ' ' << diar::io::format_double(e.mean_loss)
              << '\n';
          log.flush();
          std::cerr << "epoch " << e.epoch << " loss " << e.mean_loss << "\n";
        });
      } catch (const diar::Error& e) {
        throw diar::Error(e.kind(), "train-lstm", e.what());
      }
      diar::io::save_model(out / "lstm.ckpt", result.model, lstm_echo(lstm_opts, dims.embedding_dim).dump());
      write_manifest(out, train_lstm, {"lstm.ckpt", "train_log.txt"});
    } else if (diarize->parsed() || fuse_cmd->parsed()) {
      const auto seqs = read_inputs(input);
      const LoadedModels models = load_models(model_paths);
      pipe.backend = diar::parse_backend(backend_name);
      pipe.seed = seed;
      pipe.enhance = !no_enhance;
      std::vector<diar::Annotation> hyps;
      if (diarize->parsed()) {
        pipe.scorer = diar::parse_scorer_kind(scorer_name);
        for (const auto& seq : seqs) hyps.push_back(diar::diarize(seq, pipe, models.view()));
      } else {
        if (fuse_scorers.size() != fuse_weights.size())
          throw diar::Error(diar::ErrorKind::kConfig, "fusion", "need one weight per scorer");
        for (const auto& seq : seqs) {
          std::vector<diar::SimilarityMatrix> mats;
          for (const std::string& name : fuse_scorers) {
            diar::PipelineConfig pc = pipe;
            pc.scorer = diar::parse_scorer_kind(name);
            pc.enhance = pipe.enhance && !refuse_order;
            mats.push_back(diar::score_matrix(seq, pc, models.view()));
          }
          diar::SimilarityMatrix fused;
          try {
            fused = diar::fuse(mats, fuse_weights);
            if (refuse_order && pipe.enhance) fused = diar::enhance(fused);
          } catch (const diar::Error& e) {
            throw diar::Error(e.kind(), "fusion", e.what());
          }
          const auto labels = diar::cluster_matrix(fused, pipe);
          hyps.push_back(diar::labels_to_annotation(seq.segments, labels, seq.recording_id));
        }
      }
      diar::io::write_rttm(out / "hypothesis.rttm", hyps);
      write_manifest(out, diarize->parsed() ? diarize : fuse_cmd, {"hypothesis.rttm"});
      std::cout << "wrote " << hyps.size() << " hypotheses to " << (out / "hypothesis.rttm").string() << "\n";
    } else if (eval->parsed()) {
      const auto refs = diar::io::read_rttm(fs::path(ref_path));
      const auto hyps = diar::io::read_rttm(fs::path(hyp_path));
      std::map<std::string, const diar::Annotation*> hyp_by_id;
      for (const auto& h : hyps) hyp_by_id[h.recording_id] = &h;
      std::string text;
      json per = json::array();
      diar::DerReport total;
      for (const auto& ref : refs) {
        diar::Annotation empty{ref.recording_id, {}};
        auto it = hyp_by_id.find(ref.recording_id);
        const diar::DerReport r =
            diar::der(ref, it == hyp_by_id.end() ? empty : *it->second, collar, !keep_overlap);
        total += r;
        text += diar::io::format_der_line(ref.recording_id, r) + "\n";
        json j = der_json(r);
        j["recording_id"] = ref.recording_id;
        per.push_back(j);
      }
      text += diar::io::format_der_line("TOTAL", total) + "\n";
      write_text(out / "der.txt", text);
      write_text(out / "der.json", json{{"recordings", per}, {"total", der_json(total)}}.dump(2) + "\n");
      write_manifest(out, eval, {"der.txt", "der.json"});
      std::cout << text;
    } else if (experiment->parsed()) {
      const diar::Corpus corpus = diar::load_corpus(corpus_dir);
      exp_cfg.seed = seed;
      for (const auto& s : system_specs) exp_cfg.systems.push_back(parse_system(s));
      for (const auto& f : fusion_specs) exp_cfg.fusions.push_back(parse_fusion(f));
      if (!ttest_pair.empty()) exp_cfg.ttest = std::make_pair(ttest_pair[0], ttest_pair[1]);
      exp_cfg.beta_grid = parse_grid(beta_grid);
      exp_cfg.alpha_grid = parse_grid(alpha_grid);
      exp_cfg.lstm_dims = {corpus.sequences.front().dim(), exp_lstm.hidden, exp_lstm.fc_hidden, exp_lstm.layers};
      exp_cfg.lstm_train = exp_lstm.train;

      const diar::ExperimentReport rep =
          diar::run_experiment(corpus, exp_cfg, [](const std::string& m) { std::cerr << m << "\n"; });

      json j;
      j["folds"] = json::array();
      for (const auto& f : rep.folds)
        j["folds"].push_back({{"index", f.index}, {"train", f.train_ids}, {"test", f.test_ids}});
      j["systems"] = json::array();
      for (const auto& s : rep.systems) {
        json sj{{"name", s.name}, {"thresholds", s.thresholds}, {"total", der_json(s.total)}};
        sj["per_fold"] = json::array();
        for (const auto& r : s.per_fold) sj["per_fold"].push_back(der_json(r));
        sj["recordings"] = json::array();
        for (const auto& r : s.recordings) {
          json rj{{"recording_id", r.recording_id}, {"fold", r.fold}, {"duration", r.duration}};
          rj.update(der_json(r.report));
          sj["recordings"].push_back(rj);
        }
        j["systems"].push_back(sj);
      }
      if (!rep.ttest.empty()) {
        json tj{{"a", rep.ttest_a}, {"b", rep.ttest_b}, {"groups", json::array()}};
        for (const auto& t : rep.ttest)
          tj["groups"].push_back({{"size", t.size}, {"mean_a", t.mean_a}, {"mean_b", t.mean_b},
                                  {"t_value", std::isfinite(t.t_value) ? json(t.t_value) : json(nullptr)},
                                  {"h0_accepted", t.h0_accepted}, {"degenerate", t.degenerate}});
        j["ttest"] = tj;
      }
      std::vector<std::string> outputs{"report.txt", "report.json"};
      for (std::size_t f = 0; f < rep.lstm_history.size(); ++f) {
        std::string text = "epoch lr mean_loss\n";
        for (const auto& e : rep.lstm_history[f])
          text += std::to_string(e.epoch) + ' ' + diar::io::format_double(e.lr) + ' ' +
                  diar::io::format_double(e.mean_loss) + '\n';
        const std::string name = "lstm_fold" + std::to_string(f + 1) + "_log.txt";
        write_text(out / name, text);
        outputs.push_back(name);
      }
      const std::string table = diar::format_report_table(rep);
      write_text(out / "report.txt", table);
      write_text(out / "report.json", j.dump(2) + "\n");
      write_manifest(out, experiment, outputs, {{"lstm", lstm_echo(exp_lstm, corpus.sequences.front().dim())}});
      std::cout << table;
    }
  } catch (const diar::Error& e) {
    std::cerr << "error [" << (e.stage().empty() ? "input" : e.stage()) << "] " << diar::to_string(e.kind()) << ": "
              << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// tools/abnet_main.cpp

// Copyright 2026  abnet authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "abnet/abx.hpp"
#include "abnet/classifier.hpp"
#include "abnet/corpus.hpp"
#include "abnet/experiment.hpp"
#include "abnet/network.hpp"
#include "abnet/optim.hpp"
#include "abnet/pairing.hpp"
#include "abnet/probe.hpp"

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace abnet;

namespace {

ExperimentConfig load_config(const std::optional<std::string>& config_path) {
  if (!config_path) return default_experiment_config();
  const fs::path p(*config_path);
  return parse_experiment_config(nlohmann::json::parse(read_file(p)),
                                 p.has_parent_path() ? p.parent_path() : fs::path("."));
}

LossMode parse_mode(const std::string& mode) {
  if (mode == "both") return LossMode::multitask;
  if (mode == "word_only") return LossMode::word_only;
  if (mode == "spkr_only") return LossMode::speaker_only;
  throw std::invalid_argument("unknown mode: " + mode + " (expected both|word_only|spkr_only)");
}

AbxRepr parse_repr(const std::string& repr) {
  if (repr == "filterbank") return AbxRepr::filterbank;
  if (repr == "word_head") return AbxRepr::word_head;
  if (repr == "spkr_head") return AbxRepr::speaker_head;
  if (repr == "posterior") return AbxRepr::posterior;
  throw std::invalid_argument("unknown repr: " + repr);
}

AbxTask parse_task(const std::string& task) {
  if (task == "phone_talker") return AbxTask::phone_talker;
  if (task == "talker_phone") return AbxTask::talker_phone;
  throw std::invalid_argument("unknown task: " + task);
}

void print_comparison(const Comparison& cmp) {
  std::printf("%-12s %-14s %-12s %10s %10s\n", "name", "task", "repr", "score", "n");
  for (const auto& row : cmp.rows)
    std::printf("%-12s %-14s %-12s %10.4f %10zu\n", row.name.c_str(), to_string(row.report.task),
                row.report.repr.c_str(), row.report.score, row.report.n_triplets);
  for (const auto& check : cmp.orderings)
    std::printf("%-42s %s\n", check.name.c_str(), check.pass ? "PASS" : "FAIL");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task siamese acoustic embeddings: pair mining, training, ABX evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> global_seed;
  unsigned threads = 0;  // 0 = hardware concurrency
  std::optional<std::string> global_out_dir;
  app.add_option("--seed", global_seed, "override every derived seed");
  app.add_option("--threads", threads, "worker threads (0 = auto)");
  app.add_option("--out-dir", global_out_dir, "override the configured output directory");

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic feature corpus");
  std::optional<std::string> gen_config;
  std::string gen_out;
  gen->add_option("--config", gen_config, "experiment JSON");
  gen->add_option("--out-dir", gen_out, "output directory")->required();

  // make-pairs
  auto* mk = app.add_subcommand("make-pairs", "mine and align same-word pairs, emit training examples");
  std::string mk_manifest, mk_out;
  PairingConfig mk_cfg;
  mk->add_option("--manifest", mk_manifest, "corpus manifest")->required();
  mk->add_option("--out", mk_out, "output pairs archive")->required();
  mk->add_option("--same-speaker-frac", mk_cfg.same_speaker_target_fraction,
                 "minimum same-speaker share of positive pairs");
  mk->add_option("--neg-ratio", mk_cfg.negative_ratio, "negative:positive example ratio");
  mk->add_option("--min-frames", mk_cfg.min_word_frames, "length floor for paired tokens");
  mk->add_option("--nf", mk_cfg.nf, "stacked context frames");
  mk->add_option("--seed", mk_cfg.seed, "sampling seed");

  // train
  auto* tr = app.add_subcommand("train", "train the siamese network on a pairs archive");
  std::string tr_pairs, tr_mode = "both", tr_out, tr_curve;
  std::optional<std::string> tr_config;
  tr->add_option("--pairs", tr_pairs, "pairs archive")->required();
  tr->add_option("--config", tr_config, "experiment JSON");
  tr->add_option("--mode", tr_mode, "both|word_only|spkr_only");
  tr->add_option("--out", tr_out, "output model file")->required();
  tr->add_option("--curve", tr_curve, "learning-curve CSV");

  // abx
  auto* ab = app.add_subcommand("abx", "ABX discrimination scores for a representation");
  std::string ab_manifest, ab_repr = "filterbank", ab_task = "phone_talker", ab_out;
  std::optional<std::string> ab_model;
  std::size_t ab_cap = 500, ab_nf = 11;
  std::uint64_t ab_seed = 0;
  ab->add_option("--manifest", ab_manifest, "corpus manifest")->required();
  ab->add_option("--model", ab_model, "model file (.abnt); not needed for filterbank");
  ab->add_option("--repr", ab_repr, "word_head|spkr_head|filterbank|posterior");
  ab->add_option("--task", ab_task, "phone_talker|talker_phone");
  ab->add_option("--cap", ab_cap, "per-cell triplet cap (0 = exhaustive)");
  ab->add_option("--nf", ab_nf, "stacked frames for the filterbank representation");
  ab->add_option("--seed", ab_seed, "triplet subsampling seed");
  ab->add_option("--out", ab_out, "report CSV")->required();

  // analyze
  auto* an = app.add_subcommand("analyze", "per-unit phone/speaker coding specificity");
  std::string an_manifest, an_model, an_units, an_grid;
  std::size_t an_cap = 0;
  std::uint64_t an_seed = 0;
  an->add_option("--manifest", an_manifest, "corpus manifest")->required();
  an->add_option("--model", an_model, "siamese model file")->required();
  an->add_option("--out-units", an_units, "per-unit CSV")->required();
  an->add_option("--out-grid", an_grid, "input-grid CSV")->required();
  an->add_option("--frame-cap", an_cap, "probe at most this many frames (0 = all)");
  an->add_option("--seed", an_seed, "frame subsampling seed");

  // reproduce
  auto* rp = app.add_subcommand("reproduce", "run the full pipeline on one config");
  std::optional<std::string> rp_config;
  rp->add_option("--config", rp_config, "experiment JSON (defaults to the desk-scale setup)");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      ExperimentConfig cfg = load_config(gen_config);
      if (global_seed) cfg.seed = *global_seed;
      if (global_seed && cfg.synth) cfg.synth->seed = *global_seed;
      if (!cfg.synth) throw std::invalid_argument("gen-synth: config does not describe a synthetic corpus");
      const Corpus corpus = generate_synthetic_corpus(*cfg.synth);
      const fs::path manifest = save_corpus(corpus, gen_out);
      std::printf("wrote %zu tokens to %s\n", corpus.sequences.size(), manifest.string().c_str());
    } else if (mk->parsed()) {
      if (global_seed) mk_cfg.seed = *global_seed;
      auto [corpus, stats] = standardize(load_corpus(mk_manifest));
      const auto pairs = build_same_word_pairs(corpus, mk_cfg, threads);
      const auto examples = emit_training_examples(pairs, corpus, mk_cfg);
      save_pairs(mk_out, examples, corpus.n_coeffs(), mk_cfg.nf);
      std::printf("aligned %zu pairs, wrote %zu examples to %s\n", pairs.size(), examples.size(),
                  mk_out.c_str());
    } else if (tr->parsed()) {
      ExperimentConfig cfg = load_config(tr_config);
      if (global_seed) {
        cfg.network.init_seed = *global_seed + 2;
        cfg.train.shuffle_seed = *global_seed + 3;
      }
      const PairsFile pf = load_pairs(tr_pairs);
      cfg.network.input_dim = pf.n_coeffs * pf.nf;
      cfg.train.mode = parse_mode(tr_mode);
      const TrainResult result = train(pf.examples, cfg.network, cfg.adadelta, cfg.train);
      save_model(tr_out, cfg.network, result.best_params);
      if (!tr_curve.empty()) write_file_atomic(tr_curve, encode_curve_csv(result.curve));
      std::printf("trained %s: best dev loss %s at epoch %zu (%zu epochs run)\n", tr_mode.c_str(),
                  fmt_double(result.best_dev_loss).c_str(), result.best_epoch, result.epochs_run);
    } else if (ab->parsed()) {
      const AbxRepr repr = parse_repr(ab_repr);
      auto [corpus, stats] = standardize(load_corpus(ab_manifest));
      AbxOptions opts;
      opts.tasks = {parse_task(ab_task)};
      opts.cap = ab_cap;
      opts.seed = global_seed ? *global_seed : ab_seed;
      opts.threads = threads;
      opts.nf = ab_nf;

      std::optional<std::pair<NetworkConfig, NetworkParams>> net;
      std::optional<std::pair<ClassifierConfig, ClassifierParams>> clf;
      if (repr == AbxRepr::word_head || repr == AbxRepr::speaker_head) {
        if (!ab_model) throw std::invalid_argument("abx: --model is required for this repr");
        net = load_model(*ab_model);
        opts.nf = net->first.input_dim / corpus.n_coeffs();
      } else if (repr == AbxRepr::posterior) {
        if (!ab_model) throw std::invalid_argument("abx: --model is required for this repr");
        clf = load_classifier(*ab_model);
        opts.nf = clf->first.input_dim / corpus.n_coeffs();
      }
      const auto reports = evaluate_model(corpus, repr, net ? &net->second : nullptr,
                                          clf ? &clf->second : nullptr, opts);
      write_file_atomic(ab_out, encode_abx_csv(reports.front()));
      std::printf("%s %s: score %s over %zu triplets\n", ab_repr.c_str(), ab_task.c_str(),
                  fmt_double(reports.front().score).c_str(), reports.front().n_triplets);
    } else if (an->parsed()) {
      auto [corpus, stats] = standardize(load_corpus(an_manifest));
      const auto [net_cfg, params] = load_model(an_model);
      ProbeOptions opts;
      opts.frame_cap = an_cap;
      opts.seed = global_seed ? *global_seed : an_seed;
      opts.threads = threads;
      const SpecificityReport report = layer_report(params, corpus, opts);
      write_file_atomic(an_units, encode_units_csv(report));
      write_file_atomic(an_grid, encode_grid_csv(report));
      std::printf("analyzed %zu units across %zu layers\n", report.units.size(),
                  report.layers.size());
    } else if (rp->parsed()) {
      ExperimentConfig cfg = load_config(rp_config);
      if (global_seed) {
        nlohmann::json empty = nlohmann::json::object();
        cfg.seed = *global_seed;
        if (cfg.synth) cfg.synth->seed = *global_seed;
        detail::derive_seeds(cfg, empty);
      }
      if (global_out_dir) cfg.out_dir = *global_out_dir;
      const ReproduceResult result = run_reproduce(cfg, threads);
      print_comparison(result.comparison);
      std::printf("outputs in %s\n", cfg.out_dir.string().c_str());
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    // normalize every usage failure to exit code 1 (0 stays 0 for --help)
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

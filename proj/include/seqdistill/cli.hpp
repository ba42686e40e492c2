// Command-line surface for the whole pipeline:
//
//   data synth | data validate   dataset generation and checking
//   train                        adaptive stack training -> model JSON
//   extract                      paths -> C4.5 files -> ruleset JSON
//   infer                        next-frame prediction (network or rules)
//   bench                        network-vs-rules comparison table
//   inspect                      human-readable artifact dump
//
// Settings merge from an optional JSON config file and flags (flags win),
// and the resolved configuration is written next to every output artifact.
// Exit codes: 0 ok, 2 validation, 3 divergence, 64 usage, 65 format,
// 66 missing file.
#pragma once

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqdistill/bench.hpp"
#include "seqdistill/c45.hpp"
#include "seqdistill/data.hpp"
#include "seqdistill/dbn.hpp"
#include "seqdistill/paths.hpp"

namespace seqdistill::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitFormat = 65;
inline constexpr int kExitMissing = 66;

namespace detail {

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::validation:
    case ErrorKind::config:
      return kExitValidation;
    case ErrorKind::divergence:
      return kExitDivergence;
    case ErrorKind::format:
      return kExitFormat;
    case ErrorKind::missing_file:
      return kExitMissing;
  }
  return kExitValidation;
}

inline nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_missing("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail_format(std::string("config JSON parse error: ") + e.what());
  }
}

// Flags win over config-file values: a config key applies only when the
// corresponding flag was not given on the command line.
template <typename T>
void merge_option(const CLI::App& app, const std::string& flag,
                  const nlohmann::json& cfg, const std::string& key, T& value) {
  if (app.count(flag) == 0 && cfg.contains(key)) value = cfg[key].get<T>();
}

inline void write_provenance(const std::string& artifact_path,
                             const nlohmann::json& resolved) {
  std::ofstream out(artifact_path + ".config.json", std::ios::binary);
  if (!out) fail_missing("cannot write provenance next to " + artifact_path);
  out << resolved.dump(2) << "\n";
}

inline std::vector<RuleSet> load_rulesets(const std::string& path,
                                          std::size_t dimension) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_missing("cannot open ruleset file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail_format(std::string("ruleset JSON parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("rulesets"))
    fail_format("expected a combined ruleset file with a 'rulesets' array");
  std::vector<RuleSet> sets(dimension);
  std::vector<bool> present(dimension, false);
  for (const auto& jr : j["rulesets"]) {
    RuleSet rs = ruleset_from_json(jr);
    if (rs.target_dimension >= dimension)
      fail_validation("ruleset targets dimension " +
                      std::to_string(rs.target_dimension) +
                      " outside the model's D=" + std::to_string(dimension));
    present[rs.target_dimension] = true;
    sets[rs.target_dimension] = std::move(rs);
  }
  for (std::size_t d = 0; d < dimension; ++d)
    if (!present[d])
      throw Error(ErrorKind::config,
                  "missing ruleset for dimension " + std::to_string(d));
  return sets;
}

}  // namespace detail

struct DataSynthOptions {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t dim = 8;
  std::size_t states = 2;
  std::size_t steps = 12;
  std::size_t n_train = 8;
  std::size_t n_test = 4;
  double noise = 0.0;
};

inline int cmd_data_synth(const DataSynthOptions& opt) {
  Dataset ds = synth_markov(opt.seed, opt.dim, opt.states, opt.steps, opt.n_train,
                            opt.n_test, opt.noise);
  save_pianoroll(ds, opt.out);
  nlohmann::json cfg;
  cfg["command"] = "data synth";
  cfg["seed"] = opt.seed;
  cfg["dim"] = opt.dim;
  cfg["states"] = opt.states;
  cfg["steps"] = opt.steps;
  cfg["train"] = opt.n_train;
  cfg["test"] = opt.n_test;
  cfg["noise"] = opt.noise;
  cfg["out"] = opt.out;
  detail::write_provenance(opt.out, cfg);
  std::cout << "wrote " << opt.out << " (D=" << ds.dimension << ", "
            << ds.train.size() << " train / " << ds.test.size() << " test)\n";
  return kExitOk;
}

inline int cmd_data_validate(const std::string& path) {
  Dataset ds = load_pianoroll(path);
  auto violations = validate(ds);
  if (violations.empty()) {
    std::cout << path << ": ok\n";
    return kExitOk;
  }
  for (const auto& v : violations) std::cout << path << ": " << v << "\n";
  return kExitValidation;
}

struct TrainOptions {
  std::string data;
  std::string out;
  TrainHyper hyper;
  StructureConfig structure;
  std::size_t hidden = 0;  // 0: match the layer's input dimension
};

// Settings that shape the trained artifact. File paths stay out so the model
// bytes depend only on seed + hyperparameters + data.
inline nlohmann::json train_settings_json(const TrainOptions& opt) {
  nlohmann::json cfg;
  cfg["seed"] = opt.hyper.seed;
  cfg["epochs"] = opt.hyper.epochs;
  cfg["learning_rate"] = opt.hyper.learning_rate;
  cfg["batch_size"] = opt.hyper.batch_size;
  cfg["hidden"] = opt.hidden;
  cfg["gen_threshold"] = opt.structure.gen_threshold;
  cfg["ann_threshold"] = opt.structure.ann_threshold;
  cfg["layer_threshold"] = opt.structure.layer_threshold;
  cfg["max_hidden"] = opt.structure.max_hidden;
  cfg["max_layers"] = opt.structure.max_layers;
  cfg["check_interval"] = opt.structure.check_interval;
  cfg["window_len"] = opt.structure.window_len;
  return cfg;
}

inline nlohmann::json train_config_json(const TrainOptions& opt) {
  nlohmann::json cfg = train_settings_json(opt);
  cfg["command"] = "train";
  cfg["data"] = opt.data;
  cfg["out"] = opt.out;
  return cfg;
}

inline int cmd_train(const TrainOptions& opt) {
  Dataset ds = load_pianoroll(opt.data);
  auto violations = validate(ds);
  if (!violations.empty()) fail_validation(violations.front());
  StackTrainResult result = stack_train(ds, opt.hyper, opt.structure, opt.hidden);
  result.model.meta = train_settings_json(opt);
  save_model(result.model, opt.out);

  std::ofstream log(opt.out + ".structure.jsonl", std::ios::binary);
  for (const StructureEdit& e : result.model.structure_log)
    log << edit_to_json(e).dump() << "\n";

  std::ofstream csv(opt.out + ".errors.csv", std::ios::binary);
  csv << "layer,epoch,error\n";
  for (std::size_t l = 0; l < result.traces.size(); ++l)
    for (std::size_t e = 0; e < result.traces[l].size(); ++e)
      csv << (l + 1) << "," << (e + 1) << "," << result.traces[l][e] << "\n";

  detail::write_provenance(opt.out, train_config_json(opt));
  std::cout << "trained " << result.model.layer_count() << " layer(s); wrote "
            << opt.out << "\n";
  for (std::size_t l = 0; l < result.model.layers.size(); ++l)
    std::cout << "  layer " << (l + 1) << ": D=" << result.model.layers[l].visible()
              << " H=" << result.model.layers[l].hidden()
              << " final error=" << result.traces[l].back() << "\n";
  return kExitOk;
}

struct ExtractOptions {
  std::string model;
  std::string data;
  std::string out_stem;
  int target_dim = -1;  // -1: every dimension
  std::size_t min_cases = 2;
  double confidence = 0.25;
};

inline int cmd_extract(const ExtractOptions& opt) {
  RnnDbnModel model = load_model(opt.model);
  Dataset ds = load_pianoroll(opt.data);
  if (model.visible() != ds.dimension)
    fail_validation("model D=" + std::to_string(model.visible()) +
                    " does not match dataset D=" + std::to_string(ds.dimension));
  if (opt.target_dim >= 0 && static_cast<std::size_t>(opt.target_dim) >= ds.dimension)
    fail_validation("target dimension out of range");

  // Fired paths are shared across output dimensions; compute them once.
  std::vector<SequencePaths> all = extract_paths(model, ds.train);

  std::vector<std::size_t> dims;
  if (opt.target_dim >= 0)
    dims.push_back(static_cast<std::size_t>(opt.target_dim));
  else
    for (std::size_t d = 0; d < ds.dimension; ++d) dims.push_back(d);

  std::vector<RuleSet> rulesets(dims.size());
  std::vector<std::size_t> rule_counts(dims.size());
  parallel_for(dims.size(), [&](std::size_t i) {
    std::size_t d = dims[i];
    PathDataset pd;
    pd.num_layers = model.layer_count();
    pd.target_dimension = d;
    for (const SequencePaths& sp : all)
      for (std::size_t r = 0; r < sp.paths.size(); ++r)
        pd.rows.push_back({sp.paths[r], sp.teachers[r].bits[d] ? 1 : 0});
    pd.rebuild_attribute_values();

    std::string stem = opt.out_stem + ".d" + std::to_string(d);
    write_c45_files(pd, stem);
    auto tree = build_tree(pd, opt.min_cases);
    auto pruned = prune_tree(*tree, pd, opt.confidence);
    rulesets[i] = tree_to_rules(*pruned, d);
    rule_counts[i] = rulesets[i].rules.size();

    std::ofstream rj(stem + ".rules.json", std::ios::binary);
    rj << ruleset_to_json(rulesets[i]).dump(2) << "\n";
  });

  nlohmann::json combined;
  combined["format_version"] = 1;
  combined["dimension"] = ds.dimension;
  combined["num_layers"] = model.layer_count();
  nlohmann::json arr = nlohmann::json::array();
  for (const RuleSet& rs : rulesets) arr.push_back(ruleset_to_json(rs));
  combined["rulesets"] = std::move(arr);
  std::ofstream cj(opt.out_stem + ".rules.json", std::ios::binary);
  if (!cj) fail_missing("cannot write " + opt.out_stem + ".rules.json");
  cj << combined.dump(2) << "\n";

  nlohmann::json cfg;
  cfg["command"] = "extract";
  cfg["model"] = opt.model;
  cfg["data"] = opt.data;
  cfg["out"] = opt.out_stem;
  cfg["target_dim"] = opt.target_dim;
  cfg["min_cases"] = opt.min_cases;
  cfg["confidence"] = opt.confidence;
  detail::write_provenance(opt.out_stem + ".rules.json", cfg);

  std::size_t total = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    std::cout << "dimension " << dims[i] << ": " << rule_counts[i] << " rule(s)\n";
    total += rule_counts[i];
  }
  std::cout << "total rules: " << total << "\n";
  return kExitOk;
}

struct BenchOptions {
  std::string model;
  std::string rules;
  std::string data;
  std::string json_out;
};

inline int cmd_bench(const BenchOptions& opt) {
  RnnDbnModel model = load_model(opt.model);
  Dataset ds = load_pianoroll(opt.data);
  std::vector<RuleSet> rulesets = detail::load_rulesets(opt.rules, model.visible());
  Comparison c = compare(model, rulesets, ds);
  std::cout << comparison_to_text(c);
  if (!opt.json_out.empty()) {
    std::ofstream out(opt.json_out, std::ios::binary);
    if (!out) fail_missing("cannot write " + opt.json_out);
    out << comparison_to_json(c).dump(2) << "\n";
  }
  return kExitOk;
}

struct InferOptions {
  std::string model;
  std::string rules;  // empty: use the network
  std::string data;
  std::string out;
};

inline int cmd_infer(const InferOptions& opt) {
  RnnDbnModel model = load_model(opt.model);
  Dataset ds = load_pianoroll(opt.data);
  const std::vector<Sequence>& split = ds.test.empty() ? ds.train : ds.test;

  std::optional<RulePredictor> predictor;
  if (!opt.rules.empty())
    predictor.emplace(model, detail::load_rulesets(opt.rules, model.visible()));

  nlohmann::json out_json;
  out_json["predictor"] = predictor ? "rules" : "network";
  nlohmann::json seqs = nlohmann::json::array();
  std::size_t hits = 0, total = 0;
  for (const Sequence& seq : split) {
    std::vector<Vec> real = seq.to_real();
    RuleStateCache cache;
    nlohmann::json preds = nlohmann::json::array();
    for (std::size_t t = 0; t + 1 < seq.length(); ++t) {
      Frame got;
      if (predictor) {
        predictor->advance(cache, real[t]);
        got = predictor->classify_current(cache);
      } else {
        std::vector<Vec> prefix(real.begin(), real.begin() + t + 1);
        got = predict_network(model, prefix);
      }
      for (std::size_t i = 0; i < got.size(); ++i)
        hits += got.bits[i] == seq.frames[t + 1].bits[i] ? 1 : 0;
      total += got.size();
      preds.push_back(got.to_sparse());
    }
    seqs.push_back(std::move(preds));
  }
  out_json["predictions"] = std::move(seqs);

  double acc = total ? 100.0 * double(hits) / double(total) : 0.0;
  std::cout << "bit accuracy: " << acc << "% over " << total << " bits\n";
  if (!opt.out.empty()) {
    std::ofstream out(opt.out, std::ios::binary);
    if (!out) fail_missing("cannot write " + opt.out);
    out << out_json.dump(2) << "\n";
  }
  return kExitOk;
}

inline int cmd_inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_missing("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error&) {
    std::cerr << path << ": not a JSON artifact\n";
    return kExitFormat;
  }

  if (j.is_object() && j.contains("layers")) {
    RnnDbnModel m = model_from_json(j);
    std::cout << "model: " << m.layer_count() << " layer(s), dataset '"
              << m.dataset_name << "'\n";
    std::cout << "layer    D    H    K\n";
    for (std::size_t l = 0; l < m.layers.size(); ++l)
      std::cout << std::setw(5) << (l + 1) << std::setw(5) << m.layers[l].visible()
                << std::setw(5) << m.layers[l].hidden() << std::setw(5)
                << m.layers[l].state() << "\n";
    if (!m.structure_log.empty()) {
      std::cout << "structure log:\n";
      for (const auto& e : m.structure_log)
        std::cout << "  epoch " << e.epoch << " layer " << e.layer << " " << e.kind
                  << " index " << e.index << " -> H=" << e.h_after << "\n";
    }
    return kExitOk;
  }
  if (j.is_object() && j.contains("rulesets")) {
    for (const auto& jr : j["rulesets"]) {
      RuleSet rs = ruleset_from_json(jr);
      std::cout << ruleset_to_text(rs);
    }
    return kExitOk;
  }
  if (j.is_object() && j.contains("rules")) {
    std::cout << ruleset_to_text(ruleset_from_json(j));
    return kExitOk;
  }
  if (j.is_object() && j.contains("dimension") && j.contains("train")) {
    Dataset ds = parse_pianoroll(j.dump(), path);
    double mean_t = 0.0;
    for (const Sequence& s : ds.train) mean_t += double(s.length());
    mean_t /= double(ds.train.size());
    std::cout << "dataset '" << ds.name << "': D=" << ds.dimension << ", "
              << ds.train.size() << " train / " << ds.test.size()
              << " test sequences, mean train T=" << mean_t << "\n";
    return kExitOk;
  }
  std::cerr << path << ": unknown artifact kind\n";
  return kExitFormat;
}

// Builds the CLI and dispatches. Returns the process exit code.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"seqdistill: train a recurrent DBN on binary sequences, distill "
               "its signal paths into C4.5 IF-THEN rules, and benchmark "
               "rule-based against network inference"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags win)");

  // data
  auto* data = app.add_subcommand("data", "dataset utilities");
  data->require_subcommand(1);
  DataSynthOptions synth_opt;
  auto* synth = data->add_subcommand("synth", "generate a synthetic cyclic dataset");
  synth->add_option("--out", synth_opt.out, "output dataset JSON")->required();
  synth->add_option("--seed", synth_opt.seed, "master seed");
  synth->add_option("--dim", synth_opt.dim, "frame dimension D");
  synth->add_option("--states", synth_opt.states, "cycle length");
  synth->add_option("--steps", synth_opt.steps, "frames per sequence");
  synth->add_option("--train", synth_opt.n_train, "training sequences");
  synth->add_option("--test", synth_opt.n_test, "test sequences");
  synth->add_option("--noise", synth_opt.noise, "bit-flip rate in [0,1)");

  std::string validate_path;
  auto* dval = data->add_subcommand("validate", "check a dataset file");
  dval->add_option("file", validate_path, "dataset JSON")->required();

  // train
  TrainOptions train_opt;
  auto* train = app.add_subcommand("train", "train an adaptive RNN-DBN");
  train->add_option("--data", train_opt.data, "dataset JSON")->required();
  train->add_option("--out", train_opt.out, "output model JSON")->required();
  train->add_option("--seed", train_opt.hyper.seed, "master seed");
  train->add_option("--epochs", train_opt.hyper.epochs, "epochs per layer");
  train->add_option("--lr", train_opt.hyper.learning_rate, "learning rate");
  train->add_option("--batch", train_opt.hyper.batch_size, "batch size");
  train->add_option("--hidden", train_opt.hidden,
                    "initial hidden units per layer (0: match input dim)");
  train->add_option("--max-layers", train_opt.structure.max_layers, "layer cap");
  train->add_option("--max-hidden", train_opt.structure.max_hidden, "hidden cap");
  train->add_option("--gen-threshold", train_opt.structure.gen_threshold,
                    "neuron generation threshold");
  train->add_option("--ann-threshold", train_opt.structure.ann_threshold,
                    "neuron annihilation threshold");
  train->add_option("--layer-threshold", train_opt.structure.layer_threshold,
                    "layer generation error threshold");
  train->add_option("--check-interval", train_opt.structure.check_interval,
                    "epochs between structure checks");
  train->add_option("--window", train_opt.structure.window_len,
                    "monitor window (batches)");

  // extract
  ExtractOptions extract_opt;
  auto* extract = app.add_subcommand("extract", "distill rules from a trained model");
  extract->add_option("--model", extract_opt.model, "model JSON")->required();
  extract->add_option("--data", extract_opt.data, "dataset JSON")->required();
  extract->add_option("--out", extract_opt.out_stem, "output stem")->required();
  extract->add_option("--target-dim", extract_opt.target_dim,
                      "single output dimension (default: all)");
  extract->add_option("--min-cases", extract_opt.min_cases, "C4.5 min cases");
  extract->add_option("--confidence", extract_opt.confidence,
                      "pruning confidence factor");

  // bench
  BenchOptions bench_opt;
  auto* bench = app.add_subcommand("bench", "compare network vs rule inference");
  bench->add_option("--model", bench_opt.model, "model JSON")->required();
  bench->add_option("--rules", bench_opt.rules, "combined ruleset JSON")->required();
  bench->add_option("--data", bench_opt.data, "dataset JSON")->required();
  bench->add_option("--json", bench_opt.json_out, "write the report as JSON");

  // infer
  InferOptions infer_opt;
  auto* infer = app.add_subcommand("infer", "predict next frames");
  infer->add_option("--model", infer_opt.model, "model JSON")->required();
  infer->add_option("--rules", infer_opt.rules, "combined ruleset JSON (optional)");
  infer->add_option("--data", infer_opt.data, "dataset JSON")->required();
  infer->add_option("--out", infer_opt.out, "write predictions JSON");

  // inspect
  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "describe an artifact file");
  inspect->add_option("file", inspect_path, "artifact path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    nlohmann::json cfg = detail::load_config_file(config_path);
    if (synth->parsed()) {
      detail::merge_option(*synth, "--seed", cfg, "seed", synth_opt.seed);
      detail::merge_option(*synth, "--dim", cfg, "dim", synth_opt.dim);
      detail::merge_option(*synth, "--states", cfg, "states", synth_opt.states);
      detail::merge_option(*synth, "--steps", cfg, "steps", synth_opt.steps);
      detail::merge_option(*synth, "--train", cfg, "train", synth_opt.n_train);
      detail::merge_option(*synth, "--test", cfg, "test", synth_opt.n_test);
      detail::merge_option(*synth, "--noise", cfg, "noise", synth_opt.noise);
      return cmd_data_synth(synth_opt);
    }
    if (dval->parsed()) return cmd_data_validate(validate_path);
    if (train->parsed()) {
      detail::merge_option(*train, "--seed", cfg, "seed", train_opt.hyper.seed);
      detail::merge_option(*train, "--epochs", cfg, "epochs", train_opt.hyper.epochs);
      detail::merge_option(*train, "--lr", cfg, "learning_rate",
                           train_opt.hyper.learning_rate);
      detail::merge_option(*train, "--batch", cfg, "batch_size",
                           train_opt.hyper.batch_size);
      detail::merge_option(*train, "--hidden", cfg, "hidden", train_opt.hidden);
      detail::merge_option(*train, "--max-layers", cfg, "max_layers",
                           train_opt.structure.max_layers);
      detail::merge_option(*train, "--max-hidden", cfg, "max_hidden",
                           train_opt.structure.max_hidden);
      detail::merge_option(*train, "--gen-threshold", cfg, "gen_threshold",
                           train_opt.structure.gen_threshold);
      detail::merge_option(*train, "--ann-threshold", cfg, "ann_threshold",
                           train_opt.structure.ann_threshold);
      detail::merge_option(*train, "--layer-threshold", cfg, "layer_threshold",
                           train_opt.structure.layer_threshold);
      detail::merge_option(*train, "--check-interval", cfg, "check_interval",
                           train_opt.structure.check_interval);
      detail::merge_option(*train, "--window", cfg, "window_len",
                           train_opt.structure.window_len);
      return cmd_train(train_opt);
    }
    if (extract->parsed()) {
      detail::merge_option(*extract, "--min-cases", cfg, "min_cases",
                           extract_opt.min_cases);
      detail::merge_option(*extract, "--confidence", cfg, "confidence",
                           extract_opt.confidence);
      return cmd_extract(extract_opt);
    }
    if (bench->parsed()) return cmd_bench(bench_opt);
    if (infer->parsed()) return cmd_infer(infer_opt);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return detail::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace seqdistill::cli

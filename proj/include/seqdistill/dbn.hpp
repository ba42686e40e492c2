// Greedy layer-wise stack of recurrent RBM layers. Each trained layer's
// per-step hidden probabilities become the next layer's visible input
// (real-valued, not sampled, so inference and path extraction stay
// deterministic). Lower layers are frozen once trained.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqdistill/adaptive.hpp"
#include "seqdistill/data.hpp"
#include "seqdistill/rnn_rbm.hpp"

namespace seqdistill {

struct RnnDbnModel {
  std::vector<RnnRbmParams> layers;
  std::vector<StructureEdit> structure_log;
  std::string dataset_name;
  nlohmann::json meta;  // resolved training settings; no volatile fields

  std::size_t layer_count() const { return layers.size(); }
  std::size_t visible() const { return layers.empty() ? 0 : layers.front().visible(); }

  // Layer l's visible dimension must equal layer l-1's hidden dimension,
  // whatever structural edits happened during training.
  void check_chain() const {
    if (layers.empty()) fail_validation("model has no layers");
    for (std::size_t l = 1; l < layers.size(); ++l)
      if (layers[l].visible() != layers[l - 1].hidden())
        fail_validation("dimension chain broken between layer " +
                        std::to_string(l) + " and layer " + std::to_string(l + 1));
  }
};

// Per-step hidden probabilities of one layer over its input sequence.
inline std::vector<Vec> propagate_layer(const RnnRbmParams& params,
                                        const std::vector<Vec>& seq) {
  UnrolledStates st = unroll(params, seq);
  std::vector<Vec> out;
  out.reserve(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t)
    out.push_back(hidden_prob(seq[t], params.rbm.w, st.c_t[t]));
  return out;
}

// Input as seen by layer `layer` (1-based): the sequence propagated through
// layers 1..layer-1. layer = 1 returns the sequence unchanged.
inline std::vector<Vec> layer_input(const RnnDbnModel& model, std::size_t layer,
                                    std::vector<Vec> seq) {
  if (layer < 1 || layer > model.layer_count())
    fail_validation("layer index " + std::to_string(layer) + " out of range");
  for (std::size_t l = 0; l + 1 < layer; ++l)
    seq = propagate_layer(model.layers[l], seq);
  return seq;
}

// Everything the knowledge-extraction step needs from one pass: every
// layer's hidden activations at every step, plus the one-step-ahead
// prediction mapped back down to the data space.
struct ForwardTrace {
  std::vector<std::vector<Vec>> activations;  // [layer][step]
  Vec next_prob;                              // D probabilities
};

inline ForwardTrace forward(const RnnDbnModel& model, const std::vector<Vec>& prefix) {
  model.check_chain();
  if (prefix.empty()) fail_validation("forward requires a non-empty prefix");

  ForwardTrace tr;
  tr.activations.reserve(model.layer_count());
  std::vector<Vec> x = prefix;
  std::vector<Vec> u_last(model.layer_count());
  std::vector<Vec> top_input_last;

  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const RnnRbmParams& p = model.layers[l];
    UnrolledStates st = unroll(p, x);
    std::vector<Vec> acts;
    acts.reserve(x.size());
    for (std::size_t t = 0; t < x.size(); ++t)
      acts.push_back(hidden_prob(x[t], p.rbm.w, st.c_t[t]));
    u_last[l] = st.u.back();
    if (l + 1 == model.layer_count()) top_input_last = x;
    tr.activations.push_back(acts);
    x = std::move(acts);
  }

  // One-step-ahead readout at the top layer, then down through each layer's
  // visible conditional under its own step-ahead bias.
  const RnnRbmParams& top = model.layers.back();
  Vec b_next = matvec(top.w_uv, u_last.back());
  axpy(b_next, 1.0, top.rbm.b);
  Vec c_next = matvec(top.w_uh, u_last.back());
  axpy(c_next, 1.0, top.rbm.c);
  Vec p = hidden_prob(top_input_last.back(), top.rbm.w, c_next);
  p = visible_prob(p, top.rbm.w, b_next);

  for (std::size_t l = model.layer_count() - 1; l-- > 0;) {
    const RnnRbmParams& lay = model.layers[l];
    Vec bl = matvec(lay.w_uv, u_last[l]);
    axpy(bl, 1.0, lay.rbm.b);
    p = visible_prob(p, lay.rbm.w, bl);
  }
  tr.next_prob = std::move(p);
  return tr;
}

struct StackTrainResult {
  RnnDbnModel model;
  std::vector<std::vector<double>> traces;  // per layer, per epoch
};

// Greedy pretraining with adaptive structure. Layer 1 trains on the raw
// data; while the stack still underfits and has room, a new layer trains on
// the previous layer's activations. Structure checks run at epoch
// boundaries, one edit per check; the monitor window gates both criteria so
// a fresh neuron cannot be generated and annihilated within one window.
inline StackTrainResult stack_train(const Dataset& dataset, const TrainHyper& hyper,
                                    const StructureConfig& config,
                                    std::size_t initial_hidden = 0) {
  config.check();
  auto violations = validate(dataset);
  if (!violations.empty()) fail_validation("invalid dataset: " + violations.front());

  std::vector<std::vector<Vec>> x;
  x.reserve(dataset.train.size());
  for (const Sequence& s : dataset.train) x.push_back(s.to_real());

  StackTrainResult result;
  result.model.dataset_name = dataset.name;

  for (std::size_t l = 0;; ++l) {
    std::size_t d = x.front().front().size();
    std::size_t h = initial_hidden == 0 ? d : initial_hidden;
    if (h > config.max_hidden) h = config.max_hidden;
    RngStream init_rng = RngStream::derive(hyper.seed, "init", {l});
    RnnRbmParams params = init_params(d, h, h, init_rng);
    NeuronMonitor monitor(h, config.window_len);

    auto on_batch = [&](const RnnRbmGradient& g) {
      update_monitor(monitor, g, g.mean_hidden);
    };
    auto on_epoch = [&](std::size_t epoch) {
      if ((epoch + 1) % config.check_interval != 0) return;
      if (!monitor.window_full()) return;
      auto gen = generation_check(monitor, config);
      if (!gen.empty() && params.hidden() < config.max_hidden) {
        RngStream rng = RngStream::derive(hyper.seed, "structure", {l, epoch});
        insert_neuron(params, gen.front(), rng, config.max_hidden);
        monitor.insert_neuron();
        result.model.structure_log.push_back(
            {epoch + 1, l + 1, "generate", gen.front(), params.hidden()});
        return;
      }
      auto ann = annihilation_check(monitor, config);
      if (!ann.empty() && params.hidden() > 1) {
        remove_neuron(params, ann.front());
        monitor.remove_neuron(ann.front());
        result.model.structure_log.push_back(
            {epoch + 1, l + 1, "annihilate", ann.front(), params.hidden()});
      }
    };

    std::vector<double> trace = train_loop(params, x, hyper, l, on_batch, on_epoch);
    result.model.layers.push_back(std::move(params));
    result.traces.push_back(trace);

    if (!layer_generation_check(trace, config, result.model.layer_count())) break;
    const RnnRbmParams& trained = result.model.layers.back();
    for (auto& seq : x) seq = propagate_layer(trained, seq);
    std::size_t next_h = initial_hidden == 0 ? trained.hidden() : initial_hidden;
    if (next_h > config.max_hidden) next_h = config.max_hidden;
    result.model.structure_log.push_back(
        {hyper.epochs, result.model.layer_count() + 1, "new_layer", 0, next_h});
  }

  result.model.check_chain();
  return result;
}

// ---- serialization ------------------------------------------------------

inline nlohmann::json model_to_json(const RnnDbnModel& model) {
  model.check_chain();
  nlohmann::json j;
  j["format_version"] = 1;
  j["dataset_name"] = model.dataset_name;
  j["meta"] = model.meta.is_null() ? nlohmann::json::object() : model.meta;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers) layers.push_back(layer_to_json(l));
  j["layers"] = std::move(layers);
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : model.structure_log) log.push_back(edit_to_json(e));
  j["structure_log"] = std::move(log);
  return j;
}

inline RnnDbnModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format_version", 0) != 1)
    fail_format("model record has unknown format_version");
  RnnDbnModel m;
  m.dataset_name = j.value("dataset_name", "");
  m.meta = j.value("meta", nlohmann::json::object());
  if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty())
    fail_format("model record has no layers");
  for (const auto& jl : j["layers"]) m.layers.push_back(layer_from_json(jl));
  for (const auto& je : j.value("structure_log", nlohmann::json::array()))
    m.structure_log.push_back(edit_from_json(je));
  m.check_chain();
  return m;
}

inline void save_model(const RnnDbnModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_missing("cannot write model file: " + path);
  out << model_to_json(model).dump(2) << "\n";
}

inline RnnDbnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_missing("cannot open model file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail_format(std::string("model JSON parse error: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace seqdistill

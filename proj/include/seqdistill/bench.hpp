// Dual inference engines and the accuracy/latency harness.
//
// The network predictor follows its contract exactly: a full forward pass
// over the prefix per prediction. The rule predictor keeps each layer's
// recurrent state warm across calls and evaluates only the layers some rule
// condition can reference, so its per-step cost is bounded by the rules, not
// by the model depth. Timing wraps the prediction loop alone, single
// threaded, median of 5 repetitions.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqdistill/c45.hpp"
#include "seqdistill/data.hpp"
#include "seqdistill/dbn.hpp"
#include "seqdistill/error.hpp"
#include "seqdistill/paths.hpp"

namespace seqdistill {

struct EvalReport {
  std::string predictor;  // "network" | "rules"
  double accuracy_percent = 0.0;
  double exact_frame_percent = 0.0;
  double cpu_time_seconds = 0.0;
  std::size_t frames_evaluated = 0;
  double speedup_vs_network = 0.0;  // rules report only
};

inline Frame threshold_frame(const Vec& probs) {
  Frame f = Frame::dense(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) f.bits[i] = probs[i] > 0.5 ? 1 : 0;
  return f;
}

// Full forward pass over the prefix, thresholded strictly at 0.5.
inline Frame predict_network(const RnnDbnModel& model, const std::vector<Vec>& prefix) {
  return threshold_frame(forward(model, prefix).next_prob);
}

// Incremental per-layer recurrent state for rule inference. Layers above the
// deepest rule-referenced one are never evaluated; the evaluation counter
// backs the laziness property tests.
struct RuleStateCache {
  std::vector<Vec> u;       // recurrent state per evaluated layer
  std::vector<Vec> seen;    // prefix consumed so far
  FiredPath path;           // most-fired indices at the last consumed step
  std::uint64_t layer_evaluations = 0;  // instrumentation; never reset

  void reset() {
    u.clear();
    seen.clear();
    path.indices.clear();
  }

  std::size_t frames_consumed() const { return seen.size(); }
};

class RulePredictor {
 public:
  RulePredictor(const RnnDbnModel& model, std::vector<RuleSet> rulesets)
      : model_(model), rulesets_(std::move(rulesets)) {
    if (rulesets_.size() != model.visible())
      throw Error(ErrorKind::config,
                  "need one ruleset per output dimension: " +
                      std::to_string(rulesets_.size()) + " rulesets for D=" +
                      std::to_string(model.visible()));
    int deepest = -1;
    for (const RuleSet& rs : rulesets_)
      deepest = std::max(deepest, rs.deepest_attribute());
    layers_needed_ = static_cast<std::size_t>(deepest + 1);
    if (layers_needed_ > model.layer_count())
      throw Error(ErrorKind::config, "rules reference layers beyond the model depth");
  }

  std::size_t layers_needed() const { return layers_needed_; }

  // Advances the cached state by one frame: evaluates layers 1..layers_needed
  // with the same floating-point expressions as unroll/propagate_layer, so
  // the fired path matches the extraction pipeline bit for bit.
  void advance(RuleStateCache& cache, const Vec& frame) const {
    if (cache.u.empty() && layers_needed_ > 0) {
      cache.u.resize(layers_needed_);
      for (std::size_t l = 0; l < layers_needed_; ++l) {
        const RnnRbmParams& p = model_.layers[l];
        cache.u[l] = Vec(p.state());
        for (std::size_t i = 0; i < p.state(); ++i)
          cache.u[l][i] = sigmoid(p.u0[i]);
      }
    }
    cache.path.indices.assign(layers_needed_, 0);
    Vec x = frame;
    for (std::size_t l = 0; l < layers_needed_; ++l) {
      const RnnRbmParams& p = model_.layers[l];
      Vec& u_prev = cache.u[l];
      Vec ct = matvec(p.w_uh, u_prev);
      axpy(ct, 1.0, p.rbm.c);
      Vec ph = hidden_prob(x, p.rbm.w, ct);
      Vec drive = matvec(p.w_uu, u_prev);
      Vec in = matvec(p.w_vu, x);
      Vec u_next(p.state());
      for (std::size_t i = 0; i < p.state(); ++i)
        u_next[i] = sigmoid(p.u0[i] + drive[i] + in[i]);
      u_prev = std::move(u_next);
      cache.path.indices[l] = static_cast<std::size_t>(
          std::max_element(ph.begin(), ph.end()) - ph.begin());
      x = std::move(ph);
      ++cache.layer_evaluations;
    }
    cache.seen.push_back(frame);
  }

  Frame classify_current(const RuleStateCache& cache) const {
    Frame f = Frame::dense(rulesets_.size());
    for (std::size_t d = 0; d < rulesets_.size(); ++d)
      f.bits[d] = classify(rulesets_[d], cache.path) ? 1 : 0;
    return f;
  }

  const RnnDbnModel& model() const { return model_; }
  const std::vector<RuleSet>& rulesets() const { return rulesets_; }

 private:
  const RnnDbnModel& model_;
  std::vector<RuleSet> rulesets_;
  std::size_t layers_needed_ = 0;
};

// Rule-based prediction for the given prefix. The cache carries the
// recurrent state across calls: a prefix that extends the cached one by new
// frames only pays for the new steps; anything else recomputes from scratch.
inline Frame predict_rules(const RulePredictor& predictor,
                           const std::vector<Vec>& prefix, RuleStateCache& cache) {
  if (prefix.empty()) fail_validation("predict_rules requires a non-empty prefix");
  std::size_t reuse = 0;
  if (cache.frames_consumed() > 0 && cache.frames_consumed() <= prefix.size()) {
    bool is_prefix = true;
    for (std::size_t t = 0; t < cache.frames_consumed() && is_prefix; ++t)
      is_prefix = cache.seen[t] == prefix[t];
    if (is_prefix) reuse = cache.frames_consumed();
  }
  if (reuse == 0) cache.reset();
  for (std::size_t t = reuse; t < prefix.size(); ++t)
    predictor.advance(cache, prefix[t]);
  return predictor.classify_current(cache);
}

namespace detail {

inline double median5(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  return xs[xs.size() / 2];
}

}  // namespace detail

// Runs one full pass over the test split with `predict(sequence, t)` asked
// for the frame after each t in [0, T-1); reports bitwise and exact-frame
// accuracy plus the median wall time of 5 repetitions of the loop.
template <typename PredictFn, typename ResetFn>
EvalReport evaluate(const std::string& name, const std::vector<Sequence>& test,
                    ResetFn&& reset_sequence, PredictFn&& predict_after) {
  if (test.empty()) fail_validation("evaluate: test split is empty");

  EvalReport report;
  report.predictor = name;

  std::vector<double> times;
  for (int rep = 0; rep < 5; ++rep) {
    std::size_t bit_hits = 0, bits_total = 0, frame_hits = 0, frames = 0;
    auto start = std::chrono::steady_clock::now();
    for (const Sequence& seq : test) {
      reset_sequence(seq);
      std::vector<Vec> real = seq.to_real();
      for (std::size_t t = 0; t + 1 < seq.length(); ++t) {
        Frame got = predict_after(seq, real, t);
        const Frame& want = seq.frames[t + 1];
        bool exact = true;
        for (std::size_t i = 0; i < want.size(); ++i) {
          bool hit = got.bits[i] == want.bits[i];
          bit_hits += hit ? 1 : 0;
          exact = exact && hit;
        }
        bits_total += want.size();
        frame_hits += exact ? 1 : 0;
        ++frames;
      }
    }
    auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(stop - start).count());
    if (frames == 0) fail_validation("evaluate: test split has no predictable frames");
    report.frames_evaluated = frames;
    report.accuracy_percent = 100.0 * static_cast<double>(bit_hits) /
                              static_cast<double>(bits_total);
    report.exact_frame_percent =
        100.0 * static_cast<double>(frame_hits) / static_cast<double>(frames);
  }
  report.cpu_time_seconds = std::max(detail::median5(times), 1e-9);
  return report;
}

inline EvalReport evaluate_network(const RnnDbnModel& model,
                                   const std::vector<Sequence>& test) {
  return evaluate(
      "network", test, [](const Sequence&) {},
      [&](const Sequence&, const std::vector<Vec>& real, std::size_t t) {
        std::vector<Vec> prefix(real.begin(), real.begin() + t + 1);
        return predict_network(model, prefix);
      });
}

inline EvalReport evaluate_rules(const RulePredictor& predictor,
                                 const std::vector<Sequence>& test) {
  RuleStateCache cache;
  return evaluate(
      "rules", test, [&](const Sequence&) { cache.reset(); },
      [&](const Sequence&, const std::vector<Vec>& real, std::size_t t) {
        predictor.advance(cache, real[t]);
        return predictor.classify_current(cache);
      });
}

struct Comparison {
  EvalReport network;
  EvalReport rules;
  double speedup = 0.0;
};

// Both predictors under identical conditions; speedup = network time / rules.
inline Comparison compare(const RnnDbnModel& model, const std::vector<RuleSet>& rulesets,
                          const Dataset& dataset) {
  if (dataset.test.empty()) fail_validation("compare: dataset has no test split");
  Comparison c;
  c.network = evaluate_network(model, dataset.test);
  RulePredictor predictor(model, rulesets);
  c.rules = evaluate_rules(predictor, dataset.test);
  c.speedup = c.network.cpu_time_seconds / c.rules.cpu_time_seconds;
  c.rules.speedup_vs_network = c.speedup;
  return c;
}

// ---- reporting ----------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["predictor"] = r.predictor;
  j["accuracy_percent"] = r.accuracy_percent;
  j["exact_frame_percent"] = r.exact_frame_percent;
  j["cpu_time_seconds"] = r.cpu_time_seconds;
  j["frames_evaluated"] = r.frames_evaluated;
  if (r.predictor == "rules") j["speedup_vs_network"] = r.speedup_vs_network;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.predictor = j.at("predictor").get<std::string>();
  r.accuracy_percent = j.at("accuracy_percent").get<double>();
  r.exact_frame_percent = j.at("exact_frame_percent").get<double>();
  r.cpu_time_seconds = j.at("cpu_time_seconds").get<double>();
  r.frames_evaluated = j.at("frames_evaluated").get<std::size_t>();
  r.speedup_vs_network = j.value("speedup_vs_network", 0.0);
  return r;
}

inline nlohmann::json comparison_to_json(const Comparison& c) {
  nlohmann::json j;
  j["without_knowledge"] = report_to_json(c.network);
  j["with_knowledge"] = report_to_json(c.rules);
  j["speedup"] = c.speedup;
  return j;
}

// Two-row text table: network ("without knowledge") vs rules ("with knowledge").
inline std::string comparison_to_text(const Comparison& c) {
  std::ostringstream os;
  os << std::fixed;
  os << std::setw(20) << std::left << "" << std::setw(14) << std::right
     << "Accuracy (%)" << std::setw(18) << "Exact frames (%)" << std::setw(15)
     << "CPU time (s)" << "\n";
  auto row = [&](const char* label, const EvalReport& r) {
    os << std::setw(20) << std::left << label << std::setw(14) << std::right
       << std::setprecision(1) << r.accuracy_percent << std::setw(18)
       << std::setprecision(1) << r.exact_frame_percent << std::setw(15)
       << std::setprecision(6) << r.cpu_time_seconds << "\n";
  };
  row("without knowledge", c.network);
  row("with knowledge", c.rules);
  os << "speedup (network/rules CPU time): " << std::setprecision(1) << c.speedup
     << "x\n";
  return os.str();
}

}  // namespace seqdistill

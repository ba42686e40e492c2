// Self-organizing structure: neuron generation when a hidden unit's gradient
// statistics keep fluctuating (overloaded), annihilation when its activation
// is stuck at either rail (uninformative), and the layer-stacking test.
//
// The generation criterion is the product of the windowed gradient variances
// of c[j] and W[:,j] exceeding gen_threshold; one edit per check keeps growth
// gradual. Structural edits are exclusive operations performed between
// batches.
#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqdistill/error.hpp"
#include "seqdistill/rnn_rbm.hpp"

namespace seqdistill {

struct StructureConfig {
  double gen_threshold = 0.05;
  double ann_threshold = 0.01;   // in (0,1); stuck below it or above 1-it
  double layer_threshold = 0.1;  // final-error bar for stacking another layer
  std::size_t max_hidden = 256;
  std::size_t max_layers = 1;
  std::size_t check_interval = 5;  // epochs between structure checks
  std::size_t window_len = 10;     // batches per monitor window

  void check() const {
    if (gen_threshold <= 0.0) fail_validation("gen_threshold must be > 0");
    if (!(ann_threshold > 0.0 && ann_threshold < 1.0))
      fail_validation("ann_threshold must lie in (0,1)");
    if (layer_threshold <= 0.0) fail_validation("layer_threshold must be > 0");
    if (max_layers < 1) fail_validation("max_layers must be >= 1");
    if (check_interval < 1) fail_validation("check_interval must be >= 1");
    if (window_len < 2) fail_validation("window_len must be >= 2");
  }
};

// Sliding-window statistics for every hidden neuron of one layer.
class NeuronMonitor {
 public:
  NeuronMonitor() = default;
  NeuronMonitor(std::size_t hidden, std::size_t window_len)
      : window_len_(window_len), neurons_(hidden) {}

  std::size_t size() const { return neurons_.size(); }
  std::size_t window_len() const { return window_len_; }

  bool window_full() const {
    for (const auto& n : neurons_)
      if (n.dc.size() < window_len_) return false;
    return !neurons_.empty();
  }

  bool neuron_full(std::size_t j) const { return neurons_[j].dc.size() >= window_len_; }

  // Population variance of dc[j] over the window.
  double variance_c(std::size_t j) const { return variance(neurons_[j].dc); }

  // Mean over visible entries of the per-entry windowed variance of dW[:,j].
  double variance_w(std::size_t j) const {
    const auto& hist = neurons_[j].dw_col;
    if (hist.empty()) return 0.0;
    std::size_t d = hist.front().size();
    double acc = 0.0;
    std::deque<double> series;
    for (std::size_t i = 0; i < d; ++i) {
      series.clear();
      for (const Vec& col : hist) series.push_back(col[i]);
      acc += variance(series);
    }
    return acc / static_cast<double>(d);
  }

  double mean_activation(std::size_t j) const {
    const auto& hist = neurons_[j].act;
    if (hist.empty()) return 0.0;
    double acc = 0.0;
    for (double a : hist) acc += a;
    return acc / static_cast<double>(hist.size());
  }

  void record_batch(const RnnRbmGradient& g, const Vec& activations) {
    if (g.dc.size() != neurons_.size() || activations.size() != neurons_.size() ||
        g.dw.cols() != neurons_.size())
      fail_validation("monitor update: gradient shape does not match H");
    std::size_t d = g.dw.rows();
    for (std::size_t j = 0; j < neurons_.size(); ++j) {
      auto& n = neurons_[j];
      Vec col(d);
      for (std::size_t i = 0; i < d; ++i) col[i] = g.dw(i, j);
      push(n.dc, g.dc[j]);
      push_col(n.dw_col, std::move(col));
      push(n.act, activations[j]);
      ++n.age;
    }
  }

  void insert_neuron() { neurons_.emplace_back(); }

  void remove_neuron(std::size_t j) { neurons_.erase(neurons_.begin() + j); }

 private:
  struct Stats {
    std::deque<double> dc;
    std::deque<Vec> dw_col;
    std::deque<double> act;
    std::size_t age = 0;
  };

  static double variance(const std::deque<double>& xs) {
    if (xs.empty()) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(xs.size());
  }

  void push(std::deque<double>& q, double v) {
    q.push_back(v);
    if (q.size() > window_len_) q.pop_front();
  }
  void push_col(std::deque<Vec>& q, Vec v) {
    q.push_back(std::move(v));
    if (q.size() > window_len_) q.pop_front();
  }

  std::size_t window_len_ = 10;
  std::vector<Stats> neurons_;
};

inline void update_monitor(NeuronMonitor& monitor, const RnnRbmGradient& g,
                           const Vec& activations) {
  monitor.record_batch(g, activations);
}

// At most one neuron per check: the highest variance product above the
// threshold; equal products resolve to the lower index.
inline std::vector<std::size_t> generation_check(const NeuronMonitor& monitor,
                                                 const StructureConfig& config) {
  std::vector<std::size_t> out;
  double best = 0.0;
  std::size_t best_j = 0;
  bool found = false;
  for (std::size_t j = 0; j < monitor.size(); ++j) {
    if (!monitor.neuron_full(j)) continue;
    double product = monitor.variance_c(j) * monitor.variance_w(j);
    if (product > config.gen_threshold && (!found || product > best)) {
      best = product;
      best_j = j;
      found = true;
    }
  }
  if (found) out.push_back(best_j);
  return out;
}

// Stuck-off or stuck-on neurons carry no information. Neurons whose window is
// not yet full (generated within the last window) are never flagged.
inline std::vector<std::size_t> annihilation_check(const NeuronMonitor& monitor,
                                                   const StructureConfig& config) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < monitor.size(); ++j) {
    if (!monitor.neuron_full(j)) continue;
    double a = monitor.mean_activation(j);
    if (a < config.ann_threshold || a > 1.0 - config.ann_threshold) out.push_back(j);
  }
  return out;
}

// Appends a copy of the parent's W column, c entry and W_uh row, each entry
// perturbed by Gaussian(0, 0.01|value| + 1e-4). Everything else is untouched.
inline void insert_neuron(RnnRbmParams& params, std::size_t parent, RngStream& rng,
                          std::size_t max_hidden) {
  std::size_t d = params.visible(), h = params.hidden(), k = params.state();
  if (parent >= h) fail_validation("insert_neuron: parent index out of range");
  if (h >= max_hidden)
    fail_validation("insert_neuron: hidden layer already at capacity " +
                    std::to_string(max_hidden));
  auto perturb = [&](double v) { return v + rng.normal(0.0, 0.01 * std::abs(v) + 1e-4); };

  Mat w(d, h + 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < h; ++j) w(i, j) = params.rbm.w(i, j);
    w(i, h) = perturb(params.rbm.w(i, parent));
  }
  params.rbm.w = std::move(w);
  params.rbm.c.push_back(perturb(params.rbm.c[parent]));
  Mat w_uh(h + 1, k);
  for (std::size_t j = 0; j < h; ++j)
    for (std::size_t x = 0; x < k; ++x) w_uh(j, x) = params.w_uh(j, x);
  for (std::size_t x = 0; x < k; ++x) w_uh(h, x) = perturb(params.w_uh(parent, x));
  params.w_uh = std::move(w_uh);
  params.check_consistent();
}

// Deletes W column j, c[j] and W_uh row j; surviving indices shift down.
inline void remove_neuron(RnnRbmParams& params, std::size_t j) {
  std::size_t d = params.visible(), h = params.hidden(), k = params.state();
  if (j >= h) fail_validation("remove_neuron: index out of range");
  if (h <= 1) fail_validation("remove_neuron: cannot empty the hidden layer");

  Mat w(d, h - 1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t jj = 0, out = 0; jj < h; ++jj)
      if (jj != j) w(i, out++) = params.rbm.w(i, jj);
  params.rbm.w = std::move(w);
  params.rbm.c.erase(params.rbm.c.begin() + j);
  Mat w_uh(h - 1, k);
  for (std::size_t jj = 0, out = 0; jj < h; ++jj) {
    if (jj == j) continue;
    for (std::size_t x = 0; x < k; ++x) w_uh(out, x) = params.w_uh(jj, x);
    ++out;
  }
  params.w_uh = std::move(w_uh);
  params.check_consistent();
}

// True while the layer still underfits and the stack has room to grow.
inline bool layer_generation_check(const std::vector<double>& error_trace,
                                   const StructureConfig& config,
                                   std::size_t current_layers) {
  if (error_trace.empty()) return false;
  return error_trace.back() > config.layer_threshold &&
         current_layers < config.max_layers;
}

// One append-only record per structural edit.
struct StructureEdit {
  std::size_t epoch = 0;
  std::size_t layer = 0;
  std::string kind;  // "generate" | "annihilate" | "new_layer"
  std::size_t index = 0;
  std::size_t h_after = 0;
};

inline nlohmann::json edit_to_json(const StructureEdit& e) {
  nlohmann::json j;
  j["epoch"] = e.epoch;
  j["layer"] = e.layer;
  j["kind"] = e.kind;
  j["index"] = e.index;
  j["h_after"] = e.h_after;
  return j;
}

inline StructureEdit edit_from_json(const nlohmann::json& j) {
  StructureEdit e;
  e.epoch = j.at("epoch").get<std::size_t>();
  e.layer = j.at("layer").get<std::size_t>();
  e.kind = j.at("kind").get<std::string>();
  e.index = j.at("index").get<std::size_t>();
  e.h_after = j.at("h_after").get<std::size_t>();
  return e;
}

}  // namespace seqdistill

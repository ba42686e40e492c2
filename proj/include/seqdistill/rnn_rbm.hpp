// One recurrent RBM layer. The layer unrolls a sequence into per-step biases
// and a recurrent state chain
//
//   b_t = b + W_uv u_{t-1}
//   c_t = c + W_uh u_{t-1}
//   u_t = sigmoid(u0 + W_uu u_{t-1} + W_vu v_t),   u_0 = sigmoid(u0)
//
// and trains with a hybrid gradient: CD-1 estimates for the energy terms
// (W, b, c, distributed onto W_uv/W_uh through the bias equations) and exact
// backpropagation of the reconstruction cross-entropy through the state chain
// for u0, W_vu, W_uu.
//
// Matrices are stored so each equation above is a plain mat·vec:
// W_uv is D×K, W_uh is H×K, W_vu is K×D, W_uu is K×K.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqdistill/error.hpp"
#include "seqdistill/linalg.hpp"
#include "seqdistill/rbm.hpp"
#include "seqdistill/rng.hpp"
#include "seqdistill/util.hpp"

namespace seqdistill {

struct RnnRbmParams {
  RbmParams rbm;  // W (D×H), b (D), c (H)
  Vec u0;         // K; u_0 = sigmoid(u0), and bias of the state update
  Mat w_uv;       // D×K
  Mat w_uh;       // H×K
  Mat w_vu;       // K×D
  Mat w_uu;       // K×K

  std::size_t visible() const { return rbm.visible(); }
  std::size_t hidden() const { return rbm.hidden(); }
  std::size_t state() const { return u0.size(); }

  // Validates the mutual shape constraints; names the offending matrix.
  void check_consistent() const {
    std::size_t d = visible(), h = hidden(), k = state();
    if (k == 0) fail_validation("state size K must be >= 1");
    if (rbm.b.size() != d) fail_validation("dimension mismatch: b");
    if (rbm.c.size() != h) fail_validation("dimension mismatch: c");
    if (w_uv.rows() != d || w_uv.cols() != k) fail_validation("dimension mismatch: W_uv");
    if (w_uh.rows() != h || w_uh.cols() != k) fail_validation("dimension mismatch: W_uh");
    if (w_vu.rows() != k || w_vu.cols() != d) fail_validation("dimension mismatch: W_vu");
    if (w_uu.rows() != k || w_uu.cols() != k) fail_validation("dimension mismatch: W_uu");
  }

  bool finite() const {
    return all_finite(rbm.w) && all_finite(rbm.b) && all_finite(rbm.c) &&
           all_finite(u0) && all_finite(w_uv) && all_finite(w_uh) &&
           all_finite(w_vu) && all_finite(w_uu);
  }
};

// Off-diagonal weights start as small Gaussians, biases at zero, u0 uniform
// in (-0.1, 0.1). Draw order is part of the determinism contract.
inline RnnRbmParams init_params(std::size_t d, std::size_t h, std::size_t k,
                                RngStream& rng) {
  RnnRbmParams p;
  p.rbm.w = Mat(d, h);
  p.rbm.b = Vec(d, 0.0);
  p.rbm.c = Vec(h, 0.0);
  p.w_uv = Mat(d, k);
  p.w_uh = Mat(h, k);
  p.w_vu = Mat(k, d);
  p.w_uu = Mat(k, k);
  p.u0 = Vec(k, 0.0);
  for (double& x : p.rbm.w.flat()) x = rng.normal(0.0, 0.01);
  for (double& x : p.w_uv.flat()) x = rng.normal(0.0, 0.01);
  for (double& x : p.w_uh.flat()) x = rng.normal(0.0, 0.01);
  for (double& x : p.w_vu.flat()) x = rng.normal(0.0, 0.01);
  for (double& x : p.w_uu.flat()) x = rng.normal(0.0, 0.01);
  for (double& x : p.u0) x = rng.uniform(-0.1, 0.1);
  return p;
}

// Per-step biases and the state chain. u holds T+1 entries, u[0] included.
struct UnrolledStates {
  std::vector<Vec> b_t;
  std::vector<Vec> c_t;
  std::vector<Vec> u;
};

inline UnrolledStates unroll(const RnnRbmParams& params,
                             const std::vector<Vec>& seq) {
  params.check_consistent();
  std::size_t t_len = seq.size();
  for (const Vec& v : seq)
    if (v.size() != params.visible())
      fail_validation("dimension mismatch: sequence frame vs visible layer");

  UnrolledStates s;
  s.b_t.reserve(t_len);
  s.c_t.reserve(t_len);
  s.u.reserve(t_len + 1);

  Vec u_prev(params.state());
  for (std::size_t i = 0; i < u_prev.size(); ++i) u_prev[i] = sigmoid(params.u0[i]);
  s.u.push_back(u_prev);

  for (std::size_t t = 0; t < t_len; ++t) {
    Vec bt = matvec(params.w_uv, u_prev);
    axpy(bt, 1.0, params.rbm.b);
    Vec ct = matvec(params.w_uh, u_prev);
    axpy(ct, 1.0, params.rbm.c);
    s.b_t.push_back(std::move(bt));
    s.c_t.push_back(std::move(ct));

    Vec drive = matvec(params.w_uu, u_prev);
    Vec in = matvec(params.w_vu, seq[t]);
    Vec u_next(params.state());
    for (std::size_t i = 0; i < u_next.size(); ++i)
      u_next[i] = sigmoid(params.u0[i] + drive[i] + in[i]);
    s.u.push_back(u_next);
    u_prev = std::move(u_next);
  }
  return s;
}

namespace detail {

// Cross-entropy of target v against sigmoid(z), in a form stable for large |z|.
inline double bernoulli_ce(double v, double z) {
  return softplus(-z) + (1.0 - v) * z;
}

}  // namespace detail

// Mean over steps of the cross-entropy between v_t and its mean-field
// reconstruction under the unrolled biases.
inline double sequence_cost(const RnnRbmParams& params, const std::vector<Vec>& seq) {
  UnrolledStates s = unroll(params, seq);
  double total = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    Vec ph = hidden_prob(seq[t], params.rbm.w, s.c_t[t]);
    Vec z = matvec(params.rbm.w, ph);
    axpy(z, 1.0, s.b_t[t]);
    for (std::size_t i = 0; i < z.size(); ++i)
      total += detail::bernoulli_ce(seq[t][i], z[i]);
  }
  return total / static_cast<double>(seq.size());
}

// Gradient record over all θ. Entries follow the training convention
// θ ← θ + lr·g (likelihood ascent / cost descent). mean_hidden carries the
// per-step average hidden activation for the structure monitor.
struct RnnRbmGradient {
  Mat dw;
  Vec db;
  Vec dc;
  Vec du0;
  Mat dw_uv;
  Mat dw_uh;
  Mat dw_vu;
  Mat dw_uu;
  Vec mean_hidden;

  static RnnRbmGradient zeros(const RnnRbmParams& p) {
    RnnRbmGradient g;
    g.dw = Mat(p.visible(), p.hidden());
    g.db = Vec(p.visible(), 0.0);
    g.dc = Vec(p.hidden(), 0.0);
    g.du0 = Vec(p.state(), 0.0);
    g.dw_uv = Mat(p.visible(), p.state());
    g.dw_uh = Mat(p.hidden(), p.state());
    g.dw_vu = Mat(p.state(), p.visible());
    g.dw_uu = Mat(p.state(), p.state());
    g.mean_hidden = Vec(p.hidden(), 0.0);
    return g;
  }

  void accumulate(const RnnRbmGradient& o, double scale) {
    axpy(dw.flat(), scale, o.dw.flat());
    axpy(db, scale, o.db);
    axpy(dc, scale, o.dc);
    axpy(du0, scale, o.du0);
    axpy(dw_uv.flat(), scale, o.dw_uv.flat());
    axpy(dw_uh.flat(), scale, o.dw_uh.flat());
    axpy(dw_vu.flat(), scale, o.dw_vu.flat());
    axpy(dw_uu.flat(), scale, o.dw_uu.flat());
    axpy(mean_hidden, scale, o.mean_hidden);
  }
};

// Exact derivative of sequence_cost with respect to every parameter,
// backpropagated through the full state chain. This is the reference path
// checked against central finite differences; bptt_gradients draws its
// recurrent-weight terms from here.
inline RnnRbmGradient cost_gradients(const RnnRbmParams& params,
                                     const std::vector<Vec>& seq) {
  UnrolledStates st = unroll(params, seq);
  std::size_t t_len = seq.size();
  const Mat& w = params.rbm.w;
  double inv_t = 1.0 / static_cast<double>(t_len);

  RnnRbmGradient g = RnnRbmGradient::zeros(params);

  // Forward pass quantities reused by the chain: gz (visible residual) and
  // ga (hidden pre-activation gradient) per step.
  std::vector<Vec> gz(t_len), ga(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    Vec ph = hidden_prob(seq[t], w, st.c_t[t]);
    Vec z = matvec(w, ph);
    axpy(z, 1.0, st.b_t[t]);
    Vec gzt(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      gzt[i] = (sigmoid(z[i]) - seq[t][i]) * inv_t;
    Vec gph = matvec_t(w, gzt);
    Vec gat(ph.size());
    for (std::size_t j = 0; j < ph.size(); ++j)
      gat[j] = gph[j] * ph[j] * (1.0 - ph[j]);

    axpy(g.db, 1.0, gzt);
    add_outer(g.dw_uv, gzt, st.u[t]);
    axpy(g.dc, 1.0, gat);
    add_outer(g.dw_uh, gat, st.u[t]);
    add_outer(g.dw, gzt, ph);
    add_outer(g.dw, seq[t], gat);

    gz[t] = std::move(gzt);
    ga[t] = std::move(gat);
  }

  // Backward through the state chain. u[t+1] = sigmoid(u0 + W_uu u[t] + W_vu v[t]).
  Vec gu(params.state(), 0.0);  // gradient wrt u[t+1], zero at the chain end
  for (std::size_t t = t_len; t-- > 0;) {
    Vec gs(params.state());
    for (std::size_t i = 0; i < gs.size(); ++i)
      gs[i] = gu[i] * st.u[t + 1][i] * (1.0 - st.u[t + 1][i]);
    axpy(g.du0, 1.0, gs);
    add_outer(g.dw_uu, gs, st.u[t]);
    add_outer(g.dw_vu, gs, seq[t]);

    gu = matvec_t(params.w_uv, gz[t]);
    axpy(gu, 1.0, matvec_t(params.w_uh, ga[t]));
    axpy(gu, 1.0, matvec_t(params.w_uu, gs));
  }
  // u[0] = sigmoid(u0)
  for (std::size_t i = 0; i < gu.size(); ++i)
    g.du0[i] += gu[i] * st.u[0][i] * (1.0 - st.u[0][i]);

  return g;
}

// Hybrid training gradient (ascent direction): per-step CD-1 for the energy
// terms, with the b_t/c_t pieces distributed onto W_uv/W_uh using u_{t-1} as
// coefficient; exact cost descent for u0, W_vu, W_uu. All terms are per-step
// means, so scale is independent of T.
inline RnnRbmGradient bptt_gradients(const RnnRbmParams& params,
                                     const std::vector<Vec>& seq, RngStream& rng) {
  if (seq.size() < 2)
    fail_validation("bptt_gradients requires a sequence of length >= 2");
  UnrolledStates st = unroll(params, seq);
  double inv_t = 1.0 / static_cast<double>(seq.size());

  RnnRbmGradient g = RnnRbmGradient::zeros(params);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    RbmGradient cd = cd1_gradient(seq[t], params.rbm, st.b_t[t], st.c_t[t], rng);
    axpy(g.dw.flat(), inv_t, cd.dw.flat());
    axpy(g.db, inv_t, cd.db);
    axpy(g.dc, inv_t, cd.dc);
    add_outer(g.dw_uv, cd.db, st.u[t], inv_t);
    add_outer(g.dw_uh, cd.dc, st.u[t], inv_t);
    axpy(g.mean_hidden, inv_t, hidden_prob(seq[t], params.rbm.w, st.c_t[t]));
  }

  RnnRbmGradient cost = cost_gradients(params, seq);
  axpy(g.du0, -1.0, cost.du0);
  axpy(g.dw_vu.flat(), -1.0, cost.dw_vu.flat());
  axpy(g.dw_uu.flat(), -1.0, cost.dw_uu.flat());
  return g;
}

// One-step-ahead mean-field prediction: unroll the prefix, apply the bias
// updates once more from the final state, reconstruct from the last frame.
inline Vec predict_next(const RnnRbmParams& params, const std::vector<Vec>& prefix) {
  if (prefix.empty()) fail_validation("predict_next requires a non-empty prefix");
  UnrolledStates st = unroll(params, prefix);
  const Vec& u_last = st.u.back();
  Vec b_next = matvec(params.w_uv, u_last);
  axpy(b_next, 1.0, params.rbm.b);
  Vec c_next = matvec(params.w_uh, u_last);
  axpy(c_next, 1.0, params.rbm.c);
  Vec ph = hidden_prob(prefix.back(), params.rbm.w, c_next);
  return visible_prob(ph, params.rbm.w, b_next);
}

struct TrainHyper {
  double learning_rate = 0.001;
  std::size_t batch_size = 100;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
};

namespace detail {

inline void clip_group(Vec& v, double max_norm) {
  double n = std::sqrt(dot(v, v));
  if (n > max_norm) {
    double s = max_norm / n;
    for (double& x : v) x *= s;
  }
}

// L2 clip each parameter group independently; keeps long-T BPTT stable.
inline void clip_gradient(RnnRbmGradient& g, double max_norm = 5.0) {
  clip_group(g.dw.flat(), max_norm);
  clip_group(g.db, max_norm);
  clip_group(g.dc, max_norm);
  clip_group(g.du0, max_norm);
  clip_group(g.dw_uv.flat(), max_norm);
  clip_group(g.dw_uh.flat(), max_norm);
  clip_group(g.dw_vu.flat(), max_norm);
  clip_group(g.dw_uu.flat(), max_norm);
}

inline void apply_update(RnnRbmParams& p, const RnnRbmGradient& g, double lr) {
  axpy(p.rbm.w.flat(), lr, g.dw.flat());
  axpy(p.rbm.b, lr, g.db);
  axpy(p.rbm.c, lr, g.dc);
  axpy(p.u0, lr, g.du0);
  axpy(p.w_uv.flat(), lr, g.dw_uv.flat());
  axpy(p.w_uh.flat(), lr, g.dw_uh.flat());
  axpy(p.w_vu.flat(), lr, g.dw_vu.flat());
  axpy(p.w_uu.flat(), lr, g.dw_uu.flat());
}

}  // namespace detail

// Minibatch SGD over the given sequences. Per-sequence gradients may be
// computed in parallel; slots are reduced in index order so the result is
// bit-identical for any worker count. on_batch sees each applied mean
// gradient, on_epoch runs after the epoch's cost is recorded and may edit the
// parameters (structure hooks); no gradient is held across that boundary.
template <typename BatchHook, typename EpochHook>
std::vector<double> train_loop(RnnRbmParams& params,
                               const std::vector<std::vector<Vec>>& seqs,
                               const TrainHyper& hyper, std::uint64_t layer_index,
                               BatchHook&& on_batch, EpochHook&& on_epoch) {
  if (seqs.empty()) fail_validation("training set is empty");
  if (hyper.learning_rate < 0.0) fail_validation("learning_rate must be >= 0");
  if (hyper.batch_size == 0) fail_validation("batch_size must be >= 1");
  params.check_consistent();

  std::vector<double> trace;
  trace.reserve(hyper.epochs);

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream shuffle = RngStream::derive(hyper.seed, "shuffle", {layer_index, epoch});
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.next_u64() % i]);

    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      std::size_t count = std::min(hyper.batch_size, order.size() - start);
      std::vector<RnnRbmGradient> slots(count);
      parallel_for(count, [&](std::size_t i) {
        RngStream rng = RngStream::derive(hyper.seed, "cd",
                                          {layer_index, epoch, start + i});
        slots[i] = bptt_gradients(params, seqs[order[start + i]], rng);
      });
      RnnRbmGradient mean = RnnRbmGradient::zeros(params);
      for (std::size_t i = 0; i < count; ++i)
        mean.accumulate(slots[i], 1.0 / static_cast<double>(count));
      detail::clip_gradient(mean);
      detail::apply_update(params, mean, hyper.learning_rate);
      on_batch(mean);
    }

    std::vector<double> costs(seqs.size());
    parallel_for(seqs.size(), [&](std::size_t i) {
      costs[i] = sequence_cost(params, seqs[i]);
    });
    double mean_cost = 0.0;
    for (double ci : costs) mean_cost += ci / static_cast<double>(costs.size());
    trace.push_back(mean_cost);

    if (!params.finite() || !std::isfinite(mean_cost))
      throw Error(ErrorKind::divergence,
                  "training diverged at epoch " + std::to_string(epoch + 1) +
                      "; last good epoch " + std::to_string(epoch));

    on_epoch(epoch);
  }
  return trace;
}

// Plain SGD without structural edits; returns the per-epoch error trace.
inline std::vector<double> train(RnnRbmParams& params,
                                 const std::vector<std::vector<Vec>>& seqs,
                                 const TrainHyper& hyper,
                                 std::uint64_t layer_index = 0) {
  return train_loop(
      params, seqs, hyper, layer_index, [](const RnnRbmGradient&) {},
      [](std::size_t) {});
}

// ---- serialization ------------------------------------------------------

inline nlohmann::json layer_to_json(const RnnRbmParams& p) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["visible"] = p.visible();
  j["hidden"] = p.hidden();
  j["state"] = p.state();
  j["b"] = vec_to_json(p.rbm.b);
  j["c"] = vec_to_json(p.rbm.c);
  j["w"] = mat_to_json(p.rbm.w);
  j["u0"] = vec_to_json(p.u0);
  j["w_uv"] = mat_to_json(p.w_uv);
  j["w_uh"] = mat_to_json(p.w_uh);
  j["w_vu"] = mat_to_json(p.w_vu);
  j["w_uu"] = mat_to_json(p.w_uu);
  return j;
}

inline RnnRbmParams layer_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format_version", 0) != 1)
    fail_format("layer record has unknown format_version");
  std::size_t d = j.at("visible").get<std::size_t>();
  std::size_t h = j.at("hidden").get<std::size_t>();
  std::size_t k = j.at("state").get<std::size_t>();
  RnnRbmParams p;
  p.rbm.b = vec_from_json(j.at("b"), d, "b");
  p.rbm.c = vec_from_json(j.at("c"), h, "c");
  p.rbm.w = mat_from_json(j.at("w"), d, h, "w");
  p.u0 = vec_from_json(j.at("u0"), k, "u0");
  p.w_uv = mat_from_json(j.at("w_uv"), d, k, "w_uv");
  p.w_uh = mat_from_json(j.at("w_uh"), h, k, "w_uh");
  p.w_vu = mat_from_json(j.at("w_vu"), k, d, "w_vu");
  p.w_uu = mat_from_json(j.at("w_uu"), k, k, "w_uu");
  p.check_consistent();
  return p;
}

}  // namespace seqdistill

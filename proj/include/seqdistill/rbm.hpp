// Static RBM primitives: conditional probabilities, Bernoulli sampling, CD-1
// gradient estimation and free energy. These are the per-time-step kernels
// driven by the recurrent layer; biases arrive from the caller because the
// recurrent model makes them time-dependent.
//
// All operations are pure given an explicit rng stream; visible inputs are
// real-valued vectors so that upper layers can feed probabilities through the
// same code path (binary frames are the special case {0,1}).
#pragma once

#include <cmath>
#include <string>

#include "seqdistill/error.hpp"
#include "seqdistill/linalg.hpp"
#include "seqdistill/rng.hpp"

namespace seqdistill {

// Weights W (D×H), visible bias b (D), hidden bias c (H).
struct RbmParams {
  Mat w;
  Vec b;
  Vec c;

  std::size_t visible() const { return w.rows(); }
  std::size_t hidden() const { return w.cols(); }
};

struct RbmGradient {
  Mat dw;
  Vec db;
  Vec dc;
};

// Numerically stable logistic function; branch on sign keeps exp() bounded.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// p(h_j = 1 | v) = sigmoid(c_t[j] + sum_i v[i] W[i][j])
inline Vec hidden_prob(const Vec& v, const Mat& w, const Vec& c_t) {
  check_dims(v.size() == w.rows(), "hidden_prob: visible vector vs W rows");
  check_dims(c_t.size() == w.cols(), "hidden_prob: bias vs W cols");
  Vec a = matvec_t(w, v);
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = sigmoid(a[j] + c_t[j]);
  return a;
}

// p(v_i = 1 | h) = sigmoid(b_t[i] + sum_j W[i][j] h[j])
inline Vec visible_prob(const Vec& h, const Mat& w, const Vec& b_t) {
  check_dims(h.size() == w.cols(), "visible_prob: hidden vector vs W cols");
  check_dims(b_t.size() == w.rows(), "visible_prob: bias vs W rows");
  Vec z = matvec(w, h);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i] + b_t[i]);
  return z;
}

inline Vec sample_bernoulli(const Vec& probs, RngStream& rng) {
  Vec s(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
      fail_validation("bernoulli probability outside [0,1] at index " +
                      std::to_string(i));
    s[i] = rng.bernoulli(probs[i]) ? 1.0 : 0.0;
  }
  return s;
}

// One Gibbs step v0 -> h0 -> v1 -> h1 under the time-dependent biases.
// Positive/negative phases use hidden probabilities, the reconstruction v1 is
// a Bernoulli sample. Returned gradients point in the likelihood-ascent
// direction:
//   dW = v0 ph0ᵀ − v1 ph1ᵀ,  db = v0 − v1,  dc = ph0 − ph1.
inline RbmGradient cd1_gradient(const Vec& v0, const RbmParams& params,
                                const Vec& b_t, const Vec& c_t, RngStream& rng) {
  const Mat& w = params.w;
  check_dims(v0.size() == w.rows(), "cd1_gradient: v0 vs W rows");
  check_dims(b_t.size() == w.rows(), "cd1_gradient: b_t vs W rows");
  check_dims(c_t.size() == w.cols(), "cd1_gradient: c_t vs W cols");

  Vec ph0 = hidden_prob(v0, w, c_t);
  Vec h0 = sample_bernoulli(ph0, rng);
  Vec pv1 = visible_prob(h0, w, b_t);
  Vec v1 = sample_bernoulli(pv1, rng);
  Vec ph1 = hidden_prob(v1, w, c_t);

  RbmGradient g;
  g.dw = Mat(w.rows(), w.cols());
  add_outer(g.dw, v0, ph0, 1.0);
  add_outer(g.dw, v1, ph1, -1.0);
  g.db = v0;
  axpy(g.db, -1.0, v1);
  g.dc = ph0;
  axpy(g.dc, -1.0, ph1);
  return g;
}

// F(v) = −b_t·v − Σ_j log(1 + exp(c_t[j] + (Wᵀv)[j]));  exp(−F) ∝ p(v).
inline double free_energy(const Vec& v, const RbmParams& params, const Vec& b_t,
                          const Vec& c_t) {
  const Mat& w = params.w;
  check_dims(v.size() == w.rows(), "free_energy: v vs W rows");
  Vec a = matvec_t(w, v);
  double f = -dot(b_t, v);
  for (std::size_t j = 0; j < a.size(); ++j) f -= softplus(a[j] + c_t[j]);
  return f;
}

}  // namespace seqdistill

#pragma once

// Scalar re-implementations of the model equations, used as test oracles.

#include <algorithm>
#include <cmath>
#include <vector>

#include "prophet/captioner.hpp"
#include "prophet/rng.hpp"

namespace oracle {

using prophet::LstmParams;
using prophet::ModelParams;
using prophet::RegionFeatureSet;
using prophet::Tensor;

inline prophet::ModelDims tiny_dims() {
  prophet::ModelDims d;
  d.vocab = 6;
  d.embed = 3;
  d.feature = 4;
  d.hidden = 3;
  d.attention = 2;
  return d;
}

inline RegionFeatureSet random_features(prophet::Rng& rng, std::size_t d, std::size_t n) {
  std::vector<std::vector<double>> regions(n, std::vector<double>(d));
  for (auto& r : regions)
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  return RegionFeatureSet::from_regions(regions);
}

using Vec = std::vector<double>;

// Scalar re-implementations used as oracles.
inline Vec mat_vec(const Tensor& m, const Vec& x) {
  Vec y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) y[i] += m(i, j) * x[j];
  return y;
}

inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ScalarState {
  Vec h, c;
};

inline ScalarState lstm_oracle(const LstmParams& p, const Vec& input, const ScalarState& s) {
  Vec x = input;
  x.insert(x.end(), s.h.begin(), s.h.end());
  const Vec zi = mat_vec(p.Wi, x), zf = mat_vec(p.Wf, x), zo = mat_vec(p.Wo, x), zg = mat_vec(p.Wg, x);
  ScalarState out{Vec(s.h.size()), Vec(s.c.size())};
  for (std::size_t k = 0; k < s.h.size(); ++k) {
    const double i = sigmoid_scalar(zi[k] + p.bi[k]);
    const double f = sigmoid_scalar(zf[k] + p.bf[k]);
    const double o = sigmoid_scalar(zo[k] + p.bo[k]);
    const double g = std::tanh(zg[k] + p.bg[k]);
    out.c[k] = f * s.c[k] + i * g;
    out.h[k] = o * std::tanh(out.c[k]);
  }
  return out;
}

inline Vec attention_oracle(const Vec& query, const RegionFeatureSet& f, const ModelParams& p) {
  const std::size_t N = f.count();
  const Vec q = mat_vec(p.W_h, query);
  Vec scores(N);
  for (std::size_t k = 0; k < N; ++k) {
    Vec v(f.dim());
    for (std::size_t i = 0; i < f.dim(); ++i) v[i] = f.V(i, k);
    const Vec key = mat_vec(p.W_V, v);
    double s = 0.0;
    for (std::size_t a = 0; a < key.size(); ++a) s += p.w_alpha[a] * std::tanh(q[a] + key[a]);
    scores[k] = s;
  }
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double z = 0.0;
  for (double& s : scores) z += (s = std::exp(s - mx));
  for (double& s : scores) s /= z;
  return scores;
}

inline Vec logits_oracle(const Vec& h, const Vec& context, const ModelParams& p) {
  Vec hc = h;
  hc.insert(hc.end(), context.begin(), context.end());
  Vec z = mat_vec(p.W_p, hc);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += p.b_p[i];
  return z;
}

}  // namespace oracle

#pragma once

// Independent reference implementations used as oracles. These stay plain
// scalar loops on std::vector so they share no code path with the library.

#include <cmath>
#include <cstddef>
#include <vector>

#include "hedge/layers.hpp"

namespace hedge::oracle {

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> matmul(const std::vector<double>& a,
                                  const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

inline std::vector<double> gru_step(const std::vector<double>& x,
                                    const std::vector<double>& h,
                                    const nn::GruParams& p, std::size_t d,
                                    std::size_t hd) {
  auto affine = [&](const ad::Tensor& w, const ad::Tensor& u, const ad::Tensor& b,
                    const std::vector<double>& hin) {
    std::vector<double> out(hd, 0.0);
    for (std::size_t j = 0; j < hd; ++j) {
      double acc = b.value()[j];
      for (std::size_t i = 0; i < d; ++i) acc += x[i] * w.value()[i * hd + j];
      for (std::size_t i = 0; i < hd; ++i) acc += hin[i] * u.value()[i * hd + j];
      out[j] = acc;
    }
    return out;
  };
  std::vector<double> z = affine(p.W_z, p.U_z, p.b_z, h);
  std::vector<double> r = affine(p.W_r, p.U_r, p.b_r, h);
  for (auto& v : z) v = sig(v);
  for (auto& v : r) v = sig(v);
  std::vector<double> rh(hd);
  for (std::size_t i = 0; i < hd; ++i) rh[i] = r[i] * h[i];
  std::vector<double> cand = affine(p.W_h, p.U_h, p.b_h, rh);
  for (auto& v : cand) v = std::tanh(v);
  std::vector<double> out(hd);
  for (std::size_t i = 0; i < hd; ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * cand[i];
  return out;
}

struct LstmOut {
  std::vector<double> h, c;
};

inline LstmOut lstm_step(const std::vector<double>& x, const std::vector<double>& h,
                         const std::vector<double>& c, const nn::LstmParams& p,
                         std::size_t d, std::size_t hd) {
  auto affine = [&](const ad::Tensor& w, const ad::Tensor& u, const ad::Tensor& b) {
    std::vector<double> out(hd, 0.0);
    for (std::size_t j = 0; j < hd; ++j) {
      double acc = b.value()[j];
      for (std::size_t i = 0; i < d; ++i) acc += x[i] * w.value()[i * hd + j];
      for (std::size_t i = 0; i < hd; ++i) acc += h[i] * u.value()[i * hd + j];
      out[j] = acc;
    }
    return out;
  };
  std::vector<double> gi = affine(p.W_i, p.U_i, p.b_i);
  std::vector<double> gf = affine(p.W_f, p.U_f, p.b_f);
  std::vector<double> go = affine(p.W_o, p.U_o, p.b_o);
  std::vector<double> gg = affine(p.W_g, p.U_g, p.b_g);
  LstmOut out;
  out.h.resize(hd);
  out.c.resize(hd);
  for (std::size_t i = 0; i < hd; ++i) {
    const double iv = sig(gi[i]);
    const double fv = sig(gf[i]);
    const double ov = sig(go[i]);
    const double gv = std::tanh(gg[i]);
    out.c[i] = fv * c[i] + iv * gv;
    out.h[i] = ov * std::tanh(out.c[i]);
  }
  return out;
}

// additive attention pooling by explicit sums
struct AttnOut {
  std::vector<double> weights, context;
};

inline AttnOut attention_pool(const std::vector<double>& states, const Mask& mask,
                              const nn::AttnPoolParams& p, std::size_t t,
                              std::size_t h) {
  const std::size_t a = p.v.numel();
  std::vector<double> scores(t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (std::size_t aa = 0; aa < a; ++aa) {
      double proj = 0.0;
      for (std::size_t hh = 0; hh < h; ++hh)
        proj += states[i * h + hh] * p.W.value()[hh * a + aa];
      s += p.v.value()[aa] * std::tanh(proj);
    }
    scores[i] = s;
  }
  double mx = -1e300;
  for (std::size_t i = 0; i < t; ++i)
    if (mask[i]) mx = std::max(mx, scores[i]);
  AttnOut out;
  out.weights.assign(t, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < t; ++i)
    if (mask[i]) {
      out.weights[i] = std::exp(scores[i] - mx);
      z += out.weights[i];
    }
  for (auto& w : out.weights) w /= z;
  out.context.assign(h, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t hh = 0; hh < h; ++hh)
      out.context[hh] += out.weights[i] * states[i * h + hh];
  return out;
}

// relu convolution + max-over-time by explicit loops
inline std::vector<double> conv1d_maxpool(const std::vector<double>& seq,
                                          std::size_t live, std::size_t d,
                                          const nn::ConvParams& p) {
  std::vector<double> out;
  for (std::size_t wi = 0; wi < p.windows.size(); ++wi) {
    const std::size_t w = p.windows[wi];
    const std::size_t eff = std::max(live, w);
    const std::size_t f = p.filters;
    std::vector<double> best(f, -1e300);
    for (std::size_t t0 = 0; t0 + w <= eff; ++t0) {
      for (std::size_t ff = 0; ff < f; ++ff) {
        double acc = p.biases[wi].value()[ff];
        for (std::size_t u = 0; u < w; ++u)
          for (std::size_t dd = 0; dd < d; ++dd) {
            const std::size_t row = t0 + u;
            const double sv = row < live ? seq[row * d + dd] : 0.0;
            acc += sv * p.banks[wi].value()[(u * d + dd) * f + ff];
          }
        acc = acc > 0.0 ? acc : 0.0;
        best[ff] = std::max(best[ff], acc);
      }
    }
    out.insert(out.end(), best.begin(), best.end());
  }
  return out;
}

}  // namespace hedge::oracle

#pragma once

// Plain-loop recomputations of the RSG quantities, written directly from the
// definitions without the tensor engine. Tests compare the library against
// these.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "rsg/rsg_module.hpp"

namespace rsg::oracle {

using Vec = std::vector<double>;

inline Vec values(const ad::Tensor& t) { return Vec(t.values().begin(), t.values().end()); }

// One feature map [C, H, W] of a batch.
inline Vec sample(const ad::Tensor& x, std::size_t n) {
  const std::size_t sz = x.numel() / x.dim(0);
  return Vec(x.values().begin() + static_cast<long>(n * sz),
             x.values().begin() + static_cast<long>((n + 1) * sz));
}

// 3x3 cross-correlation, stride 1, zero padding 1, of a single [C, H, W] map.
inline Vec conv3x3(const Vec& x, std::size_t c, std::size_t h, std::size_t w, const Vec& weight,
                   const Vec* bias, std::size_t out_c) {
  Vec out(out_c * h * w, 0.0);
  for (std::size_t o = 0; o < out_c; ++o)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double s = bias ? (*bias)[o] : 0.0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (int u = -1; u <= 1; ++u)
            for (int v = -1; v <= 1; ++v) {
              const long y = static_cast<long>(i) + u, z = static_cast<long>(j) + v;
              if (y < 0 || z < 0 || y >= static_cast<long>(h) || z >= static_cast<long>(w)) continue;
              s += x[(ch * h + y) * w + z] * weight[((o * c + ch) * 3 + (u + 1)) * 3 + (v + 1)];
            }
        out[(o * h + i) * w + j] = s;
      }
  return out;
}

inline Vec average_pool(const Vec& x, std::size_t c, std::size_t hw) {
  Vec out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < hw; ++p) out[ch] += x[ch * hw + p];
    out[ch] /= static_cast<double>(hw);
  }
  return out;
}

inline Vec softmax(const Vec& z) {
  const double m = *std::max_element(z.begin(), z.end());
  Vec p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (auto& v : p) v /= s;
  return p;
}

// Soft assignment of one map to the K centers of `label`.
inline Vec gamma(const Vec& x, std::size_t label, const CenterEstimator& ce, std::size_t hw) {
  const Vec pooled = average_pool(x, ce.dim, hw);
  Vec logits(ce.k);
  for (std::size_t i = 0; i < ce.k; ++i) {
    const std::size_t r = label * ce.k + i;
    double s = ce.bias[r];
    for (std::size_t d = 0; d < ce.dim; ++d) s += ce.weight[r * ce.dim + d] * pooled[d];
    logits[i] = s;
  }
  return softmax(logits);
}

inline std::size_t argmax_lowest(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// P(different class) for one pair of [D, H, W] maps.
inline double p_different(const Vec& x1, const Vec& x2, const ContrastiveModule& cm,
                          std::size_t h, std::size_t w) {
  Vec cat = x1;
  cat.insert(cat.end(), x2.begin(), x2.end());
  const Vec b1 = values(cm.conv1_bias), b2 = values(cm.conv2_bias);
  Vec h1 = conv3x3(cat, 2 * cm.dim, h, w, values(cm.conv1_weight), &b1, cm.hidden);
  for (auto& v : h1) v = std::max(v, 0.0);
  const Vec h2 = conv3x3(h1, cm.hidden, h, w, values(cm.conv2_weight), &b2, cm.hidden);
  const Vec pooled = average_pool(h2, cm.hidden, h * w);
  Vec logits(2);
  for (std::size_t o = 0; o < 2; ++o) {
    double s = cm.head_bias[o];
    for (std::size_t k = 0; k < cm.hidden; ++k) s += cm.head_weight[o * cm.hidden + k] * pooled[k];
    logits[o] = s;
  }
  return softmax(logits)[1];
}

struct CescValue {
  double term1 = 0.0;
  double term2 = 0.0;
  double total = 0.0;
};

inline CescValue cesc(const ad::Tensor& x, const std::vector<std::size_t>& labels,
                      const ClassCenters& centers, const CenterEstimator& ce,
                      const ContrastiveModule& cm,
                      const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  const std::size_t n = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3), hw = h * w;
  CescValue out;
  for (std::size_t s = 0; s < n; ++s) {
    const Vec xs = sample(x, s);
    const Vec g = gamma(xs, labels[s], ce, hw);
    for (std::size_t i = 0; i < centers.k; ++i) {
      const std::size_t r = centers.row(labels[s], i);
      double dist = 0.0;
      for (std::size_t ch = 0; ch < d; ++ch)
        for (std::size_t p = 0; p < hw; ++p) {
          const double diff = xs[ch * hw + p] - centers.values[r * d + ch];
          dist += diff * diff;
        }
      out.term1 += g[i] * dist;
    }
  }
  out.term1 /= static_cast<double>(n);
  for (const auto& [a, b] : pairs) {
    const double pd = p_different(sample(x, a), sample(x, b), cm, h, w);
    const double y = labels[a] != labels[b] ? 1.0 : 0.0;
    out.term2 += y * std::log(std::max(pd, kLogFloor)) +
                 (1.0 - y) * std::log(std::max(1.0 - pd, kLogFloor));
  }
  if (!pairs.empty()) out.term2 /= static_cast<double>(pairs.size());
  out.total = out.term1 - out.term2;
  return out;
}

struct MvValue {
  double cosine = 0.0;
  double length = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
};

inline MvValue mv(const MvInputs& in, const ContrastiveModule& cm) {
  const ad::Tensor& t = in.transformed;
  const std::size_t n = t.dim(0), d = t.dim(1), h = t.dim(2), w = t.dim(3), hw = h * w;
  MvValue out;
  for (std::size_t s = 0; s < n; ++s) {
    const Vec tv = sample(t, s), fr = sample(in.rare_displacement, s),
              ff = sample(in.freq_displacement, s);
    for (std::size_t p = 0; p < hw; ++p) {
      double dot = 0.0, nt = 0.0, nr = 0.0, nf = 0.0;
      for (std::size_t ch = 0; ch < d; ++ch) {
        dot += tv[ch * hw + p] * fr[ch * hw + p];
        nt += tv[ch * hw + p] * tv[ch * hw + p];
        nr += fr[ch * hw + p] * fr[ch * hw + p];
        nf += ff[ch * hw + p] * ff[ch * hw + p];
      }
      const double denom = std::max(std::sqrt(nt) * std::sqrt(nr), kCosineFloor);
      out.cosine += std::abs(dot / denom - 1.0);
      out.length += std::abs(std::sqrt(nt) - std::sqrt(nf));
    }
    out.contrastive -=
        std::log(std::max(p_different(tv, sample(in.freq_features, s), cm, h, w), kLogFloor));
  }
  out.cosine /= static_cast<double>(n);
  out.length /= static_cast<double>(n);
  out.contrastive /= static_cast<double>(n);
  out.total = out.cosine + out.length + out.contrastive;
  return out;
}

// max(floor(beta * s_freq / s_rare), 1) * s_rare with beta taken as the exact
// binary value of the double, so no rounding enters the floor.
inline std::size_t generated_count_exact(double beta, std::size_t s_freq, std::size_t s_rare) {
  if (s_freq == 0 || s_rare == 0) return 0;
  int e = 0;
  const double frac = std::frexp(beta, &e);
  const auto mant = static_cast<__int128>(std::ldexp(frac, 53));  // beta = mant * 2^(e - 53)
  e -= 53;
  __int128 num = mant * static_cast<__int128>(s_freq);
  __int128 den = static_cast<__int128>(s_rare);
  if (e >= 0) {
    num <<= e;
  } else {
    den <<= -e;
  }
  const auto q = static_cast<std::size_t>(num / den);
  return std::max<std::size_t>(q, 1) * s_rare;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b)));
}

}  // namespace rsg::oracle

#pragma once

// Straightforward re-derivations of the scoring formulas, written without the
// library's helpers (no log-sum-exp, no Matrix, no shared feature code) so the
// tests compare two independent implementations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "n2c2/matrix.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat rows_of(const n2c2::Matrix& m) {
  Mat out(m.rows(), Vec(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline Vec matvec(const Mat& m, const Vec& x) {
  Vec y(m.size(), 0.0);
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += m[r][c] * x[c];
  return y;
}

inline double dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct Nb {
  double d;
  std::size_t label;
  double self_prob;
  std::size_t index;
};

// Repeated minimum selection; ties go to the lower index.
inline std::vector<Nb> neighbors(const Vec& query, const std::vector<Vec>& keys,
                                 const std::vector<std::size_t>& labels, const Vec& self_probs,
                                 std::size_t k) {
  std::vector<bool> taken(keys.size(), false);
  std::vector<Nb> out;
  for (std::size_t r = 0; r < std::min(k, keys.size()); ++r) {
    std::optional<std::size_t> best;
    double best_d = 0.0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (taken[i]) continue;
      const double d = dist(query, keys[i]);
      if (!best || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    taken[*best] = true;
    out.push_back({best_d, labels[*best], self_probs[*best], *best});
  }
  return out;
}

inline Vec knn(const std::vector<Nb>& ns, std::size_t num_classes, double tau, std::size_t m) {
  Vec p(num_classes, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double w = std::exp(-ns[i].d / tau);
    p[ns[i].label] += w;
    total += w;
  }
  for (double& x : p) x /= total;
  return p;
}

inline std::size_t distinct_upto(const std::vector<Nb>& ns, std::size_t i) {
  std::set<std::size_t> s;
  for (std::size_t j = 0; j <= i; ++j) s.insert(ns[j].label);
  return s.size();
}

struct CdWeights {
  Mat w1, w2, w3, w4;
};

// T = softplus(W1 tanh(W2 [d; o])) + 0.1 with features padded by the value
// at position m.
inline double temperature(const std::vector<Nb>& ns, std::size_t m, std::size_t k_max,
                          const CdWeights& w, double scale = 1.0) {
  Vec x(2 * k_max);
  for (std::size_t i = 0; i < k_max; ++i) {
    const std::size_t j = std::min(i, m - 1);
    x[i] = ns[j].d / scale;
    x[k_max + i] = static_cast<double>(distinct_upto(ns, j));
  }
  Vec h = matvec(w.w2, x);
  for (double& v : h) v = std::tanh(v);
  const double raw = matvec(w.w1, h)[0];
  return std::log(1.0 + std::exp(raw)) + 0.1;
}

inline double bias(double p_query, double self_prob, const CdWeights& w) {
  Vec h = matvec(w.w4, {p_query, self_prob});
  for (double& v : h) v = std::tanh(v);
  return matvec(w.w3, h)[0];
}

inline Vec cd(const std::vector<Nb>& ns, std::size_t m, const Vec& p_base, const CdWeights& w,
              double tau, std::size_t k_max, double scale = 1.0) {
  const double t = temperature(ns, m, k_max, w, scale);
  Vec p(p_base.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e =
        std::exp(-ns[i].d / (tau * t) + bias(p_base[ns[i].label], ns[i].self_prob, w));
    p[ns[i].label] += e;
    total += e;
  }
  for (double& x : p) x /= total;
  return p;
}

struct DweWeights {
  Mat layer1;
  Vec bias1;
  Mat layer2;
  Vec bias2;
};

inline Vec dwe(const std::vector<Nb>& ns, std::size_t k_max, const DweWeights& w,
               double scale = 1.0) {
  const std::size_t n = std::min(ns.size(), k_max);
  Vec x(2 * k_max);
  for (std::size_t i = 0; i < k_max; ++i) {
    const std::size_t j = std::min(i, n - 1);
    x[i] = ns[j].d / scale;
    x[k_max + i] = static_cast<double>(distinct_upto(ns, j));
  }
  Vec h = matvec(w.layer1, x);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + w.bias1[i]);
  Vec z = matvec(w.layer2, h);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = std::exp(z[i] + w.bias2[i]);
    total += z[i];
  }
  for (double& v : z) v /= total;
  return z;
}

inline Vec combine(const Vec& weights, const std::vector<Vec>& per_m, const Vec& p_base) {
  Vec p(p_base.size());
  for (std::size_t y = 0; y < p.size(); ++y) {
    p[y] = weights[0] * p_base[y];
    for (std::size_t j = 0; j < per_m.size(); ++j) p[y] += weights[j + 1] * per_m[j][y];
  }
  return p;
}

// Affine shaping h' = W^T h + b with W stored H x Z.
inline Vec shape(const Mat& w, const Vec& b, const Vec& h) {
  Vec out(b);
  for (std::size_t z = 0; z < b.size(); ++z)
    for (std::size_t i = 0; i < h.size(); ++i) out[z] += w[i][z] * h[i];
  return out;
}

struct Pipeline {
  std::optional<std::pair<Mat, Vec>> shaping;
  CdWeights cd;
  DweWeights dwe;
  double tau = 5.0;
  std::size_t k_max = 16;
  std::vector<std::size_t> sizes;  // R_s, leading 0
  double scale = 1.0;
  std::vector<Vec> raw_keys;
  std::vector<std::size_t> labels;
  Vec self_probs;
};

struct ViewInput {
  Vec embedding;
  Vec base;
};

// Full prediction for one record: per view DWE mixture of p_base and the CD
// distributions at each candidate size, then the average over views.
inline Vec predict(const Pipeline& p, const std::vector<ViewInput>& views) {
  const std::size_t c = views[0].base.size();
  Vec avg(c, 0.0);
  for (const auto& v : views) {
    std::vector<Vec> keys = p.raw_keys;
    Vec q = v.embedding;
    if (p.shaping) {
      for (auto& k : keys) k = shape(p.shaping->first, p.shaping->second, k);
      q = shape(p.shaping->first, p.shaping->second, q);
    }
    const auto ns = neighbors(q, keys, p.labels, p.self_probs, p.k_max);
    std::vector<Vec> per_m;
    for (std::size_t j = 1; j < p.sizes.size(); ++j)
      per_m.push_back(cd(ns, std::min(p.sizes[j], ns.size()), v.base, p.cd, p.tau, p.k_max, p.scale));
    const Vec mixed = combine(dwe(ns, p.k_max, p.dwe, p.scale), per_m, v.base);
    for (std::size_t y = 0; y < c; ++y) avg[y] += mixed[y] / static_cast<double>(views.size());
  }
  return avg;
}

// Bin-by-bin expected calibration error with right-inclusive equal-width
// bins, computed by explicit membership tests.
inline double ece(const std::vector<Vec>& dists, const std::vector<std::size_t>& gold,
                  std::size_t bins) {
  double total = 0.0;
  const double n = static_cast<double>(dists.size());
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    double conf = 0.0, acc = 0.0, count = 0.0;
    for (std::size_t i = 0; i < dists.size(); ++i) {
      const auto it = std::max_element(dists[i].begin(), dists[i].end());
      const double c = *it;
      if (c > lo && c <= hi) {
        count += 1.0;
        conf += c;
        acc += static_cast<std::size_t>(it - dists[i].begin()) == gold[i] ? 1.0 : 0.0;
      }
    }
    if (count > 0) total += count / n * std::abs(acc / count - conf / count);
  }
  return total;
}

// Central differences; returns the largest relative error against `analytic`
// with relative error |a - n| / max(|a|, |n|, floor).
inline double gradient_error(std::span<double> params, std::span<const double> analytic,
                             const std::function<double()>& loss, double step = 1e-5,
                             double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + step;
    const double up = loss();
    params[i] = keep - step;
    const double down = loss();
    params[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace oracle

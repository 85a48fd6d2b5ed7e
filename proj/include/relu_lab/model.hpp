#pragma once

// Prediction function, l2 loss, and per-sample / batch gradients for the
// teacher-student ReLU filter. The activation indicator counts the boundary
// w'Z_i = 0 as active, matching the region definitions in regions.hpp.

#include <stdexcept>

#include "relu_lab/distributions.hpp"
#include "relu_lab/linalg.hpp"

namespace relu_lab {

struct GradientSample {
  Vec g;
  double residual = 0.0;  // f(w, Z) - f(w_star, Z)
};

inline bool is_zero(const Vec& v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

inline double predict(const Vec& w, PatchView z) {
  if (static_cast<int>(w.size()) != z.p) throw std::invalid_argument("predict: dimension mismatch");
  double s = 0.0;
  for (int j = 0; j < z.k; ++j) {
    const double* zj = z.patch(j);
    double d = 0.0;
    for (int i = 0; i < z.p; ++i) d += w[i] * zj[i];
    if (d > 0.0) s += d;
  }
  return s / z.k;
}

inline double loss(const Vec& w, const Vec& w_star, PatchView z) {
  const double r = predict(w, z) - predict(w_star, z);
  return 0.5 * r * r;
}

inline GradientSample sample_gradient(const Vec& w, const Vec& w_star, PatchView z) {
  if (static_cast<int>(w.size()) != z.p || static_cast<int>(w_star.size()) != z.p)
    throw std::invalid_argument("sample_gradient: dimension mismatch");
  if (is_zero(w)) throw std::domain_error("sample_gradient: gradient undefined at w = 0");

  GradientSample out;
  out.g.assign(z.p, 0.0);
  double fw = 0.0, fs = 0.0;
  for (int j = 0; j < z.k; ++j) {
    const double* zj = z.patch(j);
    double dw = 0.0, ds = 0.0;
    for (int i = 0; i < z.p; ++i) {
      dw += w[i] * zj[i];
      ds += w_star[i] * zj[i];
    }
    if (ds > 0.0) fs += ds;
    if (dw >= 0.0) {
      fw += dw;
      for (int i = 0; i < z.p; ++i) out.g[i] += zj[i];
    }
  }
  out.residual = (fw - fs) / z.k;
  const double c = out.residual / z.k;
  for (double& x : out.g) x *= c;
  return out;
}

namespace detail {

// Fixed pairwise-tree summation so reductions are reproducible.
template <typename GetVec>
Vec pairwise_sum(std::size_t lo, std::size_t hi, int p, const GetVec& get) {
  if (hi - lo <= 8) {
    Vec s(p, 0.0);
    Vec tmp;
    for (std::size_t i = lo; i < hi; ++i) {
      get(i, tmp);
      for (int c = 0; c < p; ++c) s[c] += tmp[c];
    }
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  Vec s = pairwise_sum(lo, mid, p, get);
  const Vec r = pairwise_sum(mid, hi, p, get);
  for (int c = 0; c < p; ++c) s[c] += r[c];
  return s;
}

}  // namespace detail

inline Vec batch_gradient(const Vec& w, const Vec& w_star,
                          const std::vector<PatchSample>& batch) {
  if (batch.empty()) throw std::domain_error("batch_gradient: empty batch");
  const int p = static_cast<int>(w.size());
  Vec s = detail::pairwise_sum(0, batch.size(), p, [&](std::size_t i, Vec& out) {
    out = sample_gradient(w, w_star, batch[i].view()).g;
  });
  for (double& x : s) x /= static_cast<double>(batch.size());
  return s;
}

inline Vec batch_gradient(const Vec& w, const Vec& w_star, const Dataset& batch) {
  if (batch.n == 0) throw std::domain_error("batch_gradient: empty batch");
  const int p = static_cast<int>(w.size());
  Vec s = detail::pairwise_sum(0, batch.n, p, [&](std::size_t i, Vec& out) {
    out = sample_gradient(w, w_star, batch.sample(i)).g;
  });
  for (double& x : s) x /= static_cast<double>(batch.n);
  return s;
}

}  // namespace relu_lab

#pragma once

// Activation-region classification and region-restricted second moments.
// Region tags follow the sign pattern (w, w_star): PP = both active,
// PN = w active only, NP = w_star active only, NN = neither. The second
// inequality of each pair is strict on the negative side so the four regions
// partition patch space.

#include <array>
#include <stdexcept>

#include "relu_lab/distributions.hpp"
#include "relu_lab/linalg.hpp"
#include "relu_lab/model.hpp"
#include "relu_lab/parallel.hpp"

namespace relu_lab {

enum class Region { PP = 0, PN = 1, NN = 2, NP = 3 };

inline Region classify_dots(double w_dot, double w_star_dot) {
  if (w_dot >= 0.0) return w_star_dot >= 0.0 ? Region::PP : Region::PN;
  return w_star_dot >= 0.0 ? Region::NP : Region::NN;
}

inline Region classify(const Vec& w, const Vec& w_star, const Vec& z) {
  if (w.size() != z.size() || w_star.size() != z.size())
    throw std::invalid_argument("classify: dimension mismatch");
  if (is_zero(w) || is_zero(w_star)) throw std::domain_error("classify: zero weight vector");
  return classify_dots(dot(w, z), dot(w_star, z));
}

// Per-sample patch averages over the three regions that enter the gradient.
struct RegionVectors {
  Vec z_pp, z_pn, z_np;
};

inline RegionVectors region_averages(const Vec& w, const Vec& w_star, PatchView z) {
  RegionVectors rv;
  rv.z_pp.assign(z.p, 0.0);
  rv.z_pn.assign(z.p, 0.0);
  rv.z_np.assign(z.p, 0.0);
  for (int j = 0; j < z.k; ++j) {
    const double* zj = z.patch(j);
    double dw = 0.0, ds = 0.0;
    for (int i = 0; i < z.p; ++i) {
      dw += w[i] * zj[i];
      ds += w_star[i] * zj[i];
    }
    Vec* target = nullptr;
    switch (classify_dots(dw, ds)) {
      case Region::PP: target = &rv.z_pp; break;
      case Region::PN: target = &rv.z_pn; break;
      case Region::NP: target = &rv.z_np; break;
      case Region::NN: break;
    }
    if (target)
      for (int i = 0; i < z.p; ++i) (*target)[i] += zj[i] / z.k;
  }
  return rv;
}

// Monte Carlo estimates of the region moments. For k = 1 the diagonal blocks
// m_pp, m_pn are exactly the matrices A_{w,w*} and A_{w,-w*}; the cross
// covariances vanish identically (a single patch lies in one region).
struct MomentSet {
  int p = 0, k = 1;
  std::size_t n_used = 0;
  Vec w, w_star;
  SymMatrix m_pp, m_pn;          // E[Z_PP Z_PP^T], E[Z_PN Z_PN^T]
  Mat c_pp_pn, c_pp_np, c_pn_np; // E[Z_PP Z_PN^T], E[Z_PP Z_NP^T], E[Z_PN Z_NP^T]
  std::array<std::size_t, 4> region_counts{};  // patches per tag, PP/PN/NN/NP

  const SymMatrix& a_pp() const { return m_pp; }  // k = 1 naming
  const SymMatrix& a_pn() const { return m_pn; }
};

namespace detail {

struct MomentAccum {
  SymMatrix m_pp, m_pn;
  Mat c_pp_pn, c_pp_np, c_pn_np;
  std::array<std::size_t, 4> counts{};
  std::size_t n = 0;

  explicit MomentAccum(int p)
      : m_pp(p), m_pn(p), c_pp_pn(p, p), c_pp_np(p, p), c_pn_np(p, p) {}

  void add_sample(const Vec& w, const Vec& w_star, PatchView z, Vec& z_pp, Vec& z_pn,
                  Vec& z_np) {
    const int p = z.p;
    std::fill(z_pp.begin(), z_pp.end(), 0.0);
    std::fill(z_pn.begin(), z_pn.end(), 0.0);
    std::fill(z_np.begin(), z_np.end(), 0.0);
    bool has_pp = false, has_pn = false, has_np = false;
    for (int j = 0; j < z.k; ++j) {
      const double* zj = z.patch(j);
      double dw = 0.0, ds = 0.0;
      for (int i = 0; i < p; ++i) {
        dw += w[i] * zj[i];
        ds += w_star[i] * zj[i];
      }
      const Region r = classify_dots(dw, ds);
      ++counts[static_cast<int>(r)];
      Vec* target = nullptr;
      switch (r) {
        case Region::PP: target = &z_pp; has_pp = true; break;
        case Region::PN: target = &z_pn; has_pn = true; break;
        case Region::NP: target = &z_np; has_np = true; break;
        case Region::NN: break;
      }
      if (target)
        for (int i = 0; i < p; ++i) (*target)[i] += zj[i] / z.k;
    }
    if (has_pp) m_pp.rank1_update(z_pp, 1.0);
    if (has_pn) m_pn.rank1_update(z_pn, 1.0);
    if (has_pp && has_pn) c_pp_pn.rank1_update(z_pp, z_pn, 1.0);
    if (has_pp && has_np) c_pp_np.rank1_update(z_pp, z_np, 1.0);
    if (has_pn && has_np) c_pn_np.rank1_update(z_pn, z_np, 1.0);
    ++n;
  }

  void merge(const MomentAccum& o) {
    m_pp.add(o.m_pp);
    m_pn.add(o.m_pn);
    c_pp_pn.add(o.c_pp_pn);
    c_pp_np.add(o.c_pp_np);
    c_pn_np.add(o.c_pn_np);
    for (int i = 0; i < 4; ++i) counts[i] += o.counts[i];
    n += o.n;
  }

  MomentSet finalize(const Vec& w, const Vec& w_star) const {
    if (n == 0) throw std::domain_error("estimate_moments: empty dataset");
    MomentSet ms;
    ms.p = m_pp.n;
    ms.w = w;
    ms.w_star = w_star;
    ms.n_used = n;
    ms.m_pp = m_pp;
    ms.m_pn = m_pn;
    ms.c_pp_pn = c_pp_pn;
    ms.c_pp_np = c_pp_np;
    ms.c_pn_np = c_pn_np;
    const double inv = 1.0 / static_cast<double>(n);
    ms.m_pp.scale(inv);
    ms.m_pn.scale(inv);
    ms.c_pp_pn.scale(inv);
    ms.c_pp_np.scale(inv);
    ms.c_pn_np.scale(inv);
    ms.region_counts = counts;
    return ms;
  }
};

}  // namespace detail

inline MomentSet estimate_moments(const Dataset& ds, const Vec& w, const Vec& w_star) {
  if (ds.n == 0) throw std::domain_error("estimate_moments: empty dataset");
  if (static_cast<int>(w.size()) != ds.p || static_cast<int>(w_star.size()) != ds.p)
    throw std::invalid_argument("estimate_moments: dimension mismatch");
  if (is_zero(w) || is_zero(w_star))
    throw std::domain_error("estimate_moments: zero weight vector");

  const std::size_t chunk = 8192;
  const std::size_t n_chunks = (ds.n + chunk - 1) / chunk;
  std::vector<detail::MomentAccum> parts(n_chunks, detail::MomentAccum(ds.p));
  for_each_chunk(ds.n, chunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    Vec z_pp(ds.p), z_pn(ds.p), z_np(ds.p);
    for (std::size_t i = begin; i < end; ++i)
      parts[c].add_sample(w, w_star, ds.sample(i), z_pp, z_pn, z_np);
  });
  detail::MomentAccum total(ds.p);
  for (const auto& part : parts) total.merge(part);
  MomentSet ms = total.finalize(w, w_star);
  ms.k = ds.k;
  return ms;
}

// Population gradient assembled from the moment estimates, grouped exactly as
// the four-region indicator expansion of the gradient:
//   m_pp (w - w*) + (c_pp_pn + c_pp_pn^T + m_pn) w
//                 - (c_pp_np + c_pp_pn^T + c_pn_np) w*.
// For k = 1 the cross terms vanish and this is A_{w,w*}(w-w*) + A_{w,-w*} w.
inline Vec population_gradient(const MomentSet& ms, const Vec& w, const Vec& w_star) {
  if (static_cast<int>(w.size()) != ms.p || static_cast<int>(w_star.size()) != ms.p)
    throw std::invalid_argument("population_gradient: dimension mismatch");
  const Vec diff = sub(w, w_star);
  Vec g = ms.m_pp.matvec(diff);

  Vec t = ms.c_pp_pn.matvec(w);       // c_pp_pn w
  add_scaled(g, 1.0, t);
  t = ms.c_pp_pn.matvec_t(w);         // c_pp_pn^T w
  add_scaled(g, 1.0, t);
  t = ms.m_pn.matvec(w);              // m_pn w
  add_scaled(g, 1.0, t);

  t = ms.c_pp_np.matvec(w_star);      // c_pp_np w*
  add_scaled(g, -1.0, t);
  t = ms.c_pp_pn.matvec_t(w_star);    // c_pp_pn^T w* (= E[Z_PN Z_PP^T] w*)
  add_scaled(g, -1.0, t);
  t = ms.c_pn_np.matvec(w_star);      // c_pn_np w*
  add_scaled(g, -1.0, t);
  return g;
}

// The two inner-product terms of the k = 1 decomposition; both are
// non-negative in expectation (and pointwise, sample by sample).
inline std::pair<double, double> lemma_decomposition(const MomentSet& ms, const Vec& w,
                                                     const Vec& w_star) {
  if (ms.k != 1) throw std::domain_error("lemma_decomposition: requires k = 1 moments");
  const Vec diff = sub(w, w_star);
  const double term1 = ms.m_pp.quad_form(diff, diff);
  const double term2 = dot(diff, ms.m_pn.matvec(w));
  return {term1, term2};
}

}  // namespace relu_lab

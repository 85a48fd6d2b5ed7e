#pragma once

// Angular smoothness estimation: gamma(phi) and L(phi) from the joint
// activation moment, the growth rate beta of the opposed-region moment, and
// the cross-covariance growth rate L_cross. Estimates are probability-
// normalized expectations; the x(2*pi) conversion to the paper-style
// unnormalized angular integral appears only in verify_beta_bounds.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "relu_lab/regions.hpp"

namespace relu_lab {

struct SmoothnessProfile {
  Vec phis;
  Vec gamma, gamma_se;          // min over directions of lambda_min(m_pp)
  Vec ell, ell_se;              // max over directions of lambda_max(m_pp)
  Vec ell_minus, ell_minus_se;  // running max over the grid of lambda_max(m_pn)
  Vec l_cross_ratio;            // running max of the three cross norms, / phi
  double beta_hat = 0.0;
  double l_cross_hat = 0.0;
  int n_w = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return phis.size(); }

  double interp(const Vec& ys, double phi) const {
    if (phis.empty()) throw std::domain_error("profile: empty grid");
    if (phi <= phis.front()) return ys.front();
    if (phi >= phis.back()) return ys.back();
    std::size_t hi = 1;
    while (phis[hi] < phi) ++hi;
    const double t = (phi - phis[hi - 1]) / (phis[hi] - phis[hi - 1]);
    return (1.0 - t) * ys[hi - 1] + t * ys[hi];
  }

  double gamma_at(double phi) const { return interp(gamma, phi); }
  double gamma_se_at(double phi) const { return interp(gamma_se, phi); }
  double ell_at(double phi) const { return interp(ell, phi); }
};

inline Vec default_phi_grid(std::size_t count = 25, double lo = 0.05, double hi = M_PI - 0.05) {
  if (count < 2) throw std::invalid_argument("default_phi_grid: need at least 2 points");
  Vec g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return g;
}

namespace detail {

struct CellStats {
  double lmin_pp = 0, lmax_pp = 0, lmax_pn = 0, cross_sum = 0;
  double se_lmin_pp = 0, se_lmax_pp = 0, se_lmax_pn = 0, se_cross = 0;
};

inline double block_se(const Vec& vals) {
  const std::size_t J = vals.size();
  if (J < 2) return 0.0;
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(J);
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= static_cast<double>(J - 1);
  return std::sqrt(var / static_cast<double>(J));
}

inline double cross_norm_sum(const MomentAccum& acc, double inv_n) {
  Mat c1 = acc.c_pp_pn;
  Mat c2 = acc.c_pp_np;
  Mat c3 = acc.c_pn_np;
  c1.scale(inv_n);
  c2.scale(inv_n);
  c3.scale(inv_n);
  return op_norm(c1) + op_norm(c2) + op_norm(c3);
}

inline CellStats estimate_cell(const Dataset& ds, const Vec& w, const Vec& w_star,
                               const std::vector<double>& teacher_dots, int stat_blocks) {
  const int p = ds.p;
  const std::size_t J = static_cast<std::size_t>(stat_blocks);
  std::vector<MomentAccum> blocks(J, MomentAccum(p));
  Vec z_pp(p), z_pn(p), z_np(p);
  for (std::size_t b = 0; b < J; ++b) {
    const std::size_t begin = b * ds.n / J;
    const std::size_t end = (b + 1) * ds.n / J;
    for (std::size_t i = begin; i < end; ++i) {
      const PatchView z = ds.sample(i);
      const double* td = teacher_dots.data() + i * static_cast<std::size_t>(ds.k);
      std::fill(z_pp.begin(), z_pp.end(), 0.0);
      std::fill(z_pn.begin(), z_pn.end(), 0.0);
      std::fill(z_np.begin(), z_np.end(), 0.0);
      bool has_pp = false, has_pn = false, has_np = false;
      for (int j = 0; j < z.k; ++j) {
        const double* zj = z.patch(j);
        double dw = 0.0;
        for (int c = 0; c < p; ++c) dw += w[c] * zj[c];
        const Region r = classify_dots(dw, td[j]);
        ++blocks[b].counts[static_cast<int>(r)];
        Vec* target = nullptr;
        switch (r) {
          case Region::PP: target = &z_pp; has_pp = true; break;
          case Region::PN: target = &z_pn; has_pn = true; break;
          case Region::NP: target = &z_np; has_np = true; break;
          case Region::NN: break;
        }
        if (target)
          for (int c = 0; c < p; ++c) (*target)[c] += zj[c] / z.k;
      }
      if (has_pp) blocks[b].m_pp.rank1_update(z_pp, 1.0);
      if (has_pn) blocks[b].m_pn.rank1_update(z_pn, 1.0);
      if (has_pp && has_pn) blocks[b].c_pp_pn.rank1_update(z_pp, z_pn, 1.0);
      if (has_pp && has_np) blocks[b].c_pp_np.rank1_update(z_pp, z_np, 1.0);
      if (has_pn && has_np) blocks[b].c_pn_np.rank1_update(z_pn, z_np, 1.0);
      ++blocks[b].n;
    }
  }

  Vec b_lmin(J), b_lmax(J), b_lpn(J), b_cross(J);
  MomentAccum pooled(p);
  for (std::size_t b = 0; b < J; ++b) {
    const double inv = blocks[b].n ? 1.0 / static_cast<double>(blocks[b].n) : 0.0;
    SymMatrix mpp = blocks[b].m_pp, mpn = blocks[b].m_pn;
    mpp.scale(inv);
    mpn.scale(inv);
    const EigenResult epp = eig_sym(mpp);
    b_lmin[b] = epp.eigenvalues.back();
    b_lmax[b] = epp.eigenvalues.front();
    b_lpn[b] = lambda_max(mpn);
    b_cross[b] = cross_norm_sum(blocks[b], inv);
    pooled.merge(blocks[b]);
  }

  const double inv_n = 1.0 / static_cast<double>(pooled.n);
  SymMatrix mpp = pooled.m_pp, mpn = pooled.m_pn;
  mpp.scale(inv_n);
  mpn.scale(inv_n);
  const EigenResult epp = eig_sym(mpp);

  CellStats cs;
  cs.lmin_pp = epp.eigenvalues.back();
  cs.lmax_pp = epp.eigenvalues.front();
  cs.lmax_pn = lambda_max(mpn);
  cs.cross_sum = cross_norm_sum(pooled, inv_n);
  cs.se_lmin_pp = block_se(b_lmin);
  cs.se_lmax_pp = block_se(b_lmax);
  cs.se_lmax_pn = block_se(b_lpn);
  cs.se_cross = block_se(b_cross);
  return cs;
}

}  // namespace detail

// Estimates the profile on a phi grid. The min/max over "all w at angle phi"
// is approximated with n_w random perpendicular directions; n_w is kept in the
// result so under-coverage stays visible. ell_minus and the cross-norm sums
// are reported as running maxima over the grid, matching the cumulative
// max_{theta <= phi} form of the assumptions.
inline SmoothnessProfile profile(const Dataset& ds, const Vec& w_star, const Vec& phis,
                                 int n_w, std::uint64_t seed) {
  if (ds.n == 0) throw std::domain_error("profile: empty dataset");
  if (phis.empty()) throw std::domain_error("profile: empty grid");
  if (n_w < 1) throw std::invalid_argument("profile: n_w must be >= 1");
  for (double phi : phis)
    if (!(phi > 0.0 && phi < M_PI)) throw std::invalid_argument("profile: grid outside (0, pi)");
  const Vec ws = normalized(w_star);

  std::vector<double> teacher_dots(ds.n * static_cast<std::size_t>(ds.k));
  for_each_chunk(ds.n, 16384, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const PatchView z = ds.sample(i);
      for (int j = 0; j < ds.k; ++j) {
        const double* zj = z.patch(j);
        double d = 0.0;
        for (int c = 0; c < ds.p; ++c) d += w_star[c] * zj[c];
        teacher_dots[i * static_cast<std::size_t>(ds.k) + j] = d;
      }
    }
  });

  const std::size_t n_phi = phis.size();
  const std::size_t cells = n_phi * static_cast<std::size_t>(n_w);
  std::vector<detail::CellStats> stats(cells);
  for_each_chunk(cells, 1, [&](std::size_t cell, std::size_t, std::size_t) {
    const std::size_t pi_idx = cell / n_w;
    const std::size_t dir_idx = cell % n_w;
    Rng rng(derive_seed(seed, pi_idx, dir_idx));
    Vec u(ds.p);
    detail::perp_dir(rng, ws.data(), u.data(), ds.p);
    const Vec w = rotate_toward(ws, u, phis[pi_idx]);
    stats[cell] = detail::estimate_cell(ds, w, w_star, teacher_dots, 8);
  });

  SmoothnessProfile pr;
  pr.phis = phis;
  pr.n_w = n_w;
  pr.n_samples = ds.n;
  pr.seed = seed;
  pr.gamma.resize(n_phi);
  pr.gamma_se.resize(n_phi);
  pr.ell.resize(n_phi);
  pr.ell_se.resize(n_phi);
  pr.ell_minus.resize(n_phi);
  pr.ell_minus_se.resize(n_phi);
  pr.l_cross_ratio.resize(n_phi);

  double run_pn = 0.0, run_pn_se = 0.0, run_cross = 0.0;
  for (std::size_t i = 0; i < n_phi; ++i) {
    const detail::CellStats* base = stats.data() + i * n_w;
    std::size_t argmin = 0, argmax = 0, argpn = 0, argcr = 0;
    for (std::size_t d = 1; d < static_cast<std::size_t>(n_w); ++d) {
      if (base[d].lmin_pp < base[argmin].lmin_pp) argmin = d;
      if (base[d].lmax_pp > base[argmax].lmax_pp) argmax = d;
      if (base[d].lmax_pn > base[argpn].lmax_pn) argpn = d;
      if (base[d].cross_sum > base[argcr].cross_sum) argcr = d;
    }
    pr.gamma[i] = base[argmin].lmin_pp;
    pr.gamma_se[i] = base[argmin].se_lmin_pp;
    pr.ell[i] = base[argmax].lmax_pp;
    pr.ell_se[i] = base[argmax].se_lmax_pp;
    if (base[argpn].lmax_pn >= run_pn) {
      run_pn = base[argpn].lmax_pn;
      run_pn_se = base[argpn].se_lmax_pn;
    }
    pr.ell_minus[i] = run_pn;
    pr.ell_minus_se[i] = run_pn_se;
    run_cross = std::max(run_cross, base[argcr].cross_sum);
    pr.l_cross_ratio[i] = run_cross / phis[i];
  }

  pr.beta_hat = 0.0;
  for (std::size_t i = 0; i < n_phi; ++i)
    if (phis[i] <= M_PI / 2) pr.beta_hat = std::max(pr.beta_hat, pr.ell_minus[i] / phis[i]);
  pr.l_cross_hat = 0.0;
  for (double r : pr.l_cross_ratio) pr.l_cross_hat = std::max(pr.l_cross_hat, r);
  return pr;
}

// The in-plane angular integral of A_{w,-w*} for a planar unit-norm
// rotationally invariant distribution, unnormalized (no 1/(2*pi) density):
//   1/2 [[phi - sin phi cos phi, -sin^2 phi], [-sin^2 phi, phi + sin phi cos phi]]
// with eigenvalues (phi + sin phi)/2 and (phi - sin phi)/2.
inline SymMatrix closed_form_2d(double phi) {
  if (phi < 0.0 || phi > M_PI) throw std::domain_error("closed_form_2d: phi outside [0, pi]");
  const double s = std::sin(phi), c = std::cos(phi);
  SymMatrix m(2);
  m.at(0, 0) = 0.5 * (phi - s * c);
  m.at(0, 1) = -0.5 * s * s;
  m.at(1, 1) = 0.5 * (phi + s * c);
  return m;
}

struct BetaReport {
  double beta_converted = 0.0;  // beta_hat * 2*pi, the paper's convention
  double bound = 0.0;
  bool pass = false;
  std::string kind;
};

inline BetaReport verify_beta_bounds(const SmoothnessProfile& pr, DistKind kind, int p) {
  BetaReport r;
  r.beta_converted = pr.beta_hat * 2.0 * M_PI;
  r.kind = to_string(kind);
  switch (kind) {
    case DistKind::UnitSphere:
      r.bound = 1.0;
      r.pass = r.beta_converted >= 0.9 && r.beta_converted <= 1.05;
      break;
    case DistKind::StandardGaussian:
      r.bound = static_cast<double>(p);
      r.pass = r.beta_converted <= r.bound;
      break;
    default:
      throw std::invalid_argument("verify_beta_bounds: no paper bound for this distribution");
  }
  return r;
}

inline void write_profile_csv(const SmoothnessProfile& pr, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_profile_csv: cannot open " + path);
  out << "phi,gamma,gamma_se,ell,ell_se,ell_minus,ell_minus_se,l_cross_ratio\n";
  char buf[256];
  for (std::size_t i = 0; i < pr.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  pr.phis[i], pr.gamma[i], pr.gamma_se[i], pr.ell[i], pr.ell_se[i],
                  pr.ell_minus[i], pr.ell_minus_se[i], pr.l_cross_ratio[i]);
    out << buf;
  }
}

inline SmoothnessProfile read_profile_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_profile_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "phi,gamma,gamma_se,ell,ell_se,ell_minus,ell_minus_se,l_cross_ratio")
    throw std::runtime_error("read_profile_csv: bad header");
  SmoothnessProfile pr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double v[8];
    char comma;
    for (int i = 0; i < 8; ++i) {
      if (!(ls >> v[i])) throw std::runtime_error("read_profile_csv: malformed row");
      if (i < 7 && !(ls >> comma)) throw std::runtime_error("read_profile_csv: malformed row");
    }
    pr.phis.push_back(v[0]);
    pr.gamma.push_back(v[1]);
    pr.gamma_se.push_back(v[2]);
    pr.ell.push_back(v[3]);
    pr.ell_se.push_back(v[4]);
    pr.ell_minus.push_back(v[5]);
    pr.ell_minus_se.push_back(v[6]);
    pr.l_cross_ratio.push_back(v[7]);
  }
  if (pr.phis.empty()) throw std::runtime_error("read_profile_csv: no rows");
  for (std::size_t i = 0; i < pr.size(); ++i)
    if (pr.phis[i] <= M_PI / 2)
      pr.beta_hat = std::max(pr.beta_hat, pr.ell_minus[i] / pr.phis[i]);
  for (double r : pr.l_cross_ratio) pr.l_cross_hat = std::max(pr.l_cross_hat, r);
  return pr;
}

}  // namespace relu_lab

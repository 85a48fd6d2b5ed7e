#pragma once

// GD/SGD training loops with constant, two-stage, and theory-adaptive step
// schedules, plus the step-size bounds and per-step contraction checks that
// the convergence theorems predict.

#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <variant>

#include "relu_lab/model.hpp"
#include "relu_lab/smoothness.hpp"

namespace relu_lab {

struct ConstantSchedule {
  double eta = 0.0;
};

struct TwoStageSchedule {
  double eta_small = 0.0, eta_large = 0.0;
  double switch_angle = 0.0;  // switches when the estimated angle drops below
};

struct AdaptiveTheorySchedule {
  SmoothnessProfile profile;
  double safety = 0.5;
  bool multi_patch = false;
};

using Schedule = std::variant<ConstantSchedule, TwoStageSchedule, AdaptiveTheorySchedule>;

inline std::string schedule_name(const Schedule& s) {
  if (std::holds_alternative<ConstantSchedule>(s)) return "constant";
  if (std::holds_alternative<TwoStageSchedule>(s)) return "two_stage";
  return "adaptive_theory";
}

// Theorem step-size bound evaluated on profile estimates: the minimum over
// grid angles up to phi of gamma/(2(L+4*beta)^2), or of
// (gamma - 6 L_cross)/(2(L + 10 L_cross + 4 beta)^2) in the multi-patch case.
inline double step_size_bound(const SmoothnessProfile& pr, double phi, bool multi_patch,
                              double safety = 1.0) {
  if (pr.phis.empty()) throw std::domain_error("step_size_bound: empty profile");
  if (phi < pr.phis.front())
    throw std::domain_error("step_size_bound: phi below the profile grid minimum");

  const double lc = multi_patch ? pr.l_cross_hat : 0.0;
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double gamma, double ell) {
    const double num = gamma - 6.0 * lc;
    if (num <= 0.0)
      throw std::domain_error(
          "step_size_bound: theorem precondition violated (gamma(phi) <= 6 L_cross)");
    const double den = ell + 10.0 * lc + 4.0 * pr.beta_hat;
    best = std::min(best, num / (2.0 * den * den));
  };
  for (std::size_t i = 0; i < pr.size() && pr.phis[i] <= phi; ++i)
    consider(pr.gamma[i], pr.ell[i]);
  consider(pr.gamma_at(phi), pr.ell_at(phi));
  return safety * best;
}

struct TrajectoryRow {
  long long t = 0;
  double eta = 0.0, dist = 0.0, phi = 0.0, loss = 0.0, grad_norm = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  Vec final_w;
  std::uint64_t seed = 0;
  std::string schedule_desc;
  double w_star_norm = 0.0;
  long long iters = 0;  // gradient steps applied
  bool hit_tol = false;
  long long record_stride = 1;
  double max_angle_excess = -1.0;  // max over rows of theta(w_t, w*) - phi_t
  double max_grad_norm = 0.0;      // empirical max ||g|| seen along the run
};

enum class RunMode { PopulationGD, SGD };

struct RunConfig {
  DistributionSpec dist;
  Vec w_star;
  Vec init;
  Schedule schedule = ConstantSchedule{0.01};
  RunMode mode = RunMode::PopulationGD;
  std::size_t n_mc = 100000;    // Monte Carlo batch (PopulationGD) / pinned pool (SGD)
  std::size_t batch_size = 32;  // SGD minibatch
  bool pin_batches = true;      // PopulationGD: fixed dataset vs fresh per step
  long long max_iters = 10000;
  double stop_tol = 1e-3;  // relative to ||w*||
  std::uint64_t seed = 0;
  long long record_stride = 0;  // 0 = every row (GD) / auto (SGD)

  void validate() const {
    dist.validate();
    if (max_iters < 1) throw std::invalid_argument("RunConfig: max_iters must be >= 1");
    if (stop_tol <= 0.0) throw std::invalid_argument("RunConfig: stop_tol must be > 0");
    if (static_cast<int>(w_star.size()) != dist.p || static_cast<int>(init.size()) != dist.p)
      throw std::invalid_argument("RunConfig: w_star/init dimension mismatch");
    if (is_zero(w_star)) throw std::invalid_argument("RunConfig: w_star is zero");
    if (is_zero(init)) throw std::invalid_argument("RunConfig: init is zero");
    if (mode == RunMode::SGD && batch_size < 1)
      throw std::invalid_argument("RunConfig: batch_size must be >= 1");
  }
};

namespace detail {

struct BatchStats {
  Vec grad_sum;       // sum over samples of per-sample gradients
  double loss_sum = 0.0;
  std::size_t count = 0;
};

// One fused pass over samples [lo, hi): per-sample gradient and loss summed
// with a fixed pairwise tree over 1024-sample blocks.
template <typename SampleAt, typename TeacherValue>
BatchStats batch_stats(const Vec& w, std::size_t lo, std::size_t hi, int p, int k,
                       const SampleAt& sample_at, const TeacherValue& f_star_at) {
  constexpr std::size_t kBlock = 1024;
  if (hi - lo <= kBlock) {
    BatchStats s;
    s.grad_sum.assign(p, 0.0);
    Vec act(p);
    for (std::size_t i = lo; i < hi; ++i) {
      const PatchView z = sample_at(i);
      std::fill(act.begin(), act.end(), 0.0);
      double fw = 0.0;
      for (int j = 0; j < k; ++j) {
        const double* zj = z.patch(j);
        double dw = 0.0;
        for (int c = 0; c < p; ++c) dw += w[c] * zj[c];
        if (dw >= 0.0) {
          fw += dw;
          for (int c = 0; c < p; ++c) act[c] += zj[c];
        }
      }
      const double res = fw / k - f_star_at(i);
      s.loss_sum += 0.5 * res * res;
      const double cf = res / k;
      for (int c = 0; c < p; ++c) s.grad_sum[c] += cf * act[c];
      ++s.count;
    }
    return s;
  }
  const std::size_t blocks = (hi - lo + kBlock - 1) / kBlock;
  const std::size_t mid = lo + (blocks / 2) * kBlock;
  BatchStats a = batch_stats(w, lo, mid, p, k, sample_at, f_star_at);
  const BatchStats b = batch_stats(w, mid, hi, p, k, sample_at, f_star_at);
  for (int c = 0; c < p; ++c) a.grad_sum[c] += b.grad_sum[c];
  a.loss_sum += b.loss_sum;
  a.count += b.count;
  return a;
}

inline std::vector<double> teacher_predictions(const Dataset& ds, const Vec& w_star) {
  std::vector<double> fs(ds.n);
  for_each_chunk(ds.n, 16384, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fs[i] = predict(w_star, ds.sample(i));
  });
  return fs;
}

}  // namespace detail

namespace detail {

struct ScheduleState {
  bool switched = false;
};

inline double eta_for(const Schedule& sched, ScheduleState& state, double phi_t) {
  if (const auto* c = std::get_if<ConstantSchedule>(&sched)) return c->eta;
  if (const auto* ts = std::get_if<TwoStageSchedule>(&sched)) {
    if (!(ts->switch_angle > 0.0 && ts->switch_angle < M_PI / 2))
      throw std::invalid_argument("TwoStageSchedule: switch_angle outside (0, pi/2)");
    if (phi_t < ts->switch_angle) state.switched = true;  // latches
    return state.switched ? ts->eta_large : ts->eta_small;
  }
  const auto& ad = std::get<AdaptiveTheorySchedule>(sched);
  const double phi = std::max(phi_t, ad.profile.phis.front());
  return step_size_bound(ad.profile, phi, ad.multi_patch, ad.safety);
}

template <typename StatsAt>
Trajectory run_loop(const RunConfig& cfg, const StatsAt& stats_at) {
  const int p = cfg.dist.p;
  const double wnorm = norm(cfg.w_star);
  Vec w = cfg.init;

  Trajectory traj;
  traj.seed = cfg.seed;
  traj.schedule_desc = schedule_name(cfg.schedule);
  traj.w_star_norm = wnorm;
  long long stride = cfg.record_stride;
  if (stride <= 0)
    stride = cfg.mode == RunMode::SGD ? std::max<long long>(1, cfg.max_iters / 10000) : 1;
  traj.record_stride = stride;

  ScheduleState sched_state;
  Vec g(p);
  for (long long t = 0;; ++t) {
    if (is_zero(w))
      throw std::domain_error("run aborted at t=" + std::to_string(t) +
                              ": gradient undefined at w = 0");
    double mean_loss = 0.0;
    stats_at(static_cast<std::size_t>(t), w, g, mean_loss);
    const double gnorm = norm(g);
    traj.max_grad_norm = std::max(traj.max_grad_norm, gnorm);

    const double dist = distance(w, cfg.w_star);
    const double phi_t = std::asin(std::min(dist / wnorm, 1.0));
    const double eta_t = eta_for(cfg.schedule, sched_state, phi_t);
    if (dist < wnorm && dist > 0.0)
      traj.max_angle_excess = std::max(traj.max_angle_excess, angle(w, cfg.w_star) - phi_t);

    const bool done = dist <= cfg.stop_tol * wnorm;
    if (t % stride == 0 || done || t == cfg.max_iters)
      traj.rows.push_back({t, eta_t, dist, phi_t, mean_loss, gnorm});
    if (done) {
      traj.hit_tol = true;
      break;
    }
    if (t == cfg.max_iters) break;

    add_scaled(w, -eta_t, g);
    traj.iters = t + 1;
  }
  traj.final_w = w;
  return traj;
}

}  // namespace detail

// Population gradient descent: each step uses the exact mean gradient over a
// Monte Carlo batch (pinned by default; fresh per step when pin_batches=false).
inline Trajectory run_gd(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.mode != RunMode::PopulationGD)
    throw std::invalid_argument("run_gd: config mode is not PopulationGD");
  if (cfg.n_mc < 1) throw std::invalid_argument("run_gd: n_mc must be >= 1");

  if (cfg.pin_batches) {
    const Dataset ds = sample(cfg.dist, cfg.n_mc, derive_seed(cfg.seed, 0));
    const std::vector<double> fs = detail::teacher_predictions(ds, cfg.w_star);
    return detail::run_loop(cfg, [&](std::size_t, const Vec& w, Vec& g, double& loss) {
      const detail::BatchStats s = detail::batch_stats(
          w, 0, ds.n, ds.p, ds.k, [&](std::size_t i) { return ds.sample(i); },
          [&](std::size_t i) { return fs[i]; });
      g = s.grad_sum;
      const double inv = 1.0 / static_cast<double>(s.count);
      for (double& x : g) x *= inv;
      loss = s.loss_sum * inv;
    });
  }
  return detail::run_loop(cfg, [&](std::size_t t, const Vec& w, Vec& g, double& loss) {
    const Dataset ds = sample(cfg.dist, cfg.n_mc, derive_seed(cfg.seed, t + 1));
    const std::vector<double> fs = detail::teacher_predictions(ds, cfg.w_star);
    const detail::BatchStats s = detail::batch_stats(
        w, 0, ds.n, ds.p, ds.k, [&](std::size_t i) { return ds.sample(i); },
        [&](std::size_t i) { return fs[i]; });
    g = s.grad_sum;
    const double inv = 1.0 / static_cast<double>(s.count);
    for (double& x : g) x *= inv;
    loss = s.loss_sum * inv;
  });
}

// Stochastic gradient descent. Fresh mode draws batch_size i.i.d. samples per
// step; pinned mode walks the fixed n_mc-sample pool in cyclic slices (with
// batch_size == n_mc every step sees the whole pool, reproducing run_gd).
inline Trajectory run_sgd(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.mode != RunMode::SGD) throw std::invalid_argument("run_sgd: config mode is not SGD");

  const int p = cfg.dist.p, k = cfg.dist.k;
  if (cfg.pin_batches || cfg.dist.kind == DistKind::FromFile) {
    const Dataset ds = sample(cfg.dist, cfg.n_mc, derive_seed(cfg.seed, 0));
    const std::vector<double> fs = detail::teacher_predictions(ds, cfg.w_star);
    const std::size_t b = std::min<std::size_t>(cfg.batch_size, ds.n);
    return detail::run_loop(cfg, [&](std::size_t t, const Vec& w, Vec& g, double& loss) {
      const std::size_t start = (t * b) % ds.n;
      auto run_range = [&](std::size_t lo, std::size_t hi) {
        return detail::batch_stats(
            w, lo, hi, p, k, [&](std::size_t i) { return ds.sample(i); },
            [&](std::size_t i) { return fs[i]; });
      };
      detail::BatchStats s = run_range(start, std::min(ds.n, start + b));
      if (start + b > ds.n) {
        const detail::BatchStats tail = run_range(0, start + b - ds.n);
        for (int c = 0; c < p; ++c) s.grad_sum[c] += tail.grad_sum[c];
        s.loss_sum += tail.loss_sum;
        s.count += tail.count;
      }
      g = s.grad_sum;
      const double inv = 1.0 / static_cast<double>(s.count);
      for (double& x : g) x *= inv;
      loss = s.loss_sum * inv;
    });
  }

  const std::size_t stride = static_cast<std::size_t>(k) * p;
  std::vector<double> scratch(cfg.batch_size * stride);
  std::vector<double> fs(cfg.batch_size);
  return detail::run_loop(cfg, [&](std::size_t t, const Vec& w, Vec& g, double& loss) {
    Rng rng(derive_seed(cfg.seed, t + 1));
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      generate_one(cfg.dist, rng, scratch.data() + i * stride);
      fs[i] = predict(cfg.w_star, {p, k, scratch.data() + i * stride});
    }
    const detail::BatchStats s = detail::batch_stats(
        w, 0, cfg.batch_size, p, k,
        [&](std::size_t i) { return PatchView{p, k, scratch.data() + i * stride}; },
        [&](std::size_t i) { return fs[i]; });
    g = s.grad_sum;
    const double inv = 1.0 / static_cast<double>(s.count);
    for (double& x : g) x *= inv;
    loss = s.loss_sum * inv;
  });
}

struct ContractionReport {
  std::size_t n_checked = 0, n_pass = 0;
  double pass_fraction = 1.0;
  double max_excess = 0.0;  // worst realized-minus-predicted ratio gap
  bool angle_bound_ok = true;
};

// Compares realized per-step squared-distance ratios against the theorem's
// (1 - eta (gamma(phi_t) - 6 L_cross)/2) prediction, with a 3-sigma allowance
// on the gamma estimate. Only stride-1 row pairs are comparable.
inline ContractionReport check_contraction(const Trajectory& traj, const SmoothnessProfile& pr,
                                           bool multi_patch) {
  ContractionReport rep;
  rep.angle_bound_ok = traj.max_angle_excess <= 1e-8;
  const double lc = multi_patch ? pr.l_cross_hat : 0.0;
  for (std::size_t i = 0; i + 1 < traj.rows.size(); ++i) {
    const TrajectoryRow& a = traj.rows[i];
    const TrajectoryRow& b = traj.rows[i + 1];
    if (b.t != a.t + 1) continue;
    if (!(a.dist > 0.0) || a.dist >= traj.w_star_norm) continue;
    const double realized = (b.dist * b.dist) / (a.dist * a.dist);
    const double predicted = 1.0 - a.eta * (pr.gamma_at(a.phi) - 6.0 * lc) / 2.0;
    const double tol = 3.0 * pr.gamma_se_at(a.phi) * a.eta / 2.0 + 1e-12;
    ++rep.n_checked;
    if (realized <= predicted + tol) ++rep.n_pass;
    rep.max_excess = std::max(rep.max_excess, realized - predicted);
  }
  rep.pass_fraction =
      rep.n_checked ? static_cast<double>(rep.n_pass) / static_cast<double>(rep.n_checked) : 1.0;
  return rep;
}

struct SgdBudget {
  double eta = 0.0;
  long long iters = 0;
  double phi_star = 0.0, phi_one = 0.0;
  double gamma_one = 0.0;  // gamma(phi_1) - 6 L_cross
  double alpha = 0.0;      // contraction margin at the chosen eta
  double b_hat = 0.0;
  bool azuma_ok = false;
};

// Sizes the SGD step and iteration budget from the martingale lemma's
// explicit conditions: eta from the noise-floor condition
// eta B^2 <= eps^2 alpha ||w*||^2 (capped by the contraction condition),
// iterations from eta T alpha >= log(r0^2/(eps^2 ||w*||^2 delta)). The Azuma
// deviation condition is evaluated and reported, not enforced.
inline SgdBudget sgd_budget(const SmoothnessProfile& pr, double r0, double w_star_norm,
                            double eps, double delta, double b_hat, double safety) {
  if (!(r0 > 0.0 && r0 < w_star_norm))
    throw std::domain_error("sgd_budget: need 0 < ||w0 - w*|| < ||w*||");
  if (!(eps > 0.0 && delta > 0.0 && delta < 1.0 && b_hat > 0.0 && safety > 0.0))
    throw std::invalid_argument("sgd_budget: bad eps/delta/b_hat/safety");

  const double lc = pr.l_cross_hat;
  double phi_star = 0.0;
  for (std::size_t i = 0; i < pr.size(); ++i)
    if (pr.gamma[i] > 6.0 * lc) phi_star = std::max(phi_star, pr.phis[i]);
  if (phi_star <= 0.0)
    throw std::domain_error("sgd_budget: gamma(phi) <= 6 L_cross on the whole grid");

  const double phi0 = std::asin(std::min(r0 / w_star_norm, 1.0));
  if (phi0 >= phi_star)
    throw std::domain_error("sgd_budget: initialization angle reaches phi_star");
  const double phi1 = 0.5 * (phi0 + phi_star);
  const double r1 = w_star_norm * std::sin(phi1);

  SgdBudget bd;
  bd.phi_star = phi_star;
  bd.phi_one = phi1;
  bd.b_hat = b_hat;
  bd.gamma_one = pr.gamma_at(phi1) - 6.0 * lc;
  if (bd.gamma_one <= 0.0) throw std::domain_error("sgd_budget: gamma(phi_1) <= 6 L_cross");

  double ell_max = 0.0;
  for (double e : pr.ell) ell_max = std::max(ell_max, e);
  const double d_sq = std::pow(ell_max + 10.0 * lc + 4.0 * pr.beta_hat, 2.0);

  const double eta_contract = bd.gamma_one / d_sq;
  const double eta_floor = eps * eps * bd.gamma_one * w_star_norm * w_star_norm /
                           (b_hat * b_hat + eps * eps * d_sq * w_star_norm * w_star_norm);
  bd.eta = safety * std::min(eta_contract, eta_floor);
  bd.alpha = bd.gamma_one - bd.eta * d_sq;

  const double need =
      std::log(r0 * r0 / (eps * eps * w_star_norm * w_star_norm * delta));
  bd.iters = need <= 0.0 ? 1
                         : static_cast<long long>(std::ceil(need / (bd.eta * bd.alpha)));

  const double dev = 2.0 * bd.eta * b_hat * std::sqrt(d_sq) * r1 + bd.eta * bd.eta * b_hat * b_hat;
  const double lhs = std::pow(r1 * r1 - r0 * r0, 2.0) /
                     (static_cast<double>(bd.iters) *
                      (1.0 + 2.0 * bd.eta * bd.alpha * static_cast<double>(bd.iters)) * dev * dev);
  bd.azuma_ok = lhs >= std::log(static_cast<double>(bd.iters) / delta);
  return bd;
}

// Empirical stand-in for the uniform gradient bound: the largest minibatch
// gradient norm seen at w0 over n_probes fresh batches, with 25% headroom.
inline double measure_gradient_bound(const DistributionSpec& dist, const Vec& w_star,
                                     const Vec& w0, std::size_t batch_size,
                                     std::size_t n_probes, std::uint64_t seed) {
  const std::size_t stride = static_cast<std::size_t>(dist.k) * dist.p;
  std::vector<double> scratch(batch_size * stride);
  std::vector<double> fs(batch_size);
  double worst = 0.0;
  for (std::size_t probe = 0; probe < n_probes; ++probe) {
    Rng rng(derive_seed(seed, 0xB0, probe));
    for (std::size_t i = 0; i < batch_size; ++i) {
      generate_one(dist, rng, scratch.data() + i * stride);
      fs[i] = predict(w_star, {dist.p, dist.k, scratch.data() + i * stride});
    }
    const detail::BatchStats s = detail::batch_stats(
        w0, 0, batch_size, dist.p, dist.k,
        [&](std::size_t i) { return PatchView{dist.p, dist.k, scratch.data() + i * stride}; },
        [&](std::size_t i) { return fs[i]; });
    Vec g = s.grad_sum;
    for (double& x : g) x /= static_cast<double>(s.count);
    worst = std::max(worst, norm(g));
  }
  return 1.25 * worst;
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  out << "t,eta,dist,phi,loss,grad_norm\n";
  char buf[256];
  for (const TrajectoryRow& r : traj.rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.eta, r.dist,
                  r.phi, r.loss, r.grad_norm);
    out << buf;
  }
}

}  // namespace relu_lab

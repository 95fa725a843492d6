#pragma once

// EM calibration of theta = (mu1, p, m) for the scalar weight model.
//
// Conditionally on a path z every filtered mean is affine in (mu1, m):
//   mean_z = a_z mu1 + b_z m + c_z
// with (a, b, c) following the same branching recursion as the filter. The
// M-step for (mu1, m) is therefore a weighted 2x2 least-squares problem and
// the M-step for p is the posterior inlier fraction.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "kfino/filter.hpp"
#include "kfino/wow_model.hpp"

namespace kfino {

struct LinearCoeffs {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;

  double eval(double mu1, double m) const { return a * mu1 + b * m + c; }
};

// (z = 0, z = 1) coefficients after the first observation.
inline std::pair<LinearCoeffs, LinearCoeffs> coeffs_init(double y1, double Sigma1, double sigma_p2) {
  const double s = Sigma1 + sigma_p2;
  if (!(s > 0.0)) throw InvalidArgument("Sigma1 + sigma_p2 must be positive");
  return {LinearCoeffs{1.0, 0.0, 0.0}, LinearCoeffs{sigma_p2 / s, 0.0, y1 * Sigma1 / s}};
}

inline LinearCoeffs coeffs_propagate(const LinearCoeffs& lc, double a_rate, double dt) {
  if (dt < 0.0) throw NegativeTimeStep(dt);
  const double decay = std::exp(-a_rate * dt);
  return {decay * lc.a, decay * lc.b - std::expm1(-a_rate * dt), decay * lc.c};
}

inline LinearCoeffs coeffs_update(const LinearCoeffs& lc, double Sigma_pred, double sigma_p2, double y) {
  const double s = Sigma_pred + sigma_p2;
  if (!(s > 0.0)) throw InvalidArgument("Sigma_pred + sigma_p2 must be positive");
  const double shrink = sigma_p2 / s;
  return {shrink * lc.a, shrink * lc.b, shrink * lc.c + Sigma_pred / s * y};
}

struct Theta {
  double mu1 = 40.0;
  double p = 0.5;
  double m = 60.0;
};

struct EmSuffStats {
  double Ya = 0.0;
  double A = 0.0;
  double C = 0.0;
  double Yb = 0.0;
  double B = 0.0;
  double z_mass = 0.0;
};

struct EStepResult {
  EmSuffStats stats;
  double loglik = 0.0;
};

struct EmConfig {
  std::size_t max_iters = 100;
  double param_tol = 1e-4;
  double p_clamp = 1e-6;
  // exact = true enumerates every path (N <= 25); otherwise beam/exact_prefix apply.
  bool exact = false;
  std::size_t beam = 1024;
  std::size_t exact_prefix = 10;
};

struct EmResult {
  std::vector<Theta> trajectory;
  std::vector<double> loglik;        // loglik[i] evaluated at trajectory[i]
  std::vector<bool> singular_mstep;  // per M-step (size trajectory.size() - 1)
  bool converged = false;
};

inline WowParams with_theta(WowParams params, const Theta& theta) {
  params.mu1 = theta.mu1;
  params.p = theta.p;
  params.m = theta.m;
  return params;
}

// Per-step coefficients along one tracked path: the coefficients of the
// predicted mean (before the step's correction) and of the filtered mean.
struct PathCoeffs {
  std::vector<LinearCoeffs> predicted;
  std::vector<LinearCoeffs> filtered;
};

inline PathCoeffs path_coeffs(const std::vector<const StepRecord<1>*>& recs, std::span<const double> ys,
                              std::span<const double> times, double a_rate, double sigma_p2) {
  PathCoeffs pc;
  pc.predicted.reserve(recs.size());
  pc.filtered.reserve(recs.size());
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const LinearCoeffs pred =
        k == 0 ? LinearCoeffs{} : coeffs_propagate(pc.filtered.back(), a_rate, times[k] - times[k - 1]);
    pc.predicted.push_back(pred);
    pc.filtered.push_back(recs[k]->inlier
                              ? coeffs_update(pred, recs[k]->predicted.cov(0, 0), sigma_p2, ys[k])
                              : pred);
  }
  return pc;
}

// Weighted sums of the expected complete-data log-likelihood. The marginal
// posterior of each (prefix, z_k = 1) is approximated by the final weights of
// the surviving paths through it; in exact mode this is the true posterior.
inline EStepResult em_e_step(std::span<const double> ys, std::span<const double> times,
                             const WowParams& params, const Theta& theta, const EmConfig& cfg) {
  if (ys.size() != times.size()) throw DimensionError("observations vs times");
  const WowParams wp = with_theta(params, theta);
  const auto steps = build_steps(wp, times);
  const auto obs = as_observations(ys);
  const auto init = wp.initial_belief();
  const FilterResult<1> run =
      cfg.exact ? kfino_exact<1, 1>(obs, steps, init, true)
                : kfino_filter<1, 1>(obs, steps, init, {cfg.beam, cfg.exact_prefix, true});
  EStepResult out;
  out.loglik = run.loglik;
  EmSuffStats& st = out.stats;
  for (const auto& h : run.final.hypotheses) {
    const double w = std::exp(h.log_weight);
    const auto recs = h.records();
    const PathCoeffs pc = path_coeffs(recs, ys, times, wp.a, wp.sigma_p2);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      if (!recs[k]->inlier) continue;
      const LinearCoeffs& lc = pc.predicted[k];
      const double s = recs[k]->predicted.cov(0, 0) + wp.sigma_p2;
      const double r = ys[k] - lc.c;
      st.Ya += w * lc.a * r / s;
      st.A += w * lc.a * lc.a / s;
      st.C += w * lc.a * lc.b / s;
      st.Yb += w * lc.b * r / s;
      st.B += w * lc.b * lc.b / s;
      st.z_mass += w;
    }
  }
  return out;
}

// Closed-form maximizer. When the design has no information on m (B = C = 0)
// mu1 is still solvable and m is kept; a genuinely singular system throws.
inline Theta em_m_step(const EmSuffStats& st, std::size_t n, const Theta& prev, double p_clamp = 1e-6) {
  if (n == 0) throw EmptySeries();
  Theta next = prev;
  next.p = std::clamp(st.z_mass / static_cast<double>(n), p_clamp, 1.0 - p_clamp);
  const double det = st.C * st.C - st.A * st.B;
  const double ab = st.A * st.B;
  if (ab > 0.0 && std::abs(det) > 1e-12 * ab) {
    next.mu1 = (st.C * st.Yb - st.B * st.Ya) / det;
    next.m = (st.Ya * st.C - st.A * st.Yb) / det;
    return next;
  }
  if (st.B == 0.0 && st.C == 0.0 && st.A > 0.0) {
    next.mu1 = st.Ya / st.A;
    return next;
  }
  throw SingularMStep();
}

inline EmResult em_fit(std::span<const double> ys, std::span<const double> times, const WowParams& params,
                       const Theta& theta0, const EmConfig& cfg) {
  if (!(theta0.mu1 > params.Mmin && theta0.mu1 < params.Mmax && theta0.m > params.Mmin &&
        theta0.m < params.Mmax && theta0.p >= 0.0 && theta0.p <= 1.0))
    throw InvalidArgument("theta0 outside (Mmin, Mmax) x [0, 1] x (Mmin, Mmax)");
  EmResult res;
  Theta theta = theta0;
  EStepResult e = em_e_step(ys, times, params, theta, cfg);
  res.trajectory.push_back(theta);
  res.loglik.push_back(e.loglik);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    Theta next;
    bool singular = false;
    try {
      next = em_m_step(e.stats, ys.size(), theta, cfg.p_clamp);
    } catch (const SingularMStep&) {
      singular = true;
      next = theta;
      next.p = std::clamp(e.stats.z_mass / static_cast<double>(ys.size()), cfg.p_clamp, 1.0 - cfg.p_clamp);
    }
    const double delta = std::max({std::abs(next.mu1 - theta.mu1), std::abs(next.m - theta.m),
                                   std::abs(next.p - theta.p)});
    theta = next;
    e = em_e_step(ys, times, params, theta, cfg);
    res.trajectory.push_back(theta);
    res.loglik.push_back(e.loglik);
    res.singular_mstep.push_back(singular);
    if (delta < cfg.param_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace kfino

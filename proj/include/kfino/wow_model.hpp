#pragma once

// Scalar body-weight model: Ornstein-Uhlenbeck dynamics sampled at irregular
// times, Gaussian weighing noise for good measurements and a trapezoidal
// density (skewed towards over-estimation) for bad ones.
//
// Units: time in days, weight in kg.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kfino/gaussian.hpp"

namespace kfino {

using ScalarStep = StepModel<1, 1>;

struct WowParams {
  double a = 0.001;        // mean reversion rate, 1/day
  double m = 60.0;         // asymptotic weight, kg
  double sigma_m2 = 0.05;  // diffusion variance, kg^2/day
  double sigma_p2 = 5.0;   // weighing noise variance, kg^2
  double p = 0.5;          // probability of a good measurement
  double mu1 = 40.0;       // mean of X_1, kg
  double Sigma1 = 1.0;     // variance of X_1, kg^2
  double Mmin = 10.0;
  double Mmax = 100.0;

  void validate() const {
    if (!(a > 0.0)) throw InvalidArgument("a must be positive");
    if (!(sigma_m2 > 0.0)) throw InvalidArgument("sigma_m2 must be positive");
    if (!(sigma_p2 >= 0.0)) throw InvalidArgument("sigma_p2 must be nonnegative");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p must lie in [0, 1]");
    if (!(Sigma1 > 0.0)) throw InvalidArgument("Sigma1 must be positive");
    if (!(Mmin < Mmax)) throw InvalidArgument("Mmin must be below Mmax");
  }

  ScalarBelief initial_belief() const { return scalar_belief(mu1, Sigma1); }
};

struct OuTransition {
  double A = 1.0;
  double b = 0.0;
  double Q = 0.0;
};

// Exact discretization of dX = -a (X - m) dt + sigma_m dB over dt.
inline OuTransition ou_transition(const WowParams& params, double dt) {
  if (dt < 0.0) throw NegativeTimeStep(dt);
  const double decay = std::exp(-params.a * dt);
  // 1 - e^{-x} via expm1 keeps precision for small a*dt.
  const double one_minus = -std::expm1(-params.a * dt);
  const double one_minus_sq = -std::expm1(-2.0 * params.a * dt);
  return {decay, params.m * one_minus, params.sigma_m2 / (2.0 * params.a) * one_minus_sq};
}

// Linear density on [lo, hi] whose value at hi is five times the value at lo.
inline double trapezoid_pdf(double y, double lo, double hi) {
  if (y < lo || y > hi) return 0.0;
  const double len = hi - lo;
  return 2.0 / (6.0 * len) + 8.0 * (y - lo) / (6.0 * len * len);
}

inline double trapezoid_logpdf(double y, double lo, double hi) {
  const double v = trapezoid_pdf(y, lo, hi);
  return v > 0.0 ? std::log(v) : kNegInf;
}

// Inverse CDF: F(s) = s (1 + 2 s) / 3 on the unit interval.
inline double trapezoid_sample(double u, double lo, double hi) {
  const double s = (-1.0 + std::sqrt(1.0 + 24.0 * u)) / 4.0;
  return lo + (hi - lo) * s;
}

// Composite trapezoid rule on a uniform grid; exact for piecewise-linear densities
// whose kinks sit on the grid.
inline double integrate_density(const std::function<double(double)>& logpdf, double lo, double hi,
                                std::size_t cells = 20000) {
  const double h = (hi - lo) / static_cast<double>(cells);
  double acc = 0.0;
  for (std::size_t i = 0; i <= cells; ++i) {
    const double x = i == cells ? hi : lo + h * static_cast<double>(i);
    const double v = std::exp(logpdf(x));
    acc += (i == 0 || i == cells) ? 0.5 * v : v;
  }
  return acc * h;
}

inline void check_outlier_density(const std::function<double(double)>& logpdf, double lo, double hi,
                                  double tol = 1e-6) {
  const double mass = integrate_density(logpdf, lo, hi);
  if (std::abs(mass - 1.0) > tol)
    throw InvalidArgument("outlier density integrates to " + std::to_string(mass) + ", not 1");
}

// Step models for the given observation times. The first step only carries the
// observation part; its transition fields are the identity.
inline std::vector<ScalarStep> build_steps(const WowParams& params, std::span<const double> times) {
  params.validate();
  if (times.empty()) throw EmptySeries("no observation times");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1]))
      throw TimeOrderError("t[" + std::to_string(k) + "]=" + std::to_string(times[k]) +
                           " after t[" + std::to_string(k - 1) + "]=" + std::to_string(times[k - 1]));
  const double lo = params.Mmin, hi = params.Mmax;
  std::function<double(double)> scalar_logpdf = [lo, hi](double y) { return trapezoid_logpdf(y, lo, hi); };
  check_outlier_density(scalar_logpdf, lo, hi);
  std::function<double(const Vec<1>&)> outlier = [lo, hi](const Vec<1>& y) {
    return trapezoid_logpdf(y(0), lo, hi);
  };
  std::vector<ScalarStep> steps(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    auto& s = steps[k];
    const OuTransition tr = k == 0 ? OuTransition{} : ou_transition(params, times[k] - times[k - 1]);
    s.A(0, 0) = tr.A;
    s.b(0) = tr.b;
    s.Q(0, 0) = tr.Q;
    s.C(0, 0) = 1.0;
    s.d(0) = 0.0;
    s.R(0, 0) = params.sigma_p2;
    s.p_inlier = params.p;
    s.outlier_logpdf = outlier;
  }
  return steps;
}

inline std::vector<Vec<1>> as_observations(std::span<const double> ys) {
  std::vector<Vec<1>> out(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) out[k](0) = ys[k];
  return out;
}

}  // namespace kfino

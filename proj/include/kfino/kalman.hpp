#pragma once

// Classical linear-Gaussian Kalman filter, Rauch-Tung-Striebel smoother and the
// confidence-interval outlier flags used as a baseline.

#include <cmath>
#include <span>
#include <vector>

#include "kfino/gaussian.hpp"

namespace kfino {

template <int N>
struct KalmanRun {
  std::vector<GaussianBelief<N>> filtered;
  std::vector<GaussianBelief<N>> predicted;  // law of X_k given Y_1..Y_{k-1}
  double loglik = 0.0;
};

template <int N>
struct SmoothedRun {
  std::vector<GaussianBelief<N>> smoothed;
};

namespace detail {
template <typename T, typename U>
void check_series(std::span<const T> ys, std::span<const U> steps) {
  if (ys.empty()) throw EmptySeries();
  if (ys.size() != steps.size())
    throw DimensionError(std::to_string(ys.size()) + " observations vs " +
                         std::to_string(steps.size()) + " step models");
}
}  // namespace detail

// Forward pass. The initial belief is the predicted law of X_1, so only the
// observation part of steps[0] is used.
template <int N, int M>
KalmanRun<N> kf_forward(std::span<const Vec<M>> ys, std::span<const StepModel<N, M>> steps,
                        const GaussianBelief<N>& init) {
  detail::check_series(ys, steps);
  KalmanRun<N> run;
  run.filtered.reserve(ys.size());
  run.predicted.reserve(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) {
    GaussianBelief<N> pred = k == 0 ? init : kalman_propagate(run.filtered.back(), steps[k]);
    const auto [ym, ys_cov] = predictive_obs_params(pred, steps[k]);
    run.loglik += log_gaussian_pdf<M>(ys[k], ym, ys_cov, k);
    run.filtered.push_back(kalman_update(pred, ys[k], steps[k], k));
    run.predicted.push_back(std::move(pred));
  }
  return run;
}

// RTS backward recursion over stored filtered/predicted beliefs.
//   G_k = F_k A_{k+1}^t (P_{k+1})^{-1}
//   s_k = f_k + G_k (s_{k+1} - p_{k+1})
template <int N, int M>
std::vector<GaussianBelief<N>> rts_backward(std::span<const GaussianBelief<N>> filtered,
                                            std::span<const GaussianBelief<N>> predicted,
                                            std::span<const StepModel<N, M>> steps) {
  const std::size_t n = filtered.size();
  if (predicted.size() != n || steps.size() != n) throw DimensionError("smoother inputs");
  std::vector<GaussianBelief<N>> out(n);
  if (n == 0) return out;
  out[n - 1] = filtered[n - 1];
  for (std::size_t k = n - 1; k-- > 0;) {
    const auto& f = filtered[k];
    const auto& p = predicted[k + 1];
    const auto& a = steps[k + 1].A;
    Mat<N, N> gain;
    if constexpr (N == 1) {
      if (!(p.cov(0, 0) > 0.0)) throw SingularCovariance("predicted variance is not positive", k + 1);
      gain(0, 0) = f.cov(0, 0) * a(0, 0) / p.cov(0, 0);
    } else {
      detail::check_strictly_pd<N>(p.cov, k + 1);
      Eigen::LLT<Mat<N, N>> llt(p.cov);
      if (llt.info() != Eigen::Success) throw SingularCovariance("predicted covariance", k + 1);
      // G^t = P^{-1} A F
      gain = llt.solve(a * f.cov).transpose();
    }
    out[k].mean = f.mean + gain * (out[k + 1].mean - p.mean);
    out[k].cov = symmetrize<N>(f.cov + gain * (out[k + 1].cov - p.cov) * gain.transpose());
  }
  return out;
}

template <int N, int M>
SmoothedRun<N> rts_smooth(const KalmanRun<N>& run, std::span<const StepModel<N, M>> steps) {
  return {rts_backward<N, M>(run.filtered, run.predicted, steps)};
}

// Baseline classification: an observation is flagged when it leaves the
// q-sigma band of its one-step-ahead predictive distribution. Scalar only.
template <int N>
std::vector<bool> kf_outlier_flags(std::span<const Vec<1>> ys, std::span<const StepModel<N, 1>> steps,
                                   const GaussianBelief<N>& init, double q = 2.0) {
  const auto run = kf_forward<N, 1>(ys, steps, init);
  std::vector<bool> flags(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const auto [ym, yv] = predictive_obs_params(run.predicted[k], steps[k]);
    flags[k] = std::abs(ys[k](0) - ym(0)) > q * std::sqrt(yv(0, 0));
  }
  return flags;
}

}  // namespace kfino

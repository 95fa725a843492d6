#pragma once

// Dense small-dimension Gaussian primitives shared by every filter: log-density
// evaluation, the propagation and correction steps of the Kalman recursion, and
// the per-step model description.
//
// Everything is templated on the state dimension N and observation dimension M.
// Fixed sizes (the scalar model uses N = M = 1) avoid heap traffic in the hot
// loop; Eigen::Dynamic works as well.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <utility>

#include "kfino/errors.hpp"

namespace kfino {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int R, int C>
using Mat = Eigen::Matrix<double, R, C>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <int N>
struct GaussianBelief {
  Vec<N> mean;
  Mat<N, N> cov;

  Eigen::Index dim() const { return mean.size(); }
};

using ScalarBelief = GaussianBelief<1>;

inline ScalarBelief scalar_belief(double mean, double var) {
  ScalarBelief b;
  b.mean(0) = mean;
  b.cov(0, 0) = var;
  return b;
}

// Parameters of one step of the state-space model:
//   X_k = A X_{k-1} + b + N(0, Q)
//   Y_k = C X_k + d + N(0, R)   with probability p_inlier
//   Y_k ~ outlier density       otherwise
template <int N, int M>
struct StepModel {
  Mat<N, N> A;
  Vec<N> b;
  Mat<N, N> Q;
  Mat<M, N> C;
  Vec<M> d;
  Mat<M, M> R;
  double p_inlier = 1.0;
  std::function<double(const Vec<M>&)> outlier_logpdf;
};

template <int N>
Mat<N, N> symmetrize(const Mat<N, N>& m) {
  return 0.5 * (m + m.transpose());
}

// log(sum(exp(xs))) without overflow; -inf for an empty or all -inf input.
inline double logsumexp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

namespace detail {

template <int M>
void check_strictly_pd(const Mat<M, M>& cov, std::optional<std::size_t> step) {
  if constexpr (M == 1) {
    if (!(cov(0, 0) > 0.0) || !std::isfinite(cov(0, 0)))
      throw SingularCovariance("variance " + std::to_string(cov(0, 0)) + " is not positive", step);
  } else {
    Eigen::SelfAdjointEigenSolver<Mat<M, M>> es(cov, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double hi = ev.maxCoeff();
    if (!(hi > 0.0) || !(ev.minCoeff() > 1e-12 * hi))
      throw SingularCovariance("smallest eigenvalue " + std::to_string(ev.minCoeff()) +
                                   " below 1e-12 of largest " + std::to_string(hi),
                               step);
  }
}

template <int N, int M>
void check_dims(const GaussianBelief<N>& bel, const StepModel<N, M>& step) {
  const auto n = bel.mean.size();
  if (bel.cov.rows() != n || bel.cov.cols() != n) throw DimensionError("belief covariance");
  if (step.A.rows() != n || step.A.cols() != n || step.b.size() != n || step.Q.rows() != n ||
      step.Q.cols() != n)
    throw DimensionError("transition (A, b, Q) vs state dimension " + std::to_string(n));
  const auto m = step.C.rows();
  if (step.C.cols() != n || step.d.size() != m || step.R.rows() != m || step.R.cols() != m)
    throw DimensionError("observation (C, d, R) vs state dimension " + std::to_string(n));
}

}  // namespace detail

// log N(y; mean, cov). The covariance must be strictly positive definite.
template <int M>
double log_gaussian_pdf(const Vec<M>& y, const Vec<M>& mean, const Mat<M, M>& cov,
                        std::optional<std::size_t> step = std::nullopt) {
  if (y.size() != mean.size() || cov.rows() != mean.size() || cov.cols() != mean.size())
    throw DimensionError("log_gaussian_pdf operands");
  detail::check_strictly_pd<M>(cov, step);
  constexpr double log2pi = 1.8378770664093454835606594728112;
  if constexpr (M == 1) {
    const double r = y(0) - mean(0);
    const double v = cov(0, 0);
    return -0.5 * (log2pi + std::log(v) + r * r / v);
  } else {
    Eigen::LLT<Mat<M, M>> llt(cov);
    if (llt.info() != Eigen::Success) throw SingularCovariance("Cholesky factorization failed", step);
    const Vec<M> r = y - mean;
    const Vec<M> w = llt.matrixL().solve(r);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(mean.size()) * log2pi + logdet + w.squaredNorm());
  }
}

// Propagation: (A mean + b, A cov A^t + Q).
template <int N, int M>
GaussianBelief<N> kalman_propagate(const GaussianBelief<N>& bel, const StepModel<N, M>& step) {
  detail::check_dims(bel, step);
  GaussianBelief<N> out;
  out.mean = step.A * bel.mean + step.b;
  out.cov = symmetrize<N>(step.A * bel.cov * step.A.transpose() + step.Q);
  return out;
}

// Predictive law of the observation: (C mean + d, C cov C^t + R).
template <int N, int M>
std::pair<Vec<M>, Mat<M, M>> predictive_obs_params(const GaussianBelief<N>& bel,
                                                   const StepModel<N, M>& step) {
  detail::check_dims(bel, step);
  Vec<M> mean = step.C * bel.mean + step.d;
  Mat<M, M> cov = symmetrize<M>(step.C * bel.cov * step.C.transpose() + step.R);
  return {std::move(mean), std::move(cov)};
}

// Correction by an observation y. The gain is obtained by solving against a
// Cholesky factor of the innovation covariance.
template <int N, int M>
GaussianBelief<N> kalman_update(const GaussianBelief<N>& bel, const Vec<M>& y,
                                const StepModel<N, M>& step,
                                std::optional<std::size_t> step_index = std::nullopt) {
  detail::check_dims(bel, step);
  if (y.size() != step.C.rows()) throw DimensionError("observation vector");
  GaussianBelief<N> out;
  if constexpr (N == 1 && M == 1) {
    const double c = step.C(0, 0);
    const double p = bel.cov(0, 0);
    const double s = c * p * c + step.R(0, 0);
    if (!(s > 0.0)) throw SingularCovariance("innovation variance is not positive", step_index);
    const double k = p * c / s;
    out.mean(0) = bel.mean(0) + k * (y(0) - (c * bel.mean(0) + step.d(0)));
    out.cov(0, 0) = std::max(0.0, (1.0 - k * c) * p);
  } else {
    const Mat<M, M> s = symmetrize<M>(step.C * bel.cov * step.C.transpose() + step.R);
    detail::check_strictly_pd<M>(s, step_index);
    Eigen::LLT<Mat<M, M>> llt(s);
    if (llt.info() != Eigen::Success)
      throw SingularCovariance("innovation covariance factorization failed", step_index);
    // K^t = S^{-1} C cov  (S and cov symmetric)
    const Mat<M, N> kt = llt.solve(step.C * bel.cov);
    const Mat<N, M> k = kt.transpose();
    out.mean = bel.mean + k * (y - (step.C * bel.mean + step.d));
    const auto n = bel.mean.size();
    const Mat<N, N> ikc = Mat<N, N>::Identity(n, n) - k * step.C;
    out.cov = symmetrize<N>(ikc * bel.cov);
  }
  return out;
}

}  // namespace kfino

#pragma once

// Test-only reference computations. Nothing here uses the recursive filter:
// every quantity comes from the dense joint Gaussian of (X_1..X_N, Y_included)
// for a fixed indicator path, or from enumerating all paths.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "kfino/gaussian.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Scalar linear-Gaussian model with its own parameter copy (independent of StepModel).
struct ScalarModel {
  double mu1 = 0.0, Sigma1 = 1.0;
  std::vector<double> A, b, Q, C, d, R, p;  // index 0 transition fields unused
  std::function<double(double)> outlier_logpdf;

  std::size_t size() const { return C.size(); }

  std::vector<kfino::StepModel<1, 1>> steps() const {
    std::vector<kfino::StepModel<1, 1>> out(size());
    for (std::size_t k = 0; k < size(); ++k) {
      out[k].A(0, 0) = A[k];
      out[k].b(0) = b[k];
      out[k].Q(0, 0) = Q[k];
      out[k].C(0, 0) = C[k];
      out[k].d(0) = d[k];
      out[k].R(0, 0) = R[k];
      out[k].p_inlier = p[k];
      auto f = outlier_logpdf;
      out[k].outlier_logpdf = [f](const kfino::Vec<1>& y) { return f(y(0)); };
    }
    return out;
  }
};

struct JointPrior {
  VectorXd mean;
  MatrixXd cov;
};

// Prior law of (X_1..X_N).
inline JointPrior state_prior(const ScalarModel& m) {
  const std::size_t n = m.size();
  JointPrior jp{VectorXd(n), MatrixXd(n, n)};
  std::vector<double> var(n);
  for (std::size_t k = 0; k < n; ++k) {
    jp.mean(k) = k == 0 ? m.mu1 : m.A[k] * jp.mean(k - 1) + m.b[k];
    var[k] = k == 0 ? m.Sigma1 : m.A[k] * m.A[k] * var[k - 1] + m.Q[k];
  }
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = j; k < n; ++k) {
      double prod = 1.0;
      for (std::size_t i = j + 1; i <= k; ++i) prod *= m.A[i];
      jp.cov(j, k) = jp.cov(k, j) = prod * var[j];
    }
  return jp;
}

struct Conditioned {
  VectorXd mean;  // of X_1..X_N
  MatrixXd cov;
  double loglik = 0.0;  // log density of the used observations (Gaussian part only)
};

// Conditions the state on Y_k for every k with use[k] = true.
inline Conditioned condition(const ScalarModel& m, const std::vector<double>& ys, const std::vector<bool>& use) {
  const JointPrior jp = state_prior(m);
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < use.size(); ++k)
    if (use[k]) idx.push_back(k);
  Conditioned out{jp.mean, jp.cov, 0.0};
  if (idx.empty()) return out;
  const std::size_t n = m.size(), q = idx.size();
  MatrixXd H = MatrixXd::Zero(q, n);
  VectorXd dvec(q), yv(q);
  MatrixXd Rm = MatrixXd::Zero(q, q);
  for (std::size_t i = 0; i < q; ++i) {
    H(i, idx[i]) = m.C[idx[i]];
    dvec(i) = m.d[idx[i]];
    Rm(i, i) = m.R[idx[i]];
    yv(i) = ys[idx[i]];
  }
  const VectorXd ymean = H * jp.mean + dvec;
  const MatrixXd S = H * jp.cov * H.transpose() + Rm;
  const MatrixXd cross = jp.cov * H.transpose();
  Eigen::LDLT<MatrixXd> ldlt(S);
  const VectorXd r = yv - ymean;
  out.mean = jp.mean + cross * ldlt.solve(r);
  out.cov = jp.cov - cross * ldlt.solve(cross.transpose());
  const double logdet = ldlt.vectorD().array().log().sum();
  out.loglik = -0.5 * (static_cast<double>(q) * std::log(2.0 * M_PI) + logdet + r.dot(ldlt.solve(r)));
  return out;
}

// Full-data log-likelihood of one indicator path: Gaussian part plus outlier densities.
inline double path_loglik(const ScalarModel& m, const std::vector<double>& ys, const std::vector<bool>& z) {
  double ll = condition(m, ys, z).loglik;
  for (std::size_t k = 0; k < z.size(); ++k)
    if (!z[k]) ll += m.outlier_logpdf(ys[k]);
  return ll;
}

inline double path_log_prior(const ScalarModel& m, const std::vector<bool>& z) {
  double lp = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) lp += std::log(z[k] ? m.p[k] : 1.0 - m.p[k]);
  return lp;
}

inline std::vector<bool> bits(std::size_t code, std::size_t n) {
  std::vector<bool> z(n);
  for (std::size_t k = 0; k < n; ++k) z[k] = (code >> k) & 1u;
  return z;
}

struct Enumeration {
  std::vector<std::vector<bool>> paths;
  std::vector<double> log_joint;  // log p(z) + log l_z
  std::vector<double> posterior;  // normalized
  double loglik = 0.0;            // log of the total likelihood sum
};

// All 2^N paths for the first n observations.
inline Enumeration enumerate(const ScalarModel& m, const std::vector<double>& ys, std::size_t n) {
  Enumeration e;
  ScalarModel prefix = m;
  for (auto* v : {&prefix.A, &prefix.b, &prefix.Q, &prefix.C, &prefix.d, &prefix.R, &prefix.p}) v->resize(n);
  const std::vector<double> yp(ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t code = 0; code < (std::size_t{1} << n); ++code) {
    auto z = bits(code, n);
    e.log_joint.push_back(path_log_prior(prefix, z) + path_loglik(prefix, yp, z));
    e.paths.push_back(std::move(z));
  }
  e.loglik = kfino::logsumexp(e.log_joint);
  for (double lj : e.log_joint) e.posterior.push_back(std::exp(lj - e.loglik));
  return e;
}

// Random scalar instance with observations drawn from the model itself.
inline ScalarModel random_model(std::mt19937_64& rng, std::size_t n, double p_lo = 0.3, double p_hi = 0.9) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ScalarModel m;
  m.mu1 = 10.0 * U(rng) - 5.0;
  m.Sigma1 = 0.5 + U(rng);
  for (std::size_t k = 0; k < n; ++k) {
    m.A.push_back(0.6 + 0.5 * U(rng));
    m.b.push_back(U(rng) - 0.5);
    m.Q.push_back(0.1 + U(rng));
    m.C.push_back(0.5 + U(rng));
    m.d.push_back(0.4 * U(rng) - 0.2);
    m.R.push_back(0.3 + U(rng));
    m.p.push_back(p_lo + (p_hi - p_lo) * U(rng));
  }
  // Wide Gaussian outlier law centered away from the signal.
  m.outlier_logpdf = [](double y) { return -0.5 * (std::log(2.0 * M_PI * 100.0) + (y - 3.0) * (y - 3.0) / 100.0); };
  return m;
}

inline std::vector<double> random_observations(std::mt19937_64& rng, const ScalarModel& m) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> ys;
  double x = m.mu1 + std::sqrt(m.Sigma1) * g(rng);
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (k > 0) x = m.A[k] * x + m.b[k] + std::sqrt(m.Q[k]) * g(rng);
    const double inl = m.C[k] * x + m.d[k] + std::sqrt(m.R[k]) * g(rng);
    ys.push_back(U(rng) < m.p[k] ? inl : 3.0 + 10.0 * g(rng));
  }
  return ys;
}

}  // namespace oracle

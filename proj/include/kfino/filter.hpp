#pragma once

// Kalman filtering with impulse-noised outliers.
//
// Conditionally on the indicator path z (1 = Gaussian measurement, 0 = draw
// from the outlier density) the model is linear-Gaussian, so the filtering law
// of X_k is a Gaussian mixture over paths. Each Hypothesis carries one path
// summary; a HypothesisSet is the (possibly truncated) mixture. All weights
// live in log space and are renormalized after every step; the log of each
// normalization mass is accumulated into the data log-likelihood.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "kfino/gaussian.hpp"
#include "kfino/kalman.hpp"

namespace kfino {

// One step of a path as seen by the forward pass.
template <int N>
struct StepRecord {
  GaussianBelief<N> filtered;
  GaussianBelief<N> predicted;
  bool inlier = false;
};

// Persistent singly linked list of step records: children share their
// parent's prefix, so branching costs one node.
template <int N>
struct HistoryNode {
  StepRecord<N> record;
  mutable std::shared_ptr<const HistoryNode> parent;
  std::size_t depth = 0;

  HistoryNode(StepRecord<N> rec, std::shared_ptr<const HistoryNode> up)
      : record(std::move(rec)), parent(std::move(up)), depth(parent ? parent->depth + 1 : 1) {}

  // Unlink iteratively; recursive destruction of a long chain would blow the stack.
  ~HistoryNode() {
    auto next = std::move(parent);
    while (next && next.use_count() == 1) next = std::move(next->parent);
  }
};

template <int N>
struct Hypothesis {
  std::uint64_t id = 0;
  bool last_inlier = false;
  double log_weight = 0.0;
  double log_cond_lik = 0.0;
  GaussianBelief<N> belief;
  std::shared_ptr<const HistoryNode<N>> history;

  // Records in chronological order. Empty when tracking is off.
  std::vector<const StepRecord<N>*> records() const {
    std::vector<const StepRecord<N>*> out;
    out.reserve(history ? history->depth : 0);
    for (const HistoryNode<N>* n = history.get(); n != nullptr; n = n->parent.get())
      out.push_back(&n->record);
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::vector<bool> indicator_path() const {
    std::vector<bool> out;
    for (const auto* r : records()) out.push_back(r->inlier);
    return out;
  }
};

template <int N>
struct HypothesisSet {
  std::vector<Hypothesis<N>> hypotheses;
  double log_norm_accum = 0.0;
  std::size_t step_count = 0;
  std::uint64_t next_id = 0;
  bool track_history = false;

  std::size_t size() const { return hypotheses.size(); }
};

template <int N>
struct PosteriorSummary {
  Vec<N> xhat;
  double zpm = 0.0;
  bool zmap = false;
  Mat<N, N> sigma_hat;
  Vec<N> band_low;
  Vec<N> band_high;
};

template <int N>
struct FilterResult {
  std::vector<PosteriorSummary<N>> summaries;
  HypothesisSet<N> final;
  double loglik = 0.0;
};

struct FilterOptions {
  std::size_t beam = 1024;
  std::size_t exact_prefix = 0;
  bool track_history = false;

  // kappa-style parametrization: exact for kappa steps, then keep 2^kappa paths.
  static FilterOptions from_kappa(unsigned kappa, bool track = false) {
    if (kappa < 1 || kappa > 40) throw InvalidArgument("kappa must lie in [1, 40]");
    return {std::size_t{1} << kappa, kappa, track};
  }
};

inline constexpr std::size_t kExactLimit = 25;

namespace detail {

inline double log_prob(double p) { return p > 0.0 ? std::log(p) : kNegInf; }
inline double log_complement(double p) { return p < 1.0 ? std::log1p(-p) : kNegInf; }

template <int N>
void normalize(HypothesisSet<N>& set, std::size_t step_index) {
  std::vector<double> lw(set.hypotheses.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = set.hypotheses[i].log_weight;
  const double lse = logsumexp(lw);
  if (lse == kNegInf || !std::isfinite(lse)) throw DegenerateWeights(step_index);
  for (auto& h : set.hypotheses) h.log_weight -= lse;
  set.log_norm_accum += lse;
}

// Appends the children of one parent belief. Zero-probability children are
// not materialized.
template <int N, int M>
void branch(HypothesisSet<N>& out, double parent_log_weight, double parent_log_lik,
            const GaussianBelief<N>& predicted,
            const std::shared_ptr<const HistoryNode<N>>& parent_history, const Vec<M>& y,
            const StepModel<N, M>& step, double log_outlier_branch, double outlier_loglik,
            std::size_t step_index) {
  const double lw0 = parent_log_weight + log_outlier_branch;
  if (lw0 > kNegInf) {
    Hypothesis<N> h;
    h.id = out.next_id++;
    h.last_inlier = false;
    h.log_weight = lw0;
    h.log_cond_lik = parent_log_lik + outlier_loglik;
    h.belief = predicted;
    if (out.track_history)
      h.history = std::make_shared<const HistoryNode<N>>(StepRecord<N>{predicted, predicted, false},
                                                         parent_history);
    out.hypotheses.push_back(std::move(h));
  } else {
    ++out.next_id;
  }
  const double log_p = log_prob(step.p_inlier);
  if (log_p > kNegInf && parent_log_weight > kNegInf) {
    const auto [ym, ycov] = predictive_obs_params(predicted, step);
    const double ll = log_gaussian_pdf<M>(y, ym, ycov, step_index);
    Hypothesis<N> h;
    h.id = out.next_id++;
    h.last_inlier = true;
    h.log_weight = parent_log_weight + log_p + ll;
    h.log_cond_lik = parent_log_lik + ll;
    h.belief = kalman_update(predicted, y, step, step_index);
    if (out.track_history)
      h.history = std::make_shared<const HistoryNode<N>>(
          StepRecord<N>{h.belief, predicted, true}, parent_history);
    out.hypotheses.push_back(std::move(h));
  } else {
    ++out.next_id;
  }
}

template <int N, int M>
double outlier_term(const StepModel<N, M>& step, const Vec<M>& y, double& outlier_loglik) {
  const double log_q = log_complement(step.p_inlier);
  outlier_loglik = log_q > kNegInf ? step.outlier_logpdf(y) : kNegInf;
  return log_q > kNegInf ? log_q + outlier_loglik : kNegInf;
}

}  // namespace detail

// First observation: the initial belief is the predicted law of X_1.
template <int N, int M>
HypothesisSet<N> kfino_init(const Vec<M>& y1, const StepModel<N, M>& step1,
                            const GaussianBelief<N>& init, bool track_history = false) {
  HypothesisSet<N> set;
  set.track_history = track_history;
  set.hypotheses.reserve(2);
  double outlier_ll = kNegInf;
  const double log_out = detail::outlier_term(step1, y1, outlier_ll);
  detail::branch<N, M>(set, 0.0, 0.0, init, nullptr, y1, step1, log_out, outlier_ll, 0);
  detail::normalize(set, 0);
  set.step_count = 1;
  return set;
}

// One doubling step: every hypothesis spawns an outlier child (propagated
// belief) and an inlier child (propagated then corrected).
template <int N, int M>
HypothesisSet<N> kfino_step(const HypothesisSet<N>& set, const Vec<M>& y,
                            const StepModel<N, M>& step) {
  const std::size_t step_index = set.step_count;
  HypothesisSet<N> out;
  out.track_history = set.track_history;
  out.log_norm_accum = set.log_norm_accum;
  out.next_id = set.next_id;
  out.hypotheses.reserve(2 * set.size());
  double outlier_ll = kNegInf;
  const double log_out = detail::outlier_term(step, y, outlier_ll);
  for (const auto& h : set.hypotheses) {
    const GaussianBelief<N> pred = kalman_propagate(h.belief, step);
    detail::branch<N, M>(out, h.log_weight, h.log_cond_lik, pred, h.history, y, step, log_out,
                         outlier_ll, step_index);
  }
  detail::normalize(out, step_index);
  out.step_count = set.step_count + 1;
  return out;
}

// Keeps the `beam` heaviest hypotheses (ties: smaller id first) and
// renormalizes. Survivors stay in creation order.
template <int N>
HypothesisSet<N> truncate(HypothesisSet<N> set, std::size_t beam) {
  if (beam < 1) throw InvalidArgument("beam must be at least 1");
  auto& hs = set.hypotheses;
  if (hs.size() > beam) {
    std::vector<std::size_t> idx(hs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto heavier = [&](std::size_t a, std::size_t b) {
      if (hs[a].log_weight != hs[b].log_weight) return hs[a].log_weight > hs[b].log_weight;
      return hs[a].id < hs[b].id;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(beam - 1), idx.end(),
                     heavier);
    idx.resize(beam);
    std::sort(idx.begin(), idx.end());
    std::vector<Hypothesis<N>> kept;
    kept.reserve(beam);
    for (std::size_t i : idx) kept.push_back(std::move(hs[i]));
    hs = std::move(kept);
  }
  std::vector<double> lw(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) lw[i] = hs[i].log_weight;
  const double lse = logsumexp(lw);
  if (lse != 0.0)
    for (auto& h : hs) h.log_weight -= lse;
  return set;
}

// Mixture moments of weighted components. Weights are normalized here, so any
// common positive factor cancels.
template <int N>
PosteriorSummary<N> summarize_components(std::span<const double> log_weights,
                                         std::span<const GaussianBelief<N>* const> beliefs,
                                         std::span<const bool> inlier) {
  const std::size_t n = log_weights.size();
  if (n == 0 || beliefs.size() != n || inlier.size() != n)
    throw DimensionError("mixture summary inputs");
  const double hi = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (w[i] = std::exp(log_weights[i] - hi));
  const auto dim = beliefs[0]->mean.size();
  PosteriorSummary<N> s;
  s.xhat = Vec<N>::Zero(dim);
  s.sigma_hat = Mat<N, N>::Zero(dim, dim);
  double zpm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] /= total;
    s.xhat += w[i] * beliefs[i]->mean;
    if (inlier[i]) zpm += w[i];
  }
  // Law of total variance, centered to avoid cancellation.
  for (std::size_t i = 0; i < n; ++i) {
    const Vec<N> dev = beliefs[i]->mean - s.xhat;
    s.sigma_hat += w[i] * (beliefs[i]->cov + dev * dev.transpose());
  }
  s.sigma_hat = symmetrize<N>(s.sigma_hat);
  s.zpm = std::clamp(zpm, 0.0, 1.0);
  s.zmap = s.zpm > 0.5;
  const Vec<N> half_width = 2.0 * s.sigma_hat.diagonal().cwiseMax(0.0).cwiseSqrt();
  s.band_low = s.xhat - half_width;
  s.band_high = s.xhat + half_width;
  return s;
}

template <int N>
PosteriorSummary<N> summarize(const HypothesisSet<N>& set) {
  const std::size_t n = set.size();
  std::vector<double> lw(n);
  std::vector<const GaussianBelief<N>*> beliefs(n);
  std::unique_ptr<bool[]> inlier(new bool[n]);
  for (std::size_t i = 0; i < n; ++i) {
    lw[i] = set.hypotheses[i].log_weight;
    beliefs[i] = &set.hypotheses[i].belief;
    inlier[i] = set.hypotheses[i].last_inlier;
  }
  return summarize_components<N>(lw, beliefs, std::span<const bool>(inlier.get(), n));
}

namespace detail {

template <int N, int M>
FilterResult<N> run_filter(std::span<const Vec<M>> ys, std::span<const StepModel<N, M>> steps,
                           const GaussianBelief<N>& init, std::size_t beam,
                           std::size_t exact_prefix, bool track_history) {
  check_series(ys, steps);
  FilterResult<N> res;
  res.summaries.reserve(ys.size());
  HypothesisSet<N> set = kfino_init(ys[0], steps[0], init, track_history);
  res.summaries.push_back(summarize(set));
  if (beam > 0 && exact_prefix < 1) set = truncate(std::move(set), beam);
  for (std::size_t k = 1; k < ys.size(); ++k) {
    set = kfino_step(set, ys[k], steps[k]);
    res.summaries.push_back(summarize(set));
    if (beam > 0 && k + 1 > exact_prefix) set = truncate(std::move(set), beam);
  }
  res.loglik = set.log_norm_accum;
  res.final = std::move(set);
  return res;
}

}  // namespace detail

// Exact doubling for the first `exact_prefix` observations, then doubling
// followed by truncation to `beam` hypotheses. Summaries are taken before each
// truncation; the returned log-likelihood is the accumulated normalization mass.
template <int N, int M>
FilterResult<N> kfino_filter(std::span<const Vec<M>> ys, std::span<const StepModel<N, M>> steps,
                             const GaussianBelief<N>& init, const FilterOptions& opts) {
  if (opts.beam < 2) throw InvalidArgument("beam must be at least 2");
  return detail::run_filter<N, M>(ys, steps, init, opts.beam, opts.exact_prefix,
                                  opts.track_history);
}

// Full enumeration of all 2^N paths.
template <int N, int M>
FilterResult<N> kfino_exact(std::span<const Vec<M>> ys, std::span<const StepModel<N, M>> steps,
                            const GaussianBelief<N>& init, bool track_history = false) {
  if (ys.size() > kExactLimit) throw ExactSizeExceeded(ys.size(), kExactLimit);
  return detail::run_filter<N, M>(ys, steps, init, 0, 0, track_history);
}

// Mixture smoothing: an RTS backward pass per surviving path, mixed with the
// final filtering weights.
template <int N, int M>
std::vector<PosteriorSummary<N>> kfino_smooth(const HypothesisSet<N>& final,
                                              std::span<const StepModel<N, M>> steps) {
  if (final.size() == 0) throw EmptySeries("hypothesis set is empty");
  const std::size_t len = final.step_count;
  if (steps.size() != len) throw DimensionError("smoother steps vs filtered length");
  const std::size_t n = final.size();
  std::vector<std::vector<GaussianBelief<N>>> smoothed(n);
  std::vector<std::vector<bool>> paths(n);
  std::vector<GaussianBelief<N>> filtered, predicted;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& h = final.hypotheses[i];
    if (!h.history || h.history->depth != len) throw HistoryRequired();
    const auto recs = h.records();
    filtered.clear();
    predicted.clear();
    paths[i].resize(len);
    for (std::size_t k = 0; k < len; ++k) {
      filtered.push_back(recs[k]->filtered);
      predicted.push_back(recs[k]->predicted);
      paths[i][k] = recs[k]->inlier;
    }
    smoothed[i] = rts_backward<N, M>(filtered, predicted, steps);
  }
  std::vector<double> lw(n);
  for (std::size_t i = 0; i < n; ++i) lw[i] = final.hypotheses[i].log_weight;
  std::vector<PosteriorSummary<N>> out;
  out.reserve(len);
  std::vector<const GaussianBelief<N>*> beliefs(n);
  std::unique_ptr<bool[]> inlier(new bool[n]);
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      beliefs[i] = &smoothed[i][k];
      inlier[i] = paths[i][k];
    }
    out.push_back(summarize_components<N>(lw, beliefs, std::span<const bool>(inlier.get(), n)));
  }
  return out;
}

}  // namespace kfino

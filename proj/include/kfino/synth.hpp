#pragma once

// Synthetic benchmark: seeded simulation of weighing series, error metrics and
// parameter sweeps reporting box-plot quantiles per method.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "kfino/filter.hpp"
#include "kfino/kalman.hpp"
#include "kfino/wow_model.hpp"

namespace kfino {

// Independent generator for (seed, stream) pairs.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                    0x6b66696eu};
  return std::mt19937_64(seq);
}

inline std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index) {
  auto rng = make_rng(master ^ (index * 0x9e3779b97f4a7c15ull), static_cast<std::uint32_t>(index));
  return rng();
}

// Homogeneous Poisson event times on (0, horizon].
inline std::vector<double> sample_times(double rate, double horizon, std::uint64_t seed) {
  if (!(rate > 0.0)) throw InvalidArgument("rate must be positive");
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  auto rng = make_rng(seed, 0);
  std::exponential_distribution<double> gap(rate);
  std::vector<double> t;
  for (double now = gap(rng); now <= horizon; now += gap(rng)) t.push_back(now);
  return t;
}

// Exact OU transitions, X_1 ~ N(mu1, Sigma1).
inline std::vector<double> simulate_ou(const WowParams& params, std::span<const double> times,
                                       std::uint64_t seed) {
  auto rng = make_rng(seed, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (k == 0) {
      x[k] = params.mu1 + std::sqrt(params.Sigma1) * gauss(rng);
      continue;
    }
    const OuTransition tr = ou_transition(params, times[k] - times[k - 1]);
    x[k] = tr.A * x[k - 1] + tr.b + std::sqrt(tr.Q) * gauss(rng);
  }
  return x;
}

struct Corrupted {
  std::vector<double> y;
  std::vector<bool> z;  // true = good measurement
};

// Every index consumes the same three draws so that changing p or sigma_p2
// keeps the other streams aligned.
inline Corrupted corrupt(std::span<const double> x, const WowParams& params, std::uint64_t seed) {
  auto rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Corrupted out;
  out.y.resize(x.size());
  out.z.resize(x.size());
  const double sd = std::sqrt(params.sigma_p2);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double u_z = unif(rng);
    const double eps = gauss(rng);
    const double u_o = unif(rng);
    out.z[k] = u_z < params.p;
    out.y[k] = out.z[k] ? x[k] + sd * eps : trapezoid_sample(u_o, params.Mmin, params.Mmax);
  }
  return out;
}

struct SyntheticSeries {
  std::vector<double> times;
  std::vector<double> x_hidden;
  std::vector<bool> z_true;
  std::vector<double> y_obs;
  std::uint64_t seed = 0;
};

inline SyntheticSeries generate_series(const WowParams& params, double rate, double horizon,
                                       std::uint64_t seed) {
  SyntheticSeries s;
  s.seed = seed;
  s.times = sample_times(rate, horizon, seed);
  s.x_hidden = simulate_ou(params, s.times, seed);
  auto c = corrupt(s.x_hidden, params, seed);
  s.y_obs = std::move(c.y);
  s.z_true = std::move(c.z);
  return s;
}

// (1/N) * sqrt(sum of squared residuals), the error score used by the benchmark.
inline double mse(std::span<const double> x, std::span<const double> xhat) {
  if (x.size() != xhat.size()) throw DimensionError("mse operands");
  if (x.empty()) throw EmptySeries();
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) acc += (x[k] - xhat[k]) * (x[k] - xhat[k]);
  return std::sqrt(acc) / static_cast<double>(x.size());
}

inline double accuracy(const std::vector<bool>& z_true, const std::vector<bool>& z_map) {
  if (z_true.size() != z_map.size()) throw DimensionError("accuracy operands");
  if (z_true.empty()) throw EmptySeries();
  std::size_t hits = 0;
  for (std::size_t k = 0; k < z_true.size(); ++k) hits += z_true[k] == z_map[k];
  return static_cast<double>(hits) / static_cast<double>(z_true.size());
}

struct Quantiles {
  double min = std::numeric_limits<double>::quiet_NaN();
  double q25 = min, median = min, q75 = min, max = min;
};

// Linear interpolation between order statistics (Hyndman-Fan type 7).
inline Quantiles quantiles(std::vector<double> v) {
  Quantiles q;
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  const auto at = [&](double prob) {
    const double h = prob * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  q.min = v.front();
  q.q25 = at(0.25);
  q.median = at(0.5);
  q.q75 = at(0.75);
  q.max = v.back();
  return q;
}

enum class Method { Kfino, KalmanClassic };

inline const char* method_name(Method m) { return m == Method::Kfino ? "kfino" : "kalman"; }

struct MethodScore {
  double mse = 0.0;
  double accuracy = 0.0;
  std::vector<double> xhat;
  std::vector<bool> zmap;
};

inline MethodScore score_kfino(const SyntheticSeries& s, const WowParams& params, const FilterOptions& opts) {
  const auto steps = build_steps(params, s.times);
  const auto obs = as_observations(s.y_obs);
  const auto res = kfino_filter<1, 1>(obs, steps, params.initial_belief(), opts);
  MethodScore sc;
  for (const auto& sum : res.summaries) {
    sc.xhat.push_back(sum.xhat(0));
    sc.zmap.push_back(sum.zmap);
  }
  sc.mse = mse(s.x_hidden, sc.xhat);
  sc.accuracy = accuracy(s.z_true, sc.zmap);
  return sc;
}

inline MethodScore score_kalman(const SyntheticSeries& s, const WowParams& params, double q) {
  const auto steps = build_steps(params, s.times);
  const auto obs = as_observations(s.y_obs);
  const auto run = kf_forward<1, 1>(obs, steps, params.initial_belief());
  const auto flags = kf_outlier_flags<1>(obs, steps, params.initial_belief(), q);
  MethodScore sc;
  for (std::size_t k = 0; k < run.filtered.size(); ++k) {
    sc.xhat.push_back(run.filtered[k].mean(0));
    sc.zmap.push_back(!flags[k]);
  }
  sc.mse = mse(s.x_hidden, sc.xhat);
  sc.accuracy = accuracy(s.z_true, sc.zmap);
  return sc;
}

struct SweepConfig {
  std::string variable = "kappa";  // kappa | sigma_p2 | p
  std::vector<double> values;
  WowParams base;
  double rate = 1.0;
  double horizon = 100.0;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  FilterOptions kfino = FilterOptions::from_kappa(10);
  double q = 2.0;
  std::vector<Method> methods{Method::Kfino, Method::KalmanClassic};
  unsigned threads = 1;
};

struct SweepRow {
  double value = 0.0;
  Method method = Method::Kfino;
  Quantiles mse;
  Quantiles accuracy;
  std::size_t completed = 0;
  std::size_t excluded = 0;
};

struct SweepReport {
  std::string variable;
  std::vector<SweepRow> rows;
};

// Parameters and filter options for one grid value.
inline std::pair<WowParams, FilterOptions> sweep_point(const SweepConfig& cfg, double value) {
  WowParams params = cfg.base;
  FilterOptions opts = cfg.kfino;
  if (cfg.variable == "kappa") {
    if (value < 1 || value != std::floor(value)) throw InvalidArgument("kappa values must be positive integers");
    opts = FilterOptions::from_kappa(static_cast<unsigned>(value));
  } else if (cfg.variable == "sigma_p2") {
    params.sigma_p2 = value;
  } else if (cfg.variable == "p") {
    params.p = value;
  } else {
    throw InvalidArgument("unknown sweep variable '" + cfg.variable + "'");
  }
  params.validate();
  return {params, opts};
}

// Replicate r of every grid value shares the seed derived from (seed, r), so
// grid values are compared on common random numbers. Results are placed by
// index, hence independent of the thread count.
inline SweepReport run_sweep(const SweepConfig& cfg) {
  if (cfg.replicates < 1) throw InvalidArgument("replicates must be at least 1");
  SweepReport report;
  report.variable = cfg.variable;
  for (double value : cfg.values) {
    const auto [params, opts] = sweep_point(cfg, value);
    const std::size_t nm = cfg.methods.size();
    std::vector<std::optional<MethodScore>> scores(cfg.replicates * nm);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      for (std::size_t r = next++; r < cfg.replicates; r = next++) {
        SyntheticSeries s;
        try {
          s = generate_series(params, cfg.rate, cfg.horizon, replicate_seed(cfg.seed, r));
        } catch (const Error&) {
          continue;
        }
        if (s.times.empty()) continue;
        for (std::size_t j = 0; j < nm; ++j) {
          try {
            scores[r * nm + j] = cfg.methods[j] == Method::Kfino ? score_kfino(s, params, opts)
                                                                 : score_kalman(s, params, cfg.q);
          } catch (const Error&) {
          }
        }
      }
    };
    const unsigned threads = std::max(1u, cfg.threads);
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (std::size_t j = 0; j < nm; ++j) {
      SweepRow row;
      row.value = value;
      row.method = cfg.methods[j];
      std::vector<double> m, a;
      for (std::size_t r = 0; r < cfg.replicates; ++r) {
        const auto& sc = scores[r * nm + j];
        if (!sc) continue;
        m.push_back(sc->mse);
        a.push_back(sc->accuracy);
      }
      row.completed = m.size();
      row.excluded = cfg.replicates - m.size();
      row.mse = quantiles(m);
      row.accuracy = quantiles(a);
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace kfino

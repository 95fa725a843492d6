#pragma once

// Command-line front end:
//   kfino <simulate|filter|smooth|calibrate|bench|compare> [--config FILE] [--seed N]
//         [--beam N | --kappa N] [--oor MIN,MAX] [--set KEY=VALUE]... [-i IN] [-o OUT]
// Data goes to files (or standard output when -o is omitted), diagnostics to
// the error stream. Exit status 0 iff the command succeeded.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "kfino/em.hpp"
#include "kfino/filter.hpp"
#include "kfino/io.hpp"
#include "kfino/kalman.hpp"
#include "kfino/synth.hpp"

namespace kfino::cli {

struct Invocation {
  std::string command;
  RunConfig config;
  std::string input;
  std::string output;
};

// Output sink: the named file, or the fallback stream when no path is given.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
      if (!*file_) throw Error("cannot write '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

// Sidecar path for simulated ground truth: series.csv -> series.truth.csv
inline std::string truth_path(const std::string& output) {
  std::filesystem::path p(output);
  const std::string ext = p.has_extension() ? p.extension().string() : std::string(".csv");
  p.replace_extension();
  return p.string() + ".truth" + ext;
}

inline ObservationSeries load_input(const Invocation& inv, std::ostream& err) {
  if (inv.input.empty()) throw InvalidArgument(inv.command + " needs an input series (-i)");
  auto series = ingest(inv.input, inv.config.oor);
  if (series.dropped > 0)
    err << "dropped " << series.dropped << " rows outside [" << format_double(inv.config.oor->lo) << ","
        << format_double(inv.config.oor->hi) << "]\n";
  return series;
}

inline void write_estimates(std::ostream& out, const ObservationSeries& s,
                            const std::vector<PosteriorSummary<1>>& sums) {
  out << "t,y,zpm,zmap,xhat,sigma,lo,hi\n";
  for (std::size_t k = 0; k < sums.size(); ++k) {
    const auto& e = sums[k];
    out << format_double(s.t[k]) << ',' << format_double(s.y[k]) << ',' << format_double(e.zpm) << ','
        << (e.zmap ? 1 : 0) << ',' << format_double(e.xhat(0)) << ','
        << format_double(std::sqrt(std::max(0.0, e.sigma_hat(0, 0)))) << ','
        << format_double(e.band_low(0)) << ',' << format_double(e.band_high(0)) << '\n';
  }
}

inline int cmd_filter(const Invocation& inv, bool smooth, std::ostream& out, std::ostream& err) {
  const auto& cfg = inv.config;
  const auto series = load_input(inv, err);
  const auto steps = build_steps(cfg.params, series.t);
  const auto obs = as_observations(series.y);
  FilterOptions opts = cfg.filter;
  opts.track_history = smooth;
  auto res = kfino_filter<1, 1>(obs, steps, cfg.params.initial_belief(), opts);
  const auto sums = smooth ? kfino_smooth<1, 1>(res.final, steps) : res.summaries;
  Sink sink(inv.output, out);
  write_estimates(sink.get(), series, sums);
  out << "loglik=" << format_double(res.loglik) << '\n';
  return 0;
}

inline int cmd_calibrate(const Invocation& inv, std::ostream& out, std::ostream& err) {
  const auto& cfg = inv.config;
  const auto series = load_input(inv, err);
  EmConfig em = cfg.em;
  em.beam = cfg.filter.beam;
  em.exact_prefix = cfg.filter.exact_prefix;
  const Theta theta0{cfg.params.mu1, cfg.params.p, cfg.params.m};
  const EmResult res = em_fit(series.y, series.t, cfg.params, theta0, em);
  Sink sink(inv.output, out);
  auto& o = sink.get();
  o << "iter,mu1,m,p,loglik\n";
  for (std::size_t i = 0; i < res.trajectory.size(); ++i) {
    if (i > 0 && res.singular_mstep[i - 1]) {
      o << "# warning: singular M-step at iteration " << i << "; mu1 and m kept\n";
      err << "warning: singular M-step at iteration " << i << "\n";
    }
    const auto& th = res.trajectory[i];
    o << i << ',' << format_double(th.mu1) << ',' << format_double(th.m) << ',' << format_double(th.p) << ','
      << format_double(res.loglik[i]) << '\n';
  }
  o << "converged=" << (res.converged ? "true" : "false") << '\n';
  return 0;
}

inline int cmd_simulate(const Invocation& inv, std::ostream& out, std::ostream&) {
  const auto& cfg = inv.config;
  const auto s = generate_series(cfg.params, cfg.rate, cfg.horizon, cfg.seed);
  if (s.times.empty()) throw EmptySeries("simulation produced no observation times");
  {
    Sink sink(inv.output, out);
    write_series(sink.get(), s.times, s.y_obs);
  }
  if (!inv.output.empty()) {
    Sink truth(truth_path(inv.output), out);
    auto& o = truth.get();
    o << "t,x,z\n";
    for (std::size_t k = 0; k < s.times.size(); ++k)
      o << format_double(s.times[k]) << ',' << format_double(s.x_hidden[k]) << ',' << (s.z_true[k] ? 1 : 0)
        << '\n';
  }
  return 0;
}

inline int cmd_bench(const Invocation& inv, std::ostream& out, std::ostream&) {
  const auto& cfg = inv.config;
  SweepConfig sc;
  sc.variable = cfg.sweep;
  sc.values = cfg.effective_grid();
  sc.base = cfg.params;
  sc.rate = cfg.rate;
  sc.horizon = cfg.horizon;
  sc.replicates = cfg.replicates;
  sc.seed = cfg.seed;
  sc.kfino = cfg.filter;
  sc.q = cfg.q;
  sc.threads = cfg.threads;
  const auto report = run_sweep(sc);
  Sink sink(inv.output, out);
  write_sweep_report(sink.get(), report);
  return 0;
}

// Both estimators side by side on one series.
inline int cmd_compare(const Invocation& inv, std::ostream& out, std::ostream& err) {
  const auto& cfg = inv.config;
  const auto series = load_input(inv, err);
  const auto steps = build_steps(cfg.params, series.t);
  const auto obs = as_observations(series.y);
  const auto init = cfg.params.initial_belief();
  const auto kf = kfino_filter<1, 1>(obs, steps, init, cfg.filter);
  const auto run = kf_forward<1, 1>(obs, steps, init);
  const auto flags = kf_outlier_flags<1>(obs, steps, init, cfg.q);
  Sink sink(inv.output, out);
  auto& o = sink.get();
  o << "t,y,kfino_zpm,kfino_zmap,kfino_xhat,kfino_sigma,kalman_xhat,kalman_sigma,kalman_zmap\n";
  for (std::size_t k = 0; k < series.t.size(); ++k) {
    const auto& e = kf.summaries[k];
    o << format_double(series.t[k]) << ',' << format_double(series.y[k]) << ',' << format_double(e.zpm) << ','
      << (e.zmap ? 1 : 0) << ',' << format_double(e.xhat(0)) << ','
      << format_double(std::sqrt(std::max(0.0, e.sigma_hat(0, 0)))) << ','
      << format_double(run.filtered[k].mean(0)) << ',' << format_double(std::sqrt(run.filtered[k].cov(0, 0)))
      << ',' << (flags[k] ? 0 : 1) << '\n';
  }
  out << "kfino_loglik=" << format_double(kf.loglik) << '\n';
  out << "kalman_loglik=" << format_double(run.loglik) << '\n';
  return 0;
}

inline int dispatch(const Invocation& inv, std::ostream& out, std::ostream& err) {
  if (inv.command == "filter") return cmd_filter(inv, false, out, err);
  if (inv.command == "smooth") return cmd_filter(inv, true, out, err);
  if (inv.command == "calibrate") return cmd_calibrate(inv, out, err);
  if (inv.command == "simulate") return cmd_simulate(inv, out, err);
  if (inv.command == "bench") return cmd_bench(inv, out, err);
  if (inv.command == "compare") return cmd_compare(inv, out, err);
  throw InvalidArgument("unknown command '" + inv.command + "'");
}

// args excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kalman filtering with impulse-noised outliers", "kfino"};
  app.require_subcommand(1, 1);

  std::string config_path, input, output, oor;
  std::vector<std::string> settings;
  std::uint64_t seed = 0;
  std::size_t beam = 0;
  unsigned kappa = 0;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "simulate a corrupted weighing series and its ground truth"},
      {"filter", "forward filtering estimates"},
      {"smooth", "smoothed estimates"},
      {"calibrate", "EM calibration of (mu1, p, m)"},
      {"bench", "synthetic benchmark sweep"},
      {"compare", "kfino and classical Kalman estimates side by side"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--seed", seed, "random seed (overrides config)");
    auto* b = sub->add_option("--beam", beam, "number of hypotheses kept")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30));
    auto* k = sub->add_option("--kappa", kappa, "exact prefix kappa with beam 2^kappa")->check(CLI::Range(1u, 40u));
    b->excludes(k);
    sub->add_option("--oor", oor, "drop observations outside MIN,MAX before filtering");
    sub->add_option("--set", settings, "override one configuration key (KEY=VALUE)");
    sub->add_option("-i,--input", input, "input series (t,y)");
    sub->add_option("-o,--output", output, "output file (default: standard output)");
    subs.push_back(sub);
  }

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    Invocation inv;
    for (auto* sub : subs)
      if (sub->parsed()) inv.command = sub->get_name();
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw InvalidArgument("--set expects KEY=VALUE, got '" + s + "'");
      apply_setting(cfg, detail::trim(std::string_view(s).substr(0, eq)),
                    detail::trim(std::string_view(s).substr(eq + 1)), "--set");
    }
    auto* sub = app.get_subcommand(inv.command);
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--beam")) cfg.filter.beam = beam;
    if (sub->count("--kappa")) cfg.filter = FilterOptions::from_kappa(kappa);
    if (sub->count("--oor")) {
      const auto parts = detail::split(oor, ',');
      const auto lo = parts.size() == 2 ? detail::parse_double(parts[0]) : std::nullopt;
      const auto hi = parts.size() == 2 ? detail::parse_double(parts[1]) : std::nullopt;
      if (!lo || !hi) throw InvalidArgument("--oor expects MIN,MAX");
      cfg.oor = Range{*lo, *hi};
    }
    cfg.validate();
    inv.config = std::move(cfg);
    inv.input = input;
    inv.output = output;
    return dispatch(inv, out, err);
  } catch (const std::exception& e) {
    err << "kfino: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace kfino::cli

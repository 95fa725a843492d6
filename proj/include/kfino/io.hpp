#pragma once

// Text formats: observation series ("t,y" CSV), flat key=value run
// configuration and round-trip-exact number formatting.

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kfino/em.hpp"
#include "kfino/filter.hpp"
#include "kfino/synth.hpp"
#include "kfino/wow_model.hpp"

namespace kfino {

// 17 significant digits: parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  const std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || errno == ERANGE) return std::nullopt;
  return v;
}

}  // namespace detail

struct ObservationSeries {
  std::vector<double> t;
  std::vector<double> y;
  std::size_t dropped = 0;  // rows removed by the range pre-filter
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Reads "t,y" rows (extra trailing columns are ignored, so filter outputs can
// be read back). An optional header line starting with "t,y" is skipped.
inline ObservationSeries parse_series(std::istream& in, const std::string& source,
                                      std::optional<Range> keep = std::nullopt) {
  ObservationSeries s;
  std::string line;
  std::size_t lineno = 0;
  std::size_t last_row = 0;
  std::optional<double> prev_t;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto cols = detail::split(body, ',');
    if (lineno == 1 && cols.size() >= 2 && cols[0] == "t" && cols[1] == "y") continue;
    if (cols.size() < 2) throw ParseError(source, lineno, "expected 't,y'");
    const auto t = detail::parse_double(cols[0]);
    const auto y = detail::parse_double(cols[1]);
    if (!t || !y) throw ParseError(source, lineno, "malformed number in '" + std::string(body) + "'");
    if (prev_t && !(*t > *prev_t))
      throw TimeOrderError(source + ":" + std::to_string(lineno) + ": t=" + format_double(*t) +
                           (*t == *prev_t ? " repeats" : " precedes") + " row at line " +
                           std::to_string(last_row));
    prev_t = *t;
    last_row = lineno;
    if (keep && (*y < keep->lo || *y > keep->hi)) {
      ++s.dropped;
      continue;
    }
    s.t.push_back(*t);
    s.y.push_back(*y);
  }
  if (s.t.empty()) throw EmptySeries(source + ": no observations");
  return s;
}

inline ObservationSeries ingest(const std::string& path, std::optional<Range> keep = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse_series(in, path, keep);
}

inline void write_series(std::ostream& out, std::span<const double> t, std::span<const double> y) {
  out << "t,y\n";
  for (std::size_t k = 0; k < t.size(); ++k) out << format_double(t[k]) << ',' << format_double(y[k]) << '\n';
}

struct RunConfig {
  WowParams params;
  FilterOptions filter = FilterOptions::from_kappa(10);
  double q = 2.0;
  std::optional<Range> oor;
  std::uint64_t seed = 1;
  EmConfig em;
  double rate = 1.0;
  double horizon = 100.0;
  std::size_t replicates = 100;
  std::string sweep = "kappa";
  std::vector<double> grid;
  unsigned threads = 1;

  void validate() const {
    params.validate();
    if (filter.beam < 2) throw InvalidArgument("beam must be at least 2");
    if (!(q >= 0.0)) throw InvalidArgument("q must be nonnegative");
    if (oor && !(oor->lo < oor->hi)) throw InvalidArgument("oor_min must be below oor_max");
    if (!(rate > 0.0) || !(horizon > 0.0)) throw InvalidArgument("rate and horizon must be positive");
  }

  // Preset grids used when no grid is configured.
  std::vector<double> effective_grid() const {
    if (!grid.empty()) return grid;
    if (sweep == "kappa") return {1, 5, 7, 10, 12, 15};
    if (sweep == "sigma_p2") return {0, 1, 2, 3, 4, 5};
    if (sweep == "p") return {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    throw InvalidArgument("unknown sweep '" + sweep + "'");
  }
};

namespace detail {

inline double need_double(std::string_view v, const std::string& src, std::size_t line, std::string_view key) {
  const auto d = parse_double(v);
  if (!d) throw ParseError(src, line, "value of '" + std::string(key) + "' is not a number");
  return *d;
}

inline std::uint64_t need_uint(std::string_view v, const std::string& src, std::size_t line,
                               std::string_view key) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(src, line, "value of '" + std::string(key) + "' is not a nonnegative integer");
  return out;
}

inline bool need_bool(std::string_view v, const std::string& src, std::size_t line, std::string_view key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(src, line, "value of '" + std::string(key) + "' is not a boolean");
}

}  // namespace detail

// Applies one key=value assignment. Unknown keys are errors.
inline void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value,
                          const std::string& src = "<config>", std::size_t line = 0) {
  using namespace detail;
  auto& p = cfg.params;
  const auto num = [&] { return need_double(value, src, line, key); };
  const auto uint = [&] { return need_uint(value, src, line, key); };
  if (key == "a") p.a = num();
  else if (key == "m") p.m = num();
  else if (key == "sigma_m2") p.sigma_m2 = num();
  else if (key == "sigma_p2") p.sigma_p2 = num();
  else if (key == "p") p.p = num();
  else if (key == "mu1") p.mu1 = num();
  else if (key == "Sigma1") p.Sigma1 = num();
  else if (key == "Mmin") p.Mmin = num();
  else if (key == "Mmax") p.Mmax = num();
  else if (key == "beam") cfg.filter.beam = uint();
  else if (key == "kappa") cfg.filter = FilterOptions::from_kappa(static_cast<unsigned>(uint()));
  else if (key == "exact_prefix") cfg.filter.exact_prefix = uint();
  else if (key == "q") cfg.q = num();
  else if (key == "oor_min") cfg.oor = Range{num(), cfg.oor ? cfg.oor->hi : 0.0};
  else if (key == "oor_max") cfg.oor = Range{cfg.oor ? cfg.oor->lo : 0.0, num()};
  else if (key == "seed") cfg.seed = uint();
  else if (key == "em_max_iters") cfg.em.max_iters = uint();
  else if (key == "em_tol") cfg.em.param_tol = num();
  else if (key == "em_p_clamp") cfg.em.p_clamp = num();
  else if (key == "em_exact") cfg.em.exact = need_bool(value, src, line, key);
  else if (key == "rate") cfg.rate = num();
  else if (key == "horizon") cfg.horizon = num();
  else if (key == "replicates") cfg.replicates = uint();
  else if (key == "sweep") cfg.sweep = std::string(value);
  else if (key == "grid") {
    cfg.grid.clear();
    for (auto item : split(value, ',')) cfg.grid.push_back(need_double(item, src, line, key));
  } else if (key == "threads") cfg.threads = static_cast<unsigned>(uint());
  else throw ParseError(src, line, "unknown key '" + std::string(key) + "'");
}

inline RunConfig parse_config(std::istream& in, const std::string& source, RunConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  bool saw_beam = false, saw_kappa = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected key=value");
    const auto key = detail::trim(body.substr(0, eq));
    const auto value = detail::trim(body.substr(eq + 1));
    saw_beam |= key == "beam";
    saw_kappa |= key == "kappa";
    if (saw_beam && saw_kappa) throw ParseError(source, lineno, "beam and kappa are mutually exclusive");
    apply_setting(cfg, key, value, source, lineno);
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  return parse_config(in, path);
}

inline void write_sweep_report(std::ostream& out, const SweepReport& rep) {
  out << "variable,value,method,mse_min,mse_q25,mse_median,mse_q75,mse_max,"
         "acc_min,acc_q25,acc_median,acc_q75,acc_max,replicates,excluded\n";
  for (const auto& r : rep.rows) {
    out << rep.variable << ',' << format_double(r.value) << ',' << method_name(r.method);
    for (const Quantiles* q : {&r.mse, &r.accuracy})
      for (double v : {q->min, q->q25, q->median, q->q75, q->max}) out << ',' << format_double(v);
    out << ',' << r.completed << ',' << r.excluded << '\n';
  }
}

}  // namespace kfino

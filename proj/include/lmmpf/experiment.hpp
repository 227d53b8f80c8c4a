#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lmmpf/common.hpp"
#include "lmmpf/homec.hpp"
#include "lmmpf/metrics.hpp"
#include "lmmpf/ode_models.hpp"
#include "lmmpf/particle_filter.hpp"
#include "lmmpf/state_space.hpp"

namespace lmmpf {

/// One experiment: a test problem, a method pair and the filter settings.
/// Defaults: 150 particles, V = 0.1, dt = 0.1. The default noise level 0.3
/// reproduces the published variance norms for V = 0.1.
struct ExperimentConfig {
  std::string problem = "gaussian_decay";
  std::string pair = "AB1-AB2";
  std::size_t nsample = 150;
  double v0 = 0.1;
  double dt = 0.1;
  std::optional<double> tend;  // defaults to the problem's own span
  int stride = 1;
  double noise = 0.3;
  std::optional<double> sigma;  // likelihood stddev; defaults to noise
  double tau = 1.5;
  double gamma_floor = 1e-20;
  std::uint64_t seed = 1;
  int reps = 10;
  Resampler resampler = Resampler::Multinomial;
  std::string outdir = "out";

  /// Stddev used in the likelihood. Zero synthetic noise still needs a
  /// proper density, so it bottoms out at 1e-6.
  double likelihood_stddev() const { return sigma ? *sigma : std::max(noise, 1e-6); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("bad value for '" + key + "': '" + value + "'");
  return out;
}

/// %.17g: round-trips every double exactly.
inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string fmt_short(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace detail

inline Resampler resampler_by_name(const std::string& name) {
  if (name == "multinomial") return Resampler::Multinomial;
  if (name == "systematic") return Resampler::Systematic;
  throw ConfigError("unknown resampler '" + name + "' (valid: multinomial, systematic)");
}

/// Applies one key=value setting to `cfg`.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_number;
  if (key == "problem") cfg.problem = value;
  else if (key == "pair") cfg.pair = value;
  else if (key == "nsample") cfg.nsample = parse_number<std::size_t>(key, value);
  else if (key == "v0") cfg.v0 = parse_number<double>(key, value);
  else if (key == "dt") cfg.dt = parse_number<double>(key, value);
  else if (key == "tend") cfg.tend = parse_number<double>(key, value);
  else if (key == "stride") cfg.stride = parse_number<int>(key, value);
  else if (key == "noise") cfg.noise = parse_number<double>(key, value);
  else if (key == "sigma") cfg.sigma = parse_number<double>(key, value);
  else if (key == "tau") cfg.tau = parse_number<double>(key, value);
  else if (key == "floor") cfg.gamma_floor = parse_number<double>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "reps") cfg.reps = parse_number<int>(key, value);
  else if (key == "resampler") cfg.resampler = resampler_by_name(value);
  else if (key == "outdir") cfg.outdir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Line-oriented key=value text; '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, std::move(cfg));
}

struct ResultsRow {
  std::string problem;
  std::string pair;
  double v0 = 0.0;
  double t_end = 0.0;
  int replicates = 0;
  double err_inf = 0.0;  // replicate mean
  double var_2norm = 0.0;
  double err_lo = 0.0;  // replicate min / max
  double err_hi = 0.0;
  double var_lo = 0.0;
  double var_hi = 0.0;
};

struct ResultsTable {
  std::vector<ResultsRow> rows;

  const ResultsRow* find(const std::string& pair, double v0) const {
    for (const auto& r : rows) {
      if (r.pair == pair && r.v0 == v0) return &r;
    }
    return nullptr;
  }
};

struct LabeledRun {
  std::string label;
  RunDiagnostics diagnostics;
};

struct ExperimentResult {
  ResultsRow row;
  std::vector<LabeledRun> runs;
};

/// Everything a single replicate needs, resolved and validated.
struct ExperimentSetup {
  TestProblem problem;
  MethodPair pair;
  int n_steps = 0;
  double t_end = 0.0;
};

inline ExperimentSetup resolve(const ExperimentConfig& cfg) {
  if (!(cfg.tau > 1.0)) throw ConfigError("tau must be > 1");
  TestProblem problem = problem_by_id(cfg.problem);
  MethodPair pair = pair_by_id(cfg.pair, cfg.tau);
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be > 0");
  if (cfg.reps < 1) throw ConfigError("reps must be >= 1");
  if (cfg.stride < 1) throw ConfigError("stride must be >= 1");
  if (!(cfg.noise >= 0.0)) throw ConfigError("noise must be >= 0");
  if (!(cfg.likelihood_stddev() > 0.0)) throw ConfigError("sigma must be > 0");
  if (cfg.gamma_floor < 0.0) throw ConfigError("floor must be >= 0");
  const double t_end = cfg.tend.value_or(problem.t_end);
  const double span = (t_end - problem.t_start) / cfg.dt;
  const double n = std::round(span);
  if (n < 1 || std::abs(span - n) > 1e-9) {
    throw ConfigError("time span " + detail::fmt_short(t_end - problem.t_start) +
                      " is not an integral multiple of dt=" + detail::fmt_short(cfg.dt));
  }
  if (static_cast<int>(n) < cfg.stride) throw ConfigError("stride exceeds the number of steps");
  problem.t_end = t_end;
  return {std::move(problem), std::move(pair), static_cast<int>(n), t_end};
}

inline std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
  return derive_seed(seed, {static_cast<std::uint64_t>(replicate)});
}

/// One replicate end to end: synthetic data, filter, diagnostics.
inline RunDiagnostics run_replicate(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                                    int replicate) {
  const std::uint64_t seed = replicate_seed(cfg.seed, replicate);
  const TestProblem& problem = setup.problem;

  std::vector<double> times;
  for (int j = cfg.stride; j <= setup.n_steps; j += cfg.stride) {
    times.push_back(problem.t_start + j * cfg.dt);
  }
  RandomStream obs_rng(derive_seed(seed, {0x0b5e}));
  const auto observations =
      synthesize_observations(problem, times, cfg.noise, obs_rng, {}, cfg.stride, cfg.stride);

  const double s2 = cfg.likelihood_stddev() * cfg.likelihood_stddev();
  EvolutionObservationModel model(problem.system, setup.pair, {},
                                  Vector(problem.system.dimension(), s2), cfg.gamma_floor);
  FilterConfig fc;
  fc.n_particles = cfg.nsample;
  fc.initial_variance = cfg.v0;
  fc.step = cfg.dt;
  fc.observation_stride = cfg.stride;
  fc.resampler = cfg.resampler;
  fc.seed = seed;
  const auto run = run_filter(fc, model, observations, problem.initial_state, problem.t_start);
  return diagnostics(run, *problem.exact_solution);
}

inline std::string run_label(const ExperimentConfig& cfg, int replicate) {
  return cfg.problem + "_" + cfg.pair + "_V" + detail::fmt_short(cfg.v0) + "_rep" +
         std::to_string(replicate);
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const ExperimentSetup setup = resolve(cfg);
  ExperimentResult out;
  ResultsRow& row = out.row;
  row.problem = cfg.problem;
  row.pair = setup.pair.id();
  row.v0 = cfg.v0;
  row.t_end = setup.t_end;
  row.replicates = cfg.reps;
  row.err_lo = row.var_lo = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.reps; ++r) {
    RunDiagnostics d = run_replicate(cfg, setup, r);
    row.err_inf += d.error_inf_norm;
    row.var_2norm += d.variance_2norm;
    row.err_lo = std::min(row.err_lo, d.error_inf_norm);
    row.err_hi = std::max(row.err_hi, d.error_inf_norm);
    row.var_lo = std::min(row.var_lo, d.variance_2norm);
    row.var_hi = std::max(row.var_hi, d.variance_2norm);
    out.runs.push_back({run_label(cfg, r), std::move(d)});
  }
  row.err_inf /= cfg.reps;
  row.var_2norm /= cfg.reps;
  return out;
}

struct SweepResult {
  ResultsTable table;
  std::vector<LabeledRun> runs;
};

/// Every (pair, V) cell with the same base seed, so cells share observation
/// noise replicate by replicate. Rows sorted by pair, then V descending.
inline SweepResult run_sweep(const ExperimentConfig& base, const std::vector<std::string>& pairs,
                             const std::vector<double>& v_values) {
  if (pairs.empty() || v_values.empty()) throw ConfigError("sweep: empty pair or V list");
  for (const auto& p : pairs) (void)pair_by_id(p);
  SweepResult out;
  for (const auto& p : pairs) {
    for (double v : v_values) {
      ExperimentConfig cfg = base;
      cfg.pair = p;
      cfg.v0 = v;
      ExperimentResult r = run_experiment(cfg);
      out.table.rows.push_back(r.row);
      for (auto& run : r.runs) out.runs.push_back(std::move(run));
    }
  }
  std::stable_sort(out.table.rows.begin(), out.table.rows.end(),
                   [](const ResultsRow& a, const ResultsRow& b) {
                     if (a.pair != b.pair) return a.pair < b.pair;
                     return a.v0 > b.v0;
                   });
  return out;
}

// ---------------------------------------------------------------------------
// Output files

inline constexpr const char* kTableHeader = "pair,V,err_inf,var_2norm,err_band_lo,err_band_hi";

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

inline void close_checked(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string component_header(const char* name, std::size_t d, std::size_t i) {
  return d == 1 ? std::string(name) : std::string(name) + "_" + std::to_string(i);
}

}  // namespace detail

inline void write_table_csv(const ResultsTable& table, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  out << kTableHeader << '\n';
  for (const auto& r : table.rows) {
    out << r.pair << ',' << detail::fmt_double(r.v0) << ',' << detail::fmt_double(r.err_inf) << ','
        << detail::fmt_double(r.var_2norm) << ',' << detail::fmt_double(r.err_lo) << ','
        << detail::fmt_double(r.err_hi) << '\n';
  }
  detail::close_checked(out, path);
}

inline void write_trajectory_csv(const RunDiagnostics& d, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  const std::size_t dim = d.ensemble_means.empty() ? 1 : d.ensemble_means.front().size();
  out << 't';
  for (const char* name : {"mean", "exact", "abs_error", "variance"}) {
    for (std::size_t i = 0; i < dim; ++i) out << ',' << detail::component_header(name, dim, i);
  }
  out << '\n';
  for (std::size_t j = 0; j < d.times.size(); ++j) {
    out << detail::fmt_double(d.times[j]);
    for (const auto* series :
         {&d.ensemble_means, &d.exact_values, &d.absolute_errors, &d.sample_variances}) {
      for (double x : (*series)[j]) out << ',' << detail::fmt_double(x);
    }
    out << '\n';
  }
  detail::close_checked(out, path);
}

/// Reads a trajectory.csv back; norms are recomputed from the columns.
inline RunDiagnostics read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty file");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (columns == 0 || columns % 4 != 0) throw Error(path.string() + ": malformed header");
  const std::size_t dim = columns / 4;
  RunDiagnostics d;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() != columns + 1) throw Error(path.string() + ": malformed row");
    d.times.push_back(cells[0]);
    const auto slice = [&](std::size_t k) {
      return Vector(cells.begin() + 1 + static_cast<std::ptrdiff_t>(k * dim),
                    cells.begin() + 1 + static_cast<std::ptrdiff_t>((k + 1) * dim));
    };
    d.ensemble_means.push_back(slice(0));
    d.exact_values.push_back(slice(1));
    d.absolute_errors.push_back(slice(2));
    d.sample_variances.push_back(slice(3));
  }
  d.error_inf_norm = error_inf_norm(d.absolute_errors);
  d.variance_2norm = variance_2norm(d.sample_variances);
  return d;
}

/// Static SVG line plot: computed (black), exact (blue) and absolute error
/// (red) for component 0.
inline void write_plot_svg(const RunDiagnostics& d, const std::string& title,
                           const std::filesystem::path& path) {
  constexpr double W = 640, H = 420, L = 60, R = 20, T = 40, B = 50;
  const auto pick = [](const std::vector<Vector>& s) {
    Vector v;
    for (const auto& x : s) v.push_back(x.empty() ? 0.0 : x[0]);
    return v;
  };
  const Vector mean = pick(d.ensemble_means), exact = pick(d.exact_values),
               err = pick(d.absolute_errors);
  double t0 = 0, t1 = 1, y0 = 0, y1 = 1;
  if (!d.times.empty()) {
    t0 = d.times.front();
    t1 = d.times.back();
    y0 = y1 = mean.front();
    for (const Vector* s : {&mean, &exact, &err}) {
      for (double v : *s) {
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
      }
    }
  }
  if (t1 <= t0) t1 = t0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const auto px = [&](double t) { return L + (t - t0) / (t1 - t0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  const auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return std::string(buf);
  };

  auto out = detail::open_for_write(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double t = t0 + (t1 - t0) * k / 5.0;
    const double y = y0 + (y1 - y0) * k / 5.0;
    out << "<text x=\"" << num(px(t)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
        << num(t) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\">"
        << num(y) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\">t</text>\n";
  const auto polyline = [&](const Vector& ys, const char* colour) {
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < ys.size(); ++j) {
      out << (j ? " " : "") << num(px(d.times[j])) << ',' << num(py(ys[j]));
    }
    out << "\"/>\n";
  };
  polyline(exact, "blue");
  polyline(mean, "black");
  polyline(err, "red");
  const char* names[] = {"computed", "exact", "absolute error"};
  const char* colours[] = {"black", "blue", "red"};
  for (int k = 0; k < 3; ++k) {
    const double y = T + 10 + 16 * k;
    out << "<line x1=\"" << W - R - 150 << "\" y1=\"" << y << "\" x2=\"" << W - R - 125
        << "\" y2=\"" << y << "\" stroke=\"" << colours[k] << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R - 118 << "\" y=\"" << y + 4 << "\">" << names[k] << "</text>\n";
  }
  out << "</svg>\n";
  detail::close_checked(out, path);
}

/// Writes table.csv plus a trajectory.csv / plot.svg pair per run (in a
/// subdirectory named after the run label). Returns the written paths.
inline std::vector<std::filesystem::path> emit_outputs(const ResultsTable& table,
                                                       const std::vector<LabeledRun>& runs,
                                                       const std::filesystem::path& output_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw Error("cannot create " + output_dir.string() + ": " + ec.message());
  std::vector<fs::path> manifest;
  manifest.push_back(output_dir / "table.csv");
  write_table_csv(table, manifest.back());
  for (const auto& run : runs) {
    const fs::path dir = output_dir / run.label;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
    manifest.push_back(dir / "trajectory.csv");
    write_trajectory_csv(run.diagnostics, manifest.back());
    manifest.push_back(dir / "plot.svg");
    write_plot_svg(run.diagnostics, run.label, manifest.back());
  }
  return manifest;
}

}  // namespace lmmpf

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lmmpf/experiment.hpp"
#include "oracles.hpp"

using namespace lmmpf;
namespace fs = std::filesystem;

namespace {

ExperimentConfig quick(const std::string& pair = "AB1-AB2") {
  ExperimentConfig cfg;
  cfg.pair = pair;
  cfg.nsample = 20;
  cfg.reps = 1;
  cfg.tend = 1.0;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lmmpf_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool close12(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

TEST(Config, DefaultsAndParsing) {
  const ExperimentConfig d;
  EXPECT_EQ(d.nsample, 150u);
  EXPECT_EQ(d.v0, 0.1);
  EXPECT_EQ(d.dt, 0.1);
  EXPECT_EQ(d.reps, 10);

  std::istringstream in("# comment\n pair = AM3-AM4 \nnsample=40\nv0=0.001 # trailing\n\n"
                        "tend=2\nstride=2\nnoise=0.05\nsigma=0.1\ntau=2\nfloor=0\nseed=9\nreps=3\n"
                        "resampler=systematic\noutdir=/tmp/x\nproblem=smooth\ndt=0.05\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.pair, "AM3-AM4");
  EXPECT_EQ(c.nsample, 40u);
  EXPECT_EQ(c.v0, 0.001);
  EXPECT_EQ(*c.tend, 2.0);
  EXPECT_EQ(c.stride, 2);
  EXPECT_EQ(c.noise, 0.05);
  EXPECT_EQ(c.likelihood_stddev(), 0.1);
  EXPECT_EQ(c.tau, 2.0);
  EXPECT_EQ(c.gamma_floor, 0.0);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.reps, 3);
  EXPECT_EQ(c.resampler, Resampler::Systematic);
  EXPECT_EQ(c.outdir, "/tmp/x");
  EXPECT_EQ(c.problem, "smooth");
  EXPECT_EQ(c.dt, 0.05);
}

TEST(Config, Errors) {
  std::istringstream unknown("colour=red\n");
  EXPECT_THROW(parse_config(unknown), ConfigError);
  std::istringstream no_eq("pair AB1-AB2\n");
  EXPECT_THROW(parse_config(no_eq), ConfigError);
  std::istringstream bad_num("nsample=12x\n");
  EXPECT_THROW(parse_config(bad_num), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/lmmpf.cfg"), ConfigError);

  auto cfg = quick();
  cfg.pair = "AB9-AB10";
  try {
    run_experiment(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("RK4-RK5"), std::string::npos);
  }
  cfg = quick();
  cfg.problem = "lorenz";
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  cfg = quick();
  cfg.dt = 0.3;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  cfg = quick();
  cfg.tau = 1.0;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  cfg = quick();
  cfg.stride = 11;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
}

TEST(RunExperiment, RowAggregatesReplicates) {
  auto cfg = quick();
  cfg.reps = 3;
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.runs.size(), 3u);
  EXPECT_EQ(r.runs[1].label, "gaussian_decay_AB1-AB2_V0.1_rep1");
  double err = 0, lo = 1e300, hi = 0;
  for (const auto& run : r.runs) {
    err += run.diagnostics.error_inf_norm;
    lo = std::min(lo, run.diagnostics.error_inf_norm);
    hi = std::max(hi, run.diagnostics.error_inf_norm);
    EXPECT_EQ(run.diagnostics.times.size(), 10u);
  }
  EXPECT_NEAR(r.row.err_inf, err / 3, 1e-15);
  EXPECT_EQ(r.row.err_lo, lo);
  EXPECT_EQ(r.row.err_hi, hi);
  EXPECT_LE(r.row.var_lo, r.row.var_2norm);
  EXPECT_GE(r.row.var_hi, r.row.var_2norm);
  EXPECT_EQ(r.row.replicates, 3);
  EXPECT_DOUBLE_EQ(r.row.t_end, 1.0);
}

TEST(RunExperiment, StrideThinsObservationsNotOutput) {
  auto cfg = quick("AM1-AM2");
  cfg.stride = 5;
  const auto r = run_experiment(cfg);
  EXPECT_EQ(r.runs[0].diagnostics.times.size(), 10u);
}

// With a prior point mass the predictors must be backward-Euler steps of the
// previous ensemble members.
TEST(RunExperiment, BackwardEulerPredictors) {
  const auto problem = gaussian_decay_problem();
  const EvolutionObservationModel model(problem.system, pair_by_id("BDF1-BDF2"), {}, {1e-12}, 0.0);
  FilterConfig fc;
  fc.n_particles = 2;
  fc.initial_variance = 1e-12;
  fc.seed = 5;
  std::vector<double> times;
  for (int j = 1; j <= 50; ++j) times.push_back(0.1 * j);
  RandomStream rng(1);
  const auto obs = synthesize_observations(problem, times, 0.0, rng);
  const auto run = run_filter(fc, model, obs, {1.0});

  const auto be = [&](double t, double u) { return u / (1.0 + 0.1 * 2.0 * (t + 0.1 - 1.0)); };
  double prev[2] = {1.0, 1.0};  // prior mean
  double t = 0.0;
  for (const auto& e : run) {
    for (const auto& p : e.particles) {
      ASSERT_TRUE(p.predictor.has_value());
      const double x = p.predictor->newest()[0];
      const double gap = std::min(std::abs(x - be(t, prev[0])), std::abs(x - be(t, prev[1])));
      EXPECT_LT(gap, t == 0.0 ? 1e-5 : 1e-8) << "t=" << t;  // the prior draw is only known to ~1e-6
    }
    prev[0] = e.particles[0].state.newest()[0];
    prev[1] = e.particles[1].state.newest()[0];
    t += 0.1;
  }
}

TEST(Sweep, CrossProductOrderingAndDeterminism) {
  auto cfg = quick();
  const std::vector<std::string> pairs{"AM3-AM4", "AB1-AB2", "AM1-AM2", "AB3-AB4"};
  const std::vector<double> vs{0.001, 0.1, 0.0001, 0.01};
  const auto a = run_sweep(cfg, pairs, vs);
  ASSERT_EQ(a.table.rows.size(), 16u);
  EXPECT_EQ(a.runs.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto& r = a.table.rows[i];
    EXPECT_EQ(r.pair, (std::vector<std::string>{"AB1-AB2", "AB3-AB4", "AM1-AM2", "AM3-AM4"})[i / 4]);
    EXPECT_EQ(r.v0, (std::vector<double>{0.1, 0.01, 0.001, 0.0001})[i % 4]);
  }
  const auto b = run_sweep(cfg, pairs, vs);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(a.table.rows[i].err_inf, b.table.rows[i].err_inf);
    EXPECT_EQ(a.table.rows[i].var_2norm, b.table.rows[i].var_2norm);
  }
  ASSERT_NE(a.table.find("AM1-AM2", 0.01), nullptr);
  EXPECT_EQ(a.table.find("AM1-AM2", 0.5), nullptr);
  EXPECT_THROW(run_sweep(cfg, {}, vs), ConfigError);
  EXPECT_THROW(run_sweep(cfg, {"AB1-AB3"}, vs), ConfigError);
}

TEST(Sweep, RungeKuttaRowsCarryHorizon) {
  auto cfg = quick();
  cfg.tend = 10.0;
  const auto s = run_sweep(cfg, {"RK1-RK2", "RK4-RK5"}, {0.0001});
  ASSERT_EQ(s.table.rows.size(), 2u);
  for (const auto& r : s.table.rows) EXPECT_DOUBLE_EQ(r.t_end, 10.0);
  EXPECT_EQ(s.runs[0].diagnostics.times.size(), 100u);
}

TEST(EmitOutputs, ManifestCounts) {
  const fs::path dir = scratch("manifest");
  const auto only_table = emit_outputs(ResultsTable{}, {}, dir / "empty");
  ASSERT_EQ(only_table.size(), 1u);
  EXPECT_EQ(only_table[0].filename(), "table.csv");
  EXPECT_EQ(slurp(only_table[0]), std::string(kTableHeader) + "\n");

  const auto r = run_experiment(quick());
  const auto one = emit_outputs(ResultsTable{{r.row}}, r.runs, dir / "one");
  ASSERT_EQ(one.size(), 3u);
  for (const auto& p : one) EXPECT_TRUE(fs::exists(p)) << p;
  EXPECT_NE(slurp(one[2]).find("<svg"), std::string::npos);
  fs::remove_all(dir);
}

TEST(EmitOutputs, TrajectoryRoundTrip) {
  const fs::path dir = scratch("roundtrip");
  auto cfg = quick("AB3-AB4");
  const auto r = run_experiment(cfg);
  const auto files = emit_outputs(ResultsTable{{r.row}}, r.runs, dir);
  const auto back = read_trajectory_csv(files[1]);
  const auto& d = r.runs[0].diagnostics;
  ASSERT_EQ(back.times.size(), d.times.size());
  for (std::size_t j = 0; j < d.times.size(); ++j) {
    EXPECT_TRUE(close12(back.times[j], d.times[j]));
    EXPECT_TRUE(close12(back.ensemble_means[j][0], d.ensemble_means[j][0]));
    EXPECT_TRUE(close12(back.exact_values[j][0], d.exact_values[j][0]));
    EXPECT_TRUE(close12(back.absolute_errors[j][0], d.absolute_errors[j][0]));
    EXPECT_TRUE(close12(back.sample_variances[j][0], d.sample_variances[j][0]));
  }
  EXPECT_TRUE(close12(back.error_inf_norm, d.error_inf_norm));
  EXPECT_TRUE(close12(back.variance_2norm, d.variance_2norm));

  std::istringstream table(slurp(files[0]));
  std::string header, row;
  std::getline(table, header);
  std::getline(table, row);
  EXPECT_EQ(header, "pair,V,err_inf,var_2norm,err_band_lo,err_band_hi");
  EXPECT_EQ(row.substr(0, row.find(',')), "AB3-AB4");
  EXPECT_TRUE(close12(std::stod(row.substr(row.find(',', row.find(',') + 1) + 1)), r.row.err_inf));
  fs::remove_all(dir);
}

TEST(EmitOutputs, MultiComponentHeader) {
  RunDiagnostics d;
  d.times = {0.1};
  d.ensemble_means = {{1.0, 2.0}};
  d.exact_values = {{1.0, 2.5}};
  d.absolute_errors = {{0.0, 0.5}};
  d.sample_variances = {{0.1, 0.2}};
  const fs::path dir = scratch("multi");
  fs::create_directories(dir);
  write_trajectory_csv(d, dir / "t.csv");
  const std::string text = slurp(dir / "t.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,mean_0,mean_1,exact_0,exact_1,abs_error_0,abs_error_1,variance_0,variance_1");
  const auto back = read_trajectory_csv(dir / "t.csv");
  EXPECT_EQ(back.exact_values[0], (Vector{1.0, 2.5}));
  EXPECT_DOUBLE_EQ(back.error_inf_norm, 0.5);
  fs::remove_all(dir);
}

TEST(EmitOutputs, ByteIdenticalReplay) {
  const fs::path a = scratch("replay_a"), b = scratch("replay_b");
  auto cfg = quick("BDF1-BDF2");
  cfg.reps = 2;
  const auto ra = run_experiment(cfg);
  const auto rb = run_experiment(cfg);
  const auto ma = emit_outputs(ResultsTable{{ra.row}}, ra.runs, a);
  const auto mb = emit_outputs(ResultsTable{{rb.row}}, rb.runs, b);
  ASSERT_EQ(ma.size(), mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) {
    EXPECT_EQ(fs::relative(ma[i], a), fs::relative(mb[i], b));
    EXPECT_EQ(slurp(ma[i]), slurp(mb[i])) << ma[i];
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(EmitOutputs, UnwritableDirectoryNamesPath) {
  try {
    emit_outputs(ResultsTable{}, {}, "/proc/lmmpf_no_such_dir");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/proc/lmmpf_no_such_dir"), std::string::npos);
  }
}

// Filters noisy observations of x' = -2(t-1)x with the AM1-AM2 pair and
// prints the ensemble mean next to the exact solution.

#include <cstdio>

#include "lmmpf/lmmpf.hpp"

int main() {
  using namespace lmmpf;

  const TestProblem problem = gaussian_decay_problem();

  std::vector<double> times;
  for (int j = 1; j <= 50; ++j) times.push_back(0.1 * j);
  RandomStream noise(2024);
  const auto observations = synthesize_observations(problem, times, 0.01, noise);

  EvolutionObservationModel model(problem.system, pair_by_id("AM1-AM2"), {}, {1e-4});
  FilterConfig config;
  config.n_particles = 150;
  config.initial_variance = 0.01;
  config.step = 0.1;
  config.seed = 7;

  const auto run = run_filter(config, model, observations, problem.initial_state);
  for (const auto& ens : run) {
    const double mean = ensemble_mean(ens)[0];
    const double exact = (*problem.exact_solution)(ens.time)[0];
    std::printf("t=%.1f  mean=%.6f  exact=%.6f  var=%.3g\n", ens.time, mean, exact,
                sample_variance(ens)[0]);
  }
}

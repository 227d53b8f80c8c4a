#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lmmpf/common.hpp"
#include "lmmpf/ode_models.hpp"
#include "lmmpf/random.hpp"
#include "lmmpf/state_space.hpp"

namespace lmmpf {

enum class Resampler { Multinomial, Systematic };

struct Particle {
  AugmentedState state;
  double weight = 0.0;
  std::optional<AugmentedState> predictor;
};

struct Ensemble {
  std::vector<Particle> particles;
  int time_index = 0;
  double time = 0.0;

  std::size_t size() const { return particles.size(); }

  Vector weights() const {
    Vector w;
    w.reserve(particles.size());
    for (const auto& p : particles) w.push_back(p.weight);
    return w;
  }
};

struct FilterConfig {
  std::size_t n_particles = 150;
  double initial_variance = 0.1;
  double step = 0.1;
  int observation_stride = 1;
  Resampler resampler = Resampler::Multinomial;
  std::uint64_t seed = 0;
  ImplicitSolveConfig solve;

  void validate() const {
    if (n_particles < 2) throw ConfigError("FilterConfig: need at least 2 particles");
    if (!(initial_variance > 0.0)) throw ConfigError("FilterConfig: initial variance must be > 0");
    if (!(step > 0.0)) throw ConfigError("FilterConfig: step must be > 0");
    if (observation_stride < 1) throw ConfigError("FilterConfig: observation stride must be >= 1");
    solve.validate();
  }
};

// Substream tags; every random draw in a run comes from
// derive_seed(seed, {tag, step}).
enum class StreamTag : std::uint64_t { Initialize = 0, Resample = 1, Innovation = 2 };

inline RandomStream substream(std::uint64_t seed, StreamTag tag, std::uint64_t step = 0) {
  return RandomStream(derive_seed(seed, {static_cast<std::uint64_t>(tag), step}));
}

/// Turns log-weights into normalized weights via log-sum-exp.
inline Vector normalize_log_weights(const Vector& log_w) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_w) {
    if (std::isnan(v)) throw Error("normalize_log_weights: NaN log-weight");
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) {
    throw Error("likelihood underflow; observation inconsistent with ensemble");
  }
  Vector w(log_w.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_w[i] - mx);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

/// Draws `count` ancestor indices with P(index = k) = weights[k]. `weights`
/// must be normalized.
inline std::vector<std::size_t> resample_indices(const Vector& weights, std::size_t count,
                                                 Resampler kind, RandomStream& rng) {
  if (weights.empty()) throw Error("resample_indices: empty weight vector");
  Vector cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw Error("resample_indices: negative weight");
    acc += weights[i];
    cdf[i] = acc;
  }
  const auto locate = [&](double u) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u * acc);
    // Guards u * acc == acc after rounding; never lands on a zero-weight tail.
    if (it == cdf.end()) {
      std::size_t k = cdf.size() - 1;
      while (k > 0 && weights[k] == 0.0) --k;
      return k;
    }
    return static_cast<std::size_t>(it - cdf.begin());
  };
  std::vector<std::size_t> out(count);
  if (kind == Resampler::Multinomial) {
    for (auto& idx : out) idx = locate(rng.uniform());
  } else {
    const double n = static_cast<double>(count);
    const double u0 = rng.uniform() / n;
    for (std::size_t k = 0; k < count; ++k) out[k] = locate(u0 + static_cast<double>(k) / n);
  }
  return out;
}

/// Draws the prior sample: newest block ~ N(prior_mean, V0 I), lagged blocks
/// integrated backwards from it, uniform weights.
inline Ensemble initialize(const FilterConfig& config, const EvolutionObservationModel& model,
                           const Vector& prior_mean, double t0, RandomStream& rng) {
  config.validate();
  if (prior_mean.size() != model.system.dimension()) {
    throw Error("initialize: prior mean has wrong dimension");
  }
  const double sd = std::sqrt(config.initial_variance);
  const double w = 1.0 / static_cast<double>(config.n_particles);
  Ensemble ens;
  ens.time_index = 0;
  ens.time = t0;
  ens.particles.reserve(config.n_particles);
  for (std::size_t n = 0; n < config.n_particles; ++n) {
    Vector u = prior_mean;
    for (double& v : u) {
      const double z = rng.normal();
      v += sd * z;
    }
    HistoryBuffer hist = backfill_history(model.depth(), model.system, u, t0, config.step);
    ens.particles.push_back({augment(hist, 0), w, std::nullopt});
  }
  return ens;
}

/// Predictors x̄ = Psi(x) and their HOMEC covariances, one per particle.
inline std::vector<Prediction> propagate_ensemble(const Ensemble& ensemble,
                                                  const EvolutionObservationModel& model, double h,
                                                  const ImplicitSolveConfig& solve = {}) {
  std::vector<Prediction> out;
  out.reserve(ensemble.size());
  for (const auto& p : ensemble.particles) out.push_back(propagate(model, p.state, h, solve));
  return out;
}

struct SurvivalResult {
  Ensemble ensemble;                    // states x_j^{l_n}, predictor set, weights 1/N
  std::vector<Prediction> predictions;  // reshuffled alongside
  std::vector<std::size_t> ancestors;   // l_n
  Vector fitness;                       // normalized g^n before resampling
};

/// Fitness g^n ∝ w^n pi(y | x̄^n), then N ancestors drawn with replacement
/// and states/predictors reshuffled by them.
inline SurvivalResult survival_of_the_fittest(const Ensemble& ensemble,
                                              const std::vector<Prediction>& predictions,
                                              const ObservationRecord& observation,
                                              const EvolutionObservationModel& model,
                                              Resampler resampler, RandomStream& rng) {
  const std::size_t n = ensemble.size();
  if (predictions.size() != n) throw Error("survival_of_the_fittest: predictors not aligned");
  Vector log_g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = ensemble.particles[i].weight;
    log_g[i] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) +
               log_likelihood(model, observation.value, predictions[i].predictor);
  }
  SurvivalResult out;
  out.fitness = normalize_log_weights(log_g);
  out.ancestors = resample_indices(out.fitness, n, resampler, rng);
  out.ensemble.time_index = ensemble.time_index;
  out.ensemble.time = ensemble.time;
  out.ensemble.particles.reserve(n);
  out.predictions.reserve(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t l : out.ancestors) {
    out.ensemble.particles.push_back({ensemble.particles[l].state, w, predictions[l].predictor});
    out.predictions.push_back(predictions[l]);
  }
  return out;
}

/// One innovation vector per particle, drawn in particle order.
inline std::vector<Vector> draw_innovations(const std::vector<Prediction>& predictions,
                                            RandomStream& rng) {
  std::vector<Vector> v;
  v.reserve(predictions.size());
  for (const auto& p : predictions) v.push_back(sample_innovation(p.gamma, rng));
  return v;
}

/// x_{j+1}^n = x̄_{j+1}^n + v^n; weights are carried over.
inline Ensemble apply_innovations(const Ensemble& ensemble, const std::vector<Prediction>& predictions,
                                  const std::vector<Vector>& innovations) {
  const std::size_t n = ensemble.size();
  if (predictions.size() != n || innovations.size() != n) {
    throw Error("apply_innovations: lists not aligned");
  }
  Ensemble out;
  out.particles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.particles.push_back({apply_innovation(predictions[i].predictor, innovations[i]),
                             ensemble.particles[i].weight, predictions[i].predictor});
  }
  out.time_index = n ? out.particles.front().state.time_index : ensemble.time_index + 1;
  out.time = n ? out.particles.front().state.time : ensemble.time;
  return out;
}

inline Ensemble innovation_step(const Ensemble& ensemble, const std::vector<Prediction>& predictions,
                                RandomStream& rng) {
  return apply_innovations(ensemble, predictions, draw_innovations(predictions, rng));
}

/// w^n ∝ pi(y | x^n) / pi(y | x̄^n), evaluated as a log difference.
inline Ensemble weight_update(const Ensemble& ensemble, const std::vector<Prediction>& predictions,
                              const ObservationRecord& observation,
                              const EvolutionObservationModel& model) {
  const std::size_t n = ensemble.size();
  if (predictions.size() != n) throw Error("weight_update: predictors not aligned");
  Vector log_w(n);
  for (std::size_t i = 0; i < n; ++i) {
    log_w[i] = log_likelihood(model, observation.value, ensemble.particles[i].state) -
               log_likelihood(model, observation.value, predictions[i].predictor);
  }
  const Vector w = normalize_log_weights(log_w);
  Ensemble out = ensemble;
  for (std::size_t i = 0; i < n; ++i) out.particles[i].weight = w[i];
  return out;
}

namespace detail {

// Maps each observation to its step index on the grid t0 + j h and checks
// the spacing against the stride.
inline std::vector<int> observation_steps(const std::vector<ObservationRecord>& observations,
                                          double t0, double h, int stride) {
  if (observations.empty()) throw ConfigError("run_filter: no observations");
  std::vector<int> steps;
  steps.reserve(observations.size());
  int prev = 0;
  for (const auto& obs : observations) {
    const double k = (obs.time - t0) / h;
    const double kr = std::round(k);
    if (std::abs(k - kr) > 1e-9 * std::max(1.0, std::abs(k))) {
      throw ConfigError("run_filter: observation time " + std::to_string(obs.time) +
                        " is not on the integration grid (step " + std::to_string(h) + ")");
    }
    const int j = static_cast<int>(kr);
    if (j - prev != stride) {
      throw ConfigError("run_filter: observation at t=" + std::to_string(obs.time) +
                        " does not match observation stride " + std::to_string(stride));
    }
    steps.push_back(j);
    prev = j;
  }
  return steps;
}

}  // namespace detail

/// Full filtering loop. Returns S_1, ..., S_T, one ensemble per integration
/// step up to the last observation. Between observation instants only
/// propagation and innovation run.
///
/// Random draws: the prior sample comes from substream (Initialize, 0);
/// at step j resampling uses (Resample, j) and innovations use
/// (Innovation, j), in particle order.
inline std::vector<Ensemble> run_filter(const FilterConfig& config,
                                        const EvolutionObservationModel& model,
                                        const std::vector<ObservationRecord>& observations,
                                        const Vector& prior_mean, double t0 = 0.0) {
  config.validate();
  const double h = config.step;
  const std::vector<int> obs_steps =
      detail::observation_steps(observations, t0, h, config.observation_stride);

  RandomStream init_rng = substream(config.seed, StreamTag::Initialize);
  Ensemble current = initialize(config, model, prior_mean, t0, init_rng);

  std::vector<Ensemble> out;
  out.reserve(static_cast<std::size_t>(obs_steps.back()));
  std::size_t next_obs = 0;
  for (int j = 1; j <= obs_steps.back(); ++j) {
    std::vector<Prediction> preds = propagate_ensemble(current, model, h, config.solve);
    const auto step = static_cast<std::uint64_t>(j);
    RandomStream innovation_rng = substream(config.seed, StreamTag::Innovation, step);
    if (obs_steps[next_obs] == j) {
      const ObservationRecord& obs = observations[next_obs++];
      RandomStream resample_rng = substream(config.seed, StreamTag::Resample, step);
      SurvivalResult survived =
          survival_of_the_fittest(current, preds, obs, model, config.resampler, resample_rng);
      Ensemble innovated = innovation_step(survived.ensemble, survived.predictions, innovation_rng);
      current = weight_update(innovated, survived.predictions, obs, model);
    } else {
      current = innovation_step(current, preds, innovation_rng);
    }
    current.time_index = j;
    current.time = t0 + j * h;
    for (auto& p : current.particles) {
      p.state.time_index = j;
      p.state.time = current.time;
    }
    out.push_back(current);
  }
  return out;
}

}  // namespace lmmpf

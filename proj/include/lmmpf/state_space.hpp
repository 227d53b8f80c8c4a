#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "lmmpf/common.hpp"
#include "lmmpf/homec.hpp"
#include "lmmpf/integrators.hpp"
#include "lmmpf/ode_models.hpp"
#include "lmmpf/random.hpp"

namespace lmmpf {

/// r lagged states stacked newest first, X_j = [U_j, U_{j-1}, ..., U_{j-r+1}],
/// which turns an r-step recursion into a one-step Markov chain.
struct AugmentedState {
  std::vector<Vector> blocks;
  int time_index = 0;
  double time = 0.0;

  const Vector& newest() const { return blocks.front(); }
  Vector& newest() { return blocks.front(); }
  std::size_t depth() const { return blocks.size(); }

  Vector flatten() const {
    Vector flat;
    for (const auto& b : blocks) flat.insert(flat.end(), b.begin(), b.end());
    return flat;
  }

  friend bool operator==(const AugmentedState&, const AugmentedState&) = default;
};

inline AugmentedState augment(const HistoryBuffer& history, int time_index = 0) {
  if (!history.warm()) throw Error("augment: history is not warm");
  return AugmentedState{history.states(), time_index, history.current_time()};
}

/// Inverse of augment: unpacks the blocks into a history buffer spaced h
/// apart, re-evaluating derivatives.
inline HistoryBuffer project_history(const OdeSystem& system, const AugmentedState& x, double h,
                                     std::size_t depth = 0) {
  if (depth == 0) depth = x.depth();
  if (depth > x.depth()) throw Error("project_history: state carries too few blocks");
  std::vector<Vector> blocks(x.blocks.begin(), x.blocks.begin() + static_cast<std::ptrdiff_t>(depth));
  return HistoryBuffer::from_states(system, blocks, x.time, h);
}

/// Diagonal-covariance Gaussian.
struct GaussianDensity {
  Vector mean;
  Vector variance;
};

inline double log_density(const GaussianDensity& g, const Vector& x) {
  detail::require_same_size(g.mean, x, "log_density");
  detail::require_same_size(g.mean, g.variance, "log_density");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s2 = g.variance[i];
    if (!(s2 > 0.0)) throw Error("log_density: nonpositive variance");
    const double r = x[i] - g.mean[i];
    acc += r * r / s2 + std::log(2.0 * std::numbers::pi * s2);
  }
  return -0.5 * acc;
}

/// X_{j+1} = Psi(X_j) + V_{j+1},  V ~ N(0, Gamma_{j+1})
/// Y_j     = G(X_j) + E_j,         E ~ N(0, Sigma)
///
/// Psi advances the newest block with the low-order method of `pair` and
/// shifts the others down; Gamma comes from the pair difference.
struct EvolutionObservationModel {
  OdeSystem system;
  MethodPair pair;
  ObservationMap observation;
  Vector measurement_variance;
  double gamma_floor = 1e-20;

  EvolutionObservationModel(OdeSystem sys, MethodPair method_pair, ObservationMap g,
                            Vector sigma_diag, double floor = 1e-20)
      : system(std::move(sys)),
        pair(std::move(method_pair)),
        observation(std::move(g)),
        measurement_variance(std::move(sigma_diag)),
        gamma_floor(floor) {
    for (double s : measurement_variance) {
      if (!(s > 0.0)) throw Error("EvolutionObservationModel: measurement variance must be > 0");
    }
    if (gamma_floor < 0.0) throw Error("EvolutionObservationModel: negative gamma floor");
  }

  std::size_t depth() const { return pair.history_depth(); }
};

struct Prediction {
  AugmentedState predictor;
  InnovationCovariance gamma;
};

inline Prediction propagate(const EvolutionObservationModel& model, const AugmentedState& x, double h,
                            const ImplicitSolveConfig& solve = {}) {
  const MethodPair& pair = model.pair;
  const auto low_depth = static_cast<std::size_t>(pair.low.steps);
  const auto high_depth = static_cast<std::size_t>(pair.high.steps);
  if (x.depth() < std::max(low_depth, high_depth)) {
    throw Error("propagate: state carries " + std::to_string(x.depth()) + " blocks, pair " +
                pair.id() + " needs " + std::to_string(std::max(low_depth, high_depth)));
  }
  const HistoryBuffer hist_low = project_history(model.system, x, h, low_depth);
  const HistoryBuffer hist_high = project_history(model.system, x, h, high_depth);
  PairStep step = propagate_pair(pair, model.system, hist_low, hist_high, h, solve);

  Prediction out;
  out.gamma = apply_floor(innovation_covariance(step.low, step.high, pair.tau), model.gamma_floor);
  out.predictor.time_index = x.time_index + 1;
  out.predictor.time = x.time + h;
  out.predictor.blocks.reserve(x.depth());
  out.predictor.blocks.push_back(std::move(step.low));
  for (std::size_t i = 0; i + 1 < x.depth(); ++i) out.predictor.blocks.push_back(x.blocks[i]);
  return out;
}

/// Noiseless observation G(X) of the newest block.
inline Vector observe(const EvolutionObservationModel& model, const AugmentedState& x) {
  return model.observation(x.newest());
}

/// log pi(y | x) under the measurement noise law.
inline double log_likelihood(const EvolutionObservationModel& model, const Vector& y,
                             const AugmentedState& x) {
  const Vector gx = observe(model, x);
  if (gx.size() != model.measurement_variance.size()) {
    throw Error("log_likelihood: observation dimension does not match measurement covariance");
  }
  return log_density(GaussianDensity{gx, model.measurement_variance}, y);
}

/// Draws v ~ N(0, diag(gamma)) component by component.
inline Vector sample_innovation(const InnovationCovariance& gamma, RandomStream& rng) {
  Vector v(gamma.dimension());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = rng.normal();
    v[i] = std::sqrt(gamma.diagonal[i]) * z;
  }
  return v;
}

/// Adds v to the newest block; the lagged blocks are left untouched.
inline AugmentedState apply_innovation(AugmentedState x, const Vector& v) {
  detail::require_same_size(x.newest(), v, "apply_innovation");
  detail::axpy(1.0, v, x.newest());
  return x;
}

}  // namespace lmmpf

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lmmpf/common.hpp"
#include "lmmpf/random.hpp"

namespace lmmpf {

/// du/dt = f(t, u, theta) with a fixed, known parameter vector.
class OdeSystem {
 public:
  using Rhs = std::function<Vector(double t, const Vector& u, const Vector& params)>;

  OdeSystem(std::size_t dimension, Vector params, Rhs rhs)
      : dimension_(dimension), params_(std::move(params)), rhs_(std::move(rhs)) {
    if (dimension_ == 0) throw Error("OdeSystem: dimension must be positive");
    if (!rhs_) throw Error("OdeSystem: empty right-hand side");
  }

  std::size_t dimension() const { return dimension_; }
  const Vector& params() const { return params_; }

  Vector operator()(double t, const Vector& u) const {
    if (u.size() != dimension_) throw Error("OdeSystem: state has wrong dimension");
    Vector du = rhs_(t, u, params_);
    if (du.size() != dimension_) throw Error("OdeSystem: rhs returned wrong dimension");
    return du;
  }

 private:
  std::size_t dimension_;
  Vector params_;
  Rhs rhs_;
};

struct TestProblem {
  std::string id;
  OdeSystem system;
  Vector initial_state;
  double t_start = 0.0;
  double t_end = 0.0;
  std::optional<std::function<Vector(double)>> exact_solution;
};

struct ObservationRecord {
  int time_index = 0;
  double time = 0.0;
  Vector value;
};

/// x' = cos^2(x), x(0) = 0 on [0, 5]; exact solution arctan(t).
inline TestProblem smooth_problem() {
  OdeSystem sys(1, {}, [](double, const Vector& u, const Vector&) {
    const double c = std::cos(u[0]);
    return Vector{c * c};
  });
  return TestProblem{"smooth", std::move(sys), {0.0}, 0.0, 5.0,
                     [](double t) { return Vector{std::atan(t)}; }};
}

/// x' = -2(t-1)x, x(0) = 1 on [0, 5]; exact solution exp(-t(t-2)).
inline TestProblem gaussian_decay_problem() {
  OdeSystem sys(1, {}, [](double t, const Vector& u, const Vector&) {
    return Vector{-2.0 * (t - 1.0) * u[0]};
  });
  return TestProblem{"gaussian_decay", std::move(sys), {1.0}, 0.0, 5.0,
                     [](double t) { return Vector{std::exp(-t * (t - 2.0))}; }};
}

inline std::vector<std::string> problem_ids() { return {"smooth", "gaussian_decay"}; }

inline TestProblem problem_by_id(std::string_view id) {
  if (id == "smooth") return smooth_problem();
  if (id == "gaussian_decay") return gaussian_decay_problem();
  std::string valid;
  for (const auto& p : problem_ids()) valid += (valid.empty() ? "" : ", ") + p;
  throw ConfigError("unknown problem '" + std::string(id) + "' (valid: " + valid + ")");
}

/// Observation map applied to the current state. An empty selection means
/// the identity (full-state observation).
struct ObservationMap {
  std::vector<std::size_t> components;

  Vector operator()(const Vector& u) const {
    if (components.empty()) return u;
    Vector y;
    y.reserve(components.size());
    for (std::size_t c : components) {
      if (c >= u.size()) throw Error("ObservationMap: component index out of range");
      y.push_back(u[c]);
    }
    return y;
  }
};

/// b_j = G(x(t_j)) + e_j, e_j ~ N(0, noise_stddev^2) per component. Noise is
/// drawn from `rng` in time order, component order.
inline std::vector<ObservationRecord> synthesize_observations(const TestProblem& problem,
                                                              const std::vector<double>& times,
                                                              double noise_stddev,
                                                              RandomStream& rng,
                                                              const ObservationMap& g = {},
                                                              int first_index = 1,
                                                              int index_stride = 1) {
  if (!problem.exact_solution) throw Error("no ground truth available");
  if (!(noise_stddev >= 0.0)) throw Error("synthesize_observations: negative noise stddev");
  std::vector<ObservationRecord> out;
  out.reserve(times.size());
  int j = first_index;
  for (double t : times) {
    if (t < problem.t_start - 1e-12 || t > problem.t_end + 1e-12) {
      throw Error("synthesize_observations: time " + std::to_string(t) + " outside span");
    }
    Vector y = g((*problem.exact_solution)(t));
    for (double& v : y) {
      const double e = rng.normal();
      v += noise_stddev * e;
    }
    out.push_back({j, t, std::move(y)});
    j += index_stride;
  }
  return out;
}

}  // namespace lmmpf

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lmmpf/common.hpp"
#include "lmmpf/particle_filter.hpp"

namespace lmmpf {

/// Weighted mean of the newest blocks.
inline Vector ensemble_mean(const Ensemble& ensemble) {
  if (ensemble.particles.empty()) throw Error("ensemble_mean: empty ensemble");
  Vector mean(ensemble.particles.front().state.newest().size(), 0.0);
  for (const auto& p : ensemble.particles) detail::axpy(p.weight, p.state.newest(), mean);
  return mean;
}

/// Weighted population variance of the newest blocks, per component.
inline Vector sample_variance(const Ensemble& ensemble) {
  if (ensemble.size() < 2) throw Error("sample_variance: need at least 2 particles");
  const Vector mean = ensemble_mean(ensemble);
  Vector var(mean.size(), 0.0);
  for (const auto& p : ensemble.particles) {
    const Vector& x = p.state.newest();
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double r = x[i] - mean[i];
      var[i] += p.weight * r * r;
    }
  }
  return var;
}

struct RunDiagnostics {
  Vector times;
  std::vector<Vector> ensemble_means;
  std::vector<Vector> exact_values;
  std::vector<Vector> sample_variances;
  std::vector<Vector> absolute_errors;
  double error_inf_norm = 0.0;
  double variance_2norm = 0.0;
};

/// max_j max_i E_j[i]
inline double error_inf_norm(const std::vector<Vector>& errors) {
  double m = 0.0;
  for (const auto& e : errors) m = std::max(m, detail::max_abs(e));
  return m;
}

/// Euclidean norm of all V_j stacked into one vector.
inline double variance_2norm(const std::vector<Vector>& variances) {
  double s = 0.0;
  for (const auto& v : variances) {
    for (double x : v) s += x * x;
  }
  return std::sqrt(s);
}

inline RunDiagnostics diagnostics(const std::vector<Ensemble>& run,
                                  const std::function<Vector(double)>& exact) {
  RunDiagnostics d;
  for (const auto& ens : run) {
    Vector mean = ensemble_mean(ens);
    Vector ex = exact(ens.time);
    detail::require_same_size(mean, ex, "diagnostics");
    Vector err(mean.size());
    for (std::size_t i = 0; i < err.size(); ++i) err[i] = std::abs(mean[i] - ex[i]);
    d.times.push_back(ens.time);
    d.sample_variances.push_back(sample_variance(ens));
    d.ensemble_means.push_back(std::move(mean));
    d.exact_values.push_back(std::move(ex));
    d.absolute_errors.push_back(std::move(err));
  }
  d.error_inf_norm = error_inf_norm(d.absolute_errors);
  d.variance_2norm = variance_2norm(d.sample_variances);
  return d;
}

}  // namespace lmmpf

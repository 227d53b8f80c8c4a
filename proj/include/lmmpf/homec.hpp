#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lmmpf/common.hpp"
#include "lmmpf/integrators.hpp"

namespace lmmpf {

/// Two integrators of adjacent order from one family. For embedded
/// Runge-Kutta pairs `low` and `high` are the same spec and its two weight
/// vectors supply the two orders.
struct MethodPair {
  MethodSpec low;
  MethodSpec high;
  double tau = 1.5;

  MethodPair(MethodSpec low_method, MethodSpec high_method, double tau_value = 1.5)
      : low(std::move(low_method)), high(std::move(high_method)), tau(tau_value) {
    if (low.family != high.family) throw Error("MethodPair: methods from different families");
    if (!(tau > 1.0)) throw Error("MethodPair: tau must be > 1");
    if (embedded()) {
      if (low.embedded_order < low.order + 1) throw Error("MethodPair: embedded order too low");
    } else if (high.order < low.order + 1) {
      throw Error("MethodPair: high order must exceed low order");
    }
  }

  bool embedded() const { return low.family == MethodFamily::RungeKuttaEmbedded; }
  int low_order() const { return low.order; }
  int high_order() const { return embedded() ? low.embedded_order : high.order; }

  /// Number of lagged states a particle must carry so both methods can be
  /// restarted from it.
  std::size_t history_depth() const {
    return static_cast<std::size_t>(std::max(low.steps, high.steps));
  }

  std::string id() const {
    return std::string(family_prefix(low.family)) + std::to_string(low_order()) + "-" +
           family_prefix(low.family) + std::to_string(high_order());
  }
};

inline std::vector<std::string> pair_ids() {
  return {"AB1-AB2", "AB3-AB4", "AM1-AM2", "AM3-AM4", "BDF1-BDF2", "BDF3-BDF4", "RK1-RK2", "RK4-RK5"};
}

inline MethodPair pair_by_id(std::string_view id, double tau = 1.5) {
  struct Entry {
    std::string_view id;
    MethodFamily family;
    int low;
    int high;
  };
  static constexpr Entry kPairs[] = {
      {"AB1-AB2", MethodFamily::AdamsBashforth, 1, 2},
      {"AB3-AB4", MethodFamily::AdamsBashforth, 3, 4},
      {"AM1-AM2", MethodFamily::AdamsMoulton, 1, 2},
      {"AM3-AM4", MethodFamily::AdamsMoulton, 3, 4},
      {"BDF1-BDF2", MethodFamily::BDF, 1, 2},
      {"BDF3-BDF4", MethodFamily::BDF, 3, 4},
      {"RK1-RK2", MethodFamily::RungeKuttaEmbedded, 1, 1},
      {"RK4-RK5", MethodFamily::RungeKuttaEmbedded, 4, 4},
  };
  for (const auto& e : kPairs) {
    if (e.id == id) return MethodPair(make_method(e.family, e.low), make_method(e.family, e.high), tau);
  }
  std::string valid;
  for (const auto& p : pair_ids()) valid += (valid.empty() ? "" : ", ") + p;
  throw ConfigError("unknown method pair '" + std::string(id) + "' (valid: " + valid + ")");
}

struct PairStep {
  Vector low;
  Vector high;
};

/// One step of each method of the pair from its own history. Both histories
/// must end at the same time.
inline PairStep propagate_pair(const MethodPair& pair, const OdeSystem& system,
                               const HistoryBuffer& history_low, const HistoryBuffer& history_high,
                               double h, const ImplicitSolveConfig& solve = {}) {
  if (pair.embedded()) {
    auto s = step_rk_embedded(pair.low, system, history_low.current_time(), history_low.state(0), h);
    return {std::move(s.low), std::move(s.high)};
  }
  if (history_low.current_time() != history_high.current_time()) {
    throw Error("propagate_pair: histories are not aligned in time");
  }
  return {advance(pair.low, system, history_low, h, solve),
          advance(pair.high, system, history_high, h, solve)};
}

/// Diagonal of the innovation covariance, gamma_i >= 0.
struct InnovationCovariance {
  Vector diagonal;

  std::size_t dimension() const { return diagonal.size(); }
};

/// gamma_i = tau^2 (u_low - u_high)_i^2
inline InnovationCovariance innovation_covariance(const Vector& u_low, const Vector& u_high,
                                                  double tau) {
  detail::require_same_size(u_low, u_high, "innovation_covariance");
  if (!(tau > 1.0)) throw Error("innovation_covariance: tau must be > 1");
  InnovationCovariance g{Vector(u_low.size())};
  const double tau2 = tau * tau;
  for (std::size_t i = 0; i < u_low.size(); ++i) {
    const double diff = u_low[i] - u_high[i];
    g.diagonal[i] = tau2 * diff * diff;
  }
  return g;
}

/// Raises every entry to at least `floor`. floor == 0 leaves gamma as is.
inline InnovationCovariance apply_floor(InnovationCovariance g, double floor) {
  if (floor < 0.0) throw Error("apply_floor: negative floor");
  for (double& v : g.diagonal) v = std::max(v, floor);
  return g;
}

}  // namespace lmmpf

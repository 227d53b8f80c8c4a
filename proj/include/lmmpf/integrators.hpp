#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lmmpf/common.hpp"
#include "lmmpf/ode_models.hpp"

namespace lmmpf {

enum class MethodFamily { AdamsBashforth, AdamsMoulton, BDF, RungeKuttaEmbedded };

inline const char* family_prefix(MethodFamily f) {
  switch (f) {
    case MethodFamily::AdamsBashforth: return "AB";
    case MethodFamily::AdamsMoulton: return "AM";
    case MethodFamily::BDF: return "BDF";
    case MethodFamily::RungeKuttaEmbedded: return "RK";
  }
  return "?";
}

/// Explicit Runge-Kutta tableau carrying two embedded weight vectors.
struct ButcherTableau {
  std::vector<Vector> a;  // strictly lower triangular, row i has i entries
  Vector c;
  Vector b_low;
  Vector b_high;
};

/// Identity and coefficients of one integrator.
///
/// Multistep methods are stored in the unified form
///
///   u_{j+1} = sum_i alpha[i] u_{j-i} + h (beta_new f_{j+1} + sum_i beta[i] f_{j-i})
///
/// with i = 0..steps-1. beta_new == 0 for explicit methods. For the
/// Runge-Kutta family `order` is the low order and `embedded_order` the
/// high one; both solutions come out of the same stages.
struct MethodSpec {
  MethodFamily family = MethodFamily::AdamsBashforth;
  int order = 1;
  int steps = 1;
  Vector alpha;
  Vector beta;
  double beta_new = 0.0;
  std::optional<ButcherTableau> tableau;
  int embedded_order = 0;

  bool implicit() const {
    return family == MethodFamily::AdamsMoulton || family == MethodFamily::BDF;
  }

  std::string name() const {
    std::string n = family_prefix(family) + std::to_string(order);
    if (family == MethodFamily::RungeKuttaEmbedded) n += "(" + std::to_string(embedded_order) + ")";
    return n;
  }
};

inline MethodSpec make_method(MethodFamily family, int order) {
  MethodSpec m;
  m.family = family;
  m.order = order;
  const auto unsupported = [&]() {
    return Error("unsupported method " + std::string(family_prefix(family)) +
                 std::to_string(order) +
                 " (supported: AB1-AB4, AM1-AM4, BDF1-BDF4, RK1(2), RK4(5))");
  };
  switch (family) {
    case MethodFamily::AdamsBashforth: {
      static const std::vector<Vector> kBeta = {
          {1.0},
          {3.0 / 2.0, -1.0 / 2.0},
          {23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0},
          {55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0}};
      if (order < 1 || order > 4) throw unsupported();
      m.steps = order;
      m.beta = kBeta[order - 1];
      m.alpha.assign(m.steps, 0.0);
      m.alpha[0] = 1.0;
      break;
    }
    case MethodFamily::AdamsMoulton: {
      // {beta_new, beta...}
      static const std::vector<Vector> kCoef = {
          {1.0, 0.0},
          {1.0 / 2.0, 1.0 / 2.0},
          {5.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0},
          {9.0 / 24.0, 19.0 / 24.0, -5.0 / 24.0, 1.0 / 24.0}};
      if (order < 1 || order > 4) throw unsupported();
      m.steps = std::max(order - 1, 1);
      const Vector& k = kCoef[order - 1];
      m.beta_new = k[0];
      m.beta.assign(k.begin() + 1, k.end());
      m.alpha.assign(m.steps, 0.0);
      m.alpha[0] = 1.0;
      break;
    }
    case MethodFamily::BDF: {
      // {beta_new, alpha...}
      static const std::vector<Vector> kCoef = {
          {1.0, 1.0},
          {2.0 / 3.0, 4.0 / 3.0, -1.0 / 3.0},
          {6.0 / 11.0, 18.0 / 11.0, -9.0 / 11.0, 2.0 / 11.0},
          {12.0 / 25.0, 48.0 / 25.0, -36.0 / 25.0, 16.0 / 25.0, -3.0 / 25.0}};
      if (order < 1 || order > 4) throw unsupported();
      m.steps = order;
      const Vector& k = kCoef[order - 1];
      m.beta_new = k[0];
      m.alpha.assign(k.begin() + 1, k.end());
      m.beta.assign(m.steps, 0.0);
      break;
    }
    case MethodFamily::RungeKuttaEmbedded: {
      ButcherTableau tab;
      if (order == 1) {
        // Heun-Euler
        tab.c = {0.0, 1.0};
        tab.a = {{}, {1.0}};
        tab.b_low = {1.0, 0.0};
        tab.b_high = {0.5, 0.5};
        m.embedded_order = 2;
      } else if (order == 4) {
        // Fehlberg 4(5)
        tab.c = {0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0};
        tab.a = {{},
                 {1.0 / 4.0},
                 {3.0 / 32.0, 9.0 / 32.0},
                 {1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0},
                 {439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0},
                 {-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0}};
        tab.b_low = {25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0};
        tab.b_high = {16.0 / 135.0,        0.0,          6656.0 / 12825.0,
                      28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0};
        m.embedded_order = 5;
      } else {
        throw unsupported();
      }
      m.steps = 1;
      m.alpha = {1.0};
      m.beta = {0.0};
      m.tableau = std::move(tab);
      break;
    }
  }
  return m;
}

/// The most recent states of one trajectory, newest first, with their
/// derivative evaluations and times.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw Error("HistoryBuffer: capacity must be positive");
  }

  /// Builds a buffer from states ordered newest first, spaced h apart and
  /// ending at t_newest. Derivatives are evaluated here.
  static HistoryBuffer from_states(const OdeSystem& system, const std::vector<Vector>& newest_first,
                                   double t_newest, double h) {
    HistoryBuffer buf(newest_first.size());
    for (std::size_t k = newest_first.size(); k-- > 0;) {
      const double t = t_newest - static_cast<double>(k) * h;
      buf.push(t, newest_first[k], system(t, newest_first[k]));
    }
    return buf;
  }

  void push(double t, Vector u, Vector f) {
    entries_.push_front({t, std::move(u), std::move(f)});
    if (entries_.size() > capacity_) entries_.pop_back();
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool warm() const { return entries_.size() == capacity_; }
  bool empty() const { return entries_.empty(); }

  /// i = 0 is the newest entry.
  const Vector& state(std::size_t i) const { return entries_.at(i).u; }
  const Vector& derivative(std::size_t i) const { return entries_.at(i).f; }
  double time(std::size_t i) const { return entries_.at(i).t; }
  double current_time() const { return entries_.at(0).t; }

  std::vector<Vector> states() const {
    std::vector<Vector> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.u);
    return out;
  }

  friend bool operator==(const HistoryBuffer& a, const HistoryBuffer& b) {
    if (a.capacity_ != b.capacity_ || a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.t != y.t || x.u != y.u || x.f != y.f) return false;
    }
    return true;
  }

 private:
  struct Entry {
    double t;
    Vector u;
    Vector f;
  };
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

enum class SolveStrategy { FixedPoint, NewtonNumericJacobian };

/// Iteration controls for the implicit stage equation
///   u = c + h * beta_new * f(t_{j+1}, u).
/// FixedPoint falls back to Newton when the iteration stalls or diverges.
struct ImplicitSolveConfig {
  int max_iterations = 50;
  double tolerance = 1e-10;
  SolveStrategy strategy = SolveStrategy::FixedPoint;
  double damping = 1.0;

  void validate() const {
    if (max_iterations < 1) throw Error("ImplicitSolveConfig: max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw Error("ImplicitSolveConfig: tolerance must be > 0");
    if (!(damping > 0.0 && damping <= 1.0)) throw Error("ImplicitSolveConfig: damping in (0, 1]");
  }
};

namespace detail {

inline void require_warm(const MethodSpec& method, const HistoryBuffer& history) {
  if (history.size() < static_cast<std::size_t>(method.steps)) {
    throw Error("insufficient startup values: " + method.name() + " needs " +
                std::to_string(method.steps) + ", history has " + std::to_string(history.size()));
  }
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
inline Vector solve_dense(std::vector<Vector> a, Vector b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
    }
    if (a[piv][k] == 0.0) throw Error("implicit solve: singular Newton matrix");
    std::swap(a[k], a[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double m = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= m * a[k][j];
      b[i] -= m * b[k];
    }
  }
  Vector x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * x[j];
    x[k] = s / a[k][k];
  }
  return x;
}

// R(u) = u - c - hb f(t, u)
inline Vector stage_residual(const OdeSystem& system, double t, const Vector& c, double hb,
                             const Vector& u) {
  Vector r = system(t, u);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = u[i] - c[i] - hb * r[i];
  return r;
}

inline Vector newton_solve(const OdeSystem& system, double t, const Vector& c, double hb,
                           Vector u, const ImplicitSolveConfig& cfg) {
  const std::size_t d = u.size();
  Vector r = stage_residual(system, t, c, hb, u);
  double res = max_abs(r);
  for (int it = 0; it < cfg.max_iterations && !(res <= cfg.tolerance); ++it) {
    const Vector f0 = system(t, u);
    std::vector<Vector> jac(d, Vector(d, 0.0));
    for (std::size_t k = 0; k < d; ++k) {
      const double delta = 1.4901161193847656e-08 * std::max(1.0, std::abs(u[k]));
      Vector up = u;
      up[k] += delta;
      const Vector fp = system(t, up);
      for (std::size_t i = 0; i < d; ++i) {
        jac[i][k] = (i == k ? 1.0 : 0.0) - hb * (fp[i] - f0[i]) / delta;
      }
    }
    Vector rhs(d);
    for (std::size_t i = 0; i < d; ++i) rhs[i] = -r[i];
    const Vector step = solve_dense(std::move(jac), std::move(rhs));
    for (std::size_t i = 0; i < d; ++i) u[i] += step[i];
    r = stage_residual(system, t, c, hb, u);
    res = max_abs(r);
  }
  if (!(res <= cfg.tolerance)) {
    throw Error("implicit solve did not converge; last residual " + std::to_string(res));
  }
  return u;
}

inline Vector solve_stage(const OdeSystem& system, double t, const Vector& c, double hb,
                          Vector guess, const ImplicitSolveConfig& cfg) {
  cfg.validate();
  if (cfg.strategy == SolveStrategy::NewtonNumericJacobian) {
    return newton_solve(system, t, c, hb, std::move(guess), cfg);
  }
  Vector u = std::move(guess);
  Vector best = u;
  double best_res = std::numeric_limits<double>::infinity();
  double prev_res = std::numeric_limits<double>::infinity();
  int growth = 0;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    Vector g = system(t, u);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = c[i] + hb * g[i];
    double res = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) res = std::max(res, std::abs(g[i] - u[i]));
    if (res <= cfg.tolerance) return u;
    if (res < best_res) {
      best_res = res;
      best = u;
    }
    // Contraction too slow or diverging: hand over to Newton.
    growth = res > 0.9 * prev_res ? growth + 1 : 0;
    if (growth >= 2 || !std::isfinite(res)) break;
    prev_res = res;
    for (std::size_t i = 0; i < g.size(); ++i) u[i] += cfg.damping * (g[i] - u[i]);
  }
  return newton_solve(system, t, c, hb, std::move(best), cfg);
}

}  // namespace detail

/// One Adams-Bashforth step from a warm history. Does not touch `history`.
inline Vector step_explicit(const MethodSpec& method, const OdeSystem& system,
                            const HistoryBuffer& history, double h) {
  (void)system;
  if (method.family != MethodFamily::AdamsBashforth) {
    throw Error("step_explicit: " + method.name() + " is not an explicit multistep method");
  }
  detail::require_warm(method, history);
  Vector u = history.state(0);
  if (h == 0.0) return u;
  for (int i = 0; i < method.steps; ++i) {
    detail::axpy(h * method.beta[i], history.derivative(i), u);
  }
  return u;
}

/// One Adams-Moulton or BDF step; the implicit equation is solved to
/// `solve.tolerance` in the residual max-norm.
inline Vector step_implicit(const MethodSpec& method, const OdeSystem& system,
                            const HistoryBuffer& history, double h,
                            const ImplicitSolveConfig& solve = {}) {
  if (!method.implicit()) {
    throw Error("step_implicit: " + method.name() + " is not an implicit multistep method");
  }
  detail::require_warm(method, history);
  if (h == 0.0) return history.state(0);

  Vector c(history.state(0).size(), 0.0);
  for (int i = 0; i < method.steps; ++i) {
    detail::axpy(method.alpha[i], history.state(i), c);
    if (method.beta[i] != 0.0) detail::axpy(h * method.beta[i], history.derivative(i), c);
  }

  Vector guess = history.state(0);
  if (method.family == MethodFamily::AdamsMoulton) {
    const MethodSpec predictor = make_method(MethodFamily::AdamsBashforth, method.steps);
    guess = step_explicit(predictor, system, history, h);
  }
  return detail::solve_stage(system, history.current_time() + h, c, h * method.beta_new,
                             std::move(guess), solve);
}

struct EmbeddedStep {
  Vector low;
  Vector high;
};

/// One step of an embedded Runge-Kutta pair, both orders from shared stages.
inline EmbeddedStep step_rk_embedded(const MethodSpec& method, const OdeSystem& system, double t,
                                     const Vector& u, double h) {
  if (method.family != MethodFamily::RungeKuttaEmbedded || !method.tableau) {
    throw Error("step_rk_embedded: " + method.name() + " is not an embedded Runge-Kutta pair");
  }
  if (h == 0.0) return {u, u};
  const ButcherTableau& tab = *method.tableau;
  const std::size_t s = tab.c.size();
  std::vector<Vector> k;
  k.reserve(s);
  for (std::size_t i = 0; i < s; ++i) {
    Vector y = u;
    for (std::size_t j = 0; j < i; ++j) {
      if (tab.a[i][j] != 0.0) detail::axpy(h * tab.a[i][j], k[j], y);
    }
    k.push_back(system(t + tab.c[i] * h, y));
  }
  EmbeddedStep out{u, u};
  for (std::size_t i = 0; i < s; ++i) {
    if (tab.b_low[i] != 0.0) detail::axpy(h * tab.b_low[i], k[i], out.low);
    if (tab.b_high[i] != 0.0) detail::axpy(h * tab.b_high[i], k[i], out.high);
  }
  return out;
}

/// Advances one step with any method family (low order for RK pairs).
inline Vector advance(const MethodSpec& method, const OdeSystem& system,
                      const HistoryBuffer& history, double h,
                      const ImplicitSolveConfig& solve = {}) {
  switch (method.family) {
    case MethodFamily::AdamsBashforth: return step_explicit(method, system, history, h);
    case MethodFamily::AdamsMoulton:
    case MethodFamily::BDF: return step_implicit(method, system, history, h, solve);
    case MethodFamily::RungeKuttaEmbedded:
      return step_rk_embedded(method, system, history.current_time(), history.state(0), h).low;
  }
  throw Error("advance: unknown method family");
}

namespace detail {

inline const MethodSpec& startup_method() {
  static const MethodSpec rk45 = make_method(MethodFamily::RungeKuttaEmbedded, 4);
  return rk45;
}

}  // namespace detail

/// Generates the r-1 startup values after u0 with the fifth-order Fehlberg
/// solution and returns a warm buffer whose newest entry is at t0 + (r-1)h.
inline HistoryBuffer bootstrap_history(const MethodSpec& method, const OdeSystem& system,
                                       const Vector& u0, double t0, double h) {
  HistoryBuffer buf(method.steps);
  Vector u = u0;
  double t = t0;
  buf.push(t, u, system(t, u));
  for (int i = 1; i < method.steps; ++i) {
    u = step_rk_embedded(detail::startup_method(), system, t, u, h).high;
    t = t0 + i * h;
    buf.push(t, u, system(t, u));
  }
  return buf;
}

/// Like bootstrap_history, but integrates backwards from u_newest so that the
/// newest entry stays at t_newest and `depth - 1` lagged values sit at
/// t_newest - i h.
inline HistoryBuffer backfill_history(std::size_t depth, const OdeSystem& system,
                                      const Vector& u_newest, double t_newest, double h) {
  if (depth == 0) throw Error("backfill_history: depth must be positive");
  std::vector<Vector> states{u_newest};
  Vector u = u_newest;
  for (std::size_t i = 1; i < depth; ++i) {
    const double t = t_newest - static_cast<double>(i - 1) * h;
    u = step_rk_embedded(detail::startup_method(), system, t, u, -h).high;
    states.push_back(u);
  }
  return HistoryBuffer::from_states(system, states, t_newest, h);
}

/// Integrates from t0 over n steps with a fixed step, returning u_0..u_n.
/// Startup values come from bootstrap_history.
inline std::vector<Vector> integrate_fixed(const MethodSpec& method, const OdeSystem& system,
                                           const Vector& u0, double t0, double h, int n,
                                           const ImplicitSolveConfig& solve = {}) {
  std::vector<Vector> out;
  HistoryBuffer hist = bootstrap_history(method, system, u0, t0, h);
  for (std::size_t i = hist.size(); i-- > 0;) {
    if (static_cast<int>(out.size()) <= n) out.push_back(hist.state(i));
  }
  while (static_cast<int>(out.size()) <= n) {
    Vector next = advance(method, system, hist, h, solve);
    const double t = t0 + static_cast<double>(out.size()) * h;
    hist.push(t, next, system(t, next));
    out.push_back(std::move(next));
  }
  return out;
}

}  // namespace lmmpf

#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmmpf {

using Vector = std::vector<double>;

/// Raised for any failure inside the filtering pipeline (bad input, solver
/// divergence, likelihood underflow).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid user configuration: unknown ids, inconsistent grids.
/// The CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_same_size(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) +
                " vs " + std::to_string(b.size()) + ")");
  }
}

// y += a * x
inline void axpy(double a, const Vector& x, Vector& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double max_abs(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x < 0 ? -x : x);
  return m;
}

}  // namespace detail
}  // namespace lmmpf

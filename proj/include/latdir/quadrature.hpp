#pragma once

#include <functional>
#include <limits>
#include <stdexcept>

namespace latdir {

class QuadratureFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Adaptive 1-D integral over [a, b]; b may be +infinity. Integrable endpoint
/// singularities are allowed (double-exponential rules). Throws
/// QuadratureFailure if the error estimate exceeds `rel_tol * |value|` by more
/// than a factor 1e3 or the result is not finite.
QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     double rel_tol = 1e-10);

/// Smooth, possibly oscillatory integrand on a finite interval: Gauss-Kronrod
/// on `panels` equal pieces.
QuadResult integrate_panels(const std::function<double(double)>& f, double a, double b,
                            int panels, double rel_tol = 1e-11);

/// Surface area of the unit sphere in R^d.
double sphere_area(int d);

}  // namespace latdir

#include "latdir/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace latdir {

namespace {

void require_converged(const QuadResult& r, double rel_tol, const char* what) {
  if (!std::isfinite(r.value) || !std::isfinite(r.error))
    throw QuadratureFailure(std::string(what) + ": non-finite result");
  if (r.error > 1e3 * rel_tol * std::abs(r.value) + 1e-14)
    throw QuadratureFailure(std::string(what) + ": error estimate " + std::to_string(r.error) +
                            " too large for value " + std::to_string(r.value));
}

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     double rel_tol) {
  if (!(a <= b)) throw std::invalid_argument("integration bounds out of order");
  if (a == b) return {};
  QuadResult r;
  if (std::isinf(b)) {
    boost::math::quadrature::exp_sinh<double> rule;
    r.value = rule.integrate([&](double t) { return f(a + t); }, 0.0, kInfinity, rel_tol,
                             &r.error);
  } else {
    boost::math::quadrature::tanh_sinh<double> rule;
    r.value = rule.integrate(f, a, b, rel_tol, &r.error);
  }
  require_converged(r, rel_tol, "integrate");
  return r;
}

QuadResult integrate_panels(const std::function<double(double)>& f, double a, double b,
                            int panels, double rel_tol) {
  if (panels < 1) throw std::invalid_argument("panel count must be positive");
  QuadResult total;
  const double h = (b - a) / panels;
  for (int k = 0; k < panels; ++k) {
    double err = 0.0;
    const double lo = a + k * h;
    const double hi = k + 1 == panels ? b : lo + h;
    total.value += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, lo, hi, 12, rel_tol, &err);
    total.error += err;
  }
  if (!std::isfinite(total.value)) throw QuadratureFailure("integrate_panels: non-finite result");
  return total;
}

double sphere_area(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

}  // namespace latdir

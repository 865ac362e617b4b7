#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "latdir/harness.hpp"
#include "latdir/quadrature.hpp"

namespace latdir {

std::vector<double> dyadic_times(double lo, double hi) {
  std::vector<double> out;
  double t = std::exp2(std::floor(std::log2(hi)));
  for (; t > lo * (1.0 + 1e-12); t /= 2.0) out.push_back(t);
  std::reverse(out.begin(), out.end());
  return out;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("line fit needs two or more points");
  const double m = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::domain_error("degenerate regression (no spread in x)");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.points = x.size();
  return f;
}

double total_variation(const std::map<Site, double>& p, const std::map<Site, double>& q) {
  double s = 0.0;
  auto ip = p.begin();
  auto iq = q.begin();
  while (ip != p.end() || iq != q.end()) {
    if (iq == q.end() || (ip != p.end() && ip->first < iq->first)) {
      s += std::abs(ip->second);
      ++ip;
    } else if (ip == p.end() || iq->first < ip->first) {
      s += std::abs(iq->second);
      ++iq;
    } else {
      s += std::abs(ip->second - iq->second);
      ++ip;
      ++iq;
    }
  }
  return 0.5 * s;
}

std::optional<double> crossing_time(const std::vector<double>& t, const std::vector<double>& p,
                                    double B) {
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (p[k] <= B) continue;
    if (k == 0) return t[0];
    const double w = (B - p[k - 1]) / (p[k] - p[k - 1]);
    return std::exp(std::log(t[k - 1]) + w * (std::log(t[k]) - std::log(t[k - 1])));
  }
  return std::nullopt;
}

double brownian_resolvent_gaussian(double x, double kappa, double lambda, double sigma) {
  const double m = std::sqrt(lambda / kappa);
  const double s2 = sigma * std::sqrt(2.0);
  const double shift = m * sigma * sigma;
  // exp(m^2 s^2 / 2 -+ m x) folded into one exponent per side
  const double e = 0.5 * m * m * sigma * sigma;
  const double left = std::exp(e - m * x) * std::erfc((shift - x) / s2);
  const double right = std::exp(e + m * x) * std::erfc((shift + x) / s2);
  return sigma * std::sqrt(M_PI / 2.0) * (left + right) / (2.0 * std::sqrt(lambda * kappa));
}

double Bump::operator()(double x) const {
  const double u = (x - center) / width;
  if (std::abs(u) >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - u * u));
}

namespace {

// CDF of the difference of two independent uniforms on [0, 1/n).
double triangular_cdf(double u, int n) {
  const double v = u * n;
  if (v <= -1.0) return 0.0;
  if (v >= 1.0) return 1.0;
  if (v <= 0.0) return 0.5 * (1.0 + v) * (1.0 + v);
  return 1.0 - 0.5 * (1.0 - v) * (1.0 - v);
}

double interval_mass(double h, int n, double a, double b) {
  return std::max(0.0, triangular_cdf(b - h, n) - triangular_cdf(a - h, n));
}

}  // namespace

double annulus_fraction(std::int64_t k, int n, double lo, double hi) {
  const double h = static_cast<double>(k) / n;
  return interval_mass(h, n, lo, hi) + interval_mass(h, n, -hi, -lo);
}

double lattice_jump_pairing(const ConductanceField& field, const Bump& gx, const Bump& gy, double N) {
  const auto& sc = field.scale();
  if (sc.d != 1) throw std::invalid_argument("the jump pairing is implemented for d = 1");
  const int n = sc.n;
  const double half = 0.5 / n;
  auto cells = [&](const Bump& b) {
    return std::make_pair(static_cast<std::int64_t>(std::floor((b.center - b.width) * n)) - 1,
                          static_cast<std::int64_t>(std::ceil((b.center + b.width) * n)) + 1);
  };
  const auto [x_lo, x_hi] = cells(gx);
  const auto [y_lo, y_hi] = cells(gy);
  const double lo = 1.0 / N, hi = N;
  const double scale = std::pow(static_cast<double>(n), sc.d + 2) * std::pow(static_cast<double>(n), -2 * sc.d);
  long double s = 0.0L;
  for (auto a = x_lo; a <= x_hi; ++a) {
    const double fx = gx(static_cast<double>(a) / n + half);
    if (fx == 0.0) continue;
    const Site x(sc, Coords{a});
    for (auto b = y_lo; b <= y_hi; ++b) {
      const double fy = gy(static_cast<double>(b) / n + half);
      if (fy == 0.0 || a == b) continue;
      const double frac = annulus_fraction(b - a, n, lo, hi);
      if (frac == 0.0) continue;
      s += static_cast<long double>(fx) * fy * field.value(x, Site(sc, Coords{b})) * frac;
    }
  }
  return static_cast<double>(s) * scale;
}

double jump_pairing_oracle(const Bump& gx, const Bump& gy, double N, double c, double p) {
  auto overlap = [&](double h) {
    const double a = std::max(gx.center - gx.width, gy.center - gy.width - h);
    const double b = std::min(gx.center + gx.width, gy.center + gy.width - h);
    if (!(b > a)) return 0.0;
    return integrate([&](double x) { return gx(x) * gy(x + h); }, a, b, 1e-12).value;
  };
  const double h_lo = gy.center - gy.width - gx.center - gx.width;
  const double h_hi = gy.center + gy.width - gx.center + gx.width;
  double total = 0.0;
  for (const auto& [a0, b0] : {std::pair{1.0 / N, N}, std::pair{-N, -1.0 / N}}) {
    const double a = std::max(a0, h_lo), b = std::min(b0, h_hi);
    if (!(b > a)) continue;
    total += integrate([&](double h) { return c * std::pow(std::abs(h), -p) * overlap(h); }, a, b,
                       1e-10)
                 .value;
  }
  return total;
}

double levy_symbol_1d(double u, double alpha, double beta, double c3, double c5) {
  const double w = std::abs(u);
  if (w == 0.0) return 0.0;
  // (1 - cos(w t)) = 2 sin^2(w t / 2), summed over pieces of at most half a period
  const int pieces = std::max(1, static_cast<int>(std::ceil(w / M_PI)));
  double inner = 0.0;
  for (int k = 0; k < pieces; ++k) {
    const double a = static_cast<double>(k) / pieces, b = static_cast<double>(k + 1) / pieces;
    inner += integrate(
                 [&](double t) {
                   if (t == 0.0) return 0.0;
                   const double s = std::sin(0.5 * w * t) / t;
                   return 2.0 * s * s * c3 * std::pow(t, 1.0 - beta);
                 },
                 a, b, 1e-11)
                 .value;
  }
  // int_1^inf (1 - cos(w t)) c5 t^{-1-alpha} dt with t = 1 + s
  auto g = [&](double s) { return c5 * std::pow(1.0 + s, -1.0 - alpha); };
  boost::math::quadrature::ooura_fourier_cos<double> fcos;
  boost::math::quadrature::ooura_fourier_sin<double> fsin;
  const auto [ic, ec] = fcos.integrate(g, w);
  const auto [is, es] = fsin.integrate(g, w);
  (void)ec;
  (void)es;
  const double oscillating = std::cos(w) * ic - std::sin(w) * is;
  const double outer = c5 / alpha - oscillating;
  return 2.0 * (inner + outer);
}

}  // namespace latdir

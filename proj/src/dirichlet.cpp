#include "latdir/dirichlet.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include <Eigen/SparseCholesky>
#include <boost/math/distributions/poisson.hpp>

#include "latdir/quadrature.hpp"

namespace latdir {

namespace {

std::vector<Site> merged_support(const GridFunction& f, const GridFunction& g) {
  std::vector<Site> s;
  s.reserve(f.support_size() + g.support_size());
  auto a = f.values().begin();
  auto b = g.values().begin();
  while (a != f.values().end() || b != g.values().end()) {
    if (b == g.values().end() || (a != f.values().end() && a->first < b->first)) {
      s.push_back((a++)->first);
    } else if (a == f.values().end() || b->first < a->first) {
      s.push_back((b++)->first);
    } else {
      s.push_back(a->first);
      ++a;
      ++b;
    }
  }
  return s;
}

double energy_prefactor(const LatticeScale& s) { return 0.5 * std::pow(static_cast<double>(s.n), 2 - s.d); }

}  // namespace

double energy(const GridFunction& f, const GridFunction& g, const ConductanceField& field) {
  require_same_scale(f.scale(), g.scale());
  require_same_scale(f.scale(), field.scale());
  const auto support = merged_support(f, g);
  std::unordered_map<Site, std::size_t, SiteHash> index;
  index.reserve(support.size() * 2);
  for (std::size_t i = 0; i < support.size(); ++i) index.emplace(support[i], i);
  std::vector<double> fv(support.size()), gv(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    fv[i] = f(support[i]);
    gv[i] = g(support[i]);
  }

  const auto& sc = f.scale();
  double radius = field.reach().radius;
  if (auto rg = field.range()) radius = std::min(radius, *rg);
  double pairs = 0.0;
  double killed = 0.0;
  const auto count = field.reach_count();
  if (count && support.size() < *count) {
    // small support: pairs inside it directly, the rest of nu is killed mass
    for (std::size_t i = 0; i < support.size(); ++i) {
      double inside = 0.0;
      for (std::size_t j = 0; j < support.size(); ++j) {
        if (j == i) continue;
        const auto sq = squared_norm(difference(support[j].coords(), support[i].coords()), sc.d);
        if (!within_radius(sq, radius, sc.n, false)) continue;
        const double c = field.value(support[i], support[j]);
        inside += c;
        pairs += (fv[j] - fv[i]) * (gv[j] - gv[i]) * c;
      }
      killed += fv[i] * gv[i] * (field.reach_sum(support[i]) - inside);
    }
    return energy_prefactor(sc) * (pairs + 2.0 * killed);
  }
  for (std::size_t i = 0; i < support.size(); ++i) {
    const double fx = fv[i], gx = gv[i];
    field.visit_neighbors(support[i], radius, [&](const Site& y, double c) {
      auto it = index.find(y);
      if (it != index.end())
        pairs += (fv[it->second] - fx) * (gv[it->second] - gx) * c;
      else
        killed += fx * gx * c;
    });
  }
  return energy_prefactor(sc) * (pairs + 2.0 * killed);
}

double cell_form_energy(const StepFunction& f, const ConductanceField& field) {
  const auto& sc = field.scale();
  require_same_scale(f.lattice_values().scale(), sc);
  const double radius = field.reach().radius;
  const double half = 0.5 / sc.n;
  auto midpoint = [&](const Site& w) {
    auto p = w.position();
    for (double& v : p) v += half;
    return p;
  };
  const auto& support = f.lattice_values().values();
  const long double cell = sc.site_measure();
  long double s = 0.0L;
  for (const auto& [w1, unused] : support) {
    (void)unused;
    const auto m1 = midpoint(w1);
    const double f1 = f(m1);
    const Site c1 = floor_embed(m1, sc);
    field.visit_neighbors(w1, radius, [&](const Site& w2, double) {
      const auto m2 = midpoint(w2);
      const double diff = f1 - f(m2);
      const long double term = static_cast<long double>(diff) * diff *
                               field.value(c1, floor_embed(m2, sc)) * cell * cell;
      // ordered pairs with exactly one cell in the support appear once here
      s += support.count(w2) ? term : 2.0L * term;
    });
  }
  const long double n = sc.n;
  return static_cast<double>(0.5L * std::pow(n, 2 + sc.d) * s);
}

double energy_nn(const GridFunction& f) {
  const auto& sc = f.scale();
  double s = 0.0;
  for (const auto& [x, fx] : f.values()) {
    for (int i = 0; i < sc.d; ++i) {
      for (int step : {-1, 1}) {
        const Site y = x.shifted(i, step);
        auto it = f.values().find(y);
        if (it != f.values().end()) {
          s += (it->second - fx) * (it->second - fx);
        } else {
          s += 2.0 * fx * fx;
        }
      }
    }
  }
  return energy_prefactor(sc) * s;
}

SplitEnergy energy_split(const GridFunction& f, const GridFunction& g, const SplitField& split) {
  return {energy(f, g, *split.local()), energy(f, g, *split.jump())};
}

double apply_generator(const GridFunction& f, const Site& x, const ConductanceField& field) {
  require_same_scale(f.scale(), field.scale());
  const auto& sc = field.scale();
  const double fx = f(x);
  double s = 0.0;
  double radius = field.reach().radius;
  const auto count = field.reach_count();
  if (count && f.support_size() < *count) {
    if (auto rg = field.range()) radius = std::min(radius, *rg);
    for (const auto& [y, fy] : f.values()) {
      if (y == x) continue;
      const auto sq = squared_norm(difference(y.coords(), x.coords()), sc.d);
      if (within_radius(sq, radius, sc.n, false)) s += fy * field.value(x, y);
    }
    s -= fx * field.reach_sum(x);
  } else {
    field.visit_neighbors(x, radius, [&](const Site& y, double c) { s += (f(y) - fx) * c; });
  }
  const double n = sc.n;
  return n * n * s;
}

// ---------------------------------------------------------------------------

double GeneratorMatrix::max_rate() const {
  const double n = scale().n;
  return nu.size() ? n * n * nu.maxCoeff() : 0.0;
}

void GeneratorMatrix::write(std::ostream& out) const {
  nlohmann::json header;
  header["n"] = scale().n;
  header["d"] = scale().d;
  auto c = nlohmann::json::array();
  for (int i = 0; i < scale().d; ++i) c.push_back(box.center().coord(i));
  header["box"] = {{"center", c}, {"radius", box.radius()}, {"sites", box.size()}};
  header["field_hash"] = field_hash;
  header["nonzeros"] = matrix.nonZeros();
  out << header.dump() << '\n';
  const auto old = out.precision(17);
  for (int r = 0; r < matrix.outerSize(); ++r)
    for (SparseRowMatrix::InnerIterator it(matrix, r); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  out.precision(old);
}

GeneratorMatrix assemble(const ConductanceField& field, const Box& box) {
  require_same_scale(field.scale(), box.scale());
  const auto N = static_cast<Eigen::Index>(box.size());
  const double n2 = static_cast<double>(field.scale().n) * field.scale().n;
  const auto reach = field.reach();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(N) * 3);
  Eigen::VectorXd nu_vec(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    double total = 0.0;
    field.visit_neighbors(box.site(static_cast<std::size_t>(i)), reach.radius,
                          [&](const Site& y, double c) {
                            total += c;
                            if (auto j = box.index_of(y)) {
                              triplets.emplace_back(i, static_cast<Eigen::Index>(*j), n2 * c);
                              if (static_cast<double>(triplets.size()) > kMaxGeneratorNonzeros)
                                throw std::length_error("generator exceeds the nonzero budget");
                            }
                          });
    nu_vec[i] = total;
    triplets.emplace_back(i, i, -n2 * total);
  }
  SparseRowMatrix A(N, N);
  A.setFromTriplets(triplets.begin(), triplets.end());
  A.makeCompressed();
  return GeneratorMatrix{box, std::move(A), std::move(nu_vec), reach.remainder_bound, field.hash()};
}

// ---------------------------------------------------------------------------

double HeatKernelTable::at(std::size_t k, const Site& y) const {
  auto idx = box.index_of(y);
  return idx ? density[k][static_cast<Eigen::Index>(*idx)] : 0.0;
}

void HeatKernelTable::write_csv(std::ostream& out) const {
  const int d = scale().d;
  out << 't';
  for (int i = 0; i < d; ++i) out << ",coord_" << (i + 1);
  out << ",density,mass_defect\n";
  const auto old = out.precision(17);
  for (std::size_t k = 0; k < times.size(); ++k) {
    for (std::size_t j = 0; j < box.size(); ++j) {
      out << times[k];
      for (int i = 0; i < d; ++i) out << ',' << box.site(j).coord(i);
      out << ',' << density[k][static_cast<Eigen::Index>(j)] << ',' << mass_defect[k] << '\n';
    }
  }
  out.precision(old);
}

std::vector<HeatKernelTable> heat_kernels(const GeneratorMatrix& gen,
                                          const std::vector<double>& times,
                                          const std::vector<Site>& sources,
                                          const UniformizationOptions& opts) {
  if (times.empty()) throw std::invalid_argument("empty time grid");
  for (std::size_t k = 0; k < times.size(); ++k)
    if (!(times[k] > 0.0) || (k && !(times[k] > times[k - 1])))
      throw std::invalid_argument("time grid must be positive and increasing");
  const auto N = static_cast<Eigen::Index>(gen.box.size());
  const auto S = static_cast<Eigen::Index>(sources.size());
  const auto& sc = gen.scale();
  const double site_mass = sc.site_measure();

  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(N, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    auto idx = gen.box.index_of(sources[static_cast<std::size_t>(s)]);
    if (!idx) throw std::invalid_argument("heat kernel source outside the box");
    V(static_cast<Eigen::Index>(*idx), s) = 1.0;
  }

  std::vector<Eigen::MatrixXd> acc(times.size(), Eigen::MatrixXd::Zero(N, S));
  // absorbed mass accumulated from the killing rates, so small defects do not
  // drown in the cancellation of 1 - sum(prob)
  std::vector<Eigen::RowVectorXd> absorbed(times.size(), Eigen::RowVectorXd::Zero(S));
  const double rate = gen.max_rate();
  if (rate == 0.0) {
    for (auto& a : acc) a = V;
  } else {
    const double prob_tol = opts.tail_tol * site_mass;
    std::int64_t k_max = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double m = rate * times[k];
      boost::math::poisson_distribution<double> dist(m);
      auto q = static_cast<std::int64_t>(
          std::ceil(boost::math::quantile(boost::math::complement(dist, prob_tol))));
      while (boost::math::cdf(boost::math::complement(dist, static_cast<double>(q))) > prob_tol) ++q;
      k_max = std::max(k_max, q);
    }
    if (k_max > opts.max_steps)
      throw std::runtime_error("uniformization needs " + std::to_string(k_max) +
                               " steps, above the cap; shorten t or coarsen n");
    const double inv_rate = 1.0 / rate;
    Eigen::VectorXd kill = -(gen.matrix * Eigen::VectorXd::Ones(N));
    kill = kill.cwiseMax(0.0) * inv_rate;
    Eigen::RowVectorXd D = Eigen::RowVectorXd::Zero(S);
    std::vector<double> weight_sum(times.size(), 0.0);
    Eigen::MatrixXd AV(N, S);
    for (std::int64_t step = 0; step <= k_max; ++step) {
      for (std::size_t k = 0; k < times.size(); ++k) {
        const double m = rate * times[k];
        const double logw = -m + static_cast<double>(step) * std::log(m) -
                            std::lgamma(static_cast<double>(step) + 1.0);
        if (logw < -745.0) continue;
        const double w = std::exp(logw);
        acc[k].noalias() += w * V;
        absorbed[k].noalias() += w * D;
        weight_sum[k] += w;
      }
      if (step == k_max) break;
      D.noalias() += kill.transpose() * V;
      AV.noalias() = gen.matrix * V;
      V.noalias() += inv_rate * AV;
    }
    // Poisson mass past k_max is credited with the last absorbed value
    for (std::size_t k = 0; k < times.size(); ++k)
      absorbed[k].noalias() += std::max(0.0, 1.0 - weight_sum[k]) * D;
  }

  std::vector<HeatKernelTable> out;
  out.reserve(sources.size());
  for (Eigen::Index s = 0; s < S; ++s) {
    HeatKernelTable t{gen.box, sources[static_cast<std::size_t>(s)], times, {}, {}};
    for (std::size_t k = 0; k < times.size(); ++k) {
      Eigen::VectorXd prob = acc[k].col(s);
      t.mass_defect.push_back(std::min(1.0, absorbed[k](s)));
      t.density.push_back(prob / site_mass);
    }
    out.push_back(std::move(t));
  }
  return out;
}

HeatKernelTable heat_kernel(const GeneratorMatrix& gen, const std::vector<double>& times,
                            const Site& source, const UniformizationOptions& opts) {
  return std::move(heat_kernels(gen, times, {source}, opts).front());
}

HeatKernelTable scaled_kernel(const HeatKernelTable& table, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("scale factor must lie in (0, 1]");
  const auto& sc = table.scale();
  const double nr = sc.n * r;
  const long m = std::lround(nr);
  if (m < 1 || std::abs(nr - static_cast<double>(m)) > 1e-9 * nr)
    throw ScaleMismatch("n*r must be a positive integer to rescale a kernel");
  const LatticeScale target(static_cast<int>(m), sc.d);
  const double r_exact = static_cast<double>(m) / sc.n;
  Box box(Site(target, table.box.center().coords()), table.box.radius() / r_exact);
  if (box.size() != table.box.size()) throw std::logic_error("rescaled box lost sites");
  HeatKernelTable out{box, Site(target, table.source.coords()), {}, {}, table.mass_defect};
  const double factor = std::pow(r_exact, sc.d);
  for (std::size_t k = 0; k < table.times.size(); ++k) {
    out.times.push_back(table.times[k] / (r_exact * r_exact));
    out.density.push_back(table.density[k] * factor);
  }
  return out;
}

HeatKernelTable truncated_kernel(const FieldPtr& field, const Box& box, double lambda,
                                 const std::vector<double>& times, const Site& source,
                                 const UniformizationOptions& opts) {
  if (!(lambda > 0.0)) throw std::invalid_argument("truncation level must be positive");
  const BandField truncated(field, 0.0, true, lambda);
  return heat_kernel(assemble(truncated, box), times, source, opts);
}

SizedBox default_box(const ConductanceField& field, const Site& center, double t_max,
                     double max_defect) {
  const auto& sc = field.scale();
  const double M = moment_at(field, center).value;
  double radius = 5.0 * std::sqrt(M * t_max / sc.d) + 2.0 / sc.n;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Box box(center, radius);
    const auto table = heat_kernel(assemble(field, box), {t_max}, center);
    if (table.mass_defect.back() < max_defect) return {box, table.mass_defect.back()};
    radius *= 1.5;
  }
  throw std::runtime_error("could not size a box with mass defect below the target");
}

// ---------------------------------------------------------------------------

struct ResolventSolver::Impl {
  explicit Impl(Box b) : box(std::move(b)) {}
  Box box;
  Eigen::SparseMatrix<double> system;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
};

ResolventSolver::ResolventSolver(const GeneratorMatrix& gen, double lambda) : lambda_(lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("resolvent parameter must be positive");
  const auto N = gen.matrix.rows();
  Eigen::SparseMatrix<double> id(N, N);
  id.setIdentity();
  Eigen::SparseMatrix<double> sys = lambda * id - Eigen::SparseMatrix<double>(gen.matrix);
  impl_ = std::make_unique<Impl>(gen.box);
  impl_->system = std::move(sys);
  impl_->ldlt.compute(impl_->system);
  if (impl_->ldlt.info() != Eigen::Success) throw std::runtime_error("resolvent factorization failed");
}

ResolventSolver::~ResolventSolver() = default;
ResolventSolver::ResolventSolver(ResolventSolver&&) noexcept = default;
ResolventSolver& ResolventSolver::operator=(ResolventSolver&&) noexcept = default;

Eigen::VectorXd ResolventSolver::solve(const Eigen::VectorXd& rhs) const {
  Eigen::VectorXd u = impl_->ldlt.solve(rhs);
  if (impl_->ldlt.info() != Eigen::Success) throw std::runtime_error("resolvent solve failed");
  const double res = (impl_->system * u - rhs).norm();
  if (res > 1e-10 * rhs.norm()) throw std::runtime_error("resolvent residual above tolerance");
  return u;
}

GridFunction ResolventSolver::solve(const GridFunction& f) const {
  return GridFunction::from_box_vector(impl_->box, solve(f.to_box_vector(impl_->box)));
}

GridFunction resolvent(const GeneratorMatrix& gen, double lambda, const GridFunction& f) {
  return ResolventSolver(gen, lambda).solve(f);
}

// ---------------------------------------------------------------------------

double carre_du_champ(const LatticeFunction& v, const Site& xi, const ConductanceField& field,
                      double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("truncation level must be positive");
  const double vx = v(xi);
  double s = 0.0;
  field.visit_neighbors(xi, lambda, [&](const Site& eta, double c) {
    const double dv = v(eta) - vx;
    s += dv * dv * c;
  });
  const double n = field.scale().n;
  return n * n * s;
}

double davies_exponent(double R, double t, double lambda, double c3,
                       const std::vector<double>& s_grid) {
  double best = 0.0;
  const double k = t * c3 * (1.0 + 1.0 / (lambda * lambda));
  for (double s : s_grid) best = std::max(best, s * R - k * std::exp(3.0 * s * lambda));
  return best;
}

nlohmann::json DaviesReport::to_json() const {
  return {{"c3_hat", c3_hat},         {"c_hat", c_hat},   {"worst_ratio", worst_ratio},
          {"fit_points", fit_points}, {"check_points", check_points},
          {"times", times},           {"decay_slopes", decay_slopes}};
}

DaviesReport davies_off_diagonal_check(const HeatKernelTable& table, const ConductanceField& field,
                                       double lambda) {
  require_same_scale(table.scale(), field.scale());
  const auto& sc = table.scale();
  const Site& x0 = table.source;
  DaviesReport rep;

  // Gamma calibration: psi(xi) = s (|xi - x0| ^ cap) along the first axis.
  const double cap = 1.0;
  for (double s : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    auto psi = [&](const Site& y) { return s * std::min(distance(y, x0), cap); };
    const auto steps = static_cast<std::int64_t>(std::ceil((cap + 2.0 * lambda) * sc.n));
    for (std::int64_t k = 0; k <= steps; ++k) {
      const Site xi = x0.shifted(0, k);
      const double g = carre_du_champ([&](const Site& y) { return std::exp(psi(y)); }, xi, field,
                                      lambda);
      const double ratio = std::exp(-2.0 * psi(xi)) * g /
                           (std::exp(3.0 * s * lambda) * (1.0 + 1.0 / (lambda * lambda)));
      rep.c3_hat = std::max(rep.c3_hat, ratio);
    }
  }

  std::vector<std::size_t> usable;
  for (std::size_t k = 0; k < table.times.size(); ++k)
    if (table.times[k] < 1.0) usable.push_back(k);
  const double d = sc.d;
  auto log_ratio = [&](std::size_t k, std::size_t j) {
    const double t = table.times[k];
    const double p = table.density[k][static_cast<Eigen::Index>(j)];
    if (!(p > 1e-300)) return -kInfinity;
    const double s = std::log(1.0 / std::sqrt(t)) / (3.0 * lambda);
    const double R = distance(table.box.site(j), x0);
    const double E = s * R - 2.0 * rep.c3_hat * std::sqrt(t) * (1.0 + 1.0 / (lambda * lambda));
    return std::log(p) + 0.5 * d * std::log(t) + E;
  };
  double log_c = -kInfinity;
  for (std::size_t u = 0; u < usable.size(); u += 2)
    for (std::size_t j = 0; j < table.box.size(); ++j) {
      log_c = std::max(log_c, log_ratio(usable[u], j));
      ++rep.fit_points;
    }
  rep.c_hat = std::exp(log_c);
  double worst = -kInfinity;
  for (std::size_t u = 1; u < usable.size(); u += 2)
    for (std::size_t j = 0; j < table.box.size(); ++j) {
      worst = std::max(worst, log_ratio(usable[u], j) - log_c);
      ++rep.check_points;
    }
  rep.worst_ratio = rep.check_points ? std::exp(worst) : 0.0;

  for (std::size_t k = 0; k < table.times.size(); ++k) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (std::int64_t step = 0;; ++step) {
      const Site y = x0.shifted(0, step);
      auto idx = table.box.index_of(y);
      if (!idx) break;
      const double R = distance(y, x0);
      const double p = table.density[k][static_cast<Eigen::Index>(*idx)];
      if (R < lambda || !(p > 1e-300)) continue;
      const double lp = std::log(p);
      sx += R;
      sy += lp;
      sxx += R * R;
      sxy += R * lp;
      ++cnt;
    }
    rep.times.push_back(table.times[k]);
    const double den = cnt * sxx - sx * sx;
    rep.decay_slopes.push_back(cnt >= 2 && den > 0 ? (cnt * sxy - sx * sy) / den : 0.0);
  }
  return rep;
}

}  // namespace latdir

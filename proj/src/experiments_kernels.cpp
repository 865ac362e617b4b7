// Experiments built on the killed heat kernel and the resolvent.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "latdir/dirichlet.hpp"
#include "latdir/harness.hpp"
#include "latdir/quadrature.hpp"
#include "latdir/simulator.hpp"

namespace latdir {

namespace {

using nlohmann::json;

std::string key_n(int n) { return "n=" + std::to_string(n); }

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }
double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

std::size_t count_non_decreasing(const std::vector<double>& v) {
  std::size_t bad = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) ++bad;
  return bad;
}

double euclid(const Site& y) {
  double s = 0.0;
  for (int i = 0; i < y.dim(); ++i) s += y.position(i) * y.position(i);
  return std::sqrt(s);
}

}  // namespace

ConvergenceReport cmd_nash(const ExperimentConfig& cfg, Artifacts& artifacts) {
  ConvergenceReport rep;
  if (cfg.n.size() < 2) throw ConfigError("nash needs two or more n");
  std::vector<int> ns = cfg.n;
  std::sort(ns.begin(), ns.end());
  const int d = cfg.d;
  const int samples = cfg.param<int>("nash_samples");
  const int support = cfg.param<int>("support_size");
  const double t_max = cfg.times.empty() ? 1.0 : cfg.times.back();

  std::vector<double> sups, eps_hats, quotients, defects;
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,t,scaled_diagonal\n";
  for (int n : ns) {
    const auto field = cfg.make_field_at(n);
    const Site o = Site::origin(field->scale());
    const auto times = dyadic_times(1.0 / n, t_max);
    const SizedBox sized = default_box(*field, o, t_max);
    const auto table = heat_kernel(assemble(*field, sized.box), times, o);

    double sup = 0.0, eps_hat = kInfinity;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double w = std::pow(times[k], 0.5 * d);
      sup = std::max(sup, w * table.at(k, o));
      csv << n << ',' << times[k] << ',' << w * table.at(k, o) << '\n';
      const double reach = 2.0 * std::sqrt(times[k]);
      for (std::size_t i = 0; i < sized.box.size(); ++i)
        if (euclid(sized.box.site(i)) <= reach)
          eps_hat = std::min(eps_hat, w * table.density[k][static_cast<Eigen::Index>(i)]);
    }

    // sup over test functions of |f|_2^{2+4/d} / (E(f, f) |f|_1^{4/d})
    const Box near(o, 1.0);
    Rng rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(n));
    auto quotient = [&](const GridFunction& f) {
      const double e = energy(f, f, *field);
      return std::pow(norm(f, 2.0), 2.0 + 4.0 / d) / (e * std::pow(norm(f, 1.0), 4.0 / d));
    };
    double q = quotient(GridFunction::indicator(o));
    for (int s = 0; s < samples; ++s) {
      GridFunction f(field->scale());
      for (int k = 0; k < support; ++k) {
        const auto idx = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(near.size()));
        f.set(near.site(std::min(idx, near.size() - 1)), 2.0 * uniform01(rng) - 1.0);
      }
      if (f.support_size() > 0 && norm(f, 1.0) > 0.0) q = std::max(q, quotient(f));
    }

    const double defect = *std::max_element(table.mass_defect.begin(), table.mass_defect.end());
    rep.metrics[key_n(n)] = {{"times", times},
                             {"box_radius", sized.box.radius()},
                             {"box_sites", sized.box.size()},
                             {"sup_scaled_diagonal", sup},
                             {"eps_hat", eps_hat},
                             {"nash_quotient", q},
                             {"mass_defect", defect}};
    sups.push_back(sup);
    eps_hats.push_back(eps_hat);
    quotients.push_back(q);
    defects.push_back(defect);
  }

  // the largest n serves as the reference for the lower constant
  const std::vector<double> coarse(sups.begin(), sups.end() - 1);
  const std::vector<double> coarse_eps(eps_hats.begin(), eps_hats.end() - 1);
  rep.fitted["oracle_n"] = ns.back();
  rep.fitted["c_hat"] = max_of(sups);
  rep.fitted["eps_reference"] = eps_hats.back();
  rep.fitted["nash_constant"] = max_of(quotients);
  rep.check("sup_ratio", max_of(coarse) / min_of(coarse), "<=", cfg.tolerance("sup_ratio"));
  rep.check("eps_ratio", min_of(coarse_eps) / eps_hats.back(), ">=", cfg.tolerance("eps_ratio"));
  rep.check("mass_defect", max_of(defects), "<=", cfg.tolerance("mass_defect"));
  rep.check("nash_quotient_finite", std::isfinite(max_of(quotients)) ? 1.0 : 0.0, "==", 1.0);
  artifacts.add("nash.csv", csv.str());
  return rep;
}

// ---------------------------------------------------------------------------

ConvergenceReport cmd_holder(const ExperimentConfig& cfg, Artifacts& artifacts) {
  ConvergenceReport rep;
  std::vector<int> ns = cfg.n;
  std::sort(ns.begin(), ns.end());
  const double t0 = cfg.param<double>("t0");
  const int points = cfg.param<int>("time_points");
  const double window = cfg.param<double>("window");
  const int d = cfg.d;
  std::vector<double> times;
  for (int k = 0; k < points; ++k) times.push_back(t0 * (1.0 + static_cast<double>(k) / (points - 1)));

  std::vector<double> betas;
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,beta_hat,c_hat,fit_pairs,holdout_pairs,violations\n";
  for (int n : ns) {
    const auto field = cfg.make_field_at(n);
    const Site o = Site::origin(field->scale());
    const SizedBox sized = default_box(*field, o, times.back());
    const auto table = heat_kernel(assemble(*field, sized.box), times, o);

    struct Point {
      double t;
      Site y;
      double p;
    };
    std::vector<Point> pts;
    double qmax = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k)
      for (const Site& y : sized.box.sites())
        if (euclid(y) <= window + 1e-12) {
          pts.push_back({times[k], y, table.at(k, y)});
          qmax = std::max(qmax, pts.back().p);
        }

    std::vector<double> fit_x, fit_y, fit_rho, fit_osc, hold_rho, hold_osc;
    std::size_t pair = 0;
    for (std::size_t a = 0; a < pts.size(); ++a)
      for (std::size_t b = a + 1; b < pts.size(); ++b, ++pair) {
        const double rho = std::sqrt(std::abs(pts[a].t - pts[b].t)) + distance(pts[a].y, pts[b].y);
        const double osc = std::abs(pts[a].p - pts[b].p) / qmax;
        if (pair % 2 == 0) {
          fit_rho.push_back(rho);
          fit_osc.push_back(osc);
          if (osc > 0.0) {
            fit_x.push_back(std::log(rho));
            fit_y.push_back(std::log(osc));
          }
        } else {
          hold_rho.push_back(rho);
          hold_osc.push_back(osc);
        }
      }
    const LineFit line = fit_line(fit_x, fit_y);
    const double beta = line.slope;
    const double scale = std::pow(t0, -0.5 * (d + beta));
    double c_hat = 0.0;
    for (std::size_t i = 0; i < fit_rho.size(); ++i)
      c_hat = std::max(c_hat, fit_osc[i] / (scale * std::pow(fit_rho[i], beta)));
    std::size_t violations = 0;
    for (std::size_t i = 0; i < hold_rho.size(); ++i)
      if (hold_osc[i] > c_hat * scale * std::pow(hold_rho[i], beta)) ++violations;
    const double fraction = static_cast<double>(violations) / static_cast<double>(hold_rho.size());

    rep.metrics[key_n(n)] = {{"beta_hat", beta},           {"c_hat", c_hat},
                             {"fit_pairs", fit_rho.size()}, {"holdout_pairs", hold_rho.size()},
                             {"violations", violations},    {"violation_fraction", fraction},
                             {"qmax", qmax},                {"mass_defect", table.mass_defect.back()}};
    csv << n << ',' << beta << ',' << c_hat << ',' << fit_rho.size() << ',' << hold_rho.size() << ','
        << violations << '\n';
    betas.push_back(beta);
    rep.check("beta_positive[" + key_n(n) + "]", beta, ">", 0.0);
    rep.check("violation_fraction[" + key_n(n) + "]", fraction, "<", cfg.tolerance("violation_fraction"));
  }
  for (std::size_t i = 0; i + 1 < betas.size(); ++i)
    rep.check("beta_stability[" + key_n(ns[i]) + "]", std::abs(betas[i] / betas.back() - 1.0), "<=",
              cfg.tolerance("beta_stability"));
  rep.fitted["beta_reference"] = betas.back();
  artifacts.add("holder.csv", csv.str());
  return rep;
}

// ---------------------------------------------------------------------------

ConvergenceReport cmd_resolvent(const ExperimentConfig& cfg, Artifacts& artifacts) {
  ConvergenceReport rep;
  if (cfg.d != 1 || cfg.field.value("family", "") != "nearest_neighbor")
    throw ConfigError("resolvent compares against the d = 1 nearest-neighbour closed form");
  std::vector<int> ns = cfg.n;
  std::sort(ns.begin(), ns.end());
  const double kappa = cfg.field.value("kappa", 1.0);
  const double lambda = cfg.param<double>("lambda");
  const double sigma = cfg.param<double>("sigma");
  const double W = cfg.param<double>("window");
  const Bump gb{cfg.params.at("g").at(0).get<double>(), cfg.params.at("g").at(1).get<double>()};
  const double R = cfg.box_radius.value_or(8.0);

  std::vector<double> errors, cauchy;
  std::vector<GridFunction> solutions;
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,x,u_lattice,u_exact\n";
  for (int n : ns) {
    const auto field = cfg.make_field_at(n);
    const Box box(Site::origin(field->scale()), R);
    const GeneratorMatrix gen = assemble(*field, box);
    const ResolventSolver solver(gen, lambda);
    const auto gauss = [sigma](std::span<const double> x) { return std::exp(-x[0] * x[0] / (2 * sigma * sigma)); };
    const GridFunction f = restrict_to(gauss, box);
    const GridFunction u = solver.solve(f);
    const GridFunction g = restrict_to([&](std::span<const double> x) { return gb(x[0]); }, box);

    double err = 0.0, peak = 0.0, sup_u = 0.0;
    for (const Site& y : box.sites()) {
      sup_u = std::max(sup_u, std::abs(u(y)));
      if (std::abs(y.position(0)) > W) continue;
      const double exact = brownian_resolvent_gaussian(y.position(0), kappa, lambda, sigma);
      err = std::max(err, std::abs(u(y) - exact));
      peak = std::max(peak, std::abs(exact));
      csv << n << ',' << y.position(0) << ',' << u(y) << ',' << exact << '\n';
    }
    const double rel = err / peak;
    const double identity = std::abs(energy(u, g, *field) + lambda * bracket(u, g) - bracket(f, g));
    const GridFunction zero = solver.solve(GridFunction(field->scale()));
    double zero_sup = 0.0;
    for (const auto& [s, v] : zero.values()) zero_sup = std::max(zero_sup, std::abs(v));

    rep.metrics[key_n(n)] = {{"rel_sup_error", rel},
                             {"energy_identity_residual", identity},
                             {"lambda_sup_u", lambda * sup_u},
                             {"zero_response", zero_sup}};
    rep.check("energy_identity[" + key_n(n) + "]", identity, "<=", cfg.tolerance("identity"));
    rep.check("contraction[" + key_n(n) + "]", lambda * sup_u, "<=", 1.0 + 1e-12);
    rep.check("zero_rhs[" + key_n(n) + "]", zero_sup, "==", 0.0);
    errors.push_back(rel);
    solutions.push_back(u);
  }
  for (std::size_t k = 0; k + 1 < solutions.size(); ++k) {
    // sup over [-W, W] of |E_n u_n - E_m u_m|, sampled on the finer grid
    const GridFunction& fine = solutions[k + 1];
    const StepFunction coarse = extend(solutions[k]);
    double diff = 0.0;
    for (const auto& [y, v] : fine.values()) {
      if (std::abs(y.position(0)) > W) continue;
      const std::vector<double> x = y.position();
      diff = std::max(diff, std::abs(v - coarse(x)));
    }
    cauchy.push_back(diff);
    rep.metrics[key_n(ns[k])]["cauchy_to_next"] = diff;
  }
  rep.check("rel_sup_error_largest_n", errors.back(), "<=", cfg.tolerance("sup_error"));
  rep.check("error_non_decreasing_steps", static_cast<double>(count_non_decreasing(errors)), "==", 0.0);
  if (cauchy.size() > 1)
    rep.check("cauchy_non_decreasing_steps", static_cast<double>(count_non_decreasing(cauchy)), "==", 0.0);
  artifacts.add("resolvent.csv", csv.str());
  return rep;
}

// ---------------------------------------------------------------------------

ConvergenceReport cmd_poincare(const ExperimentConfig& cfg, Artifacts& artifacts) {
  ConvergenceReport rep;
  std::vector<int> ns = cfg.n;
  std::sort(ns.begin(), ns.end());
  const double R = cfg.box_radius.value_or(14.0);
  const int samples = cfg.param<int>("random_samples");
  const int d = cfg.d;
  auto weight = [d](const std::vector<double>& x) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += std::abs(x[static_cast<std::size_t>(i)]);
    return std::exp(-s);
  };

  std::vector<double> gaps;
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,sites,c2_hat,min_random_quotient\n";
  for (int n : ns) {
    const auto field = cfg.make_field_at(n);
    const LatticeScale& sc = field->scale();
    const Box box(Site::origin(sc), R);
    const auto N = static_cast<Eigen::Index>(box.size());
    if (N > 4000) throw ConfigError("poincare uses a dense solver; the box is too large");
    const double mu = sc.site_measure();

    Eigen::VectorXd gmu(N);
    for (Eigen::Index i = 0; i < N; ++i) gmu[i] = weight(box.site(static_cast<std::size_t>(i)).position()) * mu;
    const double Z = gmu.sum();
    gmu /= Z;

    // weighted form: n^{2-d} sum over unordered in-box pairs of g(midpoint) C (f(x) - f(y))^2
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, N);
    const double pref = std::pow(static_cast<double>(n), 2 - d);
    for (Eigen::Index i = 0; i < N; ++i) {
      const Site& x = box.site(static_cast<std::size_t>(i));
      field->visit_neighbors(x, field->reach().radius, [&](const Site& y, double c) {
        const auto j = box.index_of(y);
        if (!j || static_cast<Eigen::Index>(*j) <= i) return;
        std::vector<double> mid = x.position();
        for (int a = 0; a < d; ++a) mid[static_cast<std::size_t>(a)] = 0.5 * (mid[static_cast<std::size_t>(a)] + y.position(a));
        const double w = pref * weight(mid) / Z * c;
        const auto jj = static_cast<Eigen::Index>(*j);
        L(i, i) += w;
        L(jj, jj) += w;
        L(i, jj) -= w;
        L(jj, i) -= w;
      });
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(L, Eigen::MatrixXd(gmu.asDiagonal()));
    if (es.info() != Eigen::Success) throw std::runtime_error("generalized eigensolver failed");
    const double c2 = es.eigenvalues()[1];

    Rng rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(n));
    double min_q = kInfinity;
    for (int s = 0; s < samples; ++s) {
      Eigen::VectorXd f(N);
      for (Eigen::Index i = 0; i < N; ++i) f[i] = 2.0 * uniform01(rng) - 1.0;
      if (s % 2 == 1) {
        // smooth profiles probe the bottom of the spectrum
        const double a = 4.0 * uniform01(rng) - 2.0;
        for (Eigen::Index i = 0; i < N; ++i) f[i] = std::tanh(a * box.site(static_cast<std::size_t>(i)).position(0)) + 0.1 * f[i];
      }
      f.array() -= f.dot(gmu);
      const double den = f.dot(gmu.cwiseProduct(f));
      if (den > 0.0) min_q = std::min(min_q, f.dot(L * f) / den);
    }
    rep.metrics[key_n(n)] = {{"c2_hat", c2}, {"min_random_quotient", min_q}, {"sites", N}};
    rep.check("quotients_above_gap[" + key_n(n) + "]", min_q, ">=", c2 * (1.0 - 1e-9));
    csv << n << ',' << N << ',' << c2 << ',' << min_q << '\n';
    gaps.push_back(c2);
  }
  // weight mass outside the box for the product profile, normalized on R^d
  const double tail = 1.0 - std::pow(1.0 - std::exp(-R), d);
  rep.metrics["weight_tail_mass"] = tail;
  rep.check("weight_tail_mass", tail, "<=", cfg.tolerance("tail_mass"));
  for (std::size_t k = 1; k < gaps.size(); ++k)
    rep.check("gap_ratio[" + key_n(ns[k]) + "]", gaps[k] / gaps.front(), ">=", cfg.tolerance("ratio"));
  rep.fitted["c2_hat"] = gaps;
  artifacts.add("poincare.csv", csv.str());
  return rep;
}

// ---------------------------------------------------------------------------

ConvergenceReport cmd_killed_lower(const ExperimentConfig& cfg, Artifacts& artifacts) {
  ConvergenceReport rep;
  std::vector<int> ns = cfg.n;
  std::sort(ns.begin(), ns.end());
  const double theta = cfg.param<double>("theta");
  const double enlarge = cfg.param<double>("enlarge");
  const int d = cfg.d;
  if (cfg.times.empty()) throw ConfigError("killed-lower needs times");

  std::vector<double> c1s;
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,t,r,c1_hat,monotonicity_violations\n";
  for (int n : ns) {
    const auto field = cfg.make_field_at(n);
    const Site o = Site::origin(field->scale());
    double c1_n = kInfinity;
    std::size_t violations_n = 0;
    for (double t : cfg.times) {
      const double r = std::sqrt(t) / theta;
      const Box box(o, r), big(o, enlarge * r);
      std::vector<Site> sources;
      for (const Site& x : box.sites())
        if (euclid(x) <= std::sqrt(t) + 1e-12) sources.push_back(x);
      const auto small_k = heat_kernels(assemble(*field, box), {t}, sources);
      const auto big_k = heat_kernels(assemble(*field, big), {t}, sources);
      double c1 = kInfinity;
      std::size_t violations = 0;
      const double w = std::pow(t, 0.5 * d);
      for (std::size_t s = 0; s < sources.size(); ++s)
        for (const Site& y : box.sites()) {
          const double p = small_k[s].at(0, y);
          if (p > big_k[s].at(0, y) * (1.0 + 1e-10) + 1e-12) ++violations;
          if (euclid(y) <= std::sqrt(t) + 1e-12) c1 = std::min(c1, w * p);
        }
      csv << n << ',' << t << ',' << r << ',' << c1 << ',' << violations << '\n';
      rep.metrics[key_n(n)]["t=" + std::to_string(t)] = {{"c1_hat", c1}, {"violations", violations},
                                                        {"sources", sources.size()}};
      c1_n = std::min(c1_n, c1);
      violations_n += violations;
    }
    rep.check("c1_positive[" + key_n(n) + "]", c1_n, ">", 0.0);
    rep.check("domain_monotonicity[" + key_n(n) + "]", static_cast<double>(violations_n), "==", 0.0);
    c1s.push_back(c1_n);
  }
  for (std::size_t k = 1; k < c1s.size(); ++k)
    rep.check("c1_ratio[" + key_n(ns[k]) + "]", c1s[k] / c1s.front(), ">=", cfg.tolerance("ratio"));
  rep.fitted["c1_hat"] = c1s;
  artifacts.add("killed_lower.csv", csv.str());
  return rep;
}

// ---------------------------------------------------------------------------

ConvergenceReport cmd_heat_kernel(const ExperimentConfig& cfg, Artifacts& artifacts) {
  ConvergenceReport rep;
  if (cfg.times.empty()) throw ConfigError("heat-kernel needs times");
  const int d = cfg.d;
  std::vector<double> partner_pos = cfg.param_or<std::vector<double>>("partner", {});
  partner_pos.resize(static_cast<std::size_t>(d), 0.0);
  for (int n : cfg.n) {
    const auto field = cfg.make_field_at(n);
    const auto& sc = field->scale();
    const Site o = Site::origin(sc);
    Coords pc{};
    for (int i = 0; i < d; ++i) pc[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::llround(partner_pos[static_cast<std::size_t>(i)]));
    const Site partner(sc, pc);
    const Box box = cfg.box_radius ? Box(o, *cfg.box_radius) : default_box(*field, o, cfg.times.back()).box;
    if (!box.contains(partner)) throw ConfigError("partner site lies outside the box");
    const auto tables = heat_kernels(assemble(*field, box), cfg.times, {o, partner});
    const auto& p = tables[0];
    const auto& q = tables[1];
    const double mu = sc.site_measure();

    double asym = 0.0, min_density = kInfinity;
    for (std::size_t k = 0; k < cfg.times.size(); ++k) {
      asym = std::max(asym, std::abs(p.at(k, partner) - q.at(k, o)));
      min_density = std::min({min_density, p.density[k].minCoeff(), q.density[k].minCoeff()});
    }
    double ck = 0.0;
    std::size_t ck_triples = 0;
    const auto& ts = cfg.times;
    for (std::size_t i = 0; i < ts.size(); ++i)
      for (std::size_t j = i; j < ts.size(); ++j)
        for (std::size_t k = 0; k < ts.size(); ++k) {
          if (std::abs(ts[i] + ts[j] - ts[k]) > 1e-12 * ts[k]) continue;
          const double lhs = p.density[i].dot(q.density[j]) * mu;
          ck = std::max(ck, std::abs(lhs - p.at(k, partner)));
          ++ck_triples;
        }
    const double defect = *std::max_element(p.mass_defect.begin(), p.mass_defect.end());
    std::size_t defect_drops = 0;
    for (std::size_t k = 1; k < p.mass_defect.size(); ++k)
      if (p.mass_defect[k] < p.mass_defect[k - 1]) ++defect_drops;

    json m = {{"box_radius", box.radius()},  {"box_sites", box.size()},
              {"asymmetry", asym},           {"min_density", min_density},
              {"chapman_kolmogorov", ck},    {"ck_triples", ck_triples},
              {"mass_defect", p.mass_defect}, {"partner", to_string(partner)}};
    if (cfg.params.contains("davies_lambda")) {
      try {
        m["davies"] = davies_off_diagonal_check(p, *field, cfg.param<double>("davies_lambda")).to_json();
      } catch (const std::exception& e) {
        m["davies_error"] = e.what();
      }
    }
    rep.metrics[key_n(n)] = m;
    rep.check("symmetry[" + key_n(n) + "]", asym, "<=", cfg.tolerance("symmetry"));
    rep.check("nonnegative[" + key_n(n) + "]", min_density, ">=", 0.0);
    if (ck_triples > 0)
      rep.check("chapman_kolmogorov[" + key_n(n) + "]", ck, "<=", cfg.tolerance("chapman_kolmogorov"));
    rep.check("mass_defect[" + key_n(n) + "]", defect, "<=", cfg.tolerance("mass_defect"));
    rep.check("defect_monotone[" + key_n(n) + "]", static_cast<double>(defect_drops), "==", 0.0);

    std::ostringstream csv;
    p.write_csv(csv);
    artifacts.add(cfg.n.size() == 1 ? "heat_kernel.csv" : "heat_kernel_n" + std::to_string(n) + ".csv", csv.str());
  }
  return rep;
}

}  // namespace latdir

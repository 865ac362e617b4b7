// Monte Carlo experiments: exit probabilities and path simulation.

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

std::int64_t displacement_sq(const Site& a, const Site& b) {
  return squared_norm(difference(a.coords(), b.coords()), a.dim());
}

}  // namespace

ConvergenceReport cmd_exit_table(const ExperimentConfig& cfg, Artifacts& artifacts) {
  ConvergenceReport rep;
  const auto As = cfg.param<std::vector<double>>("A");
  const auto t0s = cfg.param<std::vector<double>>("t0");
  const auto rs = cfg.param<std::vector<double>>("r");
  const auto trials = cfg.param<std::uint64_t>("trials");
  const double B = cfg.param<double>("B");
  const double A_prime = cfg.param<double>("A_prime");
  const double B_prime = cfg.param<double>("B_prime");
  const json kc = cfg.params.value("kernel_check", json());
  if (t0s.empty() || !std::is_sorted(t0s.begin(), t0s.end())) throw ConfigError("t0 grid must be increasing");
  if (trials < 100) throw ConfigError("exit-table needs at least 100 trials");

  std::ostringstream csv;
  csv.precision(17);
  csv << "n,r,A,t0,hits,trials,p_hat,wilson_lo,wilson_hi\n";
  json stats = json::array();
  // crossing times indexed by (r, A), one entry per n
  std::map<std::pair<double, double>, std::vector<double>> crossings;

  for (int n : cfg.n) {
    const auto field = cfg.make_field_at(n);
    const SamplerCache chain(field);
    const Site x0 = Site::origin(field->scale());
    for (double r : rs) {
      const double horizon = r * r * std::max(t0s.back(), A_prime);
      // first exit time from each ball (scaled time), and the largest
      // displacement before scaled time A'
      std::vector<std::vector<double>> exit_time(As.size(), std::vector<double>(trials, kInfinity));
      std::vector<double> max_disp(trials, 0.0);
      const std::uint64_t stream_seed = cfg.seed ^ (static_cast<std::uint64_t>(n) << 32) ^
                                        static_cast<std::uint64_t>(std::llround(r * 1e6));
      for (std::uint64_t i = 0; i < trials; ++i) {
        const Trajectory tr = simulate(chain, x0, horizon, stream_seed, i);
        std::int64_t best = 0;
        for (std::size_t k = 1; k < tr.sites.size(); ++k) {
          const auto sq = displacement_sq(tr.sites[k], x0);
          const double s = tr.times[k] / (r * r);
          if (s <= A_prime) best = std::max(best, sq);
          for (std::size_t a = 0; a < As.size(); ++a)
            if (exit_time[a][i] == kInfinity && !within_radius(sq, r * As[a], n, false)) exit_time[a][i] = s;
        }
        max_disp[i] = std::sqrt(static_cast<double>(best)) / n / r;
      }

      std::sort(max_disp.begin(), max_disp.end());
      const auto q = static_cast<std::size_t>(std::ceil((1.0 - B_prime) * trials)) - 1;
      const std::string row = key_n(n) + ",r=" + std::to_string(r);
      rep.metrics[row]["R0_hat"] = max_disp[std::min(q, max_disp.size() - 1)];

      for (std::size_t a = 0; a < As.size(); ++a) {
        std::vector<double> times = exit_time[a];
        std::sort(times.begin(), times.end());
        std::vector<double> p;
        std::size_t drops = 0;
        for (double t0 : t0s) {
          const auto hits = static_cast<std::uint64_t>(std::upper_bound(times.begin(), times.end(), t0) - times.begin());
          const auto ci = wilson(hits, trials);
          p.push_back(static_cast<double>(hits) / static_cast<double>(trials));
          if (p.size() > 1 && p.back() < p[p.size() - 2]) ++drops;
          ExitStats s;
          s.A = As[a];
          s.B = B;
          s.t0 = t0;
          s.n = n;
          s.r = r;
          s.trials = trials;
          s.hits = hits;
          s.p_hat = p.back();
          s.wilson_lo = ci.lo;
          s.wilson_hi = ci.hi;
          s.seed = stream_seed;
          stats.push_back(s.to_json());
          csv << n << ',' << r << ',' << As[a] << ',' << t0 << ',' << hits << ',' << trials << ',' << s.p_hat
              << ',' << ci.lo << ',' << ci.hi << '\n';
        }
        const auto cross = crossing_time(t0s, p, B);
        const std::string tag = row + ",A=" + std::to_string(As[a]);
        rep.metrics[tag] = {{"p_hat", p}, {"t0_hat", cross ? json(*cross) : json(nullptr)}};
        rep.check("monotone_in_t0[" + tag + "]", static_cast<double>(drops), "==", 0.0);
        crossings[{r, As[a]}].push_back(cross ? *cross : std::nan(""));

        if (!kc.is_null() && kc.value("n", 0) == n && kc.value("r", 0.0) == r && kc.value("A", 0.0) == As[a]) {
          const double t_check = kc.at("t0").get<double>();
          const auto hits = static_cast<std::uint64_t>(
              std::upper_bound(times.begin(), times.end(), t_check) - times.begin());
          const auto ci = wilson(hits, trials);
          const auto table = heat_kernel(assemble(*field, closed_box(x0, r * As[a])), {r * r * t_check}, x0);
          const double defect = table.mass_defect.front();
          const double slack = cfg.tolerance("ci_slack");
          rep.metrics["kernel_check"] = {{"n", n},
                                         {"r", r},
                                         {"A", As[a]},
                                         {"t0", t_check},
                                         {"kernel_exit_probability", defect},
                                         {"p_hat", static_cast<double>(hits) / static_cast<double>(trials)},
                                         {"wilson_lo", ci.lo},
                                         {"wilson_hi", ci.hi}};
          rep.check("kernel_within_ci_lo", defect, ">=", ci.lo - slack);
          rep.check("kernel_within_ci_hi", defect, "<=", ci.hi + slack);
        }
      }
    }
  }
  for (const auto& [key, values] : crossings) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double ratio = *hi / *lo;
    const std::string tag = "r=" + std::to_string(key.first) + ",A=" + std::to_string(key.second);
    rep.fitted["t0_hat[" + tag + "]"] = values;
    rep.check("t0_ratio[" + tag + "]", ratio, "<=", cfg.tolerance("t0_ratio"));
  }
  artifacts.add("exit_table.csv", csv.str());
  artifacts.add("exit_stats.json", stats.dump(2) + "\n");
  return rep;
}

// ---------------------------------------------------------------------------

ConvergenceReport cmd_simulate(const ExperimentConfig& cfg, Artifacts& artifacts) {
  ConvergenceReport rep;
  if (cfg.n.size() != 1 || cfg.times.size() != 1) throw ConfigError("simulate takes one n and one time");
  const int n = cfg.n.front();
  const double T = cfg.times.front();
  const auto paths = cfg.param<std::uint64_t>("paths");
  const double lambda = cfg.param<double>("meyer_lambda");
  const auto exported = cfg.param_or<std::uint64_t>("export_paths", 0);
  const auto field = cfg.make_field_at(n);
  const auto& sc = field->scale();
  const Site o = Site::origin(sc);
  const SamplerCache chain(field);
  const MeyerParts parts(field, lambda);
  const std::uint64_t meyer_seed = cfg.seed ^ 0x5851f42d4c957f2dULL;

  std::map<Site, double> direct, meyer;
  double jumps = 0.0, jumps_sq = 0.0;
  std::uint64_t early_large = 0;
  const double w = 1.0 / static_cast<double>(paths);
  for (std::uint64_t i = 0; i < paths; ++i) {
    const Trajectory tr = simulate(chain, o, T, cfg.seed, i);
    direct[tr.sites.back()] += w;
    const double j = static_cast<double>(tr.jumps());
    jumps += j;
    jumps_sq += j * j;
    if (i < exported) {
      std::ostringstream out;
      tr.write_csv(out);
      artifacts.add("trajectory_" + std::to_string(i) + ".csv", out.str());
    }
    const Trajectory mt = simulate_meyer(parts, o, T, meyer_seed, i);
    meyer[mt.sites.back()] += w;
    for (std::size_t k = 1; k < mt.sites.size(); ++k)
      if (!within_radius(displacement_sq(mt.sites[k], mt.sites[k - 1]), lambda, n, false)) {
        ++early_large;
        break;
      }
  }

  const SizedBox sized = default_box(*field, o, T);
  const auto table = heat_kernel(assemble(*field, sized.box), {T}, o);
  std::map<Site, double> kernel;
  for (std::size_t i = 0; i < sized.box.size(); ++i)
    kernel[sized.box.site(i)] = table.density[0][static_cast<Eigen::Index>(i)] * sc.site_measure();
  // mass the kernel loses through the box boundary counts as disagreement
  const double tv_kernel = total_variation(direct, kernel) + 0.5 * table.mass_defect[0];
  const double tv_meyer = total_variation(direct, meyer);

  const double mean = jumps / static_cast<double>(paths);
  const double var = std::max(0.0, jumps_sq / static_cast<double>(paths) - mean * mean);
  const double se = std::sqrt(var / static_cast<double>(paths));
  AssumptionReport a1;
  check_A1(*field, Box(o, 1.0), a1);
  const double n2T = static_cast<double>(n) * n * T;
  const double J = parts.large_rate(o);
  const double bound = 1.0 - std::exp(-J * T);
  const auto ci = wilson(early_large, paths);

  std::ostringstream marg;
  marg.precision(17);
  for (int i = 0; i < sc.d; ++i) marg << "coord_" << (i + 1) << ',';
  marg << "empirical,meyer,kernel\n";
  std::map<Site, int> all;
  for (const auto* m : {&direct, &meyer, &kernel})
    for (const auto& [s, v] : *m) all[s] = 0;
  for (const auto& [s, unused] : all) {
    (void)unused;
    for (int i = 0; i < sc.d; ++i) marg << s.coord(i) << ',';
    auto get = [&](const std::map<Site, double>& m) {
      auto it = m.find(s);
      return it == m.end() ? 0.0 : it->second;
    };
    marg << get(direct) << ',' << get(meyer) << ',' << get(kernel) << '\n';
  }
  artifacts.add("marginal.csv", marg.str());

  rep.metrics = {{"paths", paths},
                 {"tv_kernel", tv_kernel},
                 {"tv_meyer", tv_meyer},
                 {"kernel_mass_defect", table.mass_defect[0]},
                 {"mean_jumps", mean},
                 {"mean_jumps_se", se},
                 {"nu", chain.nu(o)},
                 {"c1_hat", a1.c1_hat},
                 {"c2_hat", a1.c2_hat},
                 {"large_jump_rate", J},
                 {"first_large_jump_by_T", static_cast<double>(early_large) / static_cast<double>(paths)},
                 {"first_large_jump_wilson", {ci.lo, ci.hi}},
                 {"first_large_jump_bound", bound}};
  rep.check("tv_kernel", tv_kernel, "<=", cfg.tolerance("tv_kernel"));
  rep.check("tv_meyer", tv_meyer, "<=", cfg.tolerance("tv_meyer"));
  rep.check("mean_jumps_lower", mean, ">=", a1.c1_hat * n2T - 4.0 * se);
  rep.check("mean_jumps_upper", mean, "<=", a1.c2_hat * n2T + 4.0 * se);
  rep.check("first_large_jump", ci.lo, "<=", bound);
  return rep;
}

}  // namespace latdir

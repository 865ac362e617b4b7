// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "latdir/dirichlet.hpp"
#include "latdir/harness.hpp"
#include "latdir/paths.hpp"
#include "latdir/simulator.hpp"

using namespace latdir;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// Memoized experiment runs so the reproducibility check can rerun each
// configuration and compare against the first result.
struct Run {
  ConvergenceReport report;
  Artifacts artifacts;
};
std::map<std::string, Run>& runs() {
  static std::map<std::string, Run> cache;
  return cache;
}

const Run& run_once(const ExperimentConfig& cfg) {
  const std::string key = cfg.to_json().dump();
  auto it = runs().find(key);
  if (it != runs().end()) return it->second;
  Run r;
  r.report = run_experiment(cfg, r.artifacts);
  return runs().emplace(key, std::move(r)).first->second;
}

std::string failing_checks(const ConvergenceReport& rep) {
  std::string out;
  for (const auto& c : rep.checks)
    if (!c.pass) out += " " + c.name + "=" + fmt(c.value);
  if (rep.nonfinite_count() > 0) out += " nonfinite=" + std::to_string(rep.nonfinite_count());
  return out;
}

double check_value(const ConvergenceReport& rep, const std::string& name) {
  const Check* c = rep.find(name);
  if (!c) throw std::logic_error("report has no check " + name);
  return c->value;
}

GridFunction random_function(const Box& box, Rng& rng, double density = 1.0) {
  GridFunction f(box.scale());
  for (const Site& x : box.sites())
    if (uniform01(rng) < density) f.set(x, 2.0 * uniform01(rng) - 1.0);
  return f;
}

// ---------------------------------------------------------------------------

Outcome exact_combinatorics() {
  const auto t0 = Clock::now();
  std::size_t displacements = 0, edges_checked = 0, mismatches = 0;
  for (int d = 1; d <= 3; ++d) {
    const LatticeScale sc(4, d);
    const Site x = Site::origin(sc);
    for_each_offset(d, 1, 10.0 + 1e-9, false, [&](const Coords& k) {
      if (l1_norm(k, d) > 10) return;
      ++displacements;
      const Site y = x.offset_by(k);
      const auto paths = enumerate_paths(x, y);
      // directed traversal counts keyed by (tail, head)
      std::map<std::pair<Site, Site>, std::size_t> count;
      for (const auto& p : paths)
        for (std::size_t s = 0; s + 1 < p.size(); ++s) ++count[{p[s], p[s + 1]}];
      Coords lo{}, hi{};
      for (int i = 0; i < d; ++i) {
        lo[i] = std::min<std::int64_t>(0, k[i]) - 1;
        hi[i] = std::max<std::int64_t>(0, k[i]) + 1;
      }
      Coords w = lo;
      while (true) {
        const Site ws(sc, w);
        for (int i = 0; i < d; ++i)
          for (int dir : {1, -1}) {
            const Site zs = ws.shifted(i, dir);
            const auto it = count.find({ws, zs});
            const Rational expected(it == count.end() ? 0 : it->second, paths.size());
            ++edges_checked;
            if (edge_weight_exact(x, y, ws, zs) != expected) ++mismatches;
          }
        int a = 0;
        for (; a < d; ++a) {
          if (++w[a] <= hi[a]) break;
          w[a] = lo[a];
        }
        if (a == d) break;
      }
    });
  }

  Rng rng = stream_rng(2024, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + static_cast<int>(uniform01(rng) * 3.0) % 3;
    const LatticeScale sc(8, d);
    Coords xc{}, k{};
    int budget = 10;
    for (int i = 0; i < d; ++i) {
      xc[i] = static_cast<std::int64_t>(uniform01(rng) * 7.0) - 3;
      const int step = static_cast<int>(uniform01(rng) * (budget + 1));
      k[i] = uniform01(rng) < 0.5 ? -step : step;
      budget -= step;
    }
    const Site x(sc, xc);
    const GridFunction u = random_function(Box(x, 12.0 / 8.0), rng);
    worst = std::max(worst, gradient_identity_residual(u, x, x.offset_by(k)));
  }
  const double elapsed = seconds_since(t0);
  const bool pass = mismatches == 0 && worst <= 1e-12 && elapsed < 60.0;
  return {pass, std::to_string(displacements) + " displacements, " + std::to_string(edges_checked) +
                    " directed edges, mismatches " + std::to_string(mismatches) +
                    "; gradient residual " + fmt(worst) + " (<= 1e-12); " + fmt(elapsed) + " s (< 60)"};
}

// ---------------------------------------------------------------------------

// F_ij(z) from explicit enumeration of every shortest path of every local pair.
std::map<std::tuple<Site, int, int>, double> enumerated_F(const ConductanceField& field, double eps,
                                                          const Box& box) {
  std::map<std::tuple<Site, int, int>, double> F;
  const int d = box.scale().d;
  for (const Site& x : box.sites()) {
    for (const Site& y : box.sites()) {
      if (x == y || distance(x, y) > eps * (1.0 + 1e-12)) continue;
      const double c = field.value(x, y);
      if (c == 0.0) continue;
      const auto paths = enumerate_paths(x, y);
      const auto k = difference(y.coords(), x.coords());
      for (const auto& p : paths)
        for (std::size_t s = 0; s + 1 < p.size(); ++s) {
          const auto step = difference(p[s + 1].coords(), p[s].coords());
          int axis = 0;
          while (step[axis] == 0) ++axis;
          const Site lower = step[axis] > 0 ? p[s] : p[s + 1];
          const double sign = step[axis] > 0 ? 1.0 : -1.0;
          for (int j = 0; j < d; ++j)
            F[{lower, axis, j}] += sign * static_cast<double>(k[j]) * c / static_cast<double>(paths.size());
        }
    }
  }
  return F;
}

Outcome diffusion_ground_truth() {
  double worst_oracle = 0.0, worst_exact = 0.0, worst_recon = 0.0;
  std::size_t sites = 0;
  const double kappa = 0.75;
  for (int d = 1; d <= 3; ++d) {
    const int n = 4;
    const LatticeScale sc(n, d);
    const FieldPtr field = std::make_shared<NearestNeighborField>(sc, kappa);
    const SplitField sp(field, 1.0 / n);
    const Box box(Site::origin(sc), 1.0);
    const DiffusionField F = diffusion_field(sp, box);
    const auto oracle = enumerated_F(*field, 1.0 / n, box);
    for (std::size_t s = 0; s < box.size(); ++s) {
      if (!F.interior_valid[s]) continue;
      ++sites;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          const auto it = oracle.find({box.site(s), i, j});
          const double o = it == oracle.end() ? 0.0 : it->second;
          worst_oracle = std::max(worst_oracle, std::abs(F.at(s, i, j) - o));
          worst_exact = std::max(worst_exact, std::abs(F.at(s, i, j) - (i == j ? 2.0 * kappa : 0.0)));
        }
    }
  }
  // energy reconstruction from G on random u, v for NN and a stable-like local part
  Rng rng = stream_rng(2024, 2);
  const json stable = {{"family", "stable_like"}, {"alpha", 1.0}, {"beta", 1.5}, {"c1", 0.01},
                       {"c2", 0.25},              {"c3", 0.01},  {"c4", 0.5},   {"c5", 0.002}};
  for (int d = 1; d <= 2; ++d) {
    const LatticeScale sc(8, d);
    for (const FieldPtr& field : {FieldPtr(std::make_shared<NearestNeighborField>(sc, kappa)), make_field(stable, sc)}) {
      const double eps = field->range() ? 1.0 / sc.n : 0.3;
      const SplitField sp(field, eps);
      const Box inner(Site::origin(sc), 0.5);
      const GTable g = g_matrix(sp, Box(Site::origin(sc), 0.5 + eps + 2.0 / sc.n));
      for (int trial = 0; trial < 5; ++trial) {
        const GridFunction u = random_function(inner, rng), v = random_function(inner, rng);
        const double direct = energy(u, v, *sp.local());
        const double recon = energy_from_g(g, u, v);
        worst_recon = std::max(worst_recon, std::abs(recon - direct) / std::max(std::abs(direct), 1e-300));
      }
    }
  }
  const bool pass = worst_oracle <= 1e-12 && worst_exact == 0.0 && worst_recon <= 1e-10 && sites > 0;
  return {pass, std::to_string(sites) + " interior sites: |F - enumeration| " + fmt(worst_oracle) +
                    ", |F - 2 kappa I| " + fmt(worst_exact) + " (exact); G energy rel error " +
                    fmt(worst_recon) + " (<= 1e-10)"};
}

// ---------------------------------------------------------------------------

Outcome form_identities() {
  Rng rng = stream_rng(2024, 3);
  const json stable = {{"family", "stable_like"}, {"alpha", 1.0}, {"beta", 1.5}, {"c1", 0.01},
                       {"c2", 0.25},              {"c3", 0.01},  {"c4", 0.5},   {"c5", 0.002}};
  std::size_t bound_violations = 0, bound_trials = 0;
  double worst_gen = 0.0, worst_cell = 0.0;
  for (int d = 1; d <= 2; ++d) {
    const LatticeScale sc(8, d);
    for (const FieldPtr& field :
         {FieldPtr(std::make_shared<NearestNeighborField>(sc, 0.5)), make_field(stable, sc)}) {
      const Box box(Site::origin(sc), 0.75);
      const double M = moment_M(*field, box).value;
      const double n2 = static_cast<double>(sc.n) * sc.n;
      for (int trial = 0; trial < 250; ++trial, ++bound_trials) {
        const GridFunction f = random_function(box, rng, 0.5);
        const double nf = norm(f, 2.0);
        if (energy(f, f, *field) > 2.0 * n2 * M * nf * nf) ++bound_violations;
      }
      for (int trial = 0; trial < 5; ++trial) {
        const GridFunction f = random_function(box, rng), g = random_function(box, rng);
        double pairing = 0.0;
        for (const auto& [x, gx] : g.values()) pairing -= apply_generator(f, x, *field) * gx;
        pairing *= sc.site_measure();
        const double e = energy(f, g, *field);
        worst_gen = std::max(worst_gen, std::abs(pairing - e) / std::max(std::abs(e), 1e-300));
      }
      for (int trial = 0; trial < 3; ++trial) {
        const GridFunction u = random_function(Box(Site::origin(sc), 0.4), rng);
        const double lattice = energy(u, u, *field);
        const double cells = cell_form_energy(extend(u), *field);
        worst_cell = std::max(worst_cell, std::abs(cells - lattice) / lattice);
      }
    }
  }
  const bool pass = bound_violations == 0 && worst_gen <= 1e-10 && worst_cell <= 1e-12;
  return {pass, "energy bound violated on " + std::to_string(bound_violations) + "/" +
                    std::to_string(bound_trials) + "; generator pairing rel " + fmt(worst_gen) +
                    " (<= 1e-10); cell form rel " + fmt(worst_cell) + " (<= 1e-12)"};
}

// ---------------------------------------------------------------------------

ExperimentConfig nn_variant(ExperimentConfig cfg, int d, double kappa) {
  cfg.field = {{"family", "nearest_neighbor"}, {"kappa", kappa}};
  cfg.d = d;
  return cfg;
}

Outcome semigroup_sanity() {
  std::string detail;
  bool pass = true;
  const auto base = default_config("heat-kernel");
  for (const auto& cfg : {base, nn_variant(base, 2, 0.25)}) {
    const Run& r = run_once(cfg);
    const bool ok = r.report.passed() && cfg.times.back() <= 1.0;
    pass = pass && ok;
    const auto& m = r.report.metrics.begin().value();
    detail += (cfg.d == 1 ? "stable d=1: " : "NN d=2: ");
    detail += "asym " + fmt(m["asymmetry"].get<double>()) + ", min " + fmt(m["min_density"].get<double>()) +
              ", CK " + fmt(m["chapman_kolmogorov"].get<double>()) + ", defect " +
              fmt(m["mass_defect"].back().get<double>()) + (ok ? "" : " [" + failing_checks(r.report) + "]") +
              "; ";
  }
  return {pass, detail};
}

Outcome nash_bounds() {
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;
  const auto base = default_config("nash");
  for (const auto& cfg : {base, nn_variant(base, 1, 0.25), nn_variant(base, 2, 0.25)}) {
    const Run& r = run_once(cfg);
    pass = pass && r.report.passed();
    detail += cfg.field.value("family", "") + " d=" + std::to_string(cfg.d) + ": sup ratio " +
              fmt(check_value(r.report, "sup_ratio")) + ", eps ratio " + fmt(check_value(r.report, "eps_ratio")) +
              (r.report.passed() ? "" : " [" + failing_checks(r.report) + "]") + "; ";
  }
  const double elapsed = seconds_since(t0);
  pass = pass && elapsed < 600.0;
  return {pass, detail + fmt(elapsed) + " s (< 600)"};
}

Outcome simulator_vs_kernel() {
  const Run& r = run_once(default_config("simulate"));
  return {r.report.passed(), "TV(MC, kernel) " + fmt(check_value(r.report, "tv_kernel")) + " (<= 0.02), TV(Meyer, direct) " +
                                 fmt(check_value(r.report, "tv_meyer")) + " (<= 0.03)" + failing_checks(r.report)};
}

Outcome exit_probabilities() {
  const Run& r = run_once(default_config("exit-table"));
  const auto& kc = r.report.metrics.at("kernel_check");
  std::string detail = "kernel exit " + fmt(kc["kernel_exit_probability"].get<double>()) + " vs Wilson [" +
                       fmt(kc["wilson_lo"].get<double>()) + ", " + fmt(kc["wilson_hi"].get<double>()) + "]";
  for (const auto& c : r.report.checks)
    if (c.name.rfind("t0_ratio", 0) == 0) detail += ", " + c.name + " " + fmt(c.value);
  return {r.report.passed(), detail + failing_checks(r.report)};
}

Outcome resolvent_convergence() {
  const auto t0 = Clock::now();
  const Run& r = run_once(default_config("resolvent"));
  const double elapsed = seconds_since(t0);
  std::string errs;
  for (const auto& [k, v] : r.report.metrics.items()) errs += k + ":" + fmt(v["rel_sup_error"].get<double>()) + " ";
  return {r.report.passed() && elapsed < 300.0,
          "rel sup errors " + errs + "(<= 0.05 at n=64, decreasing); " + fmt(elapsed) + " s" + failing_checks(r.report)};
}

Outcome jump_measure() {
  const Run& r = run_once(default_config("jump-measure"));
  std::string errs;
  for (const auto& [k, v] : r.report.metrics.items()) errs += k + ":" + fmt(v["max_rel_error"].get<double>()) + " ";
  return {r.report.passed(), "max rel errors " + errs + "(<= 0.02 at n=64, decreasing)" + failing_checks(r.report)};
}

Outcome holder_regularity() {
  const Run& r = run_once(default_config("holder"));
  std::string detail;
  for (const auto& [k, v] : r.report.metrics.items())
    detail += k + ": beta " + fmt(v["beta_hat"].get<double>()) + ", violations " +
              fmt(v["violation_fraction"].get<double>()) + "; ";
  return {r.report.passed(), detail + failing_checks(r.report)};
}

Outcome poincare_killed() {
  const Run& p = run_once(default_config("poincare"));
  const Run& k = run_once(default_config("killed-lower"));
  std::string detail = "c2_hat";
  for (const auto& v : p.report.fitted["c2_hat"]) detail += " " + fmt(v.get<double>());
  detail += " (n=4,8,16); c1_hat";
  for (const auto& v : k.report.fitted["c1_hat"]) detail += " " + fmt(v.get<double>());
  detail += " (n=8,16,32)";
  return {p.report.passed() && k.report.passed(), detail + failing_checks(p.report) + failing_checks(k.report)};
}

std::map<std::string, std::string> read_dir(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[e.path().filename().string()] = s.str();
  }
  return out;
}

Outcome reproducibility() {
  const auto root = std::filesystem::temp_directory_path() / ("latdir_acceptance_" + std::to_string(::getpid()));
  std::size_t compared = 0;
  std::string differing;
  for (const auto& name : experiment_names()) {
    const ExperimentConfig cfg = default_config(name);
    const Run& first = run_once(cfg);
    Run second;
    second.report = run_experiment(cfg, second.artifacts);
    write_outputs(root / name / "a", first.report, first.artifacts);
    write_outputs(root / name / "b", second.report, second.artifacts);
    const auto a = read_dir(root / name / "a"), b = read_dir(root / name / "b");
    compared += a.size();
    if (a != b || !first.report.consistent() || !second.report.consistent()) differing += " " + name;
  }
  std::filesystem::remove_all(root);
  return {differing.empty(), std::to_string(experiment_names().size()) + " subcommands rerun, " +
                                 std::to_string(compared) + " files compared byte for byte" +
                                 (differing.empty() ? "" : "; differing:" + differing)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"exact path combinatorics", exact_combinatorics},
      {"diffusion field ground truth", diffusion_ground_truth},
      {"form identities", form_identities},
      {"semigroup sanity", semigroup_sanity},
      {"on-diagonal bounds", nash_bounds},
      {"simulator vs kernel", simulator_vs_kernel},
      {"exit probabilities", exit_probabilities},
      {"resolvent convergence", resolvent_convergence},
      {"jump measure convergence", jump_measure},
      {"Holder regularity", holder_regularity},
      {"Poincare and killed lower bound", poincare_killed},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}

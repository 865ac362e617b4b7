#include <doctest.h>

#include <cmath>
#include <limits>

#include "latdir/harness.hpp"
#include "latdir/quadrature.hpp"

using namespace latdir;
using nlohmann::json;

TEST_CASE("config round trip and validation") {
  for (const auto& name : experiment_names()) {
    const ExperimentConfig cfg = default_config(name);
    CHECK(cfg.experiment == name);
    const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
  }
  json j = default_config("nash").to_json();
  j["schema"] = 2;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
  json k = default_config("nash").to_json();
  k["n"] = "sixteen";
  CHECK_THROWS_AS(ExperimentConfig::from_json(k), ConfigError);
  CHECK_THROWS_AS(default_config("no-such-experiment"), ConfigError);
  CHECK_THROWS_AS(default_config("nash").tolerance("missing"), ConfigError);
}

TEST_CASE("checks and reports") {
  CHECK(compare(1.0, "<=", 1.0));
  CHECK_FALSE(compare(1.0, "<", 1.0));
  CHECK(compare(2.0, ">", 1.0));
  CHECK(compare(0.0, "==", 0.0));
  CHECK_FALSE(compare(std::nan(""), "<=", 1.0));
  CHECK_THROWS(compare(1.0, "~", 1.0));

  ConvergenceReport r;
  r.check("a", 0.5, "<=", 1.0);
  r.check("b", 3.0, "<", 2.0);
  CHECK_FALSE(r.passed());
  CHECK(r.consistent());
  REQUIRE(r.find("b") != nullptr);
  CHECK_FALSE(r.find("b")->pass);
  r.checks[1].pass = true;
  CHECK_FALSE(r.consistent());

  r.metrics["x"] = {1.0, std::numeric_limits<double>::infinity()};
  r.fitted["y"] = std::nan("");
  CHECK(r.nonfinite_count() == 2);
}

TEST_CASE("numerical helpers") {
  const auto t = dyadic_times(0.1, 1.0);
  REQUIRE(t.size() == 4);
  CHECK(t.front() == 0.125);
  CHECK(t.back() == 1.0);

  const LineFit f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK_THROWS(fit_line({1, 1}, {0, 1}));

  const LatticeScale sc(4, 1);
  std::map<Site, double> p{{Site(sc, {0}), 0.5}, {Site(sc, {1}), 0.5}};
  std::map<Site, double> q{{Site(sc, {1}), 0.5}, {Site(sc, {2}), 0.5}};
  CHECK(total_variation(p, p) == 0.0);
  CHECK(total_variation(p, q) == doctest::Approx(0.5));

  const auto c = crossing_time({0.1, 0.2, 0.4}, {0.1, 0.3, 0.7}, 0.5);
  REQUIRE(c.has_value());
  CHECK(*c == doctest::Approx(std::sqrt(0.2 * 0.4)));
  CHECK_FALSE(crossing_time({0.1, 0.2}, {0.1, 0.2}, 0.5).has_value());
}

TEST_CASE("annulus fractions tile the line") {
  for (int n : {3, 8}) {
    for (double lo : {0.0, 0.3}) {
      const double hi = 1.7;
      double s = 0.0;
      for (std::int64_t k = -10 * n; k <= 10 * n; ++k) {
        const double a = annulus_fraction(k, n, lo, hi);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0 + 1e-15);
        s += a;
      }
      CHECK(s == doctest::Approx(2.0 * n * (hi - lo)).epsilon(1e-12));
    }
  }
}

TEST_CASE("jump pairing") {
  const LatticeScale sc(16, 1);
  const auto field = make_field({{"family", "nearest_neighbor"}, {"kappa", 1.0}}, sc);
  const Bump g{0.0, 0.5};
  // nearest neighbours lie at 1/16, outside the window [1/2, 2]
  CHECK(lattice_jump_pairing(*field, g, g, 2.0) == 0.0);
  const Bump far{5.0, 0.5};
  CHECK(jump_pairing_oracle(g, far, 2.0, 1.0, 2.0) == 0.0);
}

TEST_CASE("levy symbol") {
  CHECK(levy_symbol_1d(0.0, 1.0, 1.5, 0.01, 0.002) == 0.0);
  for (double u : {0.5, 3.0, 40.0}) {
    const double a = levy_symbol_1d(u, 1.0, 1.5, 0.01, 0.002);
    CHECK(a > 0.0);
    CHECK(levy_symbol_1d(-u, 1.0, 1.5, 0.01, 0.002) == doctest::Approx(a).epsilon(1e-12));
  }
  // pure alpha = beta = 1 profile with c3 = c5: pi c |u|
  CHECK(levy_symbol_1d(2.0, 1.0, 1.0, 0.3, 0.3) == doctest::Approx(M_PI * 0.3 * 2.0).epsilon(1e-8));
}

TEST_CASE("symmetry violations are reported") {
  const LatticeScale sc(4, 1);
  const auto lopsided = TabulatedField::by_pair(sc, {{{Coords{0}, Coords{1}}, 1.0}, {{Coords{1}, Coords{0}}, 1.5}});
  AssumptionReport rep;
  check_symmetry(*lopsided, Box(Site::origin(sc), 1.0), 10, 3, rep);
  CHECK_FALSE(rep.symmetric);
}

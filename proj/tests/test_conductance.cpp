#include <doctest.h>

#include <cmath>

#include "latdir/conductance.hpp"
#include "latdir/simulator.hpp"

using namespace latdir;

namespace {

StableLikeParams default_params() {
  StableLikeParams p;
  p.alpha = 1.0;
  p.beta = 1.5;
  p.c1 = 0.01;
  p.c2 = 0.25;
  p.c3 = 0.01;
  p.c4 = 0.5;
  p.c5 = 0.002;
  return p;
}

// NN field of strength kappa on a pairwise table over a square, optionally
// without the bond between a and b.
FieldPtr nn_table(const LatticeScale& sc, int half, double kappa, std::optional<std::pair<Coords, Coords>> removed) {
  std::vector<std::pair<std::pair<Coords, Coords>, double>> rows;
  for (std::int64_t a = -half; a <= half; ++a)
    for (std::int64_t b = -half; b <= half; ++b) {
      const Coords x{a, b};
      for (int axis = 0; axis < 2; ++axis)
        for (int dir : {1, -1}) {
          Coords y = x;
          y[axis] += dir;
          if (removed && ((removed->first == x && removed->second == y) || (removed->first == y && removed->second == x)))
            continue;
          rows.push_back({{x, y}, kappa});
        }
    }
  return TabulatedField::by_pair(sc, rows);
}

}  // namespace

TEST_CASE("total conductance") {
  const LatticeScale sc(8, 2);
  NearestNeighborField nn(sc, 0.3);
  CHECK(nu(nn, Site::origin(sc)).value == doctest::Approx(4 * 0.3));
  const auto zero = TabulatedField::by_displacement(sc, {});
  CHECK(nu(*zero, Site::origin(sc)).value == 0.0);
  CHECK(moment_M(*zero, Box(Site::origin(sc), 0.5)).value == 0.0);
}

TEST_CASE("stable-like total conductance and moment against brute-force sums") {
  for (int n : {8, 16}) {
    const LatticeScale sc(n, 1);
    StableLikeParams p = default_params();
    p.beta = 1.0;
    StableLikeField f(sc, p);
    // brute force to K steps plus the alpha = 1 tail sum_{k > K} c5 n^{-1} k^{-2}
    const std::int64_t K = 2'000'000;
    long double s = 0.0L, m = 0.0L;
    for (std::int64_t k = K; k >= 1; --k) {
      const double c = f.value_at_offset(Coords{k});
      s += 2.0L * c;
      const double h = static_cast<double>(k) / n;
      m += 2.0L * std::min(1.0, h * h) * c;
    }
    const double tail = 2.0 * p.c5 / n / (K + 0.5);
    const double n2 = static_cast<double>(n) * n;
    // partial sums stop at the reach; the gap must sit inside the certified remainder
    const auto total = nu(f, Site::origin(sc));
    const double nu_gap = static_cast<double>(s) + tail - total.value;
    CHECK(nu_gap >= -1e-12);
    CHECK(nu_gap <= total.remainder_bound * (1.0 + 1e-6) + 1e-12);
    const auto mom = moment_M(f, Box(Site::origin(sc), 0.5));
    const double m_gap = n2 * (static_cast<double>(m) + tail) - mom.value;
    CHECK(m_gap >= -1e-12);
    CHECK(m_gap <= mom.remainder_bound * (1.0 + 1e-6) + 1e-12);
  }
}

TEST_CASE("nearest-neighbour moment") {
  for (int d = 1; d <= 3; ++d) {
    const LatticeScale sc(5, d);
    NearestNeighborField nn(sc, 0.7);
    CHECK(moment_M(nn, Box(Site::origin(sc), 0.5)).value == doctest::Approx(2 * d * 0.7));
  }
}

TEST_CASE("local and jump split") {
  const LatticeScale sc(8, 2);
  const FieldPtr nn = std::make_shared<NearestNeighborField>(sc, 1.0);
  const SplitField s = split(nn, 1.0 / 8);
  CHECK(nu(*s.jump(), Site::origin(sc)).value == 0.0);

  const FieldPtr stable = std::make_shared<StableLikeField>(LatticeScale(8, 1), default_params());
  const SplitField t = split(stable, 0.25);
  const LatticeScale s1(8, 1);
  const Site o = Site::origin(s1);
  for (std::int64_t k = 1; k < 40; ++k) {
    const Site y(s1, {k});
    CHECK(t.local()->value(o, y) + t.jump()->value(o, y) == stable->value(o, y));
  }
  // |x - y| = eps goes to the local part in full
  CHECK(t.local()->value(o, Site(s1, {2})) == stable->value(o, Site(s1, {2})));
  CHECK(t.jump()->value(o, Site(s1, {2})) == 0.0);
}

TEST_CASE("assumption checks") {
  for (int d = 1; d <= 2; ++d) {
    const LatticeScale sc(6, d);
    NearestNeighborField nn(sc, 0.4);
    AssumptionReport r;
    const Box box(Site::origin(sc), 1.0);
    check_A1(nn, box, r);
    check_A2(nn, box, 1.0, 0.4, r);
    check_symmetry(nn, box, 200, 1, r);
    CHECK(r.c1_hat == doctest::Approx(2 * d * 0.4));
    CHECK(r.c2_hat == doctest::Approx(2 * d * 0.4));
    CHECK(r.A2_ok);
    CHECK(r.A2_longest_chain == 2);
    CHECK(r.symmetric);
  }

  const LatticeScale sc(4, 2);
  const Box box(Site::origin(sc), 0.6);
  const Coords a{0, 0}, b{1, 0};
  AssumptionReport cut;
  check_A2(*nn_table(sc, 4, 1.0, std::make_pair(a, b)), box, 2.0, 0.5, cut);
  CHECK(cut.A2_ok);
  CHECK(cut.A2_longest_chain == 4);
  AssumptionReport tight;
  check_A2(*nn_table(sc, 4, 1.0, std::make_pair(a, b)), box, 1.0, 0.5, tight);
  CHECK_FALSE(tight.A2_ok);
  REQUIRE(tight.A2_failure.has_value());

  const auto lopsided = TabulatedField::by_pair(sc, {{{Coords{0, 0}, Coords{1, 0}}, 1.0}, {{Coords{1, 0}, Coords{0, 0}}, 2.0}});
  AssumptionReport asym;
  check_symmetry(*lopsided, box, 10, 1, asym);
  CHECK_FALSE(asym.symmetric);
  REQUIRE(asym.asymmetric_pair.has_value());
  CHECK(distance(asym.asymmetric_pair->x, asym.asymmetric_pair->y) == doctest::Approx(0.25));

  StableLikeField f(LatticeScale(16, 1), default_params());
  AssumptionReport env;
  check_A3(f, Box(Site::origin(f.scale()), 1.0), *f.envelope(), env);
  CHECK(env.A3_margin <= 1.0);
  CHECK(env.A3_margin > 0.9);
}

TEST_CASE("large jump intensity") {
  const LatticeScale sc(8, 2);
  NearestNeighborField nn(sc, 0.5);
  const Site o = Site::origin(sc);
  CHECK(large_jump_intensity(nn, o, 1.0 / 16, 1.0).value == doctest::Approx(4 * 0.5 * 64));
  CHECK(large_jump_intensity(nn, o, 0.5, 1.0).value == 0.0);

  StableLikeField f(LatticeScale(16, 1), default_params());
  Rng rng = stream_rng(21, 0);
  for (int i = 0; i < 100; ++i) {
    const Site x(f.scale(), {static_cast<std::int64_t>(uniform01(rng) * 200) - 100});
    const double lambda = 0.1 + 0.9 * uniform01(rng);
    const auto J = large_jump_intensity(f, x, lambda, 1.0);
    CHECK(J.within_bound);
    CHECK(J.value <= J.bound);
  }
}

TEST_CASE("field construction from json") {
  const auto f = make_field({{"family", "nearest_neighbor"}, {"kappa", 2.0}}, LatticeScale(4, 3));
  CHECK(f->value(Site(f->scale(), {0, 0, 0}), Site(f->scale(), {0, 0, 1})) == 2.0);
  CHECK_THROWS_AS(make_field({{"family", "nope"}}, LatticeScale(4, 1)), std::invalid_argument);
  CHECK_THROWS(make_field({{"family", "tabulated"}, {"n", 8}, {"entries", nlohmann::json::array()}}, LatticeScale(4, 1)));
  CHECK(eps_from_rule("n^-0.5", 16) == doctest::Approx(0.25));
}

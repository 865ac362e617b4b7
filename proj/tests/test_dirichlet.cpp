#include <doctest.h>

#include <cmath>

#include "latdir/dirichlet.hpp"
#include "latdir/harness.hpp"
#include "latdir/quadrature.hpp"
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

GridFunction random_on(const Box& box, Rng& rng) {
  GridFunction f(box.scale());
  for (const Site& x : box.sites()) f.set(x, 2.0 * uniform01(rng) - 1.0);
  return f;
}

}  // namespace

TEST_CASE("energies of simple functions") {
  for (int d = 1; d <= 3; ++d) {
    const LatticeScale sc(6, d);
    NearestNeighborField nn(sc, 0.3);
    const Site o = Site::origin(sc);
    const auto one = GridFunction::indicator(o);
    const double scale = std::pow(6.0, 2 - d);
    CHECK(energy(one, one, nn) == doctest::Approx(2 * d * 0.3 * scale));
    CHECK(energy_nn(one) == doctest::Approx(2 * d * scale));
    const auto c = GridFunction::constant_on(Box(o, 10.0), 1.0);
    CHECK(apply_generator(c, o, nn) == 0.0);
    CHECK(apply_generator(one, o, nn) == doctest::Approx(-2 * d * 0.3 * 36));
    CHECK(energy_nn(GridFunction(sc)) == 0.0);
  }
}

TEST_CASE("nearest-neighbour energy of a linear function by direct summation") {
  const LatticeScale sc(5, 2);
  const Box box(Site::origin(sc), 1.0);
  GridFunction f(sc);
  for (const Site& x : box.sites()) f.set(x, x.position(0));
  // direct: every unordered NN pair counted once, f = x_1 outside the box is 0
  double direct = 0.0;
  for (const Site& x : box.sites())
    for (int axis = 0; axis < 2; ++axis) {
      const Site y = x.shifted(axis, 1);
      const double diff = f(y) - f(x);
      direct += diff * diff;
      if (!box.contains(x.shifted(axis, -1))) direct += f(x) * f(x);
    }
  CHECK(energy_nn(f) == doctest::Approx(direct));
}

TEST_CASE("split energy partitions the pairs") {
  const LatticeScale sc(8, 1);
  const FieldPtr f = std::make_shared<StableLikeField>(sc, default_params());
  Rng rng = stream_rng(31, 0);
  const Box box(Site::origin(sc), 1.0);
  for (int i = 0; i < 20; ++i) {
    const auto u = random_on(box, rng), g = random_on(box, rng);
    const auto s = energy_split(u, g, SplitField(f, 0.3));
    const double e = energy(u, g, *f);
    CHECK(s.local + s.jump == doctest::Approx(e).epsilon(1e-12));
    const auto su = energy_split(u, u, SplitField(f, 0.3));
    CHECK(su.local >= 0.0);
    CHECK(su.jump >= 0.0);
  }
  const FieldPtr nn = std::make_shared<NearestNeighborField>(LatticeScale(8, 2), 1.0);
  const auto u = random_on(Box(Site::origin(nn->scale()), 0.5), rng);
  CHECK(energy_split(u, u, SplitField(nn, 1.0 / 8)).jump == 0.0);
}

TEST_CASE("generator assembly") {
  const LatticeScale sc(4, 2);
  NearestNeighborField nn(sc, 0.5);
  const Site o = Site::origin(sc);
  const auto one = assemble(nn, Box(o, 0.1));
  REQUIRE(one.matrix.rows() == 1);
  CHECK(one.matrix.coeff(0, 0) == doctest::Approx(-16.0 * 2.0));

  const Box box(o, 1.0);
  const auto gen = assemble(nn, box);
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (box.depth(box.site(i)) <= 0.25 + 1e-12) continue;
    CHECK(std::abs(gen.matrix.row(static_cast<Eigen::Index>(i)).sum()) <= 1e-12);
  }
  // quadratic form = in-box energy plus killing through the boundary
  Rng rng = stream_rng(32, 0);
  const auto f = random_on(box, rng);
  const Eigen::VectorXd v = f.to_box_vector(box);
  const double form = -v.dot(gen.matrix * v) * sc.site_measure();
  CHECK(form == doctest::Approx(energy(f, f, nn)).epsilon(1e-12));
}

TEST_CASE("heat kernel basics") {
  const LatticeScale sc(8, 1);
  const auto field = std::make_shared<StableLikeField>(sc, default_params());
  const Site o = Site::origin(sc);
  const Box box(o, 3.0);
  const auto gen = assemble(*field, box);
  const auto tiny = heat_kernel(gen, {1e-9}, o);
  CHECK(tiny.at(0, o) == doctest::Approx(8.0).epsilon(1e-6));

  const Site y(sc, {5});
  const auto tables = heat_kernels(gen, {0.1, 0.2, 0.3}, {o, y});
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(tables[0].at(k, y) - tables[1].at(k, o)) <= 1e-10);
  // Chapman-Kolmogorov at 0.1 + 0.2
  const double ck = tables[0].density[0].dot(tables[1].density[1]) * sc.site_measure();
  CHECK(std::abs(ck - tables[0].at(2, y)) <= 1e-8);
  // r = 1 is the identity and r = 1/2 keeps the mass
  const auto same = scaled_kernel(tables[0], 1.0);
  CHECK((same.density[1] == tables[0].density[1]));
  const auto half = scaled_kernel(tables[0], 0.5);
  CHECK(half.density[0].sum() * half.scale().site_measure() ==
        doctest::Approx(tables[0].density[0].sum() * sc.site_measure()).epsilon(1e-12));
}

TEST_CASE("scaled kernel equals the kernel of the rescaled field") {
  const LatticeScale sc(16, 1);
  const FieldPtr base = std::make_shared<StableLikeField>(sc, default_params());
  const Box box(Site::origin(sc), 2.0);
  const auto p = heat_kernel(assemble(*base, box), {0.05, 0.1}, Site::origin(sc));
  const auto q = scaled_kernel(p, 0.5);
  RescaledField rescaled(base, 0.5);
  const auto direct = heat_kernel(assemble(rescaled, q.box), q.times, Site::origin(rescaled.scale()));
  for (std::size_t k = 0; k < 2; ++k)
    for (const Site& y : q.box.sites()) CHECK(q.at(k, y) == doctest::Approx(direct.at(k, y)).epsilon(1e-9));
}

TEST_CASE("truncated kernels") {
  const LatticeScale sc(8, 1);
  const FieldPtr nn = std::make_shared<NearestNeighborField>(sc, 1.0);
  const Site o = Site::origin(sc);
  const Box box(o, 2.0);
  const auto none = truncated_kernel(nn, box, 1.0 / 16, {0.3}, o);
  CHECK(none.at(0, o) == doctest::Approx(8.0));
  CHECK(none.at(0, Site(sc, {1})) == 0.0);
  const auto full = truncated_kernel(nn, box, 1.0, {0.3}, o);
  const auto plain = heat_kernel(assemble(*nn, box), {0.3}, o);
  CHECK((full.density[0] - plain.density[0]).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("resolvent") {
  const LatticeScale sc(16, 1);
  NearestNeighborField nn(sc, 0.5);
  const Box box(Site::origin(sc), 6.0);
  const auto gen = assemble(nn, box);
  const auto zero = resolvent(gen, 1.0, GridFunction(sc));
  for (const auto& [x, v] : zero.values()) CHECK(v == 0.0);

  // the closed form against direct quadrature of the exponential kernel
  const double kappa = 0.5, lambda = 1.0, sigma = 0.25;
  for (double x : {-1.0, 0.0, 0.3, 2.0}) {
    const double m = std::sqrt(lambda / kappa);
    auto integrand = [&](double y) {
      return std::exp(-std::abs(x - y) * m) * std::exp(-y * y / (2 * sigma * sigma));
    };
    const double left = integrate(integrand, -10.0, x, 1e-12).value;
    const double right = integrate(integrand, x, 10.0, 1e-12).value;
    const double quad = (left + right) / (2.0 * std::sqrt(lambda * kappa));
    CHECK(brownian_resolvent_gaussian(x, kappa, lambda, sigma) == doctest::Approx(quad).epsilon(1e-10));
  }
}

TEST_CASE("carre du champ") {
  const LatticeScale sc(8, 2);
  NearestNeighborField nn(sc, 0.5);
  const Site xi = Site::origin(sc);
  CHECK(carre_du_champ([](const Site&) { return 3.0; }, xi, nn, 1.0) == 0.0);
  CHECK(carre_du_champ([&](const Site& s) { return s == xi ? 1.0 : 0.0; }, xi, nn, 1.0) ==
        doctest::Approx(4 * 0.5 * 64));
  CHECK(davies_exponent(0.0, 1.0, 0.5, 1.0, {0.1, 0.5, 1.0}) == 0.0);
}

TEST_CASE("default box meets the mass target") {
  const LatticeScale sc(16, 1);
  StableLikeField f(sc, default_params());
  const auto sized = default_box(f, Site::origin(sc), 1.0);
  CHECK(sized.mass_defect < 1e-3);
}

TEST_CASE("small-support energy and generator agree with full neighbour sums") {
  for (int d = 1; d <= 2; ++d) {
    const LatticeScale sc(8, d);
    StableLikeField field(sc, default_params());
    Rng rng = stream_rng(33, static_cast<std::uint64_t>(d));
    const Box box(Site::origin(sc), 0.4);
    const auto f = random_on(box, rng), g = random_on(box, rng);
    const double radius = field.reach().radius;
    double direct = 0.0;
    for (const Site& x : box.sites())
      field.visit_neighbors(x, radius, [&](const Site& y, double c) {
        const double df = f(y) - f(x), dg = g(y) - g(x);
        direct += df * dg * c * (box.contains(y) ? 1.0 : 2.0);
      });
    direct *= 0.5 * std::pow(8.0, 2 - d);
    CHECK(energy(f, g, field) == doctest::Approx(direct).epsilon(1e-11));

    const Site x = box.site(box.size() / 3);
    double gen = 0.0;
    field.visit_neighbors(x, radius, [&](const Site& y, double c) { gen += (f(y) - f(x)) * c; });
    CHECK(apply_generator(f, x, field) == doctest::Approx(64.0 * gen).epsilon(1e-11));
  }
}

TEST_CASE("absorbed mass matches the lost probability and grows in time") {
  const LatticeScale sc(8, 1);
  NearestNeighborField nn(sc, 1.0);
  const Site o = Site::origin(sc);
  const auto p = heat_kernel(assemble(nn, Box(o, 0.5)), {0.01, 0.05, 0.2, 0.5}, o);
  for (std::size_t k = 0; k < p.times.size(); ++k) {
    const double lost = 1.0 - p.density[k].sum() * sc.site_measure();
    CHECK(std::abs(p.mass_defect[k] - lost) <= 1e-10);
    if (k) CHECK(p.mass_defect[k] >= p.mass_defect[k - 1]);
  }
  // far from the boundary the defect is tiny but still ordered
  const LatticeScale s2(16, 2);
  NearestNeighborField wide(s2, 0.25);
  const auto q = heat_kernel(assemble(wide, Box(Site::origin(s2), 2.0)), {0.05, 0.1, 0.15, 0.2}, Site::origin(s2));
  for (std::size_t k = 1; k < q.times.size(); ++k) CHECK(q.mass_defect[k] >= q.mass_defect[k - 1]);
  CHECK(q.mass_defect.front() < q.mass_defect.back());
}

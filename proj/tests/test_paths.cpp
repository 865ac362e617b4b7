#include <doctest.h>

#include <cmath>

#include "latdir/paths.hpp"
#include "latdir/simulator.hpp"

using namespace latdir;

TEST_CASE("path counts") {
  const LatticeScale s2(4, 2), s3(4, 3);
  CHECK(path_count(Site(s2, {0, 0}), Site(s2, {1, 1})) == 2);
  CHECK(path_count(Site(s2, {0, 0}), Site(s2, {2, 1})) == 3);
  CHECK(path_count(Site(s3, {0, 0, 0}), Site(s3, {1, 1, 1})) == 6);
  CHECK(path_count(Site(s2, {3, -2}), Site(s2, {3, -2})) == 1);
  CHECK(path_count(Site(s2, {0, 0}), Site(s2, {-2, 1})) == path_count(Site(s2, {0, 0}), Site(s2, {2, 1})));
  // enumeration agrees with the multinomial
  Rng rng = stream_rng(41, 0);
  for (int t = 0; t < 50; ++t) {
    Coords k{};
    for (int i = 0; i < 3; ++i) k[i] = static_cast<std::int64_t>(uniform01(rng) * 7) - 3;
    const Site x = Site::origin(s3), y(s3, k);
    CHECK(enumerate_paths(x, y).size() == path_count(x, y));
  }
}

TEST_CASE("edge weights") {
  const LatticeScale sc(4, 2);
  const Site x(sc, {0, 0}), y(sc, {1, 1});
  CHECK(edge_weight(x, y, x, Site(sc, {1, 0})) == doctest::Approx(0.5));
  CHECK(edge_weight(x, y, Site(sc, {1, 0}), x) == 0.0);
  CHECK(edge_weight_exact(x, y, Site(sc, {1, 0}), y) == Rational(1, 2));

  // each path uses |x - y|_n edges, so the weights sum to the l1 length
  const Site far(sc, {3, -2});
  Rational total = 0;
  for (std::int64_t a = -1; a <= 4; ++a)
    for (std::int64_t b = -3; b <= 1; ++b)
      for (int axis = 0; axis < 2; ++axis)
        for (int dir : {1, -1}) {
          const Site w(sc, {a, b});
          total += edge_weight_exact(x, far, w, w.shifted(axis, dir));
        }
  CHECK(total == Rational(l1_steps(x, far)));
}

TEST_CASE("gradient identity") {
  const LatticeScale sc(5, 2);
  const Box box(Site::origin(sc), 2.0);
  GridFunction c = GridFunction::constant_on(box, 4.0);
  GridFunction lin(sc);
  for (const Site& s : box.sites()) lin.set(s, 2.0 * s.position(0) - 3.0 * s.position(1));
  Rng rng = stream_rng(42, 0);
  for (int t = 0; t < 30; ++t) {
    const Site a(sc, {static_cast<std::int64_t>(uniform01(rng) * 9) - 4, static_cast<std::int64_t>(uniform01(rng) * 9) - 4});
    const Site b(sc, {static_cast<std::int64_t>(uniform01(rng) * 9) - 4, static_cast<std::int64_t>(uniform01(rng) * 9) - 4});
    CHECK(gradient_identity_residual(c, a, b) <= 1e-12);
    CHECK(gradient_identity_residual(lin, a, b) <= 1e-12);
  }
}

TEST_CASE("diffusion field of a zero local part") {
  const LatticeScale sc(4, 2);
  const auto zero = TabulatedField::by_displacement(sc, {});
  const DiffusionField F = diffusion_field(split(zero, 0.5), Box(Site::origin(sc), 0.6));
  for (double v : F.values) CHECK(v == 0.0);
  const auto err = a4_l1_error(F, [](std::span<const double>) { return Eigen::MatrixXd::Zero(2, 2); });
  CHECK(err.l1 == 0.0);
}

TEST_CASE("a4 error against a constant target equal to F") {
  const LatticeScale sc(4, 2);
  const FieldPtr nn = std::make_shared<NearestNeighborField>(sc, 0.75);
  const DiffusionField F = diffusion_field(split(nn, 0.25), Box(Site::origin(sc), 1.0));
  const auto exact = a4_l1_error(F, [](std::span<const double>) { return Eigen::MatrixXd(1.5 * Eigen::MatrixXd::Identity(2, 2)); });
  CHECK(exact.sites > 0);
  CHECK(exact.l1 <= 1e-12);
  CHECK(exact.asymmetry <= 1e-12);
  CHECK(exact.min_eigenvalue == doctest::Approx(1.5));
  const auto off = a4_l1_error(F, [](std::span<const double>) { return Eigen::MatrixXd(Eigen::MatrixXd::Identity(2, 2)); });
  CHECK(off.l1 == doctest::Approx(0.5 * static_cast<double>(off.sites) / 16.0));
}

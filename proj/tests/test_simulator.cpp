#include <doctest.h>

#include <cmath>
#include <map>

#include "latdir/simulator.hpp"

using namespace latdir;

TEST_CASE("alias sampler frequencies") {
  const LatticeScale sc(6, 2);
  NearestNeighborField nn(sc, 0.5);
  const StepSampler s = step_sampler(nn, Site::origin(sc));
  REQUIRE(s.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(s.probability(i) == doctest::Approx(0.25));
  CHECK(s.total() == doctest::Approx(2.0));

  const StepSampler two({Coords{1}, Coords{-1}}, {1.0, 3.0});
  Rng rng = stream_rng(51, 0);
  const int draws = 200000;
  int right = 0;
  for (int i = 0; i < draws; ++i)
    if (two.sample(rng)[0] == 1) ++right;
  // binomial standard error is about 1e-3
  CHECK(std::abs(right / static_cast<double>(draws) - 0.25) < 5e-3);
  CHECK_THROWS(StepSampler({Coords{1}}, {0.0}));
}

TEST_CASE("degenerate horizons") {
  const LatticeScale sc(8, 1);
  const FieldPtr nn = std::make_shared<NearestNeighborField>(sc, 1.0);
  const Site o = Site::origin(sc);
  CHECK_THROWS(simulate(nn, o, 0.0, 3));
  const Trajectory tr = simulate(nn, o, 1e-12, 3);
  CHECK(tr.jumps() == 0);
  CHECK(tr.at(0.0) == o);
  const SamplerCache chain(nn);
  CHECK(exit_probability(chain, o, 1.0, 0.5, 0.0, 500, 4).hits == 0);
}

TEST_CASE("simulation is reproducible per stream") {
  const LatticeScale sc(8, 1);
  const FieldPtr nn = std::make_shared<NearestNeighborField>(sc, 1.0);
  const Site o = Site::origin(sc);
  const Trajectory a = simulate(nn, o, 1.0, 9, 2), b = simulate(nn, o, 1.0, 9, 2);
  CHECK(a.times == b.times);
  CHECK(a.sites == b.sites);
  for (std::size_t k = 1; k < a.times.size(); ++k) {
    CHECK(a.times[k] > a.times[k - 1]);
    CHECK(l1_steps(a.sites[k], a.sites[k - 1]) == 1);
  }
}

TEST_CASE("meyer construction without large jumps matches direct simulation in law") {
  const LatticeScale sc(4, 1);
  const FieldPtr nn = std::make_shared<NearestNeighborField>(sc, 1.0);
  const Site o = Site::origin(sc);
  const MeyerParts parts(nn, 1.0);
  CHECK(parts.large_rate(o) == 0.0);
  std::map<Site, double> p, q;
  const int paths = 20000;
  for (int i = 0; i < paths; ++i) {
    p[simulate(nn, o, 0.2, 61, static_cast<std::uint64_t>(i)).sites.back()] += 1.0 / paths;
    const Trajectory m = simulate_meyer(parts, o, 0.2, 62, static_cast<std::uint64_t>(i));
    q[m.sites.back()] += 1.0 / paths;
  }
  double tv = 0.0;
  for (auto& [s, v] : p) tv += std::abs(v - q[s]);
  for (auto& [s, v] : q)
    if (!p.count(s)) tv += v;
  CHECK(0.5 * tv < 0.03);
}

TEST_CASE("space-time rescaling") {
  const LatticeScale sc(8, 1);
  const FieldPtr nn = std::make_shared<NearestNeighborField>(sc, 1.0);
  const Trajectory tr = simulate(nn, Site::origin(sc), 0.5, 71);
  const Trajectory same = scaled_trajectory(tr, 1.0);
  CHECK(same.times == tr.times);
  CHECK(same.sites == tr.sites);
  const Trajectory half = scaled_trajectory(tr, 0.5);
  CHECK(half.jumps() == tr.jumps());
  CHECK(half.horizon == doctest::Approx(tr.horizon * 4.0));
  for (std::size_t k = 0; k < tr.sites.size(); ++k) {
    CHECK(half.times[k] == doctest::Approx(tr.times[k] * 4.0));
    CHECK(half.sites[k].coords() == tr.sites[k].coords());
    CHECK(half.sites[k].scale().n == 4);
  }
  CHECK_THROWS(scaled_trajectory(tr, 0.3));
}

TEST_CASE("exceeds agrees with a direct scan") {
  const LatticeScale sc(8, 2);
  const FieldPtr nn = std::make_shared<NearestNeighborField>(sc, 1.0);
  const Site o = Site::origin(sc);
  for (std::uint64_t i = 0; i < 200; ++i) {
    const Trajectory tr = simulate(nn, o, 0.3, 81, i);
    for (double A : {0.2, 0.35, 0.5})
      for (double t0 : {0.05, 0.15, 0.3}) {
        bool direct = false;
        for (std::size_t k = 0; k < tr.sites.size(); ++k)
          if (tr.times[k] <= t0 && distance(tr.sites[k], o) > A) direct = true;
        CHECK(exceeds(tr, A, t0) == direct);
      }
  }
}

TEST_CASE("wilson interval") {
  const auto zero = wilson(0, 100);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi == doctest::Approx(0.0370).epsilon(1e-2));
  const auto half = wilson(50, 100);
  CHECK(half.lo == doctest::Approx(0.4038).epsilon(1e-3));
  CHECK(half.hi == doctest::Approx(0.5962).epsilon(1e-3));
  const auto all = wilson(100, 100);
  CHECK(all.hi == doctest::Approx(1.0));
}

#pragma once

// Shortest lattice paths: counts, averaged edge-traversal weights, the
// discrete gradient identity, and the edge-localized diffusion field.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "latdir/conductance.hpp"
#include "latdir/lattice.hpp"

namespace latdir {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// (sum a_i)! / prod a_i!
BigInt multinomial(const Coords& steps, int d);

/// Number of shortest nearest-neighbour paths from x to y.
BigInt path_count(const Site& x, const Site& y);

/// Fraction of shortest x -> y paths that traverse the edge w -> z (in that
/// direction). w and z must be nearest neighbours.
Rational edge_weight_exact(const Site& x, const Site& y, const Site& w, const Site& z);
double edge_weight(const Site& x, const Site& y, const Site& w, const Site& z);

using Path = std::vector<Site>;

/// All shortest paths; throws std::length_error if there are more than `cap`.
std::vector<Path> enumerate_paths(const Site& x, const Site& y, std::size_t cap = 1'000'000);

/// One undirected edge {lower, lower + e_axis} of the box spanned by a
/// displacement, with the probability that a uniformly chosen shortest path
/// uses it. `lower` is relative to the path's start.
struct SpannedEdge {
  Coords lower{};
  int axis = 0;
  double usage = 0.0;
};

/// Edge usages for displacement k; cached and shared across threads.
std::shared_ptr<const std::vector<SpannedEdge>> spanned_edges(const Coords& k, int d);

/// |u(x) - u(y) - (1/n) sum_i sum_z (P(z+e_i, z) - P(z, z+e_i)) grad_i u(z)|.
double gradient_identity_residual(const GridFunction& u, const Site& x, const Site& y);

/// G_ij(w, z) for one (w, z, i, j), summing over pairs of the local part.
/// Axes are 0-based.
double g_entry(const Site& w, const Site& z, int i, int j, const SplitField& split);

struct GKey {
  Coords w{};
  Coords z{};
  int i = 0;
  int j = 0;
  friend bool operator==(const GKey&, const GKey&) = default;
};
struct GKeyHash {
  std::size_t operator()(const GKey& k) const noexcept;
};
using GTable = std::unordered_map<GKey, double, GKeyHash>;

/// All nonzero G_ij(w, z) produced by ordered pairs (x, y) of the local part
/// with x in `region`.
GTable g_matrix(const SplitField& split, const Box& region);

/// Energy rebuilt from G: (2 n^d)^{-1} sum grad_i u(z) grad_j v(w) G_ij(w, z).
double energy_from_g(const GTable& g, const GridFunction& u, const GridFunction& v);

/// F_ij(z) = sum_w G_ij(w, z) on the sites of a box, from pairs with both
/// endpoints in the box. `interior_valid` marks sites whose contributing pairs
/// all lie in the box.
struct DiffusionField {
  Box box;
  double eps = 0.0;
  std::vector<double> values;  // site-major, then i, then j
  std::vector<bool> interior_valid;

  int dim() const { return box.scale().d; }
  double at(std::size_t site, int i, int j) const {
    const auto d = static_cast<std::size_t>(dim());
    return values[site * d * d + static_cast<std::size_t>(i) * d + static_cast<std::size_t>(j)];
  }
  Eigen::MatrixXd matrix_at(std::size_t site) const;
  /// rows `coord_1..coord_d,i,j,F_value,interior_valid` with 1-based i, j
  void write_csv(std::ostream& out) const;
};

DiffusionField diffusion_field(const SplitField& split, const Box& box);

using MatrixFunction = std::function<Eigen::MatrixXd(std::span<const double>)>;

struct A4Error {
  double l1 = 0.0;             // max over (i, j) of sum |F_ij - a_ij| n^{-d} over valid sites
  double sup = 0.0;            // max |F_ij| over valid sites
  double asymmetry = 0.0;      // max |F_ij - F_ji|
  double min_eigenvalue = 0.0;  // of the symmetric part, over valid sites
  double max_eigenvalue = 0.0;
  std::size_t sites = 0;
  nlohmann::json to_json() const;
};

/// Compares F with `a` on the valid sites inside `window` (all valid sites
/// when window is empty).
A4Error a4_l1_error(const DiffusionField& field, const MatrixFunction& a,
                    const std::optional<Box>& window = std::nullopt);

}  // namespace latdir

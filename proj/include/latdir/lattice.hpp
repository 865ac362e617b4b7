#pragma once

// Scaled lattice S_n = n^{-1} Z^d: sites, Euclidean boxes, grid functions with
// the uniform measure n^{-d}, and the restriction/extension maps between R^d
// and S_n.

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace latdir {

inline constexpr int kMaxDim = 4;

/// Integer lattice coordinates; entries past the active dimension are zero.
using Coords = std::array<std::int64_t, kMaxDim>;

class ScaleMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LatticeScale {
  int n = 1;
  int d = 1;

  LatticeScale() = default;
  LatticeScale(int n_, int d_);

  double mesh() const { return 1.0 / n; }
  /// mu^n_x = n^{-d}
  double site_measure() const;

  friend bool operator==(const LatticeScale&, const LatticeScale&) = default;
};

void require_same_scale(const LatticeScale& a, const LatticeScale& b);

std::int64_t squared_norm(const Coords& k, int d);
std::int64_t l1_norm(const Coords& k, int d);
Coords difference(const Coords& a, const Coords& b);

class Site {
 public:
  Site() = default;
  Site(LatticeScale scale, const Coords& coords);
  Site(LatticeScale scale, std::initializer_list<std::int64_t> coords);

  static Site origin(LatticeScale scale) { return Site(scale, Coords{}); }

  const LatticeScale& scale() const { return scale_; }
  int dim() const { return scale_.d; }
  const Coords& coords() const { return coords_; }
  std::int64_t coord(int i) const { return coords_[static_cast<std::size_t>(i)]; }
  double position(int i) const { return static_cast<double>(coord(i)) / scale_.n; }
  std::vector<double> position() const;

  Site shifted(int axis, std::int64_t steps) const;
  Site offset_by(const Coords& k) const;

  friend bool operator==(const Site& a, const Site& b) {
    return a.scale_ == b.scale_ && a.coords_ == b.coords_;
  }
  friend std::strong_ordering operator<=>(const Site& a, const Site& b) {
    if (auto c = a.scale_.n <=> b.scale_.n; c != 0) return c;
    if (auto c = a.scale_.d <=> b.scale_.d; c != 0) return c;
    return a.coords_ <=> b.coords_;
  }

 private:
  LatticeScale scale_{};
  Coords coords_{};
};

struct SiteHash {
  std::size_t operator()(const Site& s) const noexcept;
};

std::string to_string(const Site& s);

/// Euclidean distance |x - y| in R^d.
double distance(const Site& x, const Site& y);

/// Relative slack used when comparing lattice distances against a radius, so
/// that radii landing exactly on a lattice shell are classified consistently.
inline constexpr long double kRadiusSlack = 1e-12L;

/// |k|/n <= radius (closed) or |k|/n < radius (strict), up to kRadiusSlack.
bool within_radius(std::int64_t sq_steps, double radius, int n, bool strict);

/// Offsets k != 0 with |k|/n <= radius (or < radius when `strict`), visited in
/// lexicographic order without materializing the list.
void for_each_offset(int d, int n, double radius, bool strict,
                     const std::function<void(const Coords&)>& visit);

/// B_n(x, r) = {y in S_n : |x - y| < r}. Sites are kept in lexicographic order
/// and the index lookup is a dense table over the bounding cube.
class Box {
 public:
  Box(Site center, double radius);

  const Site& center() const { return impl_->center; }
  double radius() const { return impl_->radius; }
  const LatticeScale& scale() const { return impl_->center.scale(); }
  const std::vector<Site>& sites() const { return impl_->sites; }
  std::size_t size() const { return impl_->sites.size(); }
  const Site& site(std::size_t i) const { return impl_->sites[i]; }

  std::optional<std::size_t> index_of(const Site& y) const;
  bool contains(const Site& y) const { return index_of(y).has_value(); }
  /// Distance from y to the complement of the box (0 if y is outside).
  double depth(const Site& y) const;
  double measure() const;

  friend bool operator==(const Box& a, const Box& b) {
    return a.impl_ == b.impl_ ||
           (a.center() == b.center() && a.radius() == b.radius());
  }

 private:
  struct Impl {
    Site center;
    double radius = 0.0;
    std::int64_t half_width = 0;
    std::vector<Site> sites;
    std::vector<std::int32_t> lookup;
  };
  std::shared_ptr<const Impl> impl_;
};

/// Closed ball {y : |center - y| <= radius} expressed as an open Box.
Box closed_box(const Site& center, double radius);

class GridFunction {
 public:
  explicit GridFunction(LatticeScale scale) : scale_(scale) {}

  const LatticeScale& scale() const { return scale_; }
  double operator()(const Site& x) const;
  void set(const Site& x, double value);
  const std::map<Site, double>& values() const { return values_; }
  std::size_t support_size() const { return values_.size(); }

  static GridFunction indicator(const Site& x);
  static GridFunction constant_on(const Box& box, double value);
  static GridFunction from_box_vector(const Box& box, const Eigen::VectorXd& v);
  Eigen::VectorXd to_box_vector(const Box& box) const;

 private:
  LatticeScale scale_;
  std::map<Site, double> values_;
};

using RealFunction = std::function<double(std::span<const double>)>;

/// [x]_n = (floor(n x_1)/n, ..., floor(n x_d)/n).
Site floor_embed(std::span<const double> x, LatticeScale scale);

/// R_n g on the sites of `box`.
GridFunction restrict_to(const RealFunction& g, const Box& box);

/// E_n u(x) = u([x]_n): constant on half-open cells prod [w_i, w_i + 1/n).
class StepFunction {
 public:
  explicit StepFunction(GridFunction u) : u_(std::move(u)) {}
  double operator()(std::span<const double> x) const;
  const GridFunction& lattice_values() const { return u_; }

 private:
  GridFunction u_;
};

StepFunction extend(const GridFunction& u);

/// |x - y|_n = n sum_i |x_i - y_i|.
std::int64_t l1_steps(const Site& x, const Site& y);

/// <h1, h2>_n = n^{-d} sum_x h1(x) h2(x).
double bracket(const GridFunction& h1, const GridFunction& h2);

/// ||f||_{p,n}.
double norm(const GridFunction& f, double p);

// CSV `coord_1..coord_d,value` plus a sidecar `<path>.meta.json` holding {"n","d"}.
void save_grid_function(const GridFunction& u, const std::string& csv_path);
GridFunction load_grid_function(const std::string& csv_path);

}  // namespace latdir

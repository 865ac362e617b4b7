#include "latdir/lattice.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace latdir {

LatticeScale::LatticeScale(int n_, int d_) : n(n_), d(d_) {
  if (n < 1) throw std::invalid_argument("lattice scale n must be >= 1");
  if (d < 1 || d > kMaxDim)
    throw std::invalid_argument("lattice dimension must be in [1, " +
                                std::to_string(kMaxDim) + "]");
}

double LatticeScale::site_measure() const { return std::pow(static_cast<double>(n), -d); }

void require_same_scale(const LatticeScale& a, const LatticeScale& b) {
  if (!(a == b))
    throw ScaleMismatch("lattice scale mismatch: (n=" + std::to_string(a.n) + ", d=" +
                        std::to_string(a.d) + ") vs (n=" + std::to_string(b.n) +
                        ", d=" + std::to_string(b.d) + ")");
}

std::int64_t squared_norm(const Coords& k, int d) {
  std::int64_t s = 0;
  for (int i = 0; i < d; ++i) s += k[i] * k[i];
  return s;
}

std::int64_t l1_norm(const Coords& k, int d) {
  std::int64_t s = 0;
  for (int i = 0; i < d; ++i) s += k[i] < 0 ? -k[i] : k[i];
  return s;
}

Coords difference(const Coords& a, const Coords& b) {
  Coords out{};
  for (int i = 0; i < kMaxDim; ++i) out[i] = a[i] - b[i];
  return out;
}

Site::Site(LatticeScale scale, const Coords& coords) : scale_(scale), coords_(coords) {
  for (int i = scale_.d; i < kMaxDim; ++i) coords_[i] = 0;
}

Site::Site(LatticeScale scale, std::initializer_list<std::int64_t> coords) : scale_(scale) {
  if (static_cast<int>(coords.size()) != scale.d)
    throw std::invalid_argument("site coordinate count does not match dimension");
  int i = 0;
  for (auto c : coords) coords_[i++] = c;
}

std::vector<double> Site::position() const {
  std::vector<double> p(static_cast<std::size_t>(dim()));
  for (int i = 0; i < dim(); ++i) p[i] = position(i);
  return p;
}

Site Site::shifted(int axis, std::int64_t steps) const {
  Coords c = coords_;
  c[axis] += steps;
  return Site(scale_, c);
}

Site Site::offset_by(const Coords& k) const {
  Coords c = coords_;
  for (int i = 0; i < scale_.d; ++i) c[i] += k[i];
  return Site(scale_, c);
}

std::size_t SiteHash::operator()(const Site& s) const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (int i = 0; i < s.dim(); ++i) {
    h ^= static_cast<std::uint64_t>(s.coord(i));
    h *= 1099511628211ULL;
  }
  h ^= static_cast<std::uint64_t>(s.scale().n) << 32;
  return static_cast<std::size_t>(h);
}

std::string to_string(const Site& s) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < s.dim(); ++i) os << (i ? "," : "") << s.coord(i);
  os << ")/" << s.scale().n;
  return os.str();
}

double distance(const Site& x, const Site& y) {
  require_same_scale(x.scale(), y.scale());
  const auto s = squared_norm(difference(x.coords(), y.coords()), x.dim());
  return std::sqrt(static_cast<double>(s)) / x.scale().n;
}

namespace {

// Integer bound K with every offset of norm <= radius*n inside [-K, K]^d.
std::int64_t cube_half_width(double radius, int n) {
  const double r = radius * n;
  if (!(r >= 0.0) || r > 4.0e9) throw std::invalid_argument("offset radius out of range");
  return static_cast<std::int64_t>(std::floor(r));
}

}  // namespace

bool within_radius(std::int64_t sq_steps, double radius, int n, bool strict) {
  const long double r2 = static_cast<long double>(radius) * radius * n * n;
  const long double s = static_cast<long double>(sq_steps);
  return strict ? s < r2 * (1.0L - kRadiusSlack) : s <= r2 * (1.0L + kRadiusSlack);
}

void for_each_offset(int d, int n, double radius, bool strict,
                     const std::function<void(const Coords&)>& visit) {
  const std::int64_t k_max = cube_half_width(radius, n);
  Coords k{};
  for (int i = 0; i < d; ++i) k[i] = -k_max;
  while (true) {
    const auto sq = squared_norm(k, d);
    if (sq != 0 && within_radius(sq, radius, n, strict)) visit(k);
    int axis = d - 1;
    while (axis >= 0 && k[axis] == k_max) {
      k[axis] = -k_max;
      --axis;
    }
    if (axis < 0) break;
    ++k[axis];
  }
}

Box::Box(Site center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("box radius must be positive");
  auto impl = std::make_shared<Impl>();
  impl->center = center;
  impl->radius = radius;
  const int d = center.dim();
  const int n = center.scale().n;
  impl->half_width = cube_half_width(radius, n);
  const std::int64_t side = 2 * impl->half_width + 1;
  double cells = 1.0;
  for (int i = 0; i < d; ++i) cells *= static_cast<double>(side);
  if (cells > 2.0e8) throw std::length_error("box too large for dense site lookup");
  impl->lookup.assign(static_cast<std::size_t>(cells), -1);

  Coords k{};
  for (int i = 0; i < d; ++i) k[i] = -impl->half_width;
  std::size_t flat = 0;
  while (true) {
    if (within_radius(squared_norm(k, d), radius, n, true)) {
      impl->lookup[flat] = static_cast<std::int32_t>(impl->sites.size());
      impl->sites.push_back(center.offset_by(k));
    }
    ++flat;
    int axis = d - 1;
    while (axis >= 0 && k[axis] == impl->half_width) {
      k[axis] = -impl->half_width;
      --axis;
    }
    if (axis < 0) break;
    ++k[axis];
  }
  impl_ = std::move(impl);
}

std::optional<std::size_t> Box::index_of(const Site& y) const {
  if (!(y.scale() == scale())) return std::nullopt;
  const std::int64_t side = 2 * impl_->half_width + 1;
  std::size_t flat = 0;
  for (int i = 0; i < y.dim(); ++i) {
    const std::int64_t k = y.coord(i) - center().coord(i);
    if (k < -impl_->half_width || k > impl_->half_width) return std::nullopt;
    flat = flat * static_cast<std::size_t>(side) + static_cast<std::size_t>(k + impl_->half_width);
  }
  const auto idx = impl_->lookup[flat];
  if (idx < 0) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

double Box::depth(const Site& y) const {
  if (!contains(y)) return 0.0;
  return radius() - distance(center(), y);
}

double Box::measure() const { return static_cast<double>(size()) * scale().site_measure(); }

Box closed_box(const Site& center, double radius) {
  const double n = center.scale().n;
  const long double r2 = static_cast<long double>(radius) * radius * n * n;
  const auto last = std::floor(r2 * (1.0L + 1e-12L));
  return Box(center, std::sqrt(static_cast<double>(last) + 0.5) / n);
}

double GridFunction::operator()(const Site& x) const {
  auto it = values_.find(x);
  return it == values_.end() ? 0.0 : it->second;
}

void GridFunction::set(const Site& x, double value) {
  require_same_scale(scale_, x.scale());
  values_[x] = value;
}

GridFunction GridFunction::indicator(const Site& x) {
  GridFunction f(x.scale());
  f.set(x, 1.0);
  return f;
}

GridFunction GridFunction::constant_on(const Box& box, double value) {
  GridFunction f(box.scale());
  for (const auto& s : box.sites()) f.set(s, value);
  return f;
}

GridFunction GridFunction::from_box_vector(const Box& box, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != box.size())
    throw std::invalid_argument("vector length does not match box size");
  GridFunction f(box.scale());
  for (std::size_t i = 0; i < box.size(); ++i) f.values_.emplace_hint(f.values_.end(), box.site(i), v[i]);
  return f;
}

Eigen::VectorXd GridFunction::to_box_vector(const Box& box) const {
  require_same_scale(scale_, box.scale());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(box.size()));
  for (const auto& [site, value] : values_) {
    if (auto idx = box.index_of(site)) v[static_cast<Eigen::Index>(*idx)] = value;
  }
  return v;
}

Site floor_embed(std::span<const double> x, LatticeScale scale) {
  if (static_cast<int>(x.size()) != scale.d)
    throw std::invalid_argument("point dimension does not match lattice dimension");
  Coords c{};
  for (int i = 0; i < scale.d; ++i)
    c[i] = static_cast<std::int64_t>(std::floor(x[i] * scale.n));
  return Site(scale, c);
}

GridFunction restrict_to(const RealFunction& g, const Box& box) {
  GridFunction f(box.scale());
  for (const auto& s : box.sites()) {
    const auto p = s.position();
    f.set(s, g(p));
  }
  return f;
}

double StepFunction::operator()(std::span<const double> x) const {
  return u_(floor_embed(x, u_.scale()));
}

StepFunction extend(const GridFunction& u) { return StepFunction(u); }

std::int64_t l1_steps(const Site& x, const Site& y) {
  require_same_scale(x.scale(), y.scale());
  return l1_norm(difference(x.coords(), y.coords()), x.dim());
}

double bracket(const GridFunction& h1, const GridFunction& h2) {
  require_same_scale(h1.scale(), h2.scale());
  const auto& a = h1.values().size() <= h2.values().size() ? h1 : h2;
  const auto& b = &a == &h1 ? h2 : h1;
  double s = 0.0;
  for (const auto& [site, v] : a.values()) s += v * b(site);
  return s * h1.scale().site_measure();
}

double norm(const GridFunction& f, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("norm exponent must be >= 1");
  double s = 0.0;
  for (const auto& [site, v] : f.values()) s += std::pow(std::abs(v), p);
  return std::pow(s * f.scale().site_measure(), 1.0 / p);
}

void save_grid_function(const GridFunction& u, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot open " + csv_path);
  const int d = u.scale().d;
  for (int i = 0; i < d; ++i) out << "coord_" << (i + 1) << ',';
  out << "value\n";
  out.precision(17);
  for (const auto& [site, v] : u.values()) {
    for (int i = 0; i < d; ++i) out << site.coord(i) << ',';
    out << v << '\n';
  }
  std::ofstream meta(csv_path + ".meta.json");
  if (!meta) throw std::runtime_error("cannot open " + csv_path + ".meta.json");
  meta << nlohmann::json{{"n", u.scale().n}, {"d", d}}.dump() << '\n';
}

GridFunction load_grid_function(const std::string& csv_path) {
  std::ifstream meta(csv_path + ".meta.json");
  if (!meta) throw std::runtime_error("missing metadata for " + csv_path);
  const auto j = nlohmann::json::parse(meta);
  const LatticeScale scale(j.at("n").get<int>(), j.at("d").get<int>());

  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty grid function csv");
  GridFunction u(scale);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    Coords c{};
    for (int i = 0; i < scale.d; ++i) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("short row in " + csv_path);
      c[i] = std::stoll(cell);
    }
    if (!std::getline(row, cell, ',')) throw std::runtime_error("missing value in " + csv_path);
    u.set(Site(scale, c), std::stod(cell));
  }
  return u;
}

}  // namespace latdir

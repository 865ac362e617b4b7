#include "latdir/paths.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>

#include <Eigen/Eigenvalues>

namespace latdir {

namespace {

Coords abs_steps(const Coords& k, int d) {
  Coords a{};
  for (int i = 0; i < d; ++i) a[i] = k[i] < 0 ? -k[i] : k[i];
  return a;
}

int sign_of(std::int64_t v) { return v < 0 ? -1 : 1; }

BigInt binomial(std::int64_t n, std::int64_t k) {
  BigInt r = 1;
  for (std::int64_t i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;
  }
  return r;
}

void require_adjacent(const Site& w, const Site& z) {
  require_same_scale(w.scale(), z.scale());
  if (squared_norm(difference(z.coords(), w.coords()), w.dim()) != 1)
    throw std::invalid_argument("edge endpoints must be nearest neighbours");
}

// Signed increment delta_i(z) = P(z+e_i -> z) - P(z -> z+e_i) contributed by an
// edge of the displacement-k table: -sign(k_i) * usage.
double signed_usage(const SpannedEdge& e, const Coords& k) {
  return -static_cast<double>(sign_of(k[e.axis])) * e.usage;
}

}  // namespace

BigInt multinomial(const Coords& steps, int d) {
  BigInt r = 1;
  std::int64_t total = 0;
  for (int i = 0; i < d; ++i) {
    if (steps[i] < 0) throw std::invalid_argument("multinomial needs nonnegative parts");
    total += steps[i];
    r *= binomial(total, steps[i]);
  }
  return r;
}

BigInt path_count(const Site& x, const Site& y) {
  require_same_scale(x.scale(), y.scale());
  return multinomial(abs_steps(difference(y.coords(), x.coords()), x.dim()), x.dim());
}

Rational edge_weight_exact(const Site& x, const Site& y, const Site& w, const Site& z) {
  require_same_scale(x.scale(), y.scale());
  require_adjacent(w, z);
  const int d = x.dim();
  const Coords step = difference(z.coords(), w.coords());
  int axis = 0;
  while (step[axis] == 0) ++axis;
  const auto h = difference(y.coords(), x.coords());
  if (h[axis] == 0 || sign_of(h[axis]) != sign_of(step[axis])) return Rational(0);
  for (int i = 0; i < d; ++i) {
    const auto lo = std::min(x.coord(i), y.coord(i));
    const auto hi = std::max(x.coord(i), y.coord(i));
    if (w.coord(i) < lo || w.coord(i) > hi || z.coord(i) < lo || z.coord(i) > hi)
      return Rational(0);
  }
  const BigInt before = path_count(x, w);
  const BigInt after = path_count(z, y);
  return Rational(before * after, path_count(x, y));
}

double edge_weight(const Site& x, const Site& y, const Site& w, const Site& z) {
  return edge_weight_exact(x, y, w, z).convert_to<double>();
}

std::vector<Path> enumerate_paths(const Site& x, const Site& y, std::size_t cap) {
  const BigInt count = path_count(x, y);
  if (count > cap) throw std::length_error("too many shortest paths to enumerate");
  const int d = x.dim();
  const auto h = difference(y.coords(), x.coords());
  std::vector<Path> out;
  Path current{x};
  std::function<void(const Site&)> extend_from = [&](const Site& at) {
    if (at == y) {
      out.push_back(current);
      return;
    }
    for (int i = 0; i < d; ++i) {
      const auto remaining = y.coord(i) - at.coord(i);
      if (remaining == 0) continue;
      const Site next = at.shifted(i, sign_of(h[i]));
      current.push_back(next);
      extend_from(next);
      current.pop_back();
    }
  };
  extend_from(x);
  return out;
}

std::shared_ptr<const std::vector<SpannedEdge>> spanned_edges(const Coords& k_in, int d) {
  static std::mutex mutex;
  static std::map<std::pair<Coords, int>, std::shared_ptr<const std::vector<SpannedEdge>>> cache;
  Coords k{};
  for (int i = 0; i < d; ++i) k[i] = k_in[i];
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find({k, d}); it != cache.end()) return it->second;
  }
  const Coords a = abs_steps(k, d);
  const BigInt total = multinomial(a, d);
  auto edges = std::make_shared<std::vector<SpannedEdge>>();
  Coords p{};
  while (true) {
    for (int i = 0; i < d; ++i) {
      if (p[i] >= a[i]) continue;
      Coords rest{};
      for (int j = 0; j < d; ++j) rest[j] = a[j] - p[j] - (j == i ? 1 : 0);
      const Rational usage(multinomial(p, d) * multinomial(rest, d), total);
      SpannedEdge e;
      e.axis = i;
      e.usage = usage.convert_to<double>();
      for (int j = 0; j < d; ++j) e.lower[j] = sign_of(k[j]) * p[j];
      if (k[i] < 0) e.lower[i] -= 1;
      edges->push_back(e);
    }
    int axis = d - 1;
    while (axis >= 0 && p[axis] == a[axis]) {
      p[axis] = 0;
      --axis;
    }
    if (axis < 0) break;
    ++p[axis];
  }
  std::lock_guard lock(mutex);
  return cache.emplace(std::make_pair(k, d), std::move(edges)).first->second;
}

double gradient_identity_residual(const GridFunction& u, const Site& x, const Site& y) {
  require_same_scale(u.scale(), x.scale());
  require_same_scale(x.scale(), y.scale());
  const int d = x.dim();
  const auto k = difference(y.coords(), x.coords());
  double rhs = 0.0;
  for (const auto& e : *spanned_edges(k, d)) {
    const Site z = x.offset_by(e.lower);
    rhs += signed_usage(e, k) * (u(z.shifted(e.axis, 1)) - u(z));
  }
  return std::abs(u(x) - u(y) - rhs);
}

// ---------------------------------------------------------------------------

std::size_t GKeyHash::operator()(const GKey& key) const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (int i = 0; i < kMaxDim; ++i) {
    mix(static_cast<std::uint64_t>(key.w[i]));
    mix(static_cast<std::uint64_t>(key.z[i]));
  }
  mix(static_cast<std::uint64_t>(key.i));
  mix(static_cast<std::uint64_t>(key.j));
  return static_cast<std::size_t>(h);
}

double g_entry(const Site& w, const Site& z, int i, int j, const SplitField& split) {
  const auto& local = *split.local();
  require_same_scale(local.scale(), z.scale());
  require_same_scale(local.scale(), w.scale());
  const int d = z.dim();
  const double eps = split.eps();
  double total = 0.0;
  auto visit_x = [&](const Site& x) {
    local.visit_neighbors(x, eps, [&](const Site& y, double c) {
      const auto k = difference(y.coords(), x.coords());
      const auto zr = difference(z.coords(), x.coords());
      const auto wr = difference(w.coords(), x.coords());
      double dz = 0.0, dw = 0.0;
      for (const auto& e : *spanned_edges(k, d)) {
        if (e.axis == i && e.lower == zr) dz = signed_usage(e, k);
        if (e.axis == j && e.lower == wr) dw = signed_usage(e, k);
      }
      total += dz * dw * c;
    });
  };
  visit_x(z);
  for_each_offset(d, z.scale().n, eps + 1.0 / z.scale().n, false,
                  [&](const Coords& off) { visit_x(z.offset_by(off)); });
  return total;
}

GTable g_matrix(const SplitField& split, const Box& region) {
  const auto& local = *split.local();
  require_same_scale(local.scale(), region.scale());
  const int d = region.scale().d;
  GTable g;
  for (const auto& x : region.sites()) {
    local.visit_neighbors(x, split.eps(), [&](const Site& y, double c) {
      const auto k = difference(y.coords(), x.coords());
      const auto edges = spanned_edges(k, d);
      for (const auto& ez : *edges) {
        const double dz = signed_usage(ez, k);
        const Coords z = x.offset_by(ez.lower).coords();
        for (const auto& ew : *edges) {
          GKey key{x.offset_by(ew.lower).coords(), z, ez.axis, ew.axis};
          g[key] += dz * signed_usage(ew, k) * c;
        }
      }
    });
  }
  return g;
}

double energy_from_g(const GTable& g, const GridFunction& u, const GridFunction& v) {
  require_same_scale(u.scale(), v.scale());
  const auto& sc = u.scale();
  const double n = sc.n;
  double s = 0.0;
  for (const auto& [key, value] : g) {
    const Site z(sc, key.z);
    const Site w(sc, key.w);
    const double du = n * (u(z.shifted(key.i, 1)) - u(z));
    const double dv = n * (v(w.shifted(key.j, 1)) - v(w));
    s += du * dv * value;
  }
  return 0.5 * s * sc.site_measure();
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd DiffusionField::matrix_at(std::size_t site) const {
  const int d = dim();
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = at(site, i, j);
  return m;
}

void DiffusionField::write_csv(std::ostream& out) const {
  const int d = dim();
  for (int i = 0; i < d; ++i) out << "coord_" << (i + 1) << ',';
  out << "i,j,F_value,interior_valid\n";
  const auto old = out.precision(17);
  for (std::size_t s = 0; s < box.size(); ++s)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        for (int c = 0; c < d; ++c) out << box.site(s).coord(c) << ',';
        out << (i + 1) << ',' << (j + 1) << ',' << at(s, i, j) << ','
            << (interior_valid[s] ? 1 : 0) << '\n';
      }
  out.precision(old);
}

DiffusionField diffusion_field(const SplitField& split, const Box& box) {
  const auto& local = *split.local();
  require_same_scale(local.scale(), box.scale());
  const int d = box.scale().d;
  const auto dd = static_cast<std::size_t>(d * d);
  DiffusionField out{box, split.eps(), std::vector<double>(box.size() * dd, 0.0),
                     std::vector<bool>(box.size(), false)};
  for (const auto& x : box.sites()) {
    local.visit_neighbors(x, split.eps(), [&](const Site& y, double c) {
      if (!box.contains(y)) return;
      const auto k = difference(y.coords(), x.coords());
      for (const auto& e : *spanned_edges(k, d)) {
        auto zi = box.index_of(x.offset_by(e.lower));
        if (!zi) continue;
        const double base = sign_of(k[e.axis]) * e.usage * c;
        for (int j = 0; j < d; ++j)
          out.values[*zi * dd + static_cast<std::size_t>(e.axis * d + j)] +=
              base * static_cast<double>(k[j]);
      }
    });
  }
  for (std::size_t s = 0; s < box.size(); ++s)
    out.interior_valid[s] =
        distance(box.center(), box.site(s)) + split.eps() < box.radius() * (1.0 - 1e-12);
  return out;
}

nlohmann::json A4Error::to_json() const {
  return {{"l1", l1},
          {"sup", sup},
          {"asymmetry", asymmetry},
          {"min_eigenvalue", min_eigenvalue},
          {"max_eigenvalue", max_eigenvalue},
          {"sites", sites}};
}

A4Error a4_l1_error(const DiffusionField& field, const MatrixFunction& a,
                    const std::optional<Box>& window) {
  const int d = field.dim();
  const double mass = field.box.scale().site_measure();
  Eigen::MatrixXd l1 = Eigen::MatrixXd::Zero(d, d);
  A4Error out;
  bool first = true;
  for (std::size_t s = 0; s < field.box.size(); ++s) {
    if (!field.interior_valid[s]) continue;
    const Site& z = field.box.site(s);
    if (window && !window->contains(z)) continue;
    const auto pos = z.position();
    const Eigen::MatrixXd target = a(pos);
    const Eigen::MatrixXd F = field.matrix_at(s);
    l1 += (F - target).cwiseAbs() * mass;
    out.sup = std::max(out.sup, F.cwiseAbs().maxCoeff());
    out.asymmetry = std::max(out.asymmetry, (F - F.transpose()).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd sym = 0.5 * (F + F.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    out.min_eigenvalue = first ? lo : std::min(out.min_eigenvalue, lo);
    out.max_eigenvalue = first ? hi : std::max(out.max_eigenvalue, hi);
    first = false;
    ++out.sites;
  }
  out.l1 = out.sites ? l1.maxCoeff() : 0.0;
  return out;
}

}  // namespace latdir

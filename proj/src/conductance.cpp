#include "latdir/conductance.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include "latdir/quadrature.hpp"

namespace latdir {

namespace {

double inv_pow_n(const LatticeScale& s, int e) { return std::pow(static_cast<double>(s.n), -e); }

nlohmann::json coords_json(const Site& s) {
  auto a = nlohmann::json::array();
  for (int i = 0; i < s.dim(); ++i) a.push_back(s.coord(i));
  return a;
}

nlohmann::json pair_json(const std::optional<SitePair>& p) {
  if (!p) return nullptr;
  return {{"x", coords_json(p->x)}, {"y", coords_json(p->y)}, {"n", p->x.scale().n}};
}

// Number of lattice steps per unit radius that fit in the offset budget.
double radius_cap(const LatticeScale& s, double max_offsets) {
  const double per_axis = std::pow(max_offsets, 1.0 / s.d);
  return std::max(1.0, 0.5 * (per_axis - 1.0)) / s.n;
}

}  // namespace

double Envelope::bound(double t, const LatticeScale& scale) const {
  double b = inv_pow_n(scale, scale.d + 2) * profile(t);
  if (std::abs(t * scale.n - 1.0) < 1e-9) b += nearest_neighbor_atom;
  return b;
}

double Envelope::tail_bound(double R, const LatticeScale& scale) const {
  const double delta = std::sqrt(static_cast<double>(scale.d)) / scale.n;
  const double from = R - delta;
  if (from < monotone_from * (1.0 - 1e-12))
    throw std::logic_error("tail bound requested inside the non-monotone region");
  const int d = scale.d;
  const auto r = integrate(
      [&](double s) { return std::pow(s + 0.5 * delta, d - 1) * profile(s); }, from, kInfinity,
      1e-10);
  return inv_pow_n(scale, 2) * sphere_area(d) * r.value;
}

double Envelope::moment_integral(int d) const {
  // the profile overflows near 0; the integrable piece below 1e-100 is dropped
  const auto inner =
      integrate([&](double t) { return std::pow(t, d + 1) * profile(t); }, 1e-100, 1.0);
  const auto outer =
      integrate([&](double t) { return std::pow(t, d - 1) * profile(t); }, 1.0, kInfinity);
  return inner.value + outer.value;
}

void ConductanceField::visit_neighbors(const Site& x, double radius,
                                       const NeighborVisitor& visit) const {
  require_same_scale(scale_, x.scale());
  if (auto rg = range()) radius = std::min(radius, *rg);
  if (translation_invariant()) {
    const auto& table = offset_table();
    if (radius <= table.radius * (1.0 + 1e-12)) {
      for (std::size_t i = 0; i < table.offsets.size(); ++i) {
        if (within_radius(squared_norm(table.offsets[i], scale_.d), radius, scale_.n, false))
          visit(x.offset_by(table.offsets[i]), table.values[i]);
      }
      return;
    }
  }
  for_each_offset(scale_.d, scale_.n, radius, false, [&](const Coords& k) {
    const Site y = x.offset_by(k);
    const double c = value(x, y);
    if (c != 0.0) visit(y, c);
  });
}

namespace {

TailSum envelope_reach(const ConductanceField& f, const TailPolicy& policy) {
  if (auto rg = f.range()) return {0.0, 0.0, *rg, true};
  const auto env = f.envelope();
  if (!env) throw DivergentTail("field has neither a finite range nor a decay envelope");
  const auto& s = f.scale();
  const double delta = std::sqrt(static_cast<double>(s.d)) / s.n;
  const double r_min = std::max(env->monotone_from + delta, 2.0 / s.n) * (1.0 + 1e-9);
  const Site o = Site::origin(s);
  double lower = 0.0;
  for_each_offset(s.d, s.n, r_min, false,
                  [&](const Coords& k) { lower += f.value(o, o.offset_by(k)); });
  const double r_cap = std::max(r_min, radius_cap(s, policy.max_offsets));
  const double target = policy.rel_tol * lower;

  double hi = r_min;
  double lo = r_min;
  while (env->tail_bound(hi, s) > target && hi < r_cap) {
    lo = hi;
    hi = std::min(2.0 * hi, r_cap);
  }
  if (hi > lo && env->tail_bound(hi, s) <= target) {
    for (int it = 0; it < 40 && (hi - lo) * s.n > 0.5; ++it) {
      const double mid = 0.5 * (lo + hi);
      (env->tail_bound(mid, s) <= target ? hi : lo) = mid;
    }
  }
  TailSum out;
  out.radius = hi;
  out.remainder_bound = env->tail_bound(hi, s);
  out.within_tolerance = out.remainder_bound <= target;
  return out;
}

}  // namespace

TailSum ConductanceField::compute_reach(const TailPolicy& policy) const {
  return envelope_reach(*this, policy);
}

TailSum ConductanceField::reach(const TailPolicy& policy) const {
  const TailPolicy def{};
  if (policy.rel_tol != def.rel_tol || policy.max_offsets != def.max_offsets)
    return compute_reach(policy);
  std::call_once(reach_once_, [&] { reach_ = compute_reach(def); });
  return reach_;
}

const ConductanceField::OffsetTable& ConductanceField::offset_table() const {
  std::call_once(table_once_, [&] {
    table_.radius = reach().radius;
    const Site o = Site::origin(scale_);
    for_each_offset(scale_.d, scale_.n, table_.radius, false, [&](const Coords& k) {
      const double c = value(o, o.offset_by(k));
      if (c != 0.0) {
        table_.offsets.push_back(k);
        table_.values.push_back(c);
      }
    });
  });
  return table_;
}

double ConductanceField::reach_sum(const Site& x) const {
  require_same_scale(scale_, x.scale());
  if (translation_invariant()) {
    std::call_once(sum_once_, [&] {
      visit_neighbors(Site::origin(scale_), reach().radius, [&](const Site&, double c) { reach_sum_ += c; });
    });
    return reach_sum_;
  }
  double s = 0.0;
  visit_neighbors(x, reach().radius, [&](const Site&, double c) { s += c; });
  return s;
}

std::optional<std::size_t> ConductanceField::reach_count() const {
  if (!translation_invariant()) return std::nullopt;
  return offset_table().offsets.size();
}

std::uint64_t ConductanceField::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : describe().dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------

NearestNeighborField::NearestNeighborField(LatticeScale scale, double kappa)
    : ConductanceField(scale), kappa_(kappa) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa))
    throw std::invalid_argument("nearest-neighbour conductance must be finite and >= 0");
}

double NearestNeighborField::value(const Site& x, const Site& y) const {
  require_same_scale(x.scale(), y.scale());
  return squared_norm(difference(x.coords(), y.coords()), x.dim()) == 1 ? kappa_ : 0.0;
}

std::optional<Envelope> NearestNeighborField::envelope() const {
  return Envelope{[](double) { return 0.0; }, kappa_, 0.0};
}

nlohmann::json NearestNeighborField::describe() const {
  return {{"family", "nearest_neighbor"}, {"kappa", kappa_}, {"n", scale().n}, {"d", scale().d}};
}

void NearestNeighborField::visit_neighbors(const Site& x, double radius,
                                           const NeighborVisitor& visit) const {
  require_same_scale(scale(), x.scale());
  if (kappa_ == 0.0 || !within_radius(1, radius, scale().n, false)) return;
  for (int i = 0; i < x.dim(); ++i) {
    visit(x.shifted(i, -1), kappa_);
    visit(x.shifted(i, +1), kappa_);
  }
}

// ---------------------------------------------------------------------------

StableLikeField::StableLikeField(LatticeScale scale, StableLikeParams p)
    : ConductanceField(scale), params_(p) {
  if (!(p.alpha > 0.0 && p.alpha <= p.beta && p.beta < 2.0))
    throw std::invalid_argument("stable-like indices need 0 < alpha <= beta < 2");
  for (double c : {p.c1, p.c2, p.c3, p.c4, p.c5})
    if (!(c > 0.0) || !std::isfinite(c))
      throw std::invalid_argument("stable-like constants must be positive and finite");
  if (p.c1 > p.c3 || p.c2 > p.c4)
    throw std::invalid_argument("stable-like constants need c1 <= c3 and c2 <= c4");
}

namespace {

double stable_profile(const StableLikeParams& p, int d, double t) {
  if (t <= 0.0) return 0.0;
  return t <= 1.0 ? p.c3 * std::pow(t, -d - p.beta) : p.c5 * std::pow(t, -d - p.alpha);
}

}  // namespace

double StableLikeField::value_at_offset(const Coords& k) const {
  const auto& s = scale();
  const auto sq = squared_norm(k, s.d);
  if (sq == 0) return 0.0;
  const double t = std::sqrt(static_cast<double>(sq)) / s.n;
  double c = inv_pow_n(s, s.d + 2) * stable_profile(params_, s.d, t);
  if (sq == 1) c += params_.c4;
  return c;
}

double StableLikeField::value(const Site& x, const Site& y) const {
  require_same_scale(scale(), x.scale());
  require_same_scale(scale(), y.scale());
  return value_at_offset(difference(y.coords(), x.coords()));
}

double StableLikeField::lower_bound_at(std::int64_t sq) const {
  const auto& s = scale();
  if (sq == 0) return 0.0;
  const double t = std::sqrt(static_cast<double>(sq)) / s.n;
  double c = 0.0;
  if (sq <= static_cast<std::int64_t>(s.n) * s.n)
    c += params_.c1 * inv_pow_n(s, s.d + 2) * std::pow(t, -s.d - params_.alpha);
  if (sq == 1) c += params_.c2;
  return c;
}

std::optional<Envelope> StableLikeField::envelope() const {
  const auto p = params_;
  const int d = scale().d;
  // The t^{-d-beta} branch may sit below the t^{-d-alpha} branch at t = 1, so
  // monotonicity is only claimed past the switch.
  return Envelope{[p, d](double t) { return stable_profile(p, d, t); }, p.c4, 1.0};
}

nlohmann::json StableLikeField::describe() const {
  const auto& p = params_;
  return {{"family", "stable_like"}, {"alpha", p.alpha}, {"beta", p.beta}, {"c1", p.c1},
          {"c2", p.c2},           {"c3", p.c3},       {"c4", p.c4},     {"c5", p.c5},
          {"n", scale().n},       {"d", scale().d}};
}

// ---------------------------------------------------------------------------

TabulatedField::TabulatedField(LatticeScale scale, bool pairwise)
    : ConductanceField(scale), pairwise_(pairwise) {}

std::shared_ptr<TabulatedField> TabulatedField::by_displacement(
    LatticeScale scale, std::vector<std::pair<Coords, double>> rows) {
  auto f = std::make_shared<TabulatedField>(scale, false);
  for (auto& [k, v] : rows) {
    for (int i = scale.d; i < kMaxDim; ++i) k[i] = 0;
    const auto sq = squared_norm(k, scale.d);
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("tabulated conductances must be finite and >= 0");
    if (sq == 0) {
      if (v != 0.0) throw std::invalid_argument("tabulated field has a nonzero self-loop");
      continue;
    }
    if (v == 0.0) continue;
    f->by_offset_[k] = v;
    f->range_ = std::max(f->range_, std::sqrt(static_cast<double>(sq)) / scale.n);
  }
  return f;
}

std::shared_ptr<TabulatedField> TabulatedField::by_pair(
    LatticeScale scale, std::vector<std::pair<std::pair<Coords, Coords>, double>> rows) {
  auto f = std::make_shared<TabulatedField>(scale, true);
  for (auto& [xy, v] : rows) {
    auto [x, y] = xy;
    for (int i = scale.d; i < kMaxDim; ++i) x[i] = y[i] = 0;
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("tabulated conductances must be finite and >= 0");
    if (x == y) {
      if (v != 0.0) throw std::invalid_argument("tabulated field has a nonzero self-loop");
      continue;
    }
    if (v == 0.0) continue;
    auto& row = f->by_site_[x];
    auto it = std::find_if(row.begin(), row.end(), [&](const auto& e) { return e.first == y; });
    if (it != row.end())
      it->second = v;
    else
      row.emplace_back(y, v);
    const auto sq = squared_norm(difference(x, y), scale.d);
    f->range_ = std::max(f->range_, std::sqrt(static_cast<double>(sq)) / scale.n);
  }
  for (auto& [x, row] : f->by_site_) std::sort(row.begin(), row.end());
  return f;
}

std::shared_ptr<TabulatedField> TabulatedField::load_csv(LatticeScale scale,
                                                         const std::string& path, bool pairwise) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open conductance table " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty conductance table " + path);
  const int d = scale.d;
  const int ncoord = pairwise ? 2 * d : d;
  std::vector<std::pair<Coords, double>> disp;
  std::vector<std::pair<std::pair<Coords, Coords>, double>> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<std::int64_t> c;
    for (int i = 0; i < ncoord; ++i) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("short row in " + path);
      c.push_back(std::stoll(cell));
    }
    if (!std::getline(row, cell, ',')) throw std::runtime_error("missing value in " + path);
    const double v = std::stod(cell);
    Coords a{}, b{};
    for (int i = 0; i < d; ++i) a[i] = c[i];
    if (pairwise) {
      for (int i = 0; i < d; ++i) b[i] = c[d + i];
      pairs.push_back({{a, b}, v});
    } else {
      disp.emplace_back(a, v);
    }
  }
  return pairwise ? by_pair(scale, std::move(pairs)) : by_displacement(scale, std::move(disp));
}

double TabulatedField::value(const Site& x, const Site& y) const {
  require_same_scale(scale(), x.scale());
  require_same_scale(scale(), y.scale());
  if (!pairwise_) {
    auto it = by_offset_.find(difference(y.coords(), x.coords()));
    return it == by_offset_.end() ? 0.0 : it->second;
  }
  auto it = by_site_.find(x.coords());
  if (it == by_site_.end()) return 0.0;
  for (const auto& [yc, v] : it->second)
    if (yc == y.coords()) return v;
  return 0.0;
}

void TabulatedField::visit_neighbors(const Site& x, double radius,
                                     const NeighborVisitor& visit) const {
  require_same_scale(scale(), x.scale());
  const int d = scale().d;
  const int n = scale().n;
  if (!pairwise_) {
    for (const auto& [k, v] : by_offset_)
      if (within_radius(squared_norm(k, d), radius, n, false)) visit(x.offset_by(k), v);
    return;
  }
  auto it = by_site_.find(x.coords());
  if (it == by_site_.end()) return;
  for (const auto& [yc, v] : it->second)
    if (within_radius(squared_norm(difference(yc, x.coords()), d), radius, n, false))
      visit(Site(scale(), yc), v);
}

std::vector<std::pair<Site, Site>> TabulatedField::stored_pairs() const {
  std::vector<std::pair<Site, Site>> out;
  for (const auto& [x, row] : by_site_)
    for (const auto& [y, v] : row) out.emplace_back(Site(scale(), x), Site(scale(), y));
  return out;
}

nlohmann::json TabulatedField::describe() const {
  nlohmann::json rows = nlohmann::json::array();
  const int d = scale().d;
  auto push = [&](const Coords& a, const Coords* b, double v) {
    auto r = nlohmann::json::array();
    for (int i = 0; i < d; ++i) r.push_back(a[i]);
    if (b)
      for (int i = 0; i < d; ++i) r.push_back((*b)[i]);
    r.push_back(v);
    rows.push_back(std::move(r));
  };
  if (pairwise_) {
    for (const auto& [x, row] : by_site_)
      for (const auto& [y, v] : row) push(x, &y, v);
  } else {
    for (const auto& [k, v] : by_offset_) push(k, nullptr, v);
  }
  return {{"family", "tabulated"},
          {"mode", pairwise_ ? "pairwise" : "displacement"},
          {"n", scale().n},
          {"d", d},
          {"entries", rows}};
}

// ---------------------------------------------------------------------------

BandField::BandField(FieldPtr base, double lo, bool lo_closed, double hi)
    : ConductanceField(base->scale()), base_(std::move(base)), lo_(lo), lo_closed_(lo_closed),
      hi_(hi) {
  if (!(lo >= 0.0) || !(hi >= lo)) throw std::invalid_argument("invalid distance band");
}

bool BandField::keeps(std::int64_t sq) const {
  const int n = scale().n;
  if (std::isfinite(hi_) && !within_radius(sq, hi_, n, false)) return false;
  if (lo_ == 0.0) return true;
  return lo_closed_ ? !within_radius(sq, lo_, n, true) : !within_radius(sq, lo_, n, false);
}

double BandField::value(const Site& x, const Site& y) const {
  const auto sq = squared_norm(difference(x.coords(), y.coords()), scale().d);
  return keeps(sq) ? base_->value(x, y) : 0.0;
}

std::optional<double> BandField::range() const {
  auto r = base_->range();
  if (std::isfinite(hi_)) return r ? std::min(*r, hi_) : hi_;
  return r;
}

TailSum BandField::compute_reach(const TailPolicy& policy) const {
  if (auto rg = range()) return {0.0, 0.0, *rg, true};
  return base_->reach(policy);
}

void BandField::visit_neighbors(const Site& x, double radius, const NeighborVisitor& visit) const {
  const int d = scale().d;
  base_->visit_neighbors(x, std::min(radius, hi_), [&](const Site& y, double c) {
    if (keeps(squared_norm(difference(x.coords(), y.coords()), d))) visit(y, c);
  });
}

nlohmann::json BandField::describe() const {
  return {{"band", {{"lo", lo_}, {"lo_closed", lo_closed_}, {"hi", std::isfinite(hi_) ? nlohmann::json(hi_) : nlohmann::json("inf")}}},
          {"base", base_->describe()}};
}

// ---------------------------------------------------------------------------

namespace {

LatticeScale rescaled_scale(const LatticeScale& s, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("rescaling factor must lie in (0, 1]");
  const double nr = s.n * r;
  const long m = std::lround(nr);
  if (m < 1 || std::abs(nr - static_cast<double>(m)) > 1e-9 * nr)
    throw ScaleMismatch("n*r must be a positive integer (n=" + std::to_string(s.n) +
                        ", r=" + std::to_string(r) + ")");
  return LatticeScale(static_cast<int>(m), s.d);
}

}  // namespace

RescaledField::RescaledField(FieldPtr base, double r)
    : ConductanceField(rescaled_scale(base->scale(), r)), base_(std::move(base)) {
  r_ = static_cast<double>(scale().n) / base_->scale().n;
}

Site RescaledField::to_base(const Site& s) const {
  require_same_scale(scale(), s.scale());
  return Site(base_->scale(), s.coords());
}

Site RescaledField::from_base(const Site& s) const { return Site(scale(), s.coords()); }

double RescaledField::value(const Site& x, const Site& y) const {
  return base_->value(to_base(x), to_base(y));
}

std::optional<double> RescaledField::range() const {
  if (auto r = base_->range()) return *r / r_;
  return std::nullopt;
}

std::optional<Envelope> RescaledField::envelope() const {
  auto env = base_->envelope();
  if (!env) return std::nullopt;
  const double r = r_;
  const double scale_pow = std::pow(r, scale().d + 2);
  auto profile = env->profile;
  return Envelope{[profile, r, scale_pow](double t) { return scale_pow * profile(r * t); },
                  env->nearest_neighbor_atom, env->monotone_from / r};
}

nlohmann::json RescaledField::describe() const {
  return {{"rescaled", r_}, {"base", base_->describe()}};
}

TailSum RescaledField::compute_reach(const TailPolicy& policy) const {
  auto r = base_->reach(policy);
  r.radius /= r_;
  return r;
}

void RescaledField::visit_neighbors(const Site& x, double radius,
                                    const NeighborVisitor& visit) const {
  base_->visit_neighbors(to_base(x), radius * r_,
                         [&](const Site& y, double c) { visit(from_base(y), c); });
}

// ---------------------------------------------------------------------------

SplitField::SplitField(FieldPtr base, double eps) : base_(std::move(base)), eps_(eps) {
  const double mesh = base_->scale().mesh();
  if (!(eps >= mesh * (1.0 - 1e-12) && eps <= 1.0 + 1e-12))
    throw std::invalid_argument("split threshold must satisfy 1/n <= eps <= 1");
  local_ = std::make_shared<BandField>(base_, 0.0, true, eps_);
  jump_ = std::make_shared<BandField>(base_, eps_, false, kInfinity);
}

SplitField split(FieldPtr field, double eps) { return SplitField(std::move(field), eps); }

double eps_from_rule(const nlohmann::json& rule, int n) {
  if (rule.is_number()) return rule.get<double>();
  if (rule.is_string()) {
    const auto s = rule.get<std::string>();
    if (s.rfind("n^", 0) == 0) return std::pow(static_cast<double>(n), std::stod(s.substr(2)));
    return std::stod(s);
  }
  throw std::invalid_argument("eps rule must be a number or a string \"n^p\"");
}

FieldPtr make_field(const nlohmann::json& spec, LatticeScale scale) {
  const auto family = spec.at("family").get<std::string>();
  if (family == "nearest_neighbor")
    return std::make_shared<NearestNeighborField>(scale, spec.value("kappa", 1.0));
  if (family == "stable_like") {
    StableLikeParams p;
    p.alpha = spec.at("alpha").get<double>();
    p.beta = spec.value("beta", p.alpha);
    p.c1 = spec.at("c1").get<double>();
    p.c2 = spec.at("c2").get<double>();
    p.c3 = spec.at("c3").get<double>();
    p.c4 = spec.at("c4").get<double>();
    p.c5 = spec.at("c5").get<double>();
    return std::make_shared<StableLikeField>(scale, p);
  }
  if (family == "tabulated") {
    if (spec.contains("n") && spec.at("n").get<int>() != scale.n)
      throw ScaleMismatch("tabulated field is defined for n=" +
                          std::to_string(spec.at("n").get<int>()) + " only");
    const bool pairwise = spec.value("mode", std::string("displacement")) == "pairwise";
    if (spec.contains("path"))
      return TabulatedField::load_csv(scale, spec.at("path").get<std::string>(), pairwise);
    const int d = scale.d;
    std::vector<std::pair<Coords, double>> disp;
    std::vector<std::pair<std::pair<Coords, Coords>, double>> pairs;
    for (const auto& row : spec.at("entries")) {
      const auto width = static_cast<std::size_t>(pairwise ? 2 * d + 1 : d + 1);
      if (row.size() != width) throw std::invalid_argument("tabulated entry has wrong width");
      Coords a{}, b{};
      for (int i = 0; i < d; ++i) a[i] = row[i].get<std::int64_t>();
      if (pairwise) {
        for (int i = 0; i < d; ++i) b[i] = row[d + i].get<std::int64_t>();
        pairs.push_back({{a, b}, row.back().get<double>()});
      } else {
        disp.emplace_back(a, row.back().get<double>());
      }
    }
    if (pairwise) return TabulatedField::by_pair(scale, std::move(pairs));
    return TabulatedField::by_displacement(scale, std::move(disp));
  }
  throw std::invalid_argument("unknown conductance family '" + family + "'");
}

// ---------------------------------------------------------------------------

TailSum nu(const ConductanceField& field, const Site& x, const TailPolicy& policy) {
  TailSum out = field.reach(policy);
  const TailPolicy def{};
  double s = 0.0;
  if (policy.rel_tol == def.rel_tol && policy.max_offsets == def.max_offsets)
    s = field.reach_sum(x);
  else
    field.visit_neighbors(x, out.radius, [&](const Site&, double c) { s += c; });
  out.value = s;
  out.within_tolerance = out.remainder_bound <= policy.rel_tol * s;
  return out;
}

TailSum moment_at(const ConductanceField& field, const Site& x, const TailPolicy& policy) {
  TailSum out = field.reach(policy);
  const auto& sc = field.scale();
  const double n2 = static_cast<double>(sc.n) * sc.n;
  double s = 0.0;
  field.visit_neighbors(x, out.radius, [&](const Site& y, double c) {
    const double sq = static_cast<double>(squared_norm(difference(x.coords(), y.coords()), sc.d)) / n2;
    s += std::min(1.0, sq) * c;
  });
  out.value = n2 * s;
  out.remainder_bound = n2 * out.remainder_bound;
  out.within_tolerance = out.remainder_bound <= policy.rel_tol * out.value;
  return out;
}

TailSum moment_M(const ConductanceField& field, const Box& box, const TailPolicy& policy) {
  if (field.translation_invariant()) return moment_at(field, box.center(), policy);
  TailSum best;
  bool first = true;
  for (const auto& x : box.sites()) {
    auto m = moment_at(field, x, policy);
    if (first || m.value > best.value) best = m;
    first = false;
  }
  return best;
}

nlohmann::json AssumptionReport::to_json() const {
  return {{"c1_hat", c1_hat},
          {"c2_hat", c2_hat},
          {"nu_remainder", nu_remainder},
          {"M_hat", M_hat},
          {"M_remainder", M_remainder},
          {"A2_ok", A2_ok},
          {"A2_M0", A2_M0},
          {"A2_delta", A2_delta},
          {"A2_longest_chain", A2_longest_chain},
          {"A2_failure", pair_json(A2_failure)},
          {"A3_margin", A3_margin},
          {"A3_profile_integral", A3_profile_integral},
          {"A3_envelope_moment", A3_envelope_moment},
          {"A3_worst_pair", pair_json(A3_worst_pair)},
          {"symmetric", symmetric},
          {"asymmetric_pair", pair_json(asymmetric_pair)}};
}

void check_A1(const ConductanceField& field, const Box& box, AssumptionReport& report) {
  bool first = true;
  auto visit = [&](const Site& x) {
    const auto v = nu(field, x);
    if (first) {
      report.c1_hat = report.c2_hat = v.value;
      first = false;
    }
    report.c1_hat = std::min(report.c1_hat, v.value);
    report.c2_hat = std::max(report.c2_hat, v.value);
    report.nu_remainder = std::max(report.nu_remainder, v.remainder_bound);
  };
  if (field.translation_invariant())
    visit(box.center());
  else
    for (const auto& x : box.sites()) visit(x);
  const auto m = moment_M(field, box);
  report.M_hat = m.value;
  report.M_remainder = m.remainder_bound;
}

void check_A2(const ConductanceField& field, const Box& box, double M0, double delta,
              AssumptionReport& report) {
  if (!(M0 >= 1.0)) throw std::invalid_argument("A2 needs M0 >= 1");
  report.A2_M0 = M0;
  report.A2_delta = delta;
  report.A2_ok = true;
  const auto& sc = field.scale();
  std::vector<Coords> ball{Coords{}};
  for_each_offset(sc.d, sc.n, M0 / sc.n, false, [&](const Coords& k) { ball.push_back(k); });

  auto chain_length = [&](const Site& x, const Site& y) -> int {
    std::vector<Site> pts;
    pts.reserve(ball.size());
    for (const auto& k : ball) pts.push_back(x.offset_by(k));
    std::vector<int> dist(pts.size(), -1);
    std::deque<std::size_t> queue{0};
    dist[0] = 1;
    while (!queue.empty()) {
      const auto u = queue.front();
      queue.pop_front();
      if (pts[u] == y) return dist[u];
      for (std::size_t v = 0; v < pts.size(); ++v) {
        if (dist[v] >= 0 || field.value(pts[u], pts[v]) < delta) continue;
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
    return -1;
  };

  auto check_site = [&](const Site& x) {
    for (int i = 0; i < sc.d && report.A2_ok; ++i) {
      const Site y = x.shifted(i, 1);
      if (!box.contains(y)) continue;
      const int len = chain_length(x, y);
      if (len < 0) {
        report.A2_ok = false;
        report.A2_failure = SitePair{x, y};
        return;
      }
      report.A2_longest_chain = std::max(report.A2_longest_chain, len);
    }
  };
  if (field.translation_invariant()) {
    Coords k{};
    k[0] = -1;
    const Site x = box.center();
    check_site(box.contains(x.shifted(0, 1)) ? x : x.offset_by(k));
  } else {
    for (const auto& x : box.sites()) {
      check_site(x);
      if (!report.A2_ok) break;
    }
  }
}

void check_A3(const ConductanceField& field, const Box& box, const Envelope& env,
              AssumptionReport& report) {
  const auto& sc = field.scale();
  const double radius = field.reach().radius;
  report.A3_margin = 0.0;
  auto scan = [&](const Site& x) {
    field.visit_neighbors(x, radius, [&](const Site& y, double c) {
      const double b = env.bound(distance(x, y), sc);
      const double m = b > 0.0 ? c / b : kInfinity;
      if (m > report.A3_margin) {
        report.A3_margin = m;
        report.A3_worst_pair = SitePair{x, y};
      }
    });
  };
  if (field.translation_invariant())
    scan(box.center());
  else
    for (const auto& x : box.sites()) scan(x);

  report.A3_profile_integral = env.moment_integral(sc.d);
  const double delta = std::sqrt(static_cast<double>(sc.d)) / sc.n;
  const double R = std::max(radius, env.monotone_from + delta);
  const double n2 = static_cast<double>(sc.n) * sc.n;
  double s = 0.0;
  for_each_offset(sc.d, sc.n, R, false, [&](const Coords& k) {
    const auto sq = squared_norm(k, sc.d);
    const double t = std::sqrt(static_cast<double>(sq)) / sc.n;
    s += std::min(1.0, t * t) * env.bound(t, sc);
  });
  report.A3_envelope_moment = n2 * (s + env.tail_bound(R, sc));
}

void check_symmetry(const ConductanceField& field, const Box& box, int samples,
                    std::uint64_t seed, AssumptionReport& report) {
  report.symmetric = true;
  if (auto tab = dynamic_cast<const TabulatedField*>(&field); tab && !tab->translation_invariant()) {
    for (const auto& [x, y] : tab->stored_pairs()) {
      if (field.value(x, y) != field.value(y, x)) {
        report.symmetric = false;
        report.asymmetric_pair = SitePair{x, y};
        return;
      }
    }
    return;
  }
  const auto& sc = field.scale();
  const double radius = std::min(field.reach().radius, 4.0 + 1.0 / sc.n);
  const auto k_max = static_cast<std::int64_t>(std::floor(radius * sc.n));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, box.size() - 1);
  std::uniform_int_distribution<std::int64_t> step(-k_max, k_max);
  for (int s = 0; s < samples; ++s) {
    const Site& x = box.site(pick(rng));
    Coords k{};
    for (int i = 0; i < sc.d; ++i) k[i] = step(rng);
    const Site y = x.offset_by(k);
    if (field.value(x, y) != field.value(y, x)) {
      report.symmetric = false;
      report.asymmetric_pair = SitePair{x, y};
      return;
    }
  }
}

LargeJumpIntensity large_jump_intensity(const ConductanceField& field, const Site& x,
                                        double lambda, double r, const TailPolicy& policy) {
  if (!(lambda > 0.0)) throw std::invalid_argument("truncation level must be positive");
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("scale factor must lie in (0, 1]");
  const auto& sc = field.scale();
  const double threshold = lambda * r;
  const double nr = sc.n * r;
  LargeJumpIntensity out;
  const auto m = moment_at(field, x, policy);
  out.moment = m.value;
  out.bound = m.value / (lambda * lambda);
  double s = 0.0;
  const auto rg = field.range();
  if (!rg || *rg >= threshold * (1.0 - 1e-12)) {
    field.visit_neighbors(x, field.reach(policy).radius, [&](const Site& y, double c) {
      const auto sq = squared_norm(difference(x.coords(), y.coords()), sc.d);
      if (!within_radius(sq, threshold, sc.n, true)) s += c;
    });
  }
  out.value = nr * nr * s;
  out.within_bound = out.value <= out.bound * (1.0 + 1e-12);
  return out;
}

}  // namespace latdir

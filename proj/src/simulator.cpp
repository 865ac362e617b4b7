#include "latdir/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "latdir/quadrature.hpp"

namespace latdir {

Rng stream_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double exponential(Rng& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

StepSampler::StepSampler(std::vector<Coords> offsets, const std::vector<double>& weights)
    : offsets_(std::move(offsets)) {
  const std::size_t m = offsets_.size();
  if (m == 0 || weights.size() != m) throw std::invalid_argument("sampler needs matching offsets and weights");
  if (m > std::numeric_limits<std::uint32_t>::max()) throw std::length_error("sampler too large");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("sampler weights must be finite and nonnegative");
    total_ += w;
  }
  if (!(total_ > 0.0)) throw std::domain_error("sampler weights sum to zero");

  probability_.resize(m);
  cutoff_.resize(m);
  alias_.resize(m);
  std::vector<double> scaled(m);
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < m; ++i) {
    probability_[i] = weights[i] / total_;
    scaled[i] = probability_[i] * static_cast<double>(m);
    alias_[i] = static_cast<std::uint32_t>(i);
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    cutoff_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : small) cutoff_[i] = 1.0;
  for (auto i : large) cutoff_[i] = 1.0;
}

StepSampler StepSampler::for_site(const ConductanceField& field, const Site& x, double radius) {
  std::vector<Coords> offsets;
  std::vector<double> weights;
  field.visit_neighbors(x, radius, [&](const Site& y, double c) {
    offsets.push_back(difference(y.coords(), x.coords()));
    weights.push_back(c);
  });
  if (offsets.empty()) throw std::domain_error("no neighbours within the radius at " + to_string(x));
  return StepSampler(std::move(offsets), weights);
}

const Coords& StepSampler::sample(Rng& rng) const {
  const double u = uniform01(rng) * static_cast<double>(offsets_.size());
  auto i = static_cast<std::size_t>(u);
  if (i >= offsets_.size()) i = offsets_.size() - 1;
  return uniform01(rng) < cutoff_[i] ? offsets_[i] : offsets_[alias_[i]];
}

StepSampler step_sampler(const ConductanceField& field, const Site& x) {
  require_same_scale(field.scale(), x.scale());
  const TailSum reach = field.reach();
  StepSampler s = StepSampler::for_site(field, x, reach.radius);
  s.set_tail_mass(reach.remainder_bound / s.total());
  return s;
}

// ---------------------------------------------------------------------------

SamplerCache::SamplerCache(FieldPtr field) : field_(std::move(field)) {}

const SamplerCache::Entry& SamplerCache::entry(const Site& x) const {
  auto build = [&](const Site& at) {
    Entry e;
    try {
      e.sampler = std::make_unique<StepSampler>(step_sampler(*field_, at));
      e.nu = e.sampler->total();
    } catch (const std::domain_error&) {
      e.nu = 0.0;
    }
    return e;
  };
  std::lock_guard lock(mutex_);
  if (field_->translation_invariant()) {
    if (!shared_) shared_ = std::make_unique<Entry>(build(Site::origin(field_->scale())));
    return *shared_;
  }
  auto it = per_site_.find(x);
  if (it == per_site_.end()) it = per_site_.emplace(x, build(x)).first;
  return it->second;
}

const StepSampler& SamplerCache::at(const Site& x) const {
  const Entry& e = entry(x);
  if (!e.sampler) throw std::domain_error("nu vanishes at " + to_string(x));
  return *e.sampler;
}

double SamplerCache::nu(const Site& x) const { return entry(x).nu; }

// ---------------------------------------------------------------------------

const Site& Trajectory::at(double t) const {
  if (sites.empty()) throw std::logic_error("empty trajectory");
  auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto k = static_cast<std::size_t>(it - times.begin());
  return sites[k == 0 ? 0 : k - 1];
}

void Trajectory::write_csv(std::ostream& out) const {
  const int d = sites.empty() ? 1 : sites.front().dim();
  out << "T_k";
  for (int i = 0; i < d; ++i) out << ",coord_" << (i + 1);
  out << '\n';
  const auto old = out.precision(17);
  for (std::size_t k = 0; k < sites.size(); ++k) {
    out << times[k];
    for (int i = 0; i < d; ++i) out << ',' << sites[k].coord(i);
    out << '\n';
  }
  out.precision(old);
}

Trajectory simulate(const SamplerCache& chain, const Site& x0, double horizon, std::uint64_t seed,
                    std::uint64_t index) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  require_same_scale(chain.field().scale(), x0.scale());
  const double n2 = static_cast<double>(x0.scale().n) * x0.scale().n;
  Rng rng = stream_rng(seed, index);
  Trajectory tr{{0.0}, {x0}, horizon, seed, index};
  double t = 0.0;
  Site x = x0;
  while (true) {
    const StepSampler& s = chain.at(x);
    t += exponential(rng, n2 * s.total());
    if (t > horizon) break;
    x = x.offset_by(s.sample(rng));
    tr.times.push_back(t);
    tr.sites.push_back(x);
  }
  return tr;
}

Trajectory simulate(const FieldPtr& field, const Site& x0, double horizon, std::uint64_t seed,
                    std::uint64_t index) {
  SamplerCache chain(field);
  return simulate(chain, x0, horizon, seed, index);
}

MeyerParts::MeyerParts(const FieldPtr& field, double lambda_)
    : lambda(lambda_),
      small(std::make_shared<BandField>(field, 0.0, true, lambda_)),
      large(std::make_shared<BandField>(field, lambda_, false, kInfinity)) {
  if (!(lambda_ > field->scale().mesh() * (1.0 - 1e-12)))
    throw std::invalid_argument("truncation level must be at least the mesh");
}

double MeyerParts::large_rate(const Site& x) const {
  const double n = x.scale().n;
  return n * n * large.nu(x);
}

Trajectory simulate_meyer(const MeyerParts& parts, const Site& x0, double horizon,
                          std::uint64_t seed, std::uint64_t index) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  require_same_scale(parts.small.field().scale(), x0.scale());
  const double n2 = static_cast<double>(x0.scale().n) * x0.scale().n;
  Rng rng = stream_rng(seed, index);
  Trajectory tr{{0.0}, {x0}, horizon, seed, index};
  double t = 0.0;
  double level = exponential(rng, 1.0);  // S_1
  double clock = 0.0;                    // int J(Y_s) ds since the last large jump
  Site x = x0;
  while (true) {
    const double small_rate = n2 * parts.small.nu(x);
    const double J = parts.large_rate(x);
    const double hold = small_rate > 0.0 ? exponential(rng, small_rate) : kInfinity;
    const double to_level = J > 0.0 ? (level - clock) / J : kInfinity;
    if (to_level <= hold) {
      t += to_level;
      if (t > horizon) break;
      x = x.offset_by(parts.large.at(x).sample(rng));
      clock = 0.0;
      level = exponential(rng, 1.0);
    } else {
      t += hold;
      if (t > horizon) break;
      clock += J * hold;
      x = x.offset_by(parts.small.at(x).sample(rng));
    }
    tr.times.push_back(t);
    tr.sites.push_back(x);
  }
  return tr;
}

Trajectory simulate_meyer(const FieldPtr& field, const Site& x0, double horizon, double lambda,
                          std::uint64_t seed, std::uint64_t index) {
  MeyerParts parts(field, lambda);
  return simulate_meyer(parts, x0, horizon, seed, index);
}

Trajectory scaled_trajectory(const Trajectory& traj, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("scaling factor must lie in (0, 1]");
  if (traj.sites.empty()) return traj;
  const LatticeScale& sc = traj.sites.front().scale();
  const double nr = sc.n * r;
  const auto m = static_cast<int>(std::lround(nr));
  if (m < 1 || std::abs(nr - m) > 1e-9 * nr) throw std::invalid_argument("n * r must be an integer");
  if (m == sc.n) return traj;
  const LatticeScale target(m, sc.d);
  const double r2 = r * r;
  Trajectory out{{}, {}, traj.horizon / r2, traj.seed, traj.index};
  out.times.reserve(traj.times.size());
  out.sites.reserve(traj.sites.size());
  for (std::size_t k = 0; k < traj.sites.size(); ++k) {
    out.times.push_back(traj.times[k] / r2);
    out.sites.emplace_back(target, traj.sites[k].coords());
  }
  return out;
}

bool exceeds(const Trajectory& traj, double A, double t0) {
  if (traj.sites.empty()) return false;
  const Site& x0 = traj.sites.front();
  const int n = x0.scale().n;
  const int d = x0.dim();
  for (std::size_t k = 1; k < traj.sites.size() && traj.times[k] <= t0; ++k) {
    const auto sq = squared_norm(difference(traj.sites[k].coords(), x0.coords()), d);
    if (!within_radius(sq, A, n, false)) return true;
  }
  return false;
}

WilsonInterval wilson(std::uint64_t hits, std::uint64_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double N = static_cast<double>(trials);
  const double p = static_cast<double>(hits) / N;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / N;
  const double centre = (p + z2 / (2.0 * N)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / N + z2 / (4.0 * N * N)) / denom;
  return {std::max(0.0, std::min(p, centre - half)), std::min(1.0, std::max(p, centre + half))};
}

nlohmann::json ExitStats::to_json() const {
  return {{"A", A},         {"B", B},         {"t0", t0},
          {"n", n},         {"r", r},         {"trials", trials},
          {"hits", hits},   {"p_hat", p_hat}, {"wilson_lo", wilson_lo},
          {"wilson_hi", wilson_hi}, {"seed", seed}};
}

ExitStats exit_probability(const SamplerCache& chain, const Site& x0, double r, double A,
                           double t0, std::uint64_t trials, std::uint64_t seed, double B) {
  if (trials < 100) throw std::invalid_argument("exit_probability needs at least 100 trials");
  ExitStats out;
  out.A = A;
  out.B = B;
  out.t0 = t0;
  out.n = x0.scale().n;
  out.r = r;
  out.trials = trials;
  out.seed = seed;
  const double horizon = r * r * t0;
  if (horizon > 0.0) {
    for (std::uint64_t i = 0; i < trials; ++i) {
      const Trajectory tr = simulate(chain, x0, horizon, seed, i);
      if (exceeds(tr, r * A, horizon)) ++out.hits;
    }
  }
  out.p_hat = static_cast<double>(out.hits) / static_cast<double>(trials);
  const auto ci = wilson(out.hits, trials);
  out.wilson_lo = ci.lo;
  out.wilson_hi = ci.hi;
  return out;
}

}  // namespace latdir

#pragma once

// Trajectory sampling for the chain with jump rates n^2 C(x, y): direct
// simulation, the large-jump (Meyer) construction, space-time rescaling and
// Monte Carlo exit statistics.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <random>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "latdir/conductance.hpp"
#include "latdir/lattice.hpp"

namespace latdir {

using Rng = std::mt19937_64;

/// Independent stream for trajectory `index` under `seed`.
Rng stream_rng(std::uint64_t seed, std::uint64_t index);
/// Uniform on [0, 1) with 53 random bits.
double uniform01(Rng& rng);
double exponential(Rng& rng, double rate);

/// O(1) sampler over jump offsets (Vose alias table).
class StepSampler {
 public:
  /// Weights must be nonnegative with a positive sum; they are renormalized.
  StepSampler(std::vector<Coords> offsets, const std::vector<double>& weights);

  /// Offsets with C(x, x + k) != 0 for 0 < |k| <= radius.
  static StepSampler for_site(const ConductanceField& field, const Site& x, double radius);

  std::size_t size() const { return offsets_.size(); }
  const std::vector<Coords>& offsets() const { return offsets_; }
  /// Probability of offset i after renormalization.
  double probability(std::size_t i) const { return probability_[i]; }
  /// Sum of the raw weights.
  double total() const { return total_; }
  /// Conductance mass beyond the sampled radius relative to total() (0 when
  /// nothing was cut).
  double tail_mass() const { return tail_mass_; }
  void set_tail_mass(double m) { tail_mass_ = m; }

  const Coords& sample(Rng& rng) const;

 private:
  std::vector<Coords> offsets_;
  std::vector<double> probability_;
  std::vector<double> cutoff_;
  std::vector<std::uint32_t> alias_;
  double total_ = 0.0;
  double tail_mass_ = 0.0;
};

/// Jump distribution of the chain at x: next site with probability
/// C(x, y) / nu_x over the field's reach. Throws std::domain_error if nu_x = 0.
StepSampler step_sampler(const ConductanceField& field, const Site& x);

/// Per-site samplers, built lazily; one shared sampler for translation
/// invariant fields.
class SamplerCache {
 public:
  explicit SamplerCache(FieldPtr field);
  const ConductanceField& field() const { return *field_; }
  /// Throws std::domain_error if nu_x = 0.
  const StepSampler& at(const Site& x) const;
  /// Sampled (truncated) nu_x; zero when x has no neighbours.
  double nu(const Site& x) const;

 private:
  struct Entry {
    std::unique_ptr<StepSampler> sampler;
    double nu = 0.0;
  };
  const Entry& entry(const Site& x) const;

  FieldPtr field_;
  mutable std::mutex mutex_;
  mutable std::unique_ptr<Entry> shared_;
  mutable std::unordered_map<Site, Entry, SiteHash> per_site_;
};

struct Trajectory {
  std::vector<double> times;  // T_0 = 0 < T_1 < ...
  std::vector<Site> sites;    // X_k occupied on [T_k, T_{k+1})
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;

  std::size_t jumps() const { return sites.empty() ? 0 : sites.size() - 1; }
  const Site& at(double t) const;
  /// rows `T_k,coord_1..coord_d`
  void write_csv(std::ostream& out) const;
};

Trajectory simulate(const SamplerCache& chain, const Site& x0, double horizon, std::uint64_t seed,
                    std::uint64_t index = 0);
Trajectory simulate(const FieldPtr& field, const Site& x0, double horizon, std::uint64_t seed,
                    std::uint64_t index = 0);

/// Jumps of length <= lambda and > lambda, as used by the Meyer construction.
struct MeyerParts {
  explicit MeyerParts(const FieldPtr& field, double lambda);
  double lambda;
  SamplerCache small;
  SamplerCache large;
  /// J(x) = n^2 sum_{|h| > lambda} C(x, x + h)
  double large_rate(const Site& x) const;
};

/// Runs the chain with jumps <= lambda and inserts a jump > lambda whenever
/// int J(Y_s) ds crosses an independent unit exponential level.
Trajectory simulate_meyer(const MeyerParts& parts, const Site& x0, double horizon,
                          std::uint64_t seed, std::uint64_t index = 0);
Trajectory simulate_meyer(const FieldPtr& field, const Site& x0, double horizon, double lambda,
                          std::uint64_t seed, std::uint64_t index = 0);

/// t -> r^{-1} Y_{r^2 t}, read on the lattice of scale n*r (same integer
/// coordinates). Requires r in (0, 1] with n*r an integer.
Trajectory scaled_trajectory(const Trajectory& traj, double r);

/// Whether sup_{s <= t0} |Y_s - Y_0| > A on the jump skeleton.
bool exceeds(const Trajectory& traj, double A, double t0);

struct WilsonInterval {
  double lo = 0.0;
  double hi = 0.0;
};
WilsonInterval wilson(std::uint64_t hits, std::uint64_t trials, double z = 1.959963984540054);

struct ExitStats {
  double A = 0.0;
  double B = 0.0;
  double t0 = 0.0;
  int n = 0;
  double r = 1.0;
  std::uint64_t trials = 0;
  std::uint64_t hits = 0;
  double p_hat = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
  std::uint64_t seed = 0;
  nlohmann::json to_json() const;
};

/// P^{x0}(sup_{s <= r^2 t0} |Y_s - Y_0| > r A) by Monte Carlo. `B` is only
/// carried into the report.
ExitStats exit_probability(const SamplerCache& chain, const Site& x0, double r, double A,
                           double t0, std::uint64_t trials, std::uint64_t seed, double B = 0.5);

}  // namespace latdir

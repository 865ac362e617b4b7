#pragma once

// Conductance fields C^n(x, y) on the scaled lattice, the built-in families,
// the short/long range split and the checkers for the standing assumptions.

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "latdir/lattice.hpp"

namespace latdir {

class DivergentTail : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Radial majorant: C^n(x, y) <= n^{-(d+2)} profile(|x - y|) + atom * 1{|x - y| = 1/n}.
/// `profile` must be nonincreasing on [monotone_from, infinity); tail bounds rely on it.
struct Envelope {
  std::function<double(double)> profile;
  double nearest_neighbor_atom = 0.0;
  double monotone_from = 1.0;

  /// The majorant at distance t on the given scale.
  double bound(double t, const LatticeScale& scale) const;
  /// Bound on sum_{|h| > R} C(x, x + h) from comparing lattice cells with the
  /// radial integral of the profile. Requires R >= monotone_from + sqrt(d)/n.
  double tail_bound(double R, const LatticeScale& scale) const;
  /// int_0^inf (1 ^ t^2) t^{d-1} profile(t) dt, by quadrature.
  double moment_integral(int d) const;
};

/// Truncation policy for infinite-range sums.
struct TailPolicy {
  double rel_tol = 1e-8;
  double max_offsets = 2.0e6;
};

/// A partial sum together with a certified bound on what was cut off.
struct TailSum {
  double value = 0.0;
  double remainder_bound = 0.0;
  double radius = 0.0;
  bool within_tolerance = true;
};

using NeighborVisitor = std::function<void(const Site&, double)>;

class ConductanceField {
 public:
  explicit ConductanceField(LatticeScale scale) : scale_(scale) {}
  virtual ~ConductanceField() = default;
  ConductanceField(const ConductanceField&) = delete;
  ConductanceField& operator=(const ConductanceField&) = delete;

  const LatticeScale& scale() const { return scale_; }

  /// C^n(x, y); zero on the diagonal.
  virtual double value(const Site& x, const Site& y) const = 0;
  /// The field vanishes for |x - y| beyond this distance.
  virtual std::optional<double> range() const { return std::nullopt; }
  virtual std::optional<Envelope> envelope() const { return std::nullopt; }
  virtual bool translation_invariant() const { return false; }
  virtual nlohmann::json describe() const = 0;

  /// Calls visit(y, C(x, y)) for every y != x with 0 < |x - y| <= radius and
  /// C(x, y) != 0.
  virtual void visit_neighbors(const Site& x, double radius, const NeighborVisitor& visit) const;

  /// Radius used for neighbor sums: the range when finite, otherwise chosen
  /// from the envelope so the cut-off tail is small relative to nu.
  TailSum reach(const TailPolicy& policy = {}) const;

  /// sum_y C(x, y) over 0 < |x - y| <= reach().radius, in visit order.
  /// Cached for translation-invariant fields.
  double reach_sum(const Site& x) const;
  /// Nonzero offsets within the reach for translation-invariant fields.
  std::optional<std::size_t> reach_count() const;

  /// 64-bit FNV-1a hash of describe().
  std::uint64_t hash() const;

 protected:
  virtual TailSum compute_reach(const TailPolicy& policy) const;

  /// Nonzero offsets within `radius`, cached for translation-invariant fields.
  struct OffsetTable {
    double radius = 0.0;
    std::vector<Coords> offsets;
    std::vector<double> values;
  };
  const OffsetTable& offset_table() const;

 private:
  LatticeScale scale_;
  mutable std::once_flag reach_once_;
  mutable TailSum reach_;
  mutable std::once_flag table_once_;
  mutable OffsetTable table_;
  mutable std::once_flag sum_once_;
  mutable double reach_sum_ = 0.0;
};

using FieldPtr = std::shared_ptr<const ConductanceField>;

class NearestNeighborField final : public ConductanceField {
 public:
  NearestNeighborField(LatticeScale scale, double kappa);
  double kappa() const { return kappa_; }
  double value(const Site& x, const Site& y) const override;
  std::optional<double> range() const override { return scale().mesh(); }
  std::optional<Envelope> envelope() const override;
  bool translation_invariant() const override { return true; }
  nlohmann::json describe() const override;
  void visit_neighbors(const Site& x, double radius, const NeighborVisitor& visit) const override;

 private:
  double kappa_;
};

struct StableLikeParams {
  double alpha = 1.0;
  double beta = 1.0;
  double c1 = 1.0, c2 = 1.0, c3 = 1.0, c4 = 1.0, c5 = 1.0;
};

/// Translation-invariant field at the upper edge of the two-sided
/// stable-like sandwich: power law with index beta up to distance 1, index
/// alpha beyond, plus a nearest-neighbour bond.
class StableLikeField final : public ConductanceField {
 public:
  StableLikeField(LatticeScale scale, StableLikeParams params);
  const StableLikeParams& params() const { return params_; }
  double value(const Site& x, const Site& y) const override;
  double value_at_offset(const Coords& k) const;
  /// Lower edge of the sandwich at squared step length `sq`.
  double lower_bound_at(std::int64_t sq) const;
  std::optional<Envelope> envelope() const override;
  bool translation_invariant() const override { return true; }
  nlohmann::json describe() const override;

 private:
  StableLikeParams params_;
};

/// Field read from a table: keyed by displacement (translation invariant) or
/// by ordered pair of sites.
class TabulatedField final : public ConductanceField {
 public:
  static std::shared_ptr<TabulatedField> by_displacement(LatticeScale scale,
                                                         std::vector<std::pair<Coords, double>> rows);
  static std::shared_ptr<TabulatedField> by_pair(
      LatticeScale scale, std::vector<std::pair<std::pair<Coords, Coords>, double>> rows);
  static std::shared_ptr<TabulatedField> load_csv(LatticeScale scale, const std::string& path,
                                                  bool pairwise);

  double value(const Site& x, const Site& y) const override;
  std::optional<double> range() const override { return range_; }
  bool translation_invariant() const override { return !pairwise_; }
  nlohmann::json describe() const override;
  void visit_neighbors(const Site& x, double radius, const NeighborVisitor& visit) const override;

  /// Stored pairs (x, y); used by exhaustive symmetry checks.
  std::vector<std::pair<Site, Site>> stored_pairs() const;

  TabulatedField(LatticeScale scale, bool pairwise);

 private:
  bool pairwise_;
  double range_ = 0.0;
  std::map<Coords, double> by_offset_;
  std::map<Coords, std::vector<std::pair<Coords, double>>> by_site_;
};

/// C restricted to lo < |x - y| <= hi (lo inclusive when `lo_closed`).
class BandField final : public ConductanceField {
 public:
  BandField(FieldPtr base, double lo, bool lo_closed, double hi);
  double value(const Site& x, const Site& y) const override;
  std::optional<double> range() const override;
  std::optional<Envelope> envelope() const override { return base_->envelope(); }
  bool translation_invariant() const override { return base_->translation_invariant(); }
  nlohmann::json describe() const override;
  void visit_neighbors(const Site& x, double radius, const NeighborVisitor& visit) const override;

  bool keeps(std::int64_t sq_steps) const;

 protected:
  TailSum compute_reach(const TailPolicy& policy) const override;

 private:
  FieldPtr base_;
  double lo_;
  bool lo_closed_;
  double hi_;
};

/// The field seen by the space-time rescaled chain: lives on scale n*r, with
/// C'(k/(nr), l/(nr)) = C(k/n, l/n). Requires n*r to be an integer.
class RescaledField final : public ConductanceField {
 public:
  RescaledField(FieldPtr base, double r);
  double factor() const { return r_; }
  double value(const Site& x, const Site& y) const override;
  std::optional<double> range() const override;
  std::optional<Envelope> envelope() const override;
  bool translation_invariant() const override { return base_->translation_invariant(); }
  nlohmann::json describe() const override;
  void visit_neighbors(const Site& x, double radius, const NeighborVisitor& visit) const override;

 protected:
  TailSum compute_reach(const TailPolicy& policy) const override;

 private:
  Site to_base(const Site& s) const;
  Site from_base(const Site& s) const;
  FieldPtr base_;
  double r_;
};

/// Additive split C = C_C + C_J at the threshold eps: C_C keeps |x - y| <= eps.
class SplitField {
 public:
  SplitField(FieldPtr base, double eps);
  const FieldPtr& base() const { return base_; }
  double eps() const { return eps_; }
  const FieldPtr& local() const { return local_; }
  const FieldPtr& jump() const { return jump_; }

 private:
  FieldPtr base_;
  double eps_;
  FieldPtr local_;
  FieldPtr jump_;
};

SplitField split(FieldPtr field, double eps);

/// Threshold from a rule: a number, or a string "n^p".
double eps_from_rule(const nlohmann::json& rule, int n);

/// Field from a config object {"family": ..., params...}.
FieldPtr make_field(const nlohmann::json& spec, LatticeScale scale);

/// nu^n_x = sum_y C(x, y) with the truncation remainder.
TailSum nu(const ConductanceField& field, const Site& x, const TailPolicy& policy = {});

/// n^2 sum_y (1 ^ |y - x|^2) C(x, y) at one site.
TailSum moment_at(const ConductanceField& field, const Site& x, const TailPolicy& policy = {});

/// max over box sites of moment_at.
TailSum moment_M(const ConductanceField& field, const Box& box, const TailPolicy& policy = {});

struct SitePair {
  Site x;
  Site y;
};

struct AssumptionReport {
  double c1_hat = 0.0;
  double c2_hat = 0.0;
  double nu_remainder = 0.0;
  double M_hat = 0.0;
  double M_remainder = 0.0;

  bool A2_ok = true;
  double A2_M0 = 0.0;
  double A2_delta = 0.0;
  int A2_longest_chain = 0;
  std::optional<SitePair> A2_failure;

  double A3_margin = 0.0;
  double A3_profile_integral = 0.0;
  double A3_envelope_moment = 0.0;
  std::optional<SitePair> A3_worst_pair;

  bool symmetric = true;
  std::optional<SitePair> asymmetric_pair;

  nlohmann::json to_json() const;
};

void check_A1(const ConductanceField& field, const Box& box, AssumptionReport& report);
void check_A2(const ConductanceField& field, const Box& box, double M0, double delta,
              AssumptionReport& report);
void check_A3(const ConductanceField& field, const Box& box, const Envelope& envelope,
              AssumptionReport& report);
/// Exhaustive on tabulated pairwise fields; otherwise `samples` random pairs
/// with x in the box and |x - y| within the field's reach.
void check_symmetry(const ConductanceField& field, const Box& box, int samples,
                    std::uint64_t seed, AssumptionReport& report);

struct LargeJumpIntensity {
  double value = 0.0;
  double moment = 0.0;
  double bound = 0.0;  // M / lambda^2
  bool within_bound = true;
};

/// (nr)^2 sum_{|h| >= lambda r} C(x, x + h) for the chain rescaled by r,
/// with x given on the unscaled lattice, and its bound via the moment at x.
LargeJumpIntensity large_jump_intensity(const ConductanceField& field, const Site& x,
                                        double lambda, double r, const TailPolicy& policy = {});

}  // namespace latdir

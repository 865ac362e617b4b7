#pragma once

// Dirichlet-form energies, the generator on an absorbing box, heat kernels by
// uniformization, resolvents, and the carre du champ used for off-diagonal
// (Davies-type) bounds.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "latdir/conductance.hpp"
#include "latdir/lattice.hpp"

namespace latdir {

/// E^n(f, g) = n^{2-d}/2 sum_{x,y} (f(y) - f(x)) (g(y) - g(x)) C(x, y).
/// Neighbour sums are cut at the field's reach, consistently with nu().
double energy(const GridFunction& f, const GridFunction& g, const ConductanceField& field);

/// n^{2+d}/2 times the double integral of (f(x) - f(y))^2 C([x]_n, [y]_n) over
/// R^d x R^d for a step function, evaluated cell pair by cell pair at cell
/// midpoints.
double cell_form_energy(const StepFunction& f, const ConductanceField& field);

/// Energy of the unit nearest-neighbour field.
double energy_nn(const GridFunction& f);

struct SplitEnergy {
  double local = 0.0;
  double jump = 0.0;
};
SplitEnergy energy_split(const GridFunction& f, const GridFunction& g, const SplitField& split);

/// A^n f(x) = n^2 sum_y (f(y) - f(x)) C(x, y).
double apply_generator(const GridFunction& f, const Site& x, const ConductanceField& field);

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Generator killed outside `box`: A[x][y] = n^2 C(x, y) for x != y in the
/// box and A[x][x] = -n^2 nu_x with the full nu (mass leaving the box is lost).
struct GeneratorMatrix {
  Box box;
  SparseRowMatrix matrix;
  Eigen::VectorXd nu;
  double nu_remainder = 0.0;
  std::uint64_t field_hash = 0;

  const LatticeScale& scale() const { return box.scale(); }
  double max_rate() const;
  /// header line of JSON, then one `row col value` line per nonzero
  void write(std::ostream& out) const;
};

inline constexpr double kMaxGeneratorNonzeros = 1e7;

GeneratorMatrix assemble(const ConductanceField& field, const Box& box);

/// p(t_k, source, .) as densities with respect to mu^n on the box.
struct HeatKernelTable {
  Box box;
  Site source;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> density;
  std::vector<double> mass_defect;

  const LatticeScale& scale() const { return box.scale(); }
  double at(std::size_t k, const Site& y) const;
  /// rows `t,coord_1..coord_d,density,mass_defect`
  void write_csv(std::ostream& out) const;
};

struct UniformizationOptions {
  double tail_tol = 1e-10;  // per-entry density error allowed from the truncated series
  std::int64_t max_steps = 5'000'000;
};

/// exp(t A) applied to each source, by uniformization. All sources and times
/// share one sweep over powers of I + A / Lambda.
std::vector<HeatKernelTable> heat_kernels(const GeneratorMatrix& gen,
                                          const std::vector<double>& times,
                                          const std::vector<Site>& sources,
                                          const UniformizationOptions& opts = {});

HeatKernelTable heat_kernel(const GeneratorMatrix& gen, const std::vector<double>& times,
                            const Site& source, const UniformizationOptions& opts = {});

/// p^{n,r}(t, x, y) = r^d p^n(r^2 t, r x, r y): the same data read on scale n*r
/// at times divided by r^2. Requires n*r to be an integer.
HeatKernelTable scaled_kernel(const HeatKernelTable& table, double r);

/// Kernel of the chain with all jumps longer than `lambda` removed.
HeatKernelTable truncated_kernel(const FieldPtr& field, const Box& box, double lambda,
                                 const std::vector<double>& times, const Site& source,
                                 const UniformizationOptions& opts = {});

/// Box centred at `center` large enough that the killed kernel loses less
/// than `max_defect` of its mass by time t_max.
struct SizedBox {
  Box box;
  double mass_defect = 0.0;
};
SizedBox default_box(const ConductanceField& field, const Site& center, double t_max,
                     double max_defect = 1e-3);

/// Sparse LDL^T factorization of (lambda I - A), reused across right-hand sides.
class ResolventSolver {
 public:
  ResolventSolver(const GeneratorMatrix& gen, double lambda);
  ~ResolventSolver();
  ResolventSolver(ResolventSolver&&) noexcept;
  ResolventSolver& operator=(ResolventSolver&&) noexcept;

  double lambda() const { return lambda_; }
  /// Solves on the box (f outside the box is ignored); throws if the relative
  /// residual exceeds 1e-10.
  GridFunction solve(const GridFunction& f) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double lambda_;
};

GridFunction resolvent(const GeneratorMatrix& gen, double lambda, const GridFunction& f);

using LatticeFunction = std::function<double(const Site&)>;

/// Gamma[v](xi) = n^2 sum_{0 < |xi - eta| <= lambda} (v(eta) - v(xi))^2 C(xi, eta)
/// on the field's own scale. For the rescaled chain pass a RescaledField.
double carre_du_champ(const LatticeFunction& v, const Site& xi, const ConductanceField& field,
                      double lambda);

/// max over the s grid of (s R - t c3 e^{3 s lambda} (1 + lambda^{-2})), floored at 0.
double davies_exponent(double R, double t, double lambda, double c3,
                       const std::vector<double>& s_grid);

struct DaviesReport {
  double c3_hat = 0.0;       // calibrated Gamma constant
  double c_hat = 0.0;        // fitted prefactor (even time indices)
  double worst_ratio = 0.0;  // max over held-out points of p / bound
  int fit_points = 0;
  int check_points = 0;
  std::vector<double> times;
  std::vector<double> decay_slopes;  // fitted d(log p)/dR per time
  nlohmann::json to_json() const;
};

/// Calibrates c3 with psi(xi) = s (|xi - x| ^ R) on an (s, lambda)-grid, then
/// fits c in p <= c t^{-d/2} exp(-E(2t)) with s = log(1/sqrt t) / (3 lambda)
/// and checks it on held-out times.
DaviesReport davies_off_diagonal_check(const HeatKernelTable& table, const ConductanceField& field,
                                       double lambda);

}  // namespace latdir

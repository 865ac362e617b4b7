#pragma once

// Experiment configuration, convergence reports and the experiment drivers
// behind the `latdir` command line tool.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latdir/conductance.hpp"
#include "latdir/lattice.hpp"

namespace latdir {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  static constexpr int kSchema = 1;

  std::string experiment;
  nlohmann::json field = nlohmann::json::object();
  std::vector<int> n;
  int d = 1;
  std::optional<double> box_radius;
  std::vector<double> times;
  nlohmann::json eps_rule = "n^-0.5";
  std::uint64_t seed = 1;
  nlohmann::json tolerances = nlohmann::json::object();
  nlohmann::json params = nlohmann::json::object();
  std::string output_dir = "out";

  /// Validates the schema version and field types; missing optional keys take
  /// the defaults above.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  double tolerance(const std::string& name) const;
  template <class T>
  T param(const std::string& name) const {
    if (!params.contains(name)) throw ConfigError("missing parameter '" + name + "'");
    return params.at(name).get<T>();
  }
  template <class T>
  T param_or(const std::string& name, T fallback) const {
    return params.contains(name) ? params.at(name).get<T>() : fallback;
  }

  LatticeScale scale(int n_value) const { return LatticeScale(n_value, d); }
  FieldPtr make_field_at(int n_value) const;
  /// The split threshold: `eps_n_rule` inside the field spec, else eps_rule.
  double eps_at(int n_value) const;
};

/// Built-in defaults for each experiment; the acceptance suite runs these.
ExperimentConfig default_config(const std::string& experiment);
const std::vector<std::string>& experiment_names();

struct Check {
  std::string name;
  double value = 0.0;
  std::string op;  // one of <, <=, >, >=, ==
  double threshold = 0.0;
  bool pass = false;
};

bool compare(double value, const std::string& op, double threshold);

struct ConvergenceReport {
  std::string experiment;
  nlohmann::json config;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json fitted = nlohmann::json::object();
  std::vector<Check> checks;

  const Check& check(const std::string& name, double value, const std::string& op,
                     double threshold);
  bool passed() const;
  const Check* find(const std::string& name) const;
  /// Re-evaluates every check from its stored value and threshold.
  bool consistent() const;
  /// Number of non-finite numbers anywhere in metrics or fitted.
  std::size_t nonfinite_count() const;
  nlohmann::json to_json() const;
};

/// Named output files (CSV or JSON text) produced by an experiment.
struct Artifacts {
  std::map<std::string, std::string> files;
  void add(const std::string& name, std::string content) { files[name] = std::move(content); }
};

using Experiment = std::function<ConvergenceReport(const ExperimentConfig&, Artifacts&)>;

ConvergenceReport run_experiment(const ExperimentConfig& config, Artifacts& artifacts);
/// Writes report.json and every artifact below `dir`.
void write_outputs(const std::filesystem::path& dir, const ConvergenceReport& report,
                   const Artifacts& artifacts);

ConvergenceReport cmd_check_assumptions(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_nash(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_exit_table(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_holder(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_diffusion(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_jump_measure(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_resolvent(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_poincare(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_killed_lower(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_levy_symbol(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_simulate(const ExperimentConfig&, Artifacts&);
ConvergenceReport cmd_heat_kernel(const ExperimentConfig&, Artifacts&);

// ---------------------------------------------------------------------------
// Numerical helpers shared by the experiments.

/// Dyadic times 2^{-k} in (lo, hi].
std::vector<double> dyadic_times(double lo, double hi);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Half the l1 distance between two probability vectors keyed by site.
double total_variation(const std::map<Site, double>& p, const std::map<Site, double>& q);

/// First crossing of level B by a nondecreasing sequence p over increasing
/// t, interpolated linearly in log t. Empty if p never exceeds B.
std::optional<double> crossing_time(const std::vector<double>& t, const std::vector<double>& p,
                                    double B);

/// (lambda - kappa d^2/dx^2)^{-1} applied to exp(-x^2 / (2 sigma^2)) on R.
double brownian_resolvent_gaussian(double x, double kappa, double lambda, double sigma);

/// Smooth bump exp(-1 / (1 - ((x - c) / w)^2)) on |x - c| < w.
struct Bump {
  double center = 0.0;
  double width = 1.0;
  double operator()(double x) const;
};

/// Probability that |h + U| lies in [lo, hi], U the difference of two
/// independent uniforms on [0, 1/n); h = k / n.
double annulus_fraction(std::int64_t k, int n, double lo, double hi);

/// n^{d+2} C^n(x, y) 1{1/N <= |x - y| <= N} dx dy integrated against
/// gx(x) gy(y) in d = 1, with C^n extended constantly on cells.
double lattice_jump_pairing(const ConductanceField& field, const Bump& gx, const Bump& gy, double N);

/// The same pairing against c |x - y|^{-p} on R x R by nested quadrature.
double jump_pairing_oracle(const Bump& gx, const Bump& gy, double N, double c, double p);

/// int (1 - cos(u h)) phi(|h|) dh over R for the two-sided power profile
/// c3 t^{-1-beta} (t <= 1), c5 t^{-1-alpha} (t > 1).
double levy_symbol_1d(double u, double alpha, double beta, double c3, double c5);

}  // namespace latdir

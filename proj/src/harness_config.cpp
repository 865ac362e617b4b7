#include <cmath>
#include <fstream>
#include <sstream>

#include "latdir/harness.hpp"

namespace latdir {

namespace {

using nlohmann::json;

json stable_like_default() {
  return {{"family", "stable_like"}, {"alpha", 1.0}, {"beta", 1.5}, {"c1", 0.01}, {"c2", 0.25},
          {"c3", 0.01},              {"c4", 0.5},    {"c5", 0.002}};
}

json exact_power_field() {
  return {{"family", "stable_like"}, {"alpha", 1.0}, {"beta", 1.0}, {"c1", 1.0}, {"c2", 1.0},
          {"c3", 1.0},               {"c4", 1.0},    {"c5", 1.0}};
}

std::vector<double> geometric(double lo, double hi, int points) {
  std::vector<double> out;
  for (int i = 0; i < points; ++i)
    out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1)));
  out.back() = hi;
  return out;
}

void count_nonfinite(const json& j, std::size_t& count) {
  if (j.is_number_float()) {
    if (!std::isfinite(j.get<double>())) ++count;
  } else if (j.is_structured()) {
    for (const auto& v : j) count_nonfinite(v, count);
  }
}

const std::map<std::string, Experiment>& registry() {
  static const std::map<std::string, Experiment> table{
      {"check-assumptions", cmd_check_assumptions},
      {"nash", cmd_nash},
      {"exit-table", cmd_exit_table},
      {"holder", cmd_holder},
      {"diffusion", cmd_diffusion},
      {"jump-measure", cmd_jump_measure},
      {"resolvent", cmd_resolvent},
      {"poincare", cmd_poincare},
      {"killed-lower", cmd_killed_lower},
      {"levy-symbol", cmd_levy_symbol},
      {"simulate", cmd_simulate},
      {"heat-kernel", cmd_heat_kernel},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "check-assumptions", "nash",     "exit-table", "holder",       "diffusion",   "jump-measure",
      "resolvent",         "poincare", "killed-lower", "levy-symbol", "simulate", "heat-kernel"};
  return names;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.value("schema", 0) != kSchema)
    throw ConfigError("unsupported config schema (expected \"schema\": 1)");
  ExperimentConfig c;
  try {
    c.experiment = j.at("experiment").get<std::string>();
    if (!registry().count(c.experiment)) throw ConfigError("unknown experiment '" + c.experiment + "'");
    if (j.contains("field")) c.field = j.at("field");
    if (j.contains("n")) c.n = j.at("n").get<std::vector<int>>();
    c.d = j.value("d", 1);
    if (j.contains("box_radius") && !j.at("box_radius").is_null())
      c.box_radius = j.at("box_radius").get<double>();
    if (j.contains("times")) c.times = j.at("times").get<std::vector<double>>();
    if (j.contains("eps_rule")) c.eps_rule = j.at("eps_rule");
    c.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("tolerances")) c.tolerances = j.at("tolerances");
    if (j.contains("params")) c.params = j.at("params");
    c.output_dir = j.value("output_dir", std::string("out"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (c.d < 1 || c.d > kMaxDim) throw ConfigError("d must lie in 1.." + std::to_string(kMaxDim));
  for (int v : c.n)
    if (v < 1) throw ConfigError("lattice scales must be positive");
  for (std::size_t i = 0; i < c.times.size(); ++i)
    if (!(c.times[i] > 0.0) || (i > 0 && !(c.times[i] > c.times[i - 1])))
      throw ConfigError("times must be positive and increasing");
  if (c.box_radius && !(*c.box_radius > 0.0)) throw ConfigError("box_radius must be positive");
  if (!c.field.is_object()) throw ConfigError("field must be an object");
  if (!c.tolerances.is_object() || !c.params.is_object())
    throw ConfigError("tolerances and params must be objects");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  return {{"schema", kSchema},
          {"experiment", experiment},
          {"field", field},
          {"n", n},
          {"d", d},
          {"box_radius", box_radius ? json(*box_radius) : json(nullptr)},
          {"times", times},
          {"eps_rule", eps_rule},
          {"seed", seed},
          {"tolerances", tolerances},
          {"params", params},
          {"output_dir", output_dir}};
}

double ExperimentConfig::tolerance(const std::string& name) const {
  if (!tolerances.contains(name)) throw ConfigError("missing tolerance '" + name + "'");
  return tolerances.at(name).get<double>();
}

FieldPtr ExperimentConfig::make_field_at(int n_value) const {
  return make_field(field, scale(n_value));
}

double ExperimentConfig::eps_at(int n_value) const {
  return eps_from_rule(field.contains("eps_n_rule") ? field.at("eps_n_rule") : eps_rule, n_value);
}

ExperimentConfig default_config(const std::string& experiment) {
  if (!registry().count(experiment)) throw ConfigError("unknown experiment '" + experiment + "'");
  ExperimentConfig c;
  c.experiment = experiment;
  c.field = stable_like_default();
  c.output_dir = "out/" + experiment;
  if (experiment == "check-assumptions") {
    c.n = {8, 16, 32};
    c.box_radius = 2.0;
    c.params = {{"M0", 1.0}, {"delta", 0.25}, {"symmetry_samples", 10000}};
    c.tolerances = {{"nu_stability", 0.01}, {"A3_margin", 1.0}};
  } else if (experiment == "nash") {
    c.n = {8, 16, 32, 64};
    c.params = {{"nash_samples", 200}, {"support_size", 12}};
    c.tolerances = {{"sup_ratio", 2.0}, {"eps_ratio", 0.5}, {"mass_defect", 1e-3}};
  } else if (experiment == "exit-table") {
    c.n = {8, 16, 32};
    c.params = {{"A", {0.5}},
                {"t0", geometric(0.004, 1.0, 16)},
                {"r", {1.0, 0.5}},
                {"trials", 10000},
                {"B", 0.5},
                {"A_prime", 0.1},
                {"B_prime", 0.5},
                {"kernel_check", {{"n", 16}, {"A", 0.5}, {"r", 1.0}, {"t0", 0.1}}}};
    c.tolerances = {{"t0_ratio", 2.0}, {"ci_slack", 1e-3}};
  } else if (experiment == "holder") {
    c.n = {8, 16, 32};
    c.params = {{"t0", 0.25}, {"time_points", 9}, {"window", 0.5}};
    c.tolerances = {{"beta_stability", 0.5}, {"violation_fraction", 0.01}};
  } else if (experiment == "diffusion") {
    c.n = {8, 16, 32, 64};
    c.eps_rule = "n^-0.5";
    c.params = {{"target", "self"}, {"window_radius", 1.0}};
    c.tolerances = {{"sup_ratio", 2.0}, {"nn_error", 1e-12}};
  } else if (experiment == "jump-measure") {
    c.field = exact_power_field();
    c.n = {8, 16, 32, 64};
    c.params = {{"N", {2.0, 4.0}},
                {"target", {{"constant", 1.0}, {"exponent", 2.0}}},
                {"tests",
                 {{{"x", {0.0, 0.5}}, {"y", {1.0, 0.5}}},
                  {{"x", {-0.5, 0.4}}, {"y", {1.0, 0.6}}},
                  {{"x", {0.0, 0.8}}, {"y", {0.0, 0.8}}},
                  {{"x", {0.3, 0.3}}, {"y", {-1.2, 0.5}}},
                  {{"x", {0.0, 1.0}}, {"y", {2.5, 1.0}}}}},
                {"outside", {{"x", {0.0, 0.1}}, {"y", {0.0, 0.1}}}}};
    c.tolerances = {{"rel_error", 0.02}};
  } else if (experiment == "resolvent") {
    c.field = {{"family", "nearest_neighbor"}, {"kappa", 0.5}};
    c.n = {8, 16, 32, 64};
    c.box_radius = 8.0;
    c.params = {{"lambda", 1.0}, {"sigma", 0.25}, {"window", 3.0}, {"g", {0.3, 1.0}}};
    c.tolerances = {{"sup_error", 0.05}, {"identity", 1e-8}};
  } else if (experiment == "poincare") {
    c.field = {{"family", "nearest_neighbor"}, {"kappa", 1.0}};
    c.n = {4, 8, 16};
    c.box_radius = 14.0;
    c.params = {{"random_samples", 200}};
    c.tolerances = {{"ratio", 0.5}, {"tail_mass", 1e-6}};
  } else if (experiment == "killed-lower") {
    c.n = {8, 16, 32};
    c.times = {0.25, 0.5, 1.0};
    c.params = {{"theta", 0.5}, {"enlarge", 1.5}};
    c.tolerances = {{"ratio", 0.5}};
  } else if (experiment == "levy-symbol") {
    c.params = {{"u_max", 100.0}, {"points", 201}};
    c.tolerances = {{"violations", 0.0}};
  } else if (experiment == "simulate") {
    c.n = {16};
    c.times = {0.1};
    c.params = {{"paths", 100000}, {"meyer_lambda", 0.25}, {"export_paths", 3}};
    c.tolerances = {{"tv_kernel", 0.02}, {"tv_meyer", 0.03}};
  } else if (experiment == "heat-kernel") {
    c.n = {16};
    c.times = {0.125, 0.25, 0.375, 0.5, 0.75, 1.0};
    c.params = {{"partner", {3}}, {"davies_lambda", 0.5}};
    c.tolerances = {{"symmetry", 1e-10}, {"chapman_kolmogorov", 1e-8}, {"mass_defect", 1e-3}};
  }
  return c;
}

// ---------------------------------------------------------------------------

bool compare(double value, const std::string& op, double threshold) {
  if (std::isnan(value) || std::isnan(threshold)) return false;
  if (op == "<") return value < threshold;
  if (op == "<=") return value <= threshold;
  if (op == ">") return value > threshold;
  if (op == ">=") return value >= threshold;
  if (op == "==") return value == threshold;
  throw std::invalid_argument("unknown comparison '" + op + "'");
}

const Check& ConvergenceReport::check(const std::string& name, double value, const std::string& op,
                                      double threshold) {
  checks.push_back({name, value, op, threshold, compare(value, op, threshold)});
  return checks.back();
}

bool ConvergenceReport::passed() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return nonfinite_count() == 0;
}

const Check* ConvergenceReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

bool ConvergenceReport::consistent() const {
  for (const auto& c : checks)
    if (compare(c.value, c.op, c.threshold) != c.pass) return false;
  return true;
}

std::size_t ConvergenceReport::nonfinite_count() const {
  std::size_t count = 0;
  count_nonfinite(metrics, count);
  count_nonfinite(fitted, count);
  for (const auto& c : checks)
    if (std::isnan(c.value)) ++count;
  return count;
}

json ConvergenceReport::to_json() const {
  json cs = json::array();
  for (const auto& c : checks)
    cs.push_back({{"name", c.name},
                  {"value", c.value},
                  {"op", c.op},
                  {"threshold", c.threshold},
                  {"pass", c.pass}});
  return {{"experiment", experiment}, {"config", config}, {"metrics", metrics},
          {"fitted", fitted},         {"checks", cs},     {"passed", passed()}};
}

ConvergenceReport run_experiment(const ExperimentConfig& config, Artifacts& artifacts) {
  auto it = registry().find(config.experiment);
  if (it == registry().end()) throw ConfigError("unknown experiment '" + config.experiment + "'");
  ConvergenceReport report = it->second(config, artifacts);
  report.experiment = config.experiment;
  report.config = config.to_json();
  return report;
}

void write_outputs(const std::filesystem::path& dir, const ConvergenceReport& report,
                   const Artifacts& artifacts) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << content;
  };
  write("report.json", report.to_json().dump(2) + "\n");
  for (const auto& [name, content] : artifacts.files) write(name, content);
}

}  // namespace latdir

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fracpinn/optimize.hpp"

namespace fracpinn {

/// Max absolute pointwise difference. Shapes must match.
double error_inf(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& exact);
/// ||predicted - exact||_2 / ||exact||_2; throws when exact is identically zero.
double error_l2(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& exact);

/// log2(E_j / E_{j+1}); length errors.size() - 1.
std::vector<double> convergence_rates(const std::vector<double>& errors);

/// Exact field when available, otherwise the problem's reference field.
std::function<double(const Eigen::VectorXd&, double)> comparison_field(const ProblemSpec& problem);

struct SoeCertificate {
  double alpha{0};
  double eps{0};
  double dt_cutoff{0};
  double horizon{0};
  int nodes{0};
  double measured_max_error{0};
  int verified_samples{0};
};
SoeCertificate certificate(const SoeApprox<double>& soe);

struct Report {
  std::string problem;
  std::string method;
  std::map<std::string, std::string> config;
  std::uint64_t seed{0};
  std::vector<int> levels;
  std::vector<double> e_inf;
  std::vector<double> e_2;
  std::vector<double> rates_inf;
  std::vector<double> rates_2;
  std::map<std::string, double> estimates;
  std::vector<SoeCertificate> soe;
  std::vector<double> wall_ms;
  std::vector<std::string> events;
};

std::string report_to_json(const Report& report);
Report report_from_json(const std::string& text);
/// Long format: section,key,index,value with a header row, %.17g numbers, LF endings.
std::string report_to_csv(const Report& report);
Report report_from_csv(const std::string& text);

/// Everything one forward or inverse run needs besides the problem.
struct RunConfig {
  std::string grading{"2/alpha"};
  double eps_soe{1e-10};
  TrainConfig train;
  std::vector<int> hidden{20, 20};
  Activation activation{Activation::Tanh};
  int scale{1};
  double slope_init{1};
  std::optional<ConstraintMode> mode;    // default: the problem's mode
  double time_exponent{0};               // 0: alpha for lifted (weakly singular) problems, else 1
  int per_axis{10};                      // interior collocation lattice
  int random_points{0};
  int eval_per_axis{101};
  std::uint64_t seed{1234};
  std::map<std::string, double> initial;  // inverse starting guesses
  std::function<std::vector<int>(int)> hidden_for_levels;  // optional per-K architecture
};

struct RunOutcome {
  int levels{0};
  double e_inf{0};
  double e_2{0};
  SoeCertificate soe;
  double wall_ms{0};
  double final_loss{0};
  std::map<std::string, double> estimates;
  std::vector<std::string> events;
  std::vector<TraceRow> trace;
  Network net;
};

TimeMesh<double> make_mesh(const ProblemSpec& problem, int levels, const std::string& grading,
                           std::optional<double> grading_alpha = std::nullopt);

/// method: marching, stagewise, direct-scheme (no network, exact temporal factor through the direct
/// scheme), fast-scheme (same with the SOE recursion).
RunOutcome run_method(const ProblemSpec& problem, const std::string& method, int levels, const RunConfig& config);
RunOutcome run_inverse(const ProblemSpec& problem, int levels, const RunConfig& config);

/// Runs the method per K (strictly doubling) and fills errors and rates.
Report convergence_study(const ProblemSpec& problem, const std::string& method, const std::vector<int>& levels,
                         const RunConfig& config);

/// Scalar fractional ODE  D_tau y (t_{k-theta}) = f_k  with y_0 given; entry k of f is used for k >= 1.
Eigen::VectorXd solve_scalar_direct(const TimeMesh<double>& mesh, double y0, const Eigen::VectorXd& f);
Eigen::VectorXd solve_scalar_fast(const FastTable& table, double y0, const Eigen::VectorXd& f);

/// Flat key = value config with [section] headers; keys are returned without the section prefix.
/// Unknown keys are left for the caller to reject. Throws ValidationError on malformed lines.
std::map<std::string, std::string> parse_config(const std::string& text);
std::map<std::string, std::string> load_config(const std::string& path);

/// Seed precedence: explicit flag, then FRACPINN_SEED, then config, then fallback.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const std::map<std::string, std::string>& config,
                           std::uint64_t fallback);

/// Trace rows as CSV: stage,iteration,loss,wall_ms then one column per estimate name.
std::string trace_to_csv(const std::vector<TraceRow>& trace);

}  // namespace fracpinn

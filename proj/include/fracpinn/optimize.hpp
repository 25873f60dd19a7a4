#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fracpinn/constraints.hpp"

namespace fracpinn {

/// Bias-corrected Adam with one learning rate per parameter entry.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  Eigen::VectorXd rates;
  long step{0};
  double beta1{0.9};
  double beta2{0.999};
  double stabilizer{1e-8};

  AdamState() = default;
  explicit AdamState(Eigen::VectorXd per_entry_rates);
  void reset();
};

/// Throws TrainingError carrying the index of the first non-finite gradient entry.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& gradient);

struct TrainConfig {
  int max_iters{2000};  // m_stage (stage-wise) or m_step (marching)
  double tol{1e-10};
  double lr_network{1e-3};
  double lr_slope{1e-3};
  double lr_alpha{1e-3};
  std::map<std::string, double> lr_unknowns;  // by name; missing names use lr_default_unknown
  double lr_default_unknown{1e-3};
  bool slope_trainable{false};
  bool warm_start{true};
  std::uint64_t seed{1234};
  double alpha_fd_step{1e-4};
  double w_f{1};
  double w_T{1};
  int trace_every{10};  // trace row stride; the last iteration of every stage is always kept
  // Inverse runs: hold the unknowns at their current values until the stage that carries the
  // terminal data. Before it the residual alone is satisfiable for any coefficients.
  bool unknowns_final_stage_only{false};
  int final_stage_iters{0};  // inverse runs: budget of stage K; 0 uses max_iters
};

struct TraceRow {
  int stage{0};
  int iteration{0};
  double loss{0};
  double wall_ms{0};
  std::map<std::string, double> estimates;
};

struct StageSummary {
  int stage{0};
  int iterations{0};
  double final_loss{0};
  bool converged{false};  // exit by loss < tol
};

struct TrainResult {
  Network net;
  std::vector<StageSummary> stages;
  std::vector<TraceRow> trace;
  std::map<std::string, double> estimates;  // inverse runs
  std::vector<std::string> events;          // projections and similar notices
  double wall_ms{0};
};

/// Objective: returns the loss and fills the gradient (same length as params).
using Objective = std::function<double(const Eigen::VectorXd& params, Eigen::VectorXd& gradient)>;

/// Runs Adam from params until loss < tol (checked before each update) or max_iters updates.
StageSummary minimize(const Objective& objective, Eigen::VectorXd& params, const Eigen::VectorXd& rates, int stage,
                      const TrainConfig& config, std::vector<TraceRow>* trace,
                      const std::function<std::map<std::string, double>(const Eigen::VectorXd&)>& estimates = {},
                      const std::function<void(Eigen::VectorXd&)>& project = {});

/// Per-entry rates for the flattened network (slope last).
Eigen::VectorXd network_rates(const Network& net, const TrainConfig& config);

/// Stage-wise training over windows j = 2..K. Soft-mode problems use `data` for IC/BC terms.
TrainResult train_stagewise(const ProblemSpec& problem, const TrialFunction& trial, const Network& init,
                            const ResidualContext& ctx, const TrainConfig& config, const CollocationSet* data = nullptr);

/// Inverse training: network plus the problem's unknowns; alpha by central differences over a
/// context rebuild, the rest by reverse mode. `initial` holds starting guesses for the unknowns.
TrainResult train_inverse(const ProblemSpec& problem, const TrialFunction& trial, const Network& init,
                          const ResidualContext& ctx, const CollocationSet& data,
                          const std::map<std::string, double>& initial, const TrainConfig& config);

struct MarchResult {
  std::vector<Eigen::VectorXd> parameters;  // Theta^k, k = 0..K (entry 0 is the initialization)
  Eigen::MatrixXd snapshots;                // (K+1) x N_x frozen values at collocation points
  HistoryState history;                     // V(t_{K-1}) after the last update
  std::vector<std::uint64_t> checksums;     // checksum of levels 0..k taken when level k froze
  std::vector<StageSummary> levels;
  std::vector<TraceRow> trace;
  Network net;                              // architecture (parameters of the last level)
  double wall_ms{0};
};

/// Time marching: one offset level at a time with frozen snapshots and recursive history.
MarchResult train_marching(const ProblemSpec& problem, const TrialFunction& trial, const Network& init,
                           const ResidualContext& ctx, const TrainConfig& config);

/// Checksum over snapshot rows 0..k (bitwise).
std::uint64_t snapshot_checksum(const Eigen::MatrixXd& snapshots, int k);

/// Scalar series through the printed marching recursion: the history is advanced through t_k with
/// the current increment standing in for the next one, then damped by exp(-s theta tau_k).
/// The mesh is extended by t_{K+1} = t_K + tau_K so the last update has coefficients.
Eigen::VectorXd as_printed_caputo_series(const TimeMesh<double>& mesh, const SoeApprox<double>& soe,
                                         const Eigen::VectorXd& series);

}  // namespace fracpinn

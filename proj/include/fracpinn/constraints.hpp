#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>

#include "fracpinn/autodiff.hpp"
#include "fracpinn/network.hpp"
#include "fracpinn/problems.hpp"
#include "fracpinn/soe.hpp"
#include "fracpinn/time_mesh.hpp"

namespace fracpinn {

/// Box mask rho(x) = prod_i (x_i - lo_i)(hi_i - x_i) / ((hi_i - lo_i)/2)^2 with its derivative slots.
struct BoxMask {
  Box box;
  Jet<double> operator()(const Eigen::VectorXd& x) const;
};

BoxMask boundary_mask_box(const Box& box);

/// Hard mode: v~ = phi(x) + t^p rho(x) v_NN(x, t) with phi the initial lift (zero for homogeneous data)
/// and p = time_exponent (1 by default; alpha suits solutions that behave like t^alpha).
/// Soft mode: v~ = v_NN.
struct TrialFunction {
  ConstraintMode mode{ConstraintMode::Hard};
  BoxMask mask;
  std::function<Jet<double>(const Eigen::VectorXd&)> lift;  // empty: phi = 0
  int dim{1};
  double time_exponent{1};
};

TrialFunction make_trial(const ProblemSpec& problem, ConstraintMode mode, double time_exponent = 1);

/// Network input layout for a problem: coordinates then time, box [lower, T].
Network make_network(const ProblemSpec& problem, const std::vector<int>& hidden, std::uint64_t seed,
                     Activation activation, int scale);

/// Trial jet on the tape over points (dim x B) at times (1 x B).
TapeJet trial_jet(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                  const Eigen::MatrixXd& points, const Eigen::RowVectorXd& times);

/// Plain trial evaluation over a batch.
JetValues trial_values(const TrialFunction& trial, const Network& net, const Eigen::MatrixXd& points,
                       const Eigen::RowVectorXd& times);
/// Values only (no derivative slots); cheaper for error evaluation.
Eigen::RowVectorXd trial_field(const TrialFunction& trial, const Network& net, const Eigen::MatrixXd& points,
                               const Eigen::RowVectorXd& times);
Jet<double> trial_eval(const TrialFunction& trial, const Network& net, const Eigen::VectorXd& x, double t);

struct CollocationOptions {
  int per_axis{10};          // interior lattice points per axis
  int random_points{0};      // > 0: seeded uniform-random interior points instead of the lattice
  int initial_points{64};    // soft mode
  int boundary_points{64};   // soft mode
  int terminal_points{0};    // inverse mode; 0 uses the problem default
  std::uint64_t seed{1234};
};

struct CollocationSet {
  Eigen::MatrixXd points;  // dim x N_x residual points
  Eigen::MatrixXd initial_points;
  Eigen::RowVectorXd initial_targets;
  Eigen::MatrixXd boundary_points;
  Eigen::RowVectorXd boundary_times;
  Eigen::RowVectorXd boundary_targets;
  Eigen::MatrixXd terminal_points;
  Eigen::RowVectorXd terminal_targets;
};

Eigen::MatrixXd interior_lattice(const Box& box, int per_axis);
Eigen::MatrixXd full_lattice(const Box& box, int per_axis);
CollocationSet make_collocation(const ProblemSpec& problem, const CollocationOptions& options, ConstraintMode mode);

/// CSV: point id, coordinates, level index, offset time, target, set tag (f, ic, bc, T).
void write_dataset_csv(const std::string& path, const ProblemSpec& problem, const CollocationSet& set,
                       const TimeMesh<double>& mesh);

/// Stage j admits offsets t_{k-theta} with k <= j.
struct StageWindow {
  int stage{1};
  double cutoff{0};
};
StageWindow stage_window(const TimeMesh<double>& mesh, int j);

/// Everything the residual needs for one value of alpha: mesh, SOE, fast coefficients, network
/// inputs in level-major layout (column n N_x + i is (x_i, t_n)), and sources at offsets.
struct ResidualContext {
  TimeMesh<double> mesh;
  SoeApprox<double> soe;
  FastTable fast;
  Eigen::MatrixXd points;
  Eigen::MatrixXd inputs_space;    // dim x (K+1) N_x
  Eigen::RowVectorXd inputs_time;  // 1 x (K+1) N_x
  Eigen::MatrixXd source;          // K x N_x, row k-1 at t_{k-theta}
  int n_points() const { return static_cast<int>(points.cols()); }
};

ResidualContext make_residual_context(const ProblemSpec& problem, const TimeMesh<double>& mesh,
                                      const SoeApprox<double>& soe, const Eigen::MatrixXd& points);
/// Same context at a different alpha: mesh offsets, SOE weights, coefficients and sources refreshed.
ResidualContext rebuild_context(const ResidualContext& base, const ProblemSpec& problem, double alpha);

/// Fast Caputo operator on the tape: input 1 x (j+1) N_x values (level-major, levels 0..j), output
/// 1 x j N_x approximations at offsets 1..j. The adjoint runs the history recursion backwards.
ad::Var fast_caputo_op(ad::Var values, const FastTable& table, int j, int n_points);

/// Mean squared residual of a field jet given on levels 0..j (columns level-major).
ad::Var residual_loss_from_jet(const TapeJet& field, const ProblemSpec& problem, const ResidualContext& ctx, int j,
                               const OperatorCoefficients<ad::Var>& coeffs);

OperatorCoefficients<ad::Var> constant_coefficients(ad::Tape& tape, const OperatorParams& params);

ad::Var forward_loss(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                     const ProblemSpec& problem, const ResidualContext& ctx, const StageWindow& window,
                     const OperatorCoefficients<ad::Var>& coeffs);

/// MSE_f + MSE_ic + MSE_bc.
ad::Var soft_loss(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                  const ProblemSpec& problem, const ResidualContext& ctx, const StageWindow& window,
                  const CollocationSet& data, const OperatorCoefficients<ad::Var>& coeffs);

/// w_f MSE_f + w_T MSE_T, terminal term only on the final stage.
ad::Var inverse_loss(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                     const ProblemSpec& problem, const ResidualContext& ctx, const StageWindow& window,
                     const CollocationSet& data, const OperatorCoefficients<ad::Var>& coeffs, double w_f = 1,
                     double w_T = 1);

}  // namespace fracpinn

#include "fracpinn/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fracpinn/errors.hpp"

namespace fracpinn {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

AdamState::AdamState(Eigen::VectorXd per_entry_rates) : rates(std::move(per_entry_rates)) { reset(); }

void AdamState::reset() {
  m = Eigen::VectorXd::Zero(rates.size());
  v = Eigen::VectorXd::Zero(rates.size());
  step = 0;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
  const Eigen::Index n = params.size();
  if (gradient.size() != n || state.rates.size() != n || state.m.size() != n)
    throw ValidationError("gradient", "length mismatch with parameters or optimizer state");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(gradient(i))) throw TrainingError("non-finite gradient entry " + std::to_string(i), i);
  ++state.step;
  state.m = state.beta1 * state.m + (1 - state.beta1) * gradient;
  state.v = state.beta2 * state.v + (1 - state.beta2) * gradient.cwiseAbs2();
  const double c1 = 1 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(state.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (state.rates(i) == 0) continue;
    const double mh = state.m(i) / c1;
    const double vh = state.v(i) / c2;
    params(i) -= state.rates(i) * mh / (std::sqrt(vh) + state.stabilizer);
  }
}

StageSummary minimize(const Objective& objective, Eigen::VectorXd& params, const Eigen::VectorXd& rates, int stage,
                      const TrainConfig& config, std::vector<TraceRow>* trace,
                      const std::function<std::map<std::string, double>(const Eigen::VectorXd&)>& estimates,
                      const std::function<void(Eigen::VectorXd&)>& project) {
  if (config.max_iters < 1) throw ValidationError("max_iters", "must be at least 1");
  if (!(config.tol > 0)) throw ValidationError("tol", "must be positive");
  AdamState adam(rates);
  Eigen::VectorXd grad(params.size());
  const auto start = Clock::now();
  StageSummary s;
  s.stage = stage;
  for (int it = 0;; ++it) {
    grad.setZero();
    const double loss = objective(params, grad);
    if (!std::isfinite(loss)) throw TrainingError("non-finite loss at stage " + std::to_string(stage));
    const bool stop = loss < config.tol || it == config.max_iters;
    if (trace && (stop || config.trace_every <= 1 || it % config.trace_every == 0)) {
      TraceRow row{stage, it, loss, elapsed_ms(start), {}};
      if (estimates) row.estimates = estimates(params);
      trace->push_back(std::move(row));
    }
    if (stop) {
      s.iterations = it;
      s.final_loss = loss;
      s.converged = loss < config.tol;
      return s;
    }
    adam_step(adam, params, grad);
    if (project) project(params);
  }
}

Eigen::VectorXd network_rates(const Network& net, const TrainConfig& config) {
  Eigen::VectorXd r = Eigen::VectorXd::Constant(net.parameter_count(), config.lr_network);
  r(r.size() - 1) = config.slope_trainable ? config.lr_slope : 0.0;
  return r;
}

namespace {

/// Loss on a fresh tape at the given network parameters; fills the network part of grad.
template <typename Build>
double network_objective(const Network& arch, const Eigen::VectorXd& params, Eigen::VectorXd& grad,
                         bool slope_trainable, Build&& build) {
  Network net = arch;
  net.unflatten(params.head(arch.parameter_count()));
  ad::Tape tape;
  const NetworkVars vars = register_network(tape, net, true, slope_trainable);
  const ad::Var loss = build(tape, vars, net);
  tape.backward(loss);
  grad.head(arch.parameter_count()) = gather_gradient(tape, vars, net);
  return loss.value()(0, 0);
}

}  // namespace

TrainResult train_stagewise(const ProblemSpec& problem, const TrialFunction& trial, const Network& init,
                            const ResidualContext& ctx, const TrainConfig& config, const CollocationSet* data) {
  const int K = ctx.mesh.levels();
  if (K < 2) throw ValidationError("levels", "stage-wise training needs at least two levels");
  if (trial.mode == ConstraintMode::Soft && data == nullptr)
    throw ValidationError("datasets", "soft mode needs initial and boundary points");
  const auto start = Clock::now();
  TrainResult result;
  result.net = init;
  Eigen::VectorXd params = init.flatten();
  const Eigen::VectorXd rates = network_rates(init, config);
  for (int j = 2; j <= K; ++j) {
    const StageWindow window = stage_window(ctx.mesh, j);
    if (!config.warm_start) params = init.flatten();
    Objective obj = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
      return network_objective(init, p, g, config.slope_trainable,
                               [&](ad::Tape& tape, const NetworkVars& vars, const Network& net) {
                                 const auto coeffs = constant_coefficients(tape, problem.params);
                                 if (trial.mode == ConstraintMode::Soft)
                                   return soft_loss(tape, trial, vars, net, problem, ctx, window, *data, coeffs);
                                 return forward_loss(tape, trial, vars, net, problem, ctx, window, coeffs);
                               });
    };
    result.stages.push_back(minimize(obj, params, rates, j, config, &result.trace));
  }
  result.net.unflatten(params);
  result.wall_ms = elapsed_ms(start);
  return result;
}

TrainResult train_inverse(const ProblemSpec& problem, const TrialFunction& trial, const Network& init,
                          const ResidualContext& ctx, const CollocationSet& data,
                          const std::map<std::string, double>& initial, const TrainConfig& config) {
  const int K = ctx.mesh.levels();
  if (K < 2) throw ValidationError("levels", "stage-wise training needs at least two levels");
  if (data.terminal_points.cols() == 0) throw ValidationError("datasets", "inverse mode needs terminal observations");
  const auto& names = problem.unknowns;
  const int P = init.parameter_count();
  const int U = static_cast<int>(names.size());
  Eigen::VectorXd params(P + U);
  params.head(P) = init.flatten();
  Eigen::VectorXd rates(P + U);
  rates.head(P) = network_rates(init, config);
  int alpha_slot = -1;
  for (int u = 0; u < U; ++u) {
    const auto it = initial.find(names[u]);
    if (it == initial.end()) throw ValidationError("initial", "missing starting value for " + names[u]);
    params(P + u) = it->second;
    if (names[u] == "alpha") {
      alpha_slot = P + u;
      rates(P + u) = config.lr_alpha;
    } else {
      const auto r = config.lr_unknowns.find(names[u]);
      rates(P + u) = r == config.lr_unknowns.end() ? config.lr_default_unknown : r->second;
    }
  }
  constexpr double kAlphaLo = 0.01, kAlphaHi = 0.99;
  if (alpha_slot >= 0 && (params(alpha_slot) < kAlphaLo || params(alpha_slot) > kAlphaHi))
    throw ValidationError("alpha", "initial guess outside [0.01, 0.99]");

  auto estimates = [&](const Eigen::VectorXd& p) {
    std::map<std::string, double> e;
    for (int u = 0; u < U; ++u) e[names[u]] = p(P + u);
    return e;
  };

  // Coefficients on the tape: unknown non-alpha entries are leaves.
  struct CoeffLeaves {
    OperatorCoefficients<ad::Var> coeffs;
    std::vector<std::pair<int, ad::Var>> leaves;  // (parameter slot, leaf)
  };
  auto make_coeffs = [&](ad::Tape& tape, const Eigen::VectorXd& p) {
    OperatorParams op = problem.params;
    CoeffLeaves out;
    out.coeffs = constant_coefficients(tape, op);
    for (int u = 0; u < U; ++u) {
      if (P + u == alpha_slot) continue;
      ad::Var leaf = tape.scalar(p(P + u), true);
      if (names[u] == "lambda1") out.coeffs.lambda1 = leaf;
      else if (names[u] == "lambda2") out.coeffs.lambda2 = leaf;
      else if (names[u] == "epsilon") out.coeffs.epsilon = leaf;
      else if (names[u] == "mobility") out.coeffs.mobility = leaf;
      else throw ValidationError("unknowns", "unsupported unknown " + names[u]);
      out.leaves.emplace_back(P + u, leaf);
    }
    return out;
  };

  auto context_at = [&](double alpha) { return rebuild_context(ctx, problem, alpha); };

  const auto start = Clock::now();
  TrainResult result;
  result.net = init;
  for (int j = 2; j <= K; ++j) {
    const StageWindow window = stage_window(ctx.mesh, j);
    const bool frozen = config.unknowns_final_stage_only && j < K;
    Eigen::VectorXd stage_rates = rates;
    if (frozen) stage_rates.tail(U).setZero();
    TrainConfig stage_config = config;
    if (j == K && config.final_stage_iters > 0) stage_config.max_iters = config.final_stage_iters;
    auto loss_only = [&](const ResidualContext& c, const Eigen::VectorXd& p) {
      Network net = init;
      net.unflatten(p.head(P));
      ad::Tape tape;
      const NetworkVars vars = register_network(tape, net, false);
      const CoeffLeaves cl = make_coeffs(tape, p);
      return inverse_loss(tape, trial, vars, net, problem, c, window, data, cl.coeffs, config.w_f, config.w_T)
          .value()(0, 0);
    };
    Objective obj = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
      const ResidualContext c = alpha_slot >= 0 && !frozen ? context_at(p(alpha_slot)) : ctx;
      Network net = init;
      net.unflatten(p.head(P));
      ad::Tape tape;
      const NetworkVars vars = register_network(tape, net, true, config.slope_trainable);
      const CoeffLeaves cl = make_coeffs(tape, p);
      const ad::Var loss =
          inverse_loss(tape, trial, vars, net, problem, c, window, data, cl.coeffs, config.w_f, config.w_T);
      tape.backward(loss);
      g.head(P) = gather_gradient(tape, vars, net);
      for (const auto& [slot, leaf] : cl.leaves) g(slot) = tape.grad(leaf)(0, 0);
      if (alpha_slot >= 0 && frozen) {
        g(alpha_slot) = 0;
      } else if (alpha_slot >= 0) {
        const double a = p(alpha_slot), h = config.alpha_fd_step;
        const double lo = std::max(kAlphaLo, a - h), hi = std::min(kAlphaHi, a + h);
        g(alpha_slot) = (loss_only(context_at(hi), p) - loss_only(context_at(lo), p)) / (hi - lo);
      }
      return loss.value()(0, 0);
    };
    auto project = [&](Eigen::VectorXd& p) {
      if (alpha_slot < 0) return;
      const double a = p(alpha_slot);
      if (a < kAlphaLo || a > kAlphaHi) {
        const double clamped = std::clamp(a, kAlphaLo, kAlphaHi);
        std::ostringstream msg;
        msg << "stage " << j << ": alpha " << a << " projected to " << clamped;
        result.events.push_back(msg.str());
        p(alpha_slot) = clamped;
      }
    };
    result.stages.push_back(minimize(obj, params, stage_rates, j, stage_config, &result.trace, estimates, project));
  }
  result.net.unflatten(params.head(P));
  result.estimates = estimates(params);
  result.wall_ms = elapsed_ms(start);
  return result;
}

std::uint64_t snapshot_checksum(const Eigen::MatrixXd& snapshots, int k) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (int r = 0; r <= k && r < snapshots.rows(); ++r)
    for (Eigen::Index c = 0; c < snapshots.cols(); ++c) {
      std::uint64_t bits;
      const double v = snapshots(r, c);
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  return h;
}

MarchResult train_marching(const ProblemSpec& problem, const TrialFunction& trial, const Network& init,
                           const ResidualContext& ctx, const TrainConfig& config) {
  const int K = ctx.mesh.levels();
  const int N = ctx.n_points();
  const int d = problem.dim;
  const double theta = ctx.mesh.theta();
  const FastTable& table = ctx.fast;
  const auto start = Clock::now();

  MarchResult result;
  result.net = init;
  result.snapshots = Eigen::MatrixXd::Zero(K + 1, N);
  result.history = HistoryState(table.size(), N);
  Eigen::VectorXd params = init.flatten();
  result.parameters.push_back(params);
  const Eigen::VectorXd rates = network_rates(init, config);

  // Level 0 frozen jet: the ansatz at t = 0.
  JetValues prev = trial_values(trial, init, ctx.points, Eigen::RowVectorXd::Zero(N));
  result.snapshots.row(0) = prev.value;
  result.checksums.push_back(snapshot_checksum(result.snapshots, 0));

  for (int k = 1; k <= K; ++k) {
    if (!config.warm_start) params = result.parameters.front();
    const Eigen::RowVectorXd times = Eigen::RowVectorXd::Constant(N, ctx.mesh.node(k));
    // History part of the fast operator that does not depend on the candidate.
    Eigen::RowVectorXd hc = Eigen::RowVectorXd::Zero(N);
    double beta = 0;
    if (k >= 2) {
      const int n = k - 1;
      const Eigen::RowVectorXd grad_prev = result.snapshots.row(n) - result.snapshots.row(n - 1);
      hc = table.weights.transpose() * (table.decay.col(n).asDiagonal() * result.history.values +
                                        (table.c.col(n) - table.d.col(n)) * grad_prev);
      beta = table.ratio(n) * table.weights.dot(table.d.col(n));
    }
    const double lead = table.a0(k) + beta;
    const Eigen::RowVectorXd g = ctx.source.row(k - 1);

    Objective obj = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad) {
      return network_objective(init, p, grad, config.slope_trainable,
                               [&](ad::Tape& tape, const NetworkVars& vars, const Network& net) {
                                 const TapeJet cur = trial_jet(tape, trial, vars, net, ctx.points, times);
                                 const ad::Var prev_v = tape.constant(prev.value.array());
                                 const ad::Var incr = ad::sub(cur.value, prev_v);
                                 Jet<ad::Var> w;
                                 w.value = ad::add(ad::scale(prev_v, theta), ad::scale(cur.value, 1 - theta));
                                 for (int i = 0; i < d; ++i) {
                                   w.d1.push_back(ad::add(tape.constant(theta * prev.d1[i].array()),
                                                          ad::scale(cur.d1[i], 1 - theta)));
                                   w.d2.push_back(ad::add(tape.constant(theta * prev.d2[i].array()),
                                                          ad::scale(cur.d2[i], 1 - theta)));
                                 }
                                 const auto coeffs = constant_coefficients(tape, problem.params);
                                 const ad::Var op = apply_operator(problem.op, coeffs, problem.params, w);
                                 const ad::Var caputo = ad::add(ad::scale(incr, lead), tape.constant(hc.array()));
                                 const ad::Var r = ad::sub(ad::add(caputo, op), tape.constant(g.array()));
                                 return ad::mean(ad::square(r));
                               });
    };
    result.levels.push_back(minimize(obj, params, rates, k, config, &result.trace));

    // Freeze level k.
    Network frozen = init;
    frozen.unflatten(params);
    JetValues cur = trial_values(trial, frozen, ctx.points, times);
    result.snapshots.row(k) = cur.value;
    if (k >= 2) {
      const Eigen::RowVectorXd g1 = result.snapshots.row(k - 1) - result.snapshots.row(k - 2);
      const Eigen::RowVectorXd g2 = result.snapshots.row(k) - result.snapshots.row(k - 1);
      history_update(result.history, table, k - 1, g1, g2);
    }
    result.parameters.push_back(params);
    result.checksums.push_back(snapshot_checksum(result.snapshots, k));
    prev = std::move(cur);
  }
  result.net.unflatten(params);
  result.wall_ms = elapsed_ms(start);
  return result;
}

Eigen::VectorXd as_printed_caputo_series(const TimeMesh<double>& mesh, const SoeApprox<double>& soe,
                                         const Eigen::VectorXd& series) {
  const int K = mesh.levels();
  if (series.size() != K + 1) throw ValidationError("series", "need K+1 values");
  Eigen::VectorXd nodes(K + 2);
  for (int k = 0; k <= K; ++k) nodes(k) = mesh.node(k);
  nodes(K + 1) = mesh.node(K) + mesh.step(K);
  const TimeMesh<double> ext = TimeMesh<double>::from_nodes(nodes, mesh.alpha());
  const FastTable table = build_fast_table(ext, soe);
  const double theta = mesh.theta();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(K + 1);
  HistoryState state(table.size(), 1);
  for (int k = 1; k <= K; ++k) {
    Eigen::Matrix<double, 1, 1> grad;
    grad(0) = series(k) - series(k - 1);
    history_update(state, table, k, grad, grad);
    const Eigen::VectorXd damp = (-soe.nodes.array() * theta * mesh.step(k)).exp();
    out(k) = table.a0(k) * grad(0) + table.weights.dot(damp.cwiseProduct(state.values.col(0)));
  }
  return out;
}

}  // namespace fracpinn

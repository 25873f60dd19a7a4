#include "fracpinn/constraints.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "fracpinn/errors.hpp"

namespace fracpinn {

Jet<double> BoxMask::operator()(const Eigen::VectorXd& x) const {
  const int d = box.dim();
  std::vector<double> f(static_cast<std::size_t>(d)), f1(f.size()), f2(f.size());
  for (int i = 0; i < d; ++i) {
    const double lo = box.lower(i), hi = box.upper(i);
    const double h2 = (hi - lo) * (hi - lo) / 4;
    f[i] = (x(i) - lo) * (hi - x(i)) / h2;
    f1[i] = (hi + lo - 2 * x(i)) / h2;
    f2[i] = -2 / h2;
  }
  Jet<double> j;
  j.value = 1;
  for (double v : f) j.value *= v;
  for (int i = 0; i < d; ++i) {
    double others = 1;
    for (int m = 0; m < d; ++m)
      if (m != i) others *= f[m];
    j.d1.push_back(f1[i] * others);
    j.d2.push_back(f2[i] * others);
  }
  return j;
}

namespace {
double time_factor(const TrialFunction& trial, double t) {
  return trial.time_exponent == 1 ? t : std::pow(t, trial.time_exponent);
}
}  // namespace

BoxMask boundary_mask_box(const Box& box) {
  if (box.lower.size() != box.upper.size() || box.dim() < 1) throw ValidationError("domain", "malformed box");
  for (int i = 0; i < box.dim(); ++i)
    if (!(box.upper(i) > box.lower(i))) throw ValidationError("domain", "degenerate box along axis " + std::to_string(i));
  return BoxMask{box};
}

TrialFunction make_trial(const ProblemSpec& problem, ConstraintMode mode, double time_exponent) {
  if (!(time_exponent > 0) || !std::isfinite(time_exponent))
    throw ValidationError("time_exponent", "must be positive");
  TrialFunction t;
  t.time_exponent = time_exponent;
  t.mode = mode;
  t.dim = problem.dim;
  t.mask = boundary_mask_box(problem.domain);
  if (mode == ConstraintMode::Hard && problem.initial_lift) {
    if (!problem.exact) throw ValidationError("problem", "initial lift needs the exact solution at t = 0");
    const SeparableSolution sol = *problem.exact;
    t.lift = [sol](const Eigen::VectorXd& x) { return sol.jet(x, 0.0); };
  }
  return t;
}

Network make_network(const ProblemSpec& problem, const std::vector<int>& hidden, std::uint64_t seed,
                     Activation activation, int scale) {
  std::vector<int> widths{problem.dim + 1};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  Network net = xavier_init(widths, seed, activation, scale);
  Eigen::VectorXd lo(problem.dim + 1), hi(problem.dim + 1);
  lo.head(problem.dim) = problem.domain.lower;
  hi.head(problem.dim) = problem.domain.upper;
  lo(problem.dim) = 0;
  hi(problem.dim) = problem.horizon;
  net.set_input_box(lo, hi);
  return net;
}

TapeJet trial_jet(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                  const Eigen::MatrixXd& points, const Eigen::RowVectorXd& times) {
  if (points.rows() != trial.dim || points.cols() != times.cols())
    throw ValidationError("points", "shape mismatch between points and times");
  Eigen::MatrixXd inputs(trial.dim + 1, points.cols());
  inputs.topRows(trial.dim) = points;
  inputs.row(trial.dim) = times;
  TapeJet nn = network_jet(tape, vars, net, inputs, trial.dim);
  if (trial.mode == ConstraintMode::Soft) return nn;

  const Eigen::Index B = points.cols();
  const int d = trial.dim;
  ad::Block tr(1, B);
  std::vector<ad::Block> tr1(static_cast<std::size_t>(d), ad::Block(1, B)), tr2(tr1);
  ad::Block phi = ad::Block::Zero(1, B);
  std::vector<ad::Block> phi1(static_cast<std::size_t>(d), ad::Block::Zero(1, B)), phi2(phi1);
  for (Eigen::Index c = 0; c < B; ++c) {
    const Eigen::VectorXd x = points.col(c);
    const Jet<double> m = trial.mask(x);
    const double s = time_factor(trial, times(c));
    tr(0, c) = s * m.value;
    for (int i = 0; i < d; ++i) {
      tr1[i](0, c) = s * m.d1[i];
      tr2[i](0, c) = s * m.d2[i];
    }
    if (trial.lift) {
      const Jet<double> l = trial.lift(x);
      phi(0, c) = l.value;
      for (int i = 0; i < d; ++i) {
        phi1[i](0, c) = l.d1[i];
        phi2[i](0, c) = l.d2[i];
      }
    }
  }
  const ad::Var T = tape.constant(std::move(tr));
  TapeJet out;
  out.value = ad::add(tape.constant(std::move(phi)), ad::mul(T, nn.value));
  for (int i = 0; i < d; ++i) {
    const ad::Var T1 = tape.constant(tr1[i]);
    const ad::Var T2 = tape.constant(tr2[i]);
    ad::Var d1 = ad::add(ad::mul(T1, nn.value), ad::mul(T, nn.d1[i]));
    ad::Var d2 = ad::add(ad::add(ad::mul(T2, nn.value), ad::scale(ad::mul(T1, nn.d1[i]), 2.0)), ad::mul(T, nn.d2[i]));
    out.d1.push_back(ad::add(tape.constant(phi1[i]), d1));
    out.d2.push_back(ad::add(tape.constant(phi2[i]), d2));
  }
  return out;
}

JetValues trial_values(const TrialFunction& trial, const Network& net, const Eigen::MatrixXd& points,
                       const Eigen::RowVectorXd& times) {
  ad::Tape tape;
  const NetworkVars vars = register_network(tape, net, false);
  const TapeJet jet = trial_jet(tape, trial, vars, net, points, times);
  JetValues out;
  out.value = jet.value.value().matrix();
  for (const auto& v : jet.d1) out.d1.push_back(v.value().matrix());
  for (const auto& v : jet.d2) out.d2.push_back(v.value().matrix());
  return out;
}

Eigen::RowVectorXd trial_field(const TrialFunction& trial, const Network& net, const Eigen::MatrixXd& points,
                               const Eigen::RowVectorXd& times) {
  if (points.rows() != trial.dim || points.cols() != times.cols())
    throw ValidationError("points", "shape mismatch between points and times");
  Eigen::MatrixXd inputs(trial.dim + 1, points.cols());
  inputs.topRows(trial.dim) = points;
  inputs.row(trial.dim) = times;
  Eigen::RowVectorXd v = forward(net, inputs);
  if (trial.mode == ConstraintMode::Soft) return v;
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    const Eigen::VectorXd x = points.col(c);
    v(c) *= time_factor(trial, times(c)) * trial.mask(x).value;
    if (trial.lift) v(c) += trial.lift(x).value;
  }
  return v;
}

Jet<double> trial_eval(const TrialFunction& trial, const Network& net, const Eigen::VectorXd& x, double t) {
  Eigen::RowVectorXd times(1);
  times(0) = t;
  const JetValues jv = trial_values(trial, net, x, times);
  Jet<double> j;
  j.value = jv.value(0);
  for (const auto& v : jv.d1) j.d1.push_back(v(0));
  for (const auto& v : jv.d2) j.d2.push_back(v(0));
  return j;
}

Eigen::MatrixXd interior_lattice(const Box& box, int per_axis) {
  if (per_axis < 1) throw ValidationError("per_axis", "must be positive");
  const int d = box.dim();
  long total = 1;
  for (int i = 0; i < d; ++i) total *= per_axis;
  Eigen::MatrixXd pts(d, total);
  for (long c = 0; c < total; ++c) {
    long rem = c;
    for (int i = 0; i < d; ++i) {
      const long idx = rem % per_axis;
      rem /= per_axis;
      pts(i, c) = box.lower(i) + (box.upper(i) - box.lower(i)) * double(idx + 1) / double(per_axis + 1);
    }
  }
  return pts;
}

Eigen::MatrixXd full_lattice(const Box& box, int per_axis) {
  if (per_axis < 2) throw ValidationError("per_axis", "need at least two points per axis");
  const int d = box.dim();
  long total = 1;
  for (int i = 0; i < d; ++i) total *= per_axis;
  Eigen::MatrixXd pts(d, total);
  for (long c = 0; c < total; ++c) {
    long rem = c;
    for (int i = 0; i < d; ++i) {
      const long idx = rem % per_axis;
      rem /= per_axis;
      pts(i, c) = box.lower(i) + (box.upper(i) - box.lower(i)) * double(idx) / double(per_axis - 1);
    }
  }
  return pts;
}

CollocationSet make_collocation(const ProblemSpec& problem, const CollocationOptions& options, ConstraintMode mode) {
  CollocationSet set;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int d = problem.dim;
  auto interior = [&](int count) {
    Eigen::MatrixXd p(d, count);
    for (int c = 0; c < count; ++c)
      for (int i = 0; i < d; ++i) {
        double u = unit(rng);
        while (u == 0.0) u = unit(rng);
        p(i, c) = problem.domain.lower(i) + (problem.domain.upper(i) - problem.domain.lower(i)) * u;
      }
    return p;
  };
  set.points = options.random_points > 0 ? interior(options.random_points) : interior_lattice(problem.domain, options.per_axis);

  if (mode == ConstraintMode::Soft) {
    set.initial_points = interior(options.initial_points);
    set.initial_targets.resize(options.initial_points);
    for (int c = 0; c < options.initial_points; ++c) set.initial_targets(c) = problem.initial(set.initial_points.col(c));
    set.boundary_points = interior(options.boundary_points);
    set.boundary_times.resize(options.boundary_points);
    set.boundary_targets.resize(options.boundary_points);
    std::uniform_int_distribution<int> face(0, 2 * d - 1);
    for (int c = 0; c < options.boundary_points; ++c) {
      const int f = face(rng);
      const int axis = f / 2;
      set.boundary_points(axis, c) = (f % 2 == 0) ? problem.domain.lower(axis) : problem.domain.upper(axis);
      set.boundary_times(c) = problem.horizon * unit(rng);
      set.boundary_targets(c) = problem.boundary(set.boundary_points.col(c), set.boundary_times(c));
    }
  }

  const int nT = options.terminal_points > 0 ? options.terminal_points : problem.terminal_points;
  if (nT > 0) {
    if (!problem.exact) throw ValidationError("problem", "terminal observations need an exact solution");
    set.terminal_points = interior(nT);
    set.terminal_targets.resize(nT);
    for (int c = 0; c < nT; ++c) set.terminal_targets(c) = problem.exact->value(set.terminal_points.col(c), problem.horizon);
  }
  return set;
}

void write_dataset_csv(const std::string& path, const ProblemSpec& problem, const CollocationSet& set,
                       const TimeMesh<double>& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dataset file: " + path);
  const int d = problem.dim;
  out << "id";
  for (int i = 0; i < d; ++i) out << ",x" << i + 1;
  out << ",level,time,target,tag\n";
  long id = 0;
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto row = [&](const Eigen::VectorXd& x, int level, double t, double target, const char* tag) {
    out << id++;
    for (int i = 0; i < d; ++i) out << ',' << num(x(i));
    out << ',' << level << ',' << num(t) << ',' << num(target) << ',' << tag << '\n';
  };
  for (int k = 1; k <= mesh.levels(); ++k)
    for (Eigen::Index c = 0; c < set.points.cols(); ++c)
      row(set.points.col(c), k, mesh.offset(k), problem.source(set.points.col(c), mesh.offset(k)), "f");
  for (Eigen::Index c = 0; c < set.initial_points.cols(); ++c)
    row(set.initial_points.col(c), 0, 0.0, set.initial_targets(c), "ic");
  for (Eigen::Index c = 0; c < set.boundary_points.cols(); ++c)
    row(set.boundary_points.col(c), -1, set.boundary_times(c), set.boundary_targets(c), "bc");
  for (Eigen::Index c = 0; c < set.terminal_points.cols(); ++c)
    row(set.terminal_points.col(c), mesh.levels(), mesh.horizon(), set.terminal_targets(c), "T");
}

StageWindow stage_window(const TimeMesh<double>& mesh, int j) {
  if (j < 1 || j > mesh.levels())
    throw ValidationError("stage", "empty or out-of-range window for stage " + std::to_string(j));
  return StageWindow{j, mesh.offset(j)};
}

namespace {

Eigen::MatrixXd offset_sources(const ProblemSpec& problem, const TimeMesh<double>& mesh, const Eigen::MatrixXd& points) {
  const int K = mesh.levels();
  Eigen::MatrixXd g(K, points.cols());
  for (int k = 1; k <= K; ++k)
    for (Eigen::Index c = 0; c < points.cols(); ++c) g(k - 1, c) = problem.source(points.col(c), mesh.offset(k));
  return g;
}

}  // namespace

ResidualContext make_residual_context(const ProblemSpec& problem, const TimeMesh<double>& mesh,
                                      const SoeApprox<double>& soe, const Eigen::MatrixXd& points) {
  if (points.rows() != problem.dim) throw ValidationError("points", "dimension mismatch");
  ResidualContext ctx;
  ctx.mesh = mesh;
  ctx.soe = soe;
  ctx.fast = build_fast_table(mesh, soe);
  ctx.points = points;
  const int K = mesh.levels();
  const Eigen::Index N = points.cols();
  ctx.inputs_space.resize(problem.dim, (K + 1) * N);
  ctx.inputs_time.resize((K + 1) * N);
  for (int n = 0; n <= K; ++n) {
    ctx.inputs_space.middleCols(n * N, N) = points;
    ctx.inputs_time.segment(n * N, N).setConstant(mesh.node(n));
  }
  ctx.source = offset_sources(problem, mesh, points);
  return ctx;
}

ResidualContext rebuild_context(const ResidualContext& base, const ProblemSpec& problem, double alpha) {
  ResidualContext ctx = base;
  ctx.mesh = base.mesh.with_alpha(alpha);
  ctx.soe = rebuild_soe(base.soe, alpha);
  ctx.fast = build_fast_table(ctx.mesh, ctx.soe);
  ctx.source = offset_sources(problem, ctx.mesh, ctx.points);
  return ctx;
}

ad::Var fast_caputo_op(ad::Var values, const FastTable& table, int j, int n_points) {
  const Eigen::Index N = n_points;
  if (values.rows() != 1 || values.cols() != (j + 1) * N) throw ValidationError("values", "expected 1 x (j+1) N_x block");
  if (j < 1 || j > table.levels) throw IndexError("fast_caputo_op: level out of range");
  const ad::Block& U = values.value();
  const int Nq = table.size();
  Eigen::MatrixXd G(j + 1, N);  // row k holds grad^k (row 0 unused)
  G.row(0).setZero();
  for (int k = 1; k <= j; ++k) G.row(k) = (U.middleCols(k * N, N) - U.middleCols((k - 1) * N, N)).matrix();
  ad::Block out(1, j * N);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(Nq, N);
  for (int k = 1; k <= j; ++k) {
    if (k >= 2) {
      const int n = k - 1;
      H = table.decay.col(n).asDiagonal() * H + (table.c.col(n) - table.d.col(n)) * G.row(n) +
          (table.ratio(n) * table.d.col(n)) * G.row(k);
    }
    out.middleCols((k - 1) * N, N) = (table.a0(k) * G.row(k) + table.weights.transpose() * H).array();
  }
  const FastTable* tp = &table;
  return ad::linear(values, std::move(out), [tp, j, N](const ad::Block& gout) {
    const FastTable& t = *tp;
    Eigen::MatrixXd gG = Eigen::MatrixXd::Zero(j + 1, N);
    Eigen::MatrixXd gH = Eigen::MatrixXd::Zero(t.size(), N);  // adjoint of H_{k} carried downwards
    for (int k = j; k >= 1; --k) {
      const Eigen::RowVectorXd gF = gout.middleCols((k - 1) * N, N).matrix();
      gG.row(k) += t.a0(k) * gF;
      if (k >= 2) {
        const int n = k - 1;
        // adjoint of H_{k-1}: from F_k and, through the decay of step k, from H_k
        if (k <= j - 1) {
          gH = t.decay.col(k).asDiagonal() * gH;
        } else {
          gH.setZero();
        }
        gH += t.weights * gF;
        gG.row(n) += (t.c.col(n) - t.d.col(n)).transpose() * gH;
        gG.row(k) += (t.ratio(n) * t.d.col(n)).transpose() * gH;
      }
    }
    ad::Block gU = ad::Block::Zero(1, (j + 1) * N);
    for (int k = 1; k <= j; ++k) {
      gU.middleCols(k * N, N) += gG.row(k).array();
      gU.middleCols((k - 1) * N, N) -= gG.row(k).array();
    }
    return gU;
  });
}

OperatorCoefficients<ad::Var> constant_coefficients(ad::Tape& tape, const OperatorParams& params) {
  return {tape.scalar(params.lambda1, false), tape.scalar(params.lambda2, false), tape.scalar(params.epsilon, false),
          tape.scalar(params.mobility, false)};
}

ad::Var residual_loss_from_jet(const TapeJet& field, const ProblemSpec& problem, const ResidualContext& ctx, int j,
                               const OperatorCoefficients<ad::Var>& coeffs) {
  const int N = ctx.n_points();
  if (j < 1 || j > ctx.mesh.levels()) throw ValidationError("stage", "window out of range");
  if (field.value.cols() != (j + 1) * N) throw ValidationError("field", "expected levels 0..j at every point");
  ad::Tape& tape = *field.value.tape;
  const double theta = ctx.mesh.theta();
  const ad::Var caputo = fast_caputo_op(field.value, ctx.fast, j, N);
  auto weighted = [&](const ad::Var& slot) {
    return ad::add(ad::scale(ad::slice_cols(slot, 0, j * N), theta), ad::scale(ad::slice_cols(slot, N, j * N), 1 - theta));
  };
  Jet<ad::Var> w;
  w.value = weighted(field.value);
  for (const auto& s : field.d1) w.d1.push_back(weighted(s));
  for (const auto& s : field.d2) w.d2.push_back(weighted(s));
  const ad::Var op = apply_operator(problem.op, coeffs, problem.params, w);
  ad::Block g(1, j * N);
  for (int k = 1; k <= j; ++k) g.middleCols((k - 1) * N, N) = ctx.source.row(k - 1).array();
  const ad::Var residual = ad::sub(ad::add(caputo, op), tape.constant(std::move(g)));
  return ad::mean(ad::square(residual));
}

ad::Var forward_loss(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                     const ProblemSpec& problem, const ResidualContext& ctx, const StageWindow& window,
                     const OperatorCoefficients<ad::Var>& coeffs) {
  const int j = window.stage;
  if (j < 1 || j > ctx.mesh.levels()) throw ValidationError("stage", "empty or out-of-range window");
  const Eigen::Index cols = static_cast<Eigen::Index>(j + 1) * ctx.n_points();
  const TapeJet field =
      trial_jet(tape, trial, vars, net, ctx.inputs_space.leftCols(cols), ctx.inputs_time.head(cols));
  return residual_loss_from_jet(field, problem, ctx, j, coeffs);
}

namespace {

ad::Var data_misfit(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                    const Eigen::MatrixXd& points, const Eigen::RowVectorXd& times, const Eigen::RowVectorXd& targets) {
  const TapeJet jet = trial_jet(tape, trial, vars, net, points, times);
  return ad::mean(ad::square(ad::sub(jet.value, tape.constant(targets.array()))));
}

}  // namespace

ad::Var soft_loss(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                  const ProblemSpec& problem, const ResidualContext& ctx, const StageWindow& window,
                  const CollocationSet& data, const OperatorCoefficients<ad::Var>& coeffs) {
  if (data.initial_points.cols() == 0 || data.boundary_points.cols() == 0)
    throw ValidationError("datasets", "soft mode needs initial and boundary points");
  const ad::Var f = forward_loss(tape, trial, vars, net, problem, ctx, window, coeffs);
  const ad::Var ic = data_misfit(tape, trial, vars, net, data.initial_points,
                                 Eigen::RowVectorXd::Zero(data.initial_points.cols()), data.initial_targets);
  const ad::Var bc = data_misfit(tape, trial, vars, net, data.boundary_points, data.boundary_times, data.boundary_targets);
  return ad::add(ad::add(f, ic), bc);
}

ad::Var inverse_loss(ad::Tape& tape, const TrialFunction& trial, const NetworkVars& vars, const Network& net,
                     const ProblemSpec& problem, const ResidualContext& ctx, const StageWindow& window,
                     const CollocationSet& data, const OperatorCoefficients<ad::Var>& coeffs, double w_f, double w_T) {
  if (data.terminal_points.cols() == 0) throw ValidationError("datasets", "inverse mode needs terminal observations");
  ad::Var loss = ad::scale(forward_loss(tape, trial, vars, net, problem, ctx, window, coeffs), w_f);
  if (window.stage == ctx.mesh.levels() && w_T != 0) {
    const Eigen::RowVectorXd times = Eigen::RowVectorXd::Constant(data.terminal_points.cols(), ctx.mesh.horizon());
    loss = ad::add(loss, ad::scale(data_misfit(tape, trial, vars, net, data.terminal_points, times, data.terminal_targets), w_T));
  }
  return loss;
}

}  // namespace fracpinn

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fracpinn/caputo_direct.hpp"
#include "fracpinn/errors.hpp"
#include "fracpinn/quadrature.hpp"
#include "fracpinn/time_mesh.hpp"

namespace fracpinn {

struct SoeOptions {
  int verify_samples{10000};  // log-spaced verification points on [dt_cutoff, T]
  int order_samples{400};     // sample times used when choosing per-panel orders
  int max_order{64};
  double roundoff_factor{64};  // verification accepts eps + roundoff_factor * machine_eps * |kernel|
};

template <typename Scalar = double>
struct SoePanel {
  Scalar lo{0};
  Scalar hi{0};
  int order{0};
  bool jacobi{false};  // first panel [0, 1/T] carries the s^{alpha-1} endpoint weight
};

/// omega_{1-alpha}(t) ~= sum_l weights(l) exp(-nodes(l) t) on [dt_cutoff, horizon].
template <typename Scalar = double>
struct SoeApprox {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Scalar alpha{0};
  Scalar eps{0};
  Scalar dt_cutoff{0};
  Scalar horizon{0};
  Vector nodes;
  Vector weights;
  std::vector<SoePanel<Scalar>> panels;
  double measured_max_error{0};
  int verified_samples{0};

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Kernel of the Caputo integrand, omega_{1-alpha}(t).
template <typename Scalar>
Scalar caputo_kernel(Scalar alpha, Scalar t) {
  return omega(1 - alpha, t);
}

template <typename Scalar>
Scalar soe_kernel(const SoeApprox<Scalar>& soe, Scalar t) {
  return (soe.weights.array() * (-soe.nodes.array() * t).exp()).sum();
}

namespace detail {

template <typename Scalar>
void panel_rule(const SoePanel<Scalar>& panel, Scalar alpha, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& s,
                Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& w) {
  const Scalar scale = 1 / (std::tgamma(1 - alpha) * std::tgamma(alpha));
  const Scalar half = (panel.hi - panel.lo) / 2;
  if (panel.jacobi) {
    // s = lo + half (1 + x) with lo = 0, weight (1+x)^{alpha-1}
    const QuadratureRule<Scalar> q = gauss_jacobi<Scalar>(panel.order, Scalar(0), alpha - 1);
    s = (panel.lo + half * (q.nodes.array() + 1)).matrix();
    w = (q.weights.array() * std::pow(half, alpha) * scale).matrix();
  } else {
    const QuadratureRule<Scalar> q = gauss_legendre<Scalar>(panel.order);
    s = (panel.lo + half * (q.nodes.array() + 1)).matrix();
    w = (q.weights.array() * half * s.array().pow(alpha - 1) * scale).matrix();
  }
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> log_samples(Scalar lo, Scalar hi, int count) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> t(count);
  const Scalar llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; ++i) t(i) = std::exp(llo + (lhi - llo) * Scalar(i) / Scalar(std::max(count - 1, 1)));
  t(0) = lo;
  t(count - 1) = hi;
  return t;
}

/// Partial sums sum_l w_l exp(-s_l t_i) for every sample time.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> partial_sums(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& s,
                                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& w,
                                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& t) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) out(i) = (w.array() * (-s.array() * t(i)).exp()).sum();
  return out;
}

template <typename Scalar>
void assemble_panels(SoeApprox<Scalar>& soe) {
  std::vector<Scalar> s_all, w_all;
  for (const auto& p : soe.panels) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s, w;
    panel_rule(p, soe.alpha, s, w);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      s_all.push_back(s(i));
      w_all.push_back(w(i));
    }
  }
  soe.nodes = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(s_all.data(), static_cast<Eigen::Index>(s_all.size()));
  soe.weights = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(w_all.data(), static_cast<Eigen::Index>(w_all.size()));
}

/// Dense verification; returns false if any sample exceeds eps plus the roundoff floor.
template <typename Scalar>
bool verify_soe(SoeApprox<Scalar>& soe, int samples, double roundoff_factor) {
  const auto t = log_samples(soe.dt_cutoff, soe.horizon, samples);
  double worst = 0;
  bool ok = true;
  const double floor_scale = roundoff_factor * std::numeric_limits<double>::epsilon();
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const Scalar exact = caputo_kernel(soe.alpha, t(i));
    const Scalar approx = soe_kernel(soe, t(i));
    const double err = std::abs(static_cast<double>(exact - approx));
    worst = std::max(worst, err);
    if (err > static_cast<double>(soe.eps) + floor_scale * std::abs(static_cast<double>(exact))) ok = false;
  }
  soe.measured_max_error = worst;
  soe.verified_samples = samples;
  return ok;
}

}  // namespace detail

/// Sum-of-exponentials approximation of omega_{1-alpha} on [dt_cutoff, T]: a Gauss-Jacobi panel on
/// [0, 1/T] followed by dyadic Gauss-Legendre panels [2^j/T, 2^{j+1}/T] up to about log(1/eps)/dt_cutoff;
/// per-panel orders are chosen adaptively, negligible panels dropped, and the result is verified on
/// a dense log-spaced sample.
template <typename Scalar = double>
SoeApprox<Scalar> build_soe(Scalar alpha, Scalar eps, Scalar dt_cutoff, Scalar T, const SoeOptions& opts = {}) {
  if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha", "must lie in (0,1)");
  if (!(eps > 0 && eps < 1)) throw ValidationError("eps", "must lie in (0,1)");
  if (!(T > 0)) throw ValidationError("horizon", "must be positive");
  if (!(dt_cutoff > 0 && dt_cutoff < T)) throw ValidationError("dt_cutoff", "must lie in (0, T)");

  const auto ts = detail::log_samples(dt_cutoff, T, opts.order_samples);
  double tightening = 1;
  SoeApprox<Scalar> soe;
  for (int attempt = 0; attempt < 4; ++attempt, tightening *= 10) {
    soe = SoeApprox<Scalar>{};
    soe.alpha = alpha;
    soe.eps = eps;
    soe.dt_cutoff = dt_cutoff;
    soe.horizon = T;

    auto choose_order = [&](SoePanel<Scalar> panel, int step, Scalar tol, int start) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s1, w1, s2, w2;
      for (int n = std::max(1, start); n <= opts.max_order; ++n) {
        panel.order = n;
        detail::panel_rule(panel, alpha, s1, w1);
        panel.order = n + step;
        detail::panel_rule(panel, alpha, s2, w2);
        const auto finer = detail::partial_sums(s2, w2, ts);
        // absolute tolerance plus the roundoff floor of sums that reach omega(dt_cutoff) in size
        const auto floor = (Scalar(opts.roundoff_factor) * std::numeric_limits<Scalar>::epsilon() * finer.cwiseAbs()).array();
        if (((detail::partial_sums(s1, w1, ts) - finer).cwiseAbs().array() < tol + floor).all()) return n;
      }
      throw ConstructionError("build_soe: panel order exceeds maximum", std::numeric_limits<double>::infinity());
    };

    const Scalar s0 = 1 / T;
    SoePanel<Scalar> first{Scalar(0), s0, 0, true};
    first.order = choose_order(first, 8, eps / Scalar(10 * tightening), 2);
    soe.panels.push_back(first);

    const Scalar s_max = (std::log(1 / eps) + 10) / dt_cutoff;
    int prev_order = 1;
    for (Scalar lo = s0; lo < s_max; lo *= 2) {
      SoePanel<Scalar> panel{lo, 2 * lo, 40, false};
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s, w;
      detail::panel_rule(panel, alpha, s, w);
      const Scalar contribution = detail::partial_sums(s, w, ts).cwiseAbs().maxCoeff();
      if (contribution < eps / 10) continue;
      panel.order = choose_order(panel, 6, eps / Scalar(20 * tightening), prev_order - 2);
      prev_order = panel.order;
      soe.panels.push_back(panel);
    }
    detail::assemble_panels(soe);
    if (detail::verify_soe(soe, opts.verify_samples, opts.roundoff_factor)) return soe;
  }
  throw ConstructionError("build_soe: verification failed with max error " + std::to_string(soe.measured_max_error),
                          soe.measured_max_error);
}

/// Same panel layout as `reference`, new fractional order. Used for finite differences in alpha
/// where a full order search per evaluation would dominate; verified on `verify_samples` points.
template <typename Scalar = double>
SoeApprox<Scalar> rebuild_soe(const SoeApprox<Scalar>& reference, Scalar alpha, int verify_samples = 512,
                              double roundoff_factor = 64) {
  if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha", "must lie in (0,1)");
  SoeApprox<Scalar> soe = reference;
  soe.alpha = alpha;
  detail::assemble_panels(soe);
  if (!detail::verify_soe(soe, verify_samples, roundoff_factor)) {
    SoeOptions opts;
    opts.verify_samples = verify_samples;
    opts.roundoff_factor = roundoff_factor;
    return build_soe(alpha, reference.eps, reference.dt_cutoff, reference.horizon, opts);
  }
  return soe;
}

/// Smallest history argument t_{k-theta} - t_{k-1} over levels k >= 2 (level 1 has no history);
/// falls back to the level-1 gap for one-level meshes.
template <typename Scalar>
Scalar default_dt_cutoff(const TimeMesh<Scalar>& mesh) {
  const int K = mesh.levels();
  if (K == 1) return (1 - mesh.theta()) * mesh.step(1);
  Scalar m = std::numeric_limits<Scalar>::infinity();
  for (int k = 2; k <= K; ++k) m = std::min(m, (1 - mesh.theta()) * mesh.step(k));
  return m;
}

namespace detail {

/// (y cosh y - sinh y) / y^2 * exp(-y), the symmetric first moment of exp(s u) over [-h, h] scaled by exp(-y).
template <typename Scalar>
Scalar scaled_first_moment(Scalar y) {
  if (y < Scalar(0.5)) {
    // sum_{m>=1} 2m y^{2m-1} / (2m+1)!
    Scalar term_pow = y, fact = 6, total = 0;
    for (int m = 1; m < 40; ++m) {
      const Scalar term = 2 * Scalar(m) * term_pow / fact;
      total += term;
      if (term <= std::numeric_limits<Scalar>::epsilon() * Scalar(1e-3) * total) break;
      term_pow *= y * y;
      fact *= Scalar(2 * m + 2) * Scalar(2 * m + 3);
    }
    return total * std::exp(-y);
  }
  return ((y - 1) + (y + 1) * std::exp(-2 * y)) / (2 * y * y);
}

}  // namespace detail

/// c^{(n,l)} = (1/tau_n) int_{t_{n-1}}^{t_n} exp(-s_l (t_{n+1-theta} - xi)) d xi.
template <typename Scalar>
Scalar fast_coeff_c(const TimeMesh<Scalar>& mesh, const SoeApprox<Scalar>& soe, int n, int l) {
  if (n < 1 || n > mesh.levels() - 1 || l < 0 || l >= soe.size())
    throw IndexError("fast_coeff_c: index (n=" + std::to_string(n) + ", l=" + std::to_string(l) + ") out of range");
  const Scalar s = soe.nodes(l);
  const Scalar tau = mesh.step(n);
  const Scalar gap = (1 - mesh.theta()) * mesh.step(n + 1);  // t_{n+1-theta} - t_n
  const Scalar y = s * tau;
  return std::exp(-s * gap) * (-std::expm1(-y)) / y;
}

/// d^{(n,l)} = int_{t_{n-1}}^{t_n} exp(-s_l (t_{n+1-theta} - xi)) 2 (xi - t_{n-1/2}) / (tau_n (tau_n + tau_{n+1})) d xi.
template <typename Scalar>
Scalar fast_coeff_d(const TimeMesh<Scalar>& mesh, const SoeApprox<Scalar>& soe, int n, int l) {
  if (n < 1 || n > mesh.levels() - 1 || l < 0 || l >= soe.size())
    throw IndexError("fast_coeff_d: index (n=" + std::to_string(n) + ", l=" + std::to_string(l) + ") out of range");
  const Scalar s = soe.nodes(l);
  const Scalar tau = mesh.step(n);
  const Scalar next = mesh.step(n + 1);
  const Scalar gap = (1 - mesh.theta()) * next;
  const Scalar y = s * tau / 2;
  return std::exp(-s * gap) * tau / (tau + next) * detail::scaled_first_moment(y);
}

/// Decay exp(-s_l (theta tau_n + (1-theta) tau_{n+1})) carrying V(t_{n-1}) to V(t_n).
template <typename Scalar>
Scalar fast_decay(const TimeMesh<Scalar>& mesh, const SoeApprox<Scalar>& soe, int n, int l) {
  if (n < 1 || n > mesh.levels() - 1 || l < 0 || l >= soe.size())
    throw IndexError("fast_decay: index (n=" + std::to_string(n) + ", l=" + std::to_string(l) + ") out of range");
  return std::exp(-soe.nodes(l) * (mesh.theta() * mesh.step(n) + (1 - mesh.theta()) * mesh.step(n + 1)));
}

/// Precomputed fast coefficients; column n (1..K-1) of decay/c/d, a0(k) = a^{(0,k)} for k = 1..K.
struct FastTable {
  Eigen::MatrixXd decay;
  Eigen::MatrixXd c;
  Eigen::MatrixXd d;
  Eigen::VectorXd a0;
  Eigen::VectorXd ratio;  // ratio(n) = rho_n, n = 1..K-1
  Eigen::VectorXd weights;
  int levels{0};
  int size() const { return static_cast<int>(weights.size()); }
};

inline FastTable build_fast_table(const TimeMesh<double>& mesh, const SoeApprox<double>& soe) {
  FastTable t;
  const int K = mesh.levels();
  const int Nq = soe.size();
  t.levels = K;
  t.weights = soe.weights;
  t.decay = Eigen::MatrixXd::Zero(Nq, K + 1);
  t.c = Eigen::MatrixXd::Zero(Nq, K + 1);
  t.d = Eigen::MatrixXd::Zero(Nq, K + 1);
  t.a0 = Eigen::VectorXd::Zero(K + 1);
  t.ratio = Eigen::VectorXd::Zero(K + 1);
  for (int k = 1; k <= K; ++k) t.a0(k) = coeff_a(mesh, k, k);
  for (int n = 1; n < K; ++n) {
    t.ratio(n) = mesh.ratio(n);
    for (int l = 0; l < Nq; ++l) {
      t.decay(l, n) = fast_decay(mesh, soe, n, l);
      t.c(l, n) = fast_coeff_c(mesh, soe, n, l);
      t.d(l, n) = fast_coeff_d(mesh, soe, n, l);
    }
  }
  return t;
}

/// V^l(t_n; x) for every exponential node l (rows) and collocation point x (columns).
struct HistoryState {
  Eigen::MatrixXd values;
  int level{0};
  std::uint64_t ops{0};  // multiply-adds spent in updates and applications

  HistoryState() = default;
  HistoryState(int nodes, int points) : values(Eigen::MatrixXd::Zero(nodes, points)) {}
};

/// V(t_n) = decay_n V(t_{n-1}) + c_n grad^n + d_n (rho_n grad^{n+1} - grad^n); state must be at level n-1.
template <typename A, typename B>
void history_update(HistoryState& state, const FastTable& table, int n, const Eigen::MatrixBase<A>& grad_n,
                    const Eigen::MatrixBase<B>& grad_next) {
  if (state.level != n - 1)
    throw SequencingError("history_update: state at level " + std::to_string(state.level) + ", expected " +
                          std::to_string(n - 1));
  if (n < 1 || n >= table.levels) throw IndexError("history_update: level " + std::to_string(n) + " out of range");
  const auto P = state.values.cols();
  if (grad_n.size() != P || grad_next.size() != P) throw ValidationError("increments", "length mismatch");
  const double rho = table.ratio(n);
  state.values = table.decay.col(n).asDiagonal() * state.values +
                 (table.c.col(n) - table.d.col(n)) * grad_n.derived().reshaped().transpose() +
                 (rho * table.d.col(n)) * grad_next.derived().reshaped().transpose();
  state.level = n;
  state.ops += 3ull * static_cast<std::uint64_t>(state.values.size());
}

/// a^{(0,k)} grad^k + sum_l nu_l V^l(t_{k-1}); `values` holds v^0..v^k in rows (points in columns).
inline Eigen::RowVectorXd fast_caputo_apply(const Eigen::MatrixXd& values, HistoryState& state, const FastTable& table,
                                            int k) {
  if (k < 1 || k > table.levels) throw IndexError("fast_caputo_apply: level out of range");
  if (values.rows() < k + 1) throw ValidationError("values", "need rows for levels 0..k");
  if (state.level != k - 1) throw SequencingError("fast_caputo_apply: history not synchronized to level k-1");
  if (values.cols() != state.values.cols()) throw ValidationError("values", "point count mismatch with history");
  state.ops += static_cast<std::uint64_t>(state.values.size());
  return table.a0(k) * (values.row(k) - values.row(k - 1)) + table.weights.transpose() * state.values;
}

/// Scalar-series convenience: fast Caputo approximations at offsets t_{k-theta}, k = 1..K (entry 0 unused).
inline Eigen::VectorXd fast_caputo_series(const FastTable& table, const Eigen::VectorXd& series) {
  const int K = table.levels;
  if (series.size() != K + 1) throw ValidationError("series", "need K+1 values");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(K + 1);
  HistoryState state(table.size(), 1);
  Eigen::MatrixXd values = series;
  for (int k = 1; k <= K; ++k) {
    if (k >= 2) {
      Eigen::Matrix<double, 1, 1> g1, g2;
      g1(0) = series(k - 1) - series(k - 2);
      g2(0) = series(k) - series(k - 1);
      history_update(state, table, k - 1, g1, g2);
    }
    out(k) = fast_caputo_apply(values, state, table, k)(0);
  }
  return out;
}

/// Direct-scheme series at offsets t_{k-theta}, k = 1..K (entry 0 unused).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> direct_caputo_series(const KernelTable<Scalar>& table,
                                                              const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& series) {
  const int K = static_cast<int>(table.levels.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(K + 1);
  for (int k = 1; k <= K; ++k) out(k) = caputo_direct_apply(series, table.level(k));
  return out;
}

}  // namespace fracpinn

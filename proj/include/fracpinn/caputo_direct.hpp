#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fracpinn/errors.hpp"
#include "fracpinn/time_mesh.hpp"

namespace fracpinn {

/// Normalized power kernel omega_beta(s) = s^{beta-1} / Gamma(beta).
template <typename Scalar>
Scalar omega(Scalar beta, Scalar s) {
  if (!(beta > 0)) throw DomainError("omega: beta must be positive");
  if (!(s > 0)) throw DomainError("omega: s must be positive");
  return std::pow(s, beta - 1) / std::tgamma(beta);
}

namespace detail {

/// 1 - (1-x)^p for 0 <= x < 1 without cancellation.
template <typename Scalar>
Scalar one_minus_pow1m(Scalar p, Scalar x) {
  return -std::expm1(p * std::log1p(-x));
}

/// h(x) = 1 - (1-x)^beta - (beta x / 2)(1 + (1-x)^{beta-1}), the scaled first-moment integral
/// behind the b coefficients. Power series below x = 1/2 where the closed form cancels.
template <typename Scalar>
Scalar first_moment_h(Scalar beta, Scalar x) {
  if (x > Scalar(0.5)) {
    return 1 - std::pow(1 - x, beta) - beta * x / 2 * (1 + std::pow(1 - x, beta - 1));
  }
  Scalar c = 1, e = 1;
  // advance c to c_3 and e to e_2
  for (int j = 0; j < 3; ++j) c *= (Scalar(j) - beta) / Scalar(j + 1);
  for (int j = 0; j < 2; ++j) e *= (Scalar(j) - beta + 1) / Scalar(j + 1);
  Scalar xm = x * x * x, total = 0;
  for (int m = 3; m < 400; ++m) {
    const Scalar term = (-c - beta / 2 * e) * xm;
    total += term;
    if (std::abs(term) <= std::numeric_limits<Scalar>::epsilon() * Scalar(1e-3) * std::abs(total)) break;
    c *= (Scalar(m) - beta) / Scalar(m + 1);
    e *= (Scalar(m - 1) - beta + 1) / Scalar(m);
    xm *= x;
  }
  return total;
}

/// g(x) = (1-x)^beta - 1 + beta x, used for the moment integral of (t_n - s) against the kernel.
template <typename Scalar>
Scalar endpoint_moment_g(Scalar beta, Scalar x) {
  if (x > Scalar(0.5)) return std::pow(1 - x, beta) - 1 + beta * x;
  Scalar c = 1;
  for (int j = 0; j < 2; ++j) c *= (Scalar(j) - beta) / Scalar(j + 1);
  Scalar xm = x * x, total = 0;
  for (int m = 2; m < 400; ++m) {
    const Scalar term = c * xm;
    total += term;
    if (std::abs(term) <= std::numeric_limits<Scalar>::epsilon() * Scalar(1e-3) * std::abs(total)) break;
    c *= (Scalar(m) - beta) / Scalar(m + 1);
    xm *= x;
  }
  return total;
}

template <typename Scalar>
void check_pair(const TimeMesh<Scalar>& mesh, int k, int n, int n_max_offset) {
  if (k < 1 || k > mesh.levels() || n < 1 || n > k - n_max_offset)
    throw IndexError("coefficient index (k=" + std::to_string(k) + ", n=" + std::to_string(n) +
                     ") out of range for K=" + std::to_string(mesh.levels()));
}

}  // namespace detail

/// a^{(k-n,k)} = (1/tau_n) int_{t_{n-1}}^{min(t_n, t_{k-theta})} omega_{1-alpha}(t_{k-theta} - s) ds.
template <typename Scalar>
Scalar coeff_a(const TimeMesh<Scalar>& mesh, int k, int n) {
  detail::check_pair(mesh, k, n, 0);
  const Scalar alpha = mesh.alpha();
  const Scalar tau = mesh.step(n);
  if (n == k) return omega(2 - alpha, (1 - mesh.theta()) * tau) / tau;
  const Scalar A = mesh.offset(k) - mesh.node(n - 1);
  const Scalar x = tau / A;
  return std::pow(A, 1 - alpha) / (std::tgamma(2 - alpha) * tau) * detail::one_minus_pow1m(1 - alpha, x);
}

/// b^{(k-n,k)} = 2 int_{t_{n-1}}^{t_n} (s - t_{n-1/2}) omega_{1-alpha}(t_{k-theta} - s) ds / (tau_n (tau_n + tau_{n+1})).
template <typename Scalar>
Scalar coeff_b(const TimeMesh<Scalar>& mesh, int k, int n) {
  detail::check_pair(mesh, k, n, 1);
  const Scalar alpha = mesh.alpha();
  const Scalar beta = 2 - alpha;
  const Scalar tau = mesh.step(n);
  const Scalar A = mesh.offset(k) - mesh.node(n - 1);
  const Scalar x = tau / A;
  const Scalar scale = 2 / (tau * (tau + mesh.step(n + 1)));
  return scale * std::pow(A, beta) / std::tgamma(3 - alpha) * detail::first_moment_h(beta, x);
}

/// Coefficients and kernels of one level k; every vector is indexed by n = 1..k (entry 0 unused).
/// kernels(n) holds D^{(k-n,k)}.
template <typename Scalar = double>
struct KernelSet {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  int level{0};
  Vector a;
  Vector b;
  Vector kernels;
};

template <typename Scalar>
KernelSet<Scalar> assemble_D(const TimeMesh<Scalar>& mesh, int k) {
  if (k < 1 || k > mesh.levels()) throw IndexError("assemble_D: level " + std::to_string(k) + " out of range");
  KernelSet<Scalar> ks;
  ks.level = k;
  ks.a = KernelSet<Scalar>::Vector::Zero(k + 1);
  ks.b = KernelSet<Scalar>::Vector::Zero(k + 1);
  ks.kernels = KernelSet<Scalar>::Vector::Zero(k + 1);
  for (int n = 1; n <= k; ++n) ks.a(n) = coeff_a(mesh, k, n);
  for (int n = 1; n < k; ++n) ks.b(n) = coeff_b(mesh, k, n);
  if (k == 1) {
    ks.kernels(1) = ks.a(1);
    return ks;
  }
  ks.kernels(1) = ks.a(1) - ks.b(1);
  for (int n = 2; n < k; ++n) ks.kernels(n) = ks.a(n) + mesh.ratio(n - 1) * ks.b(n - 1) - ks.b(n);
  ks.kernels(k) = ks.a(k) + mesh.ratio(k - 1) * ks.b(k - 1);
  return ks;
}

/// All kernel sets of a mesh plus the complementary kernels.
template <typename Scalar = double>
struct KernelTable {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  std::vector<KernelSet<Scalar>> levels;  // levels[k-1] is level k
  std::vector<Vector> complementary;      // complementary[k-1](n) = C^{(k-n,k)}, empty until computed

  const KernelSet<Scalar>& level(int k) const { return levels.at(static_cast<std::size_t>(k - 1)); }
};

/// Complementary kernels of level k from kernel sets of levels 1..k:
/// C^{(0,k)} = 1/D^{(0,k)}, C^{(k-n,k)} = (1/D^{(0,n)}) sum_{i=n+1}^k (D^{(i-n-1,i)} - D^{(i-n,i)}) C^{(k-i,k)}.
template <typename Scalar>
typename KernelTable<Scalar>::Vector complementary_C(const std::vector<KernelSet<Scalar>>& sets, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > sets.size())
    throw IndexError("complementary_C: kernels missing for level " + std::to_string(k));
  typename KernelTable<Scalar>::Vector C = KernelTable<Scalar>::Vector::Zero(k + 1);
  for (int n = k; n >= 1; --n) {
    const Scalar lead = sets[static_cast<std::size_t>(n - 1)].kernels(n);
    if (!(lead > 0)) throw DomainError("complementary_C: nonpositive leading kernel at level " + std::to_string(n));
    if (n == k) {
      C(n) = 1 / lead;
      continue;
    }
    Scalar acc = 0;
    for (int i = n + 1; i <= k; ++i) {
      const auto& Di = sets[static_cast<std::size_t>(i - 1)].kernels;
      acc += (Di(n + 1) - Di(n)) * C(i);
    }
    C(n) = acc / lead;
  }
  return C;
}

template <typename Scalar>
KernelTable<Scalar> build_kernel_table(const TimeMesh<Scalar>& mesh, bool with_complementary = false) {
  KernelTable<Scalar> table;
  table.levels.reserve(static_cast<std::size_t>(mesh.levels()));
  for (int k = 1; k <= mesh.levels(); ++k) table.levels.push_back(assemble_D(mesh, k));
  if (with_complementary) {
    table.complementary.reserve(table.levels.size());
    for (int k = 1; k <= mesh.levels(); ++k) table.complementary.push_back(complementary_C(table.levels, k));
  }
  return table;
}

/// sum_{n=1}^k D^{(k-n,k)} (v^n - v^{n-1}) for a scalar series v^0..v^k (longer series allowed).
template <typename Scalar, typename Derived>
Scalar caputo_direct_apply(const Eigen::MatrixBase<Derived>& values, const KernelSet<Scalar>& ks) {
  const int k = ks.level;
  if (values.size() < k + 1)
    throw ValidationError("values", "need " + std::to_string(k + 1) + " values, got " + std::to_string(values.size()));
  Scalar acc = 0;
  for (int n = 1; n <= k; ++n) acc += ks.kernels(n) * (values(n) - values(n - 1));
  return acc;
}

/// Outcome of the kernel property predicates over one mesh.
struct KernelPropertyReport {
  struct Predicate {
    std::string name;
    bool gating{true};
    long checked{0};
    long violations{0};
    double worst_margin{0};  // most negative normalized margin observed (0 if none negative)
  };
  std::vector<Predicate> predicates;
  bool all_gating_hold() const {
    for (const auto& p : predicates)
      if (p.gating && p.violations > 0) return false;
    return true;
  }
};

/// Evaluates the kernel property predicates on every level of the mesh with relative slack `slack`
/// (relative to the largest operand of each inequality):
///   a.upper:     D^{(0,k)} <= 24/(11 tau_k) omega_{2-alpha}(tau_k)
///   a.lower:     D^{(k-n,k)} >= 4/(11 tau_n) [omega_{2-alpha}(t_k - t_{n-1}) - omega_{2-alpha}(t_k - t_n)]
///   b.monotone:  D^{(k-n-1,k)} > D^{(k-n,k)}
///   b.gap:       (1+rho_n) b^{(k-n,k)} - I_n/(5 tau_n) < D^{(k-n-1,k)} - D^{(k-n,k)}
///   b.nonneg:    b^{(k-n,k)} >= 0
///   c.leading:   D^{(1,k)} < (1-2 theta)/(1-theta) D^{(0,k)}, k >= 2
/// plus the non-gating diagnostic b.gap_lower: 0 <= (1+rho_n) b - I_n/(5 tau_n),
/// where I_n = int_{t_{n-1}}^{t_n} (t_n - s) omega_{1-alpha}(t_{k-theta} - s) ds.
template <typename Scalar>
KernelPropertyReport check_kernel_properties(const TimeMesh<Scalar>& mesh, double slack = 1e-12) {
  using P = KernelPropertyReport::Predicate;
  P a_up{"a.upper"}, a_lo{"a.lower"}, b_mono{"b.monotone"}, b_gap{"b.gap"}, b_nonneg{"b.nonneg"},
      c_lead{"c.leading"}, b_gap_lo{"b.gap_lower", false};
  auto note = [slack](P& p, double margin, bool strict) {
    ++p.checked;
    const bool ok = strict ? margin > -slack : margin >= -slack;
    if (!ok) ++p.violations;
    if (margin < p.worst_margin) p.worst_margin = margin;
  };
  // lhs <= rhs (or lhs < rhs) with the margin normalized by the larger operand
  auto record = [&note](P& p, Scalar lhs, Scalar rhs, bool strict) {
    const double scale = std::max({std::abs(static_cast<double>(lhs)), std::abs(static_cast<double>(rhs)), 1e-300});
    note(p, (static_cast<double>(rhs) - static_cast<double>(lhs)) / scale, strict);
  };

  const Scalar alpha = mesh.alpha();
  const Scalar theta = mesh.theta();
  const Scalar beta = 2 - alpha;
  const int K = mesh.levels();
  for (int k = 1; k <= K; ++k) {
    const KernelSet<Scalar> ks = assemble_D(mesh, k);
    const auto& D = ks.kernels;
    const Scalar tau_k = mesh.step(k);
    record(a_up, D(k), Scalar(24) / (11 * tau_k) * omega(beta, tau_k), false);
    for (int n = 1; n <= k; ++n) {
      const Scalar tau_n = mesh.step(n);
      const Scalar far = mesh.node(k) - mesh.node(n - 1);
      const Scalar near = mesh.node(k) - mesh.node(n);
      // omega_{2-alpha}(far) - omega_{2-alpha}(near), written without cancellation
      Scalar integral;
      if (n == k) {
        integral = omega(beta, tau_n);
      } else {
        integral = std::pow(far, 1 - alpha) / std::tgamma(beta) * detail::one_minus_pow1m(1 - alpha, tau_n / far);
      }
      record(a_lo, Scalar(4) / (11 * tau_n) * integral, D(n), false);
    }
    for (int n = 1; n < k; ++n) {
      const Scalar diff = D(n + 1) - D(n);
      record(b_mono, D(n), D(n + 1), true);
      const double scale = std::max(std::abs(static_cast<double>(D(n))), std::abs(static_cast<double>(D(n + 1))));
      note(b_nonneg, static_cast<double>(ks.b(n)) / scale, false);
      const Scalar A = mesh.offset(k) - mesh.node(n - 1);
      const Scalar x = mesh.step(n) / A;
      const Scalar I = std::pow(A, beta) / std::tgamma(3 - alpha) * detail::endpoint_moment_g(beta, x);
      const Scalar lower = (1 + mesh.ratio(n)) * ks.b(n) - I / (5 * mesh.step(n));
      // the gap is a difference of kernels, so its slack is relative to the kernels themselves
      note(b_gap, static_cast<double>(diff - lower) / scale, true);
      note(b_gap_lo, static_cast<double>(lower) / scale, false);
    }
    if (k >= 2) record(c_lead, D(k - 1), (1 - 2 * theta) / (1 - theta) * D(k), true);
  }
  KernelPropertyReport rep;
  rep.predicates = {a_up, a_lo, b_mono, b_gap, b_nonneg, c_lead, b_gap_lo};
  return rep;
}

/// Kernel table cache keyed by mesh nodes and alpha. Readers get a shared snapshot; a rebuild
/// replaces the snapshot atomically under the lock.
class KernelCache {
 public:
  std::shared_ptr<const KernelTable<double>> get(const TimeMesh<double>& mesh) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (table_ && alpha_ == mesh.alpha() && nodes_.size() == mesh.nodes().size() && nodes_ == mesh.nodes())
      return table_;
    auto fresh = std::make_shared<const KernelTable<double>>(build_kernel_table(mesh));
    table_ = fresh;
    alpha_ = mesh.alpha();
    nodes_ = mesh.nodes();
    ++rebuilds_;
    return fresh;
  }
  long rebuilds() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return rebuilds_;
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const KernelTable<double>> table_;
  double alpha_{0};
  Eigen::VectorXd nodes_;
  long rebuilds_{0};
};

}  // namespace fracpinn

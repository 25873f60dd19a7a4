#pragma once

// Quadrature oracles for the closed-form coefficients. The double mesh nodes are taken as exact
// inputs; everything else (offsets, steps, integrals) is evaluated in 50-digit arithmetic with
// Boost's adaptive Gauss-Kronrod rule after a change of variables that makes each integrand smooth.
// First-moment integrals lose up to 15 digits to cancellation on strongly graded meshes, hence the
// extended precision.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <functional>
#include <type_traits>

#include "fracpinn/soe.hpp"
#include "fracpinn/time_mesh.hpp"

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

template <typename T>
T integrate(const std::function<T(T)>& f, T lo, T hi) {
  T err = 0;
  const T tol = std::is_same_v<T, double> ? T(1e-14) : T(1e-30);
  return boost::math::quadrature::gauss_kronrod<T, 31>::integrate(f, lo, hi, 15, tol, &err);
}

inline double integrate(const std::function<double(double)>& f, double lo, double hi) {
  return integrate<double>(f, lo, hi);
}

// int_{u0}^{u0+width} u^{-alpha} g(u - u0) du. Near the singularity u = w^{1/(1-alpha)} removes the
// weight; away from it the interval is integrated in r = u - u0.
inline Real weakly_singular(Real alpha, Real u0, Real width, const std::function<Real(Real)>& g) {
  if (u0 > width) {
    return integrate<Real>([&](Real r) -> Real { return pow(u0 + r, -alpha) * g(r); }, Real(0), width);
  }
  const Real q = 1 - alpha;
  return integrate<Real>([&](Real w) -> Real { return g(pow(w, 1 / q) - u0) / q; }, pow(u0, q), pow(u0 + width, q));
}

struct Nodes {
  Real alpha, theta;
  const fracpinn::TimeMesh<double>& m;
  Real t(int k) const { return Real(m.node(k)); }
  Real tau(int k) const { return t(k) - t(k - 1); }
  Real offset(int k) const { return theta * t(k - 1) + (1 - theta) * t(k); }
};

inline Nodes nodes(const fracpinn::TimeMesh<double>& m) {
  const Real a = m.alpha();
  return Nodes{a, a / 2, m};
}

// a^{(k,n)} = (1/tau_n) int_{t_{n-1}}^{min(t_n, t_{k-theta})} omega_{1-alpha}(t_{k-theta} - s) ds
inline double coeff_a(const fracpinn::TimeMesh<double>& m, int k, int n) {
  const Nodes N = nodes(m);
  const Real c = N.offset(k);
  const Real u0 = n == k ? Real(0) : c - N.t(n);
  const Real width = n == k ? c - N.t(n - 1) : N.tau(n);
  const Real I = weakly_singular(N.alpha, u0, width, [](Real) { return Real(1); });
  return static_cast<double>(I / boost::math::tgamma(1 - N.alpha) / N.tau(n));
}

// b^{(k,n)} = 2/(tau_n (tau_n + tau_{n+1})) int_{t_{n-1}}^{t_n} (s - t_{n-1/2}) omega_{1-alpha}(t_{k-theta} - s) ds
inline double coeff_b(const fracpinn::TimeMesh<double>& m, int k, int n) {
  const Nodes N = nodes(m);
  const Real tau = N.tau(n);
  const Real I = weakly_singular(N.alpha, N.offset(k) - N.t(n), tau, [&](Real r) { return tau / 2 - r; });
  return static_cast<double>(2 / (tau * (tau + N.tau(n + 1))) * I / boost::math::tgamma(1 - N.alpha));
}

// c^{(n,l)} = (1/tau_n) int_{t_{n-1}}^{t_n} exp(-s (t_{n+1-theta} - xi)) d xi, integrated in w = t_n - xi
inline double coeff_c(const fracpinn::TimeMesh<double>& m, double s, int n) {
  const Nodes N = nodes(m);
  const Real S = s;
  const Real tau = N.tau(n);
  const Real I = integrate<Real>([&](Real w) -> Real { return exp(-S * w); }, Real(0), tau);
  return static_cast<double>(exp(-S * (N.offset(n + 1) - N.t(n))) * I / tau);
}

// d^{(n,l)} = int exp(-s (t_{n+1-theta} - xi)) 2 (xi - t_{n-1/2}) / (tau_n (tau_n + tau_{n+1})) d xi
inline double coeff_d(const fracpinn::TimeMesh<double>& m, double s, int n) {
  const Nodes N = nodes(m);
  const Real S = s;
  const Real tau = N.tau(n);
  const Real I = integrate<Real>([&](Real w) -> Real { return exp(-S * w) * (tau / 2 - w); }, Real(0), tau);
  return static_cast<double>(exp(-S * (N.offset(n + 1) - N.t(n))) * 2 * I / (tau * (tau + N.tau(n + 1))));
}

inline bool close(double got, double want, double rel) {
  return std::abs(got - want) <= rel * std::max(std::abs(want), 1e-300);
}

}  // namespace oracle

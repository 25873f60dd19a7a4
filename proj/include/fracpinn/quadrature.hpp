#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <utility>

#include "fracpinn/errors.hpp"

namespace fracpinn {

template <typename Scalar = double>
struct QuadratureRule {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;
};

namespace detail {

/// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights mu0 * (first eigenvector entry)^2.
template <typename Scalar>
QuadratureRule<Scalar> golub_welsch(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& diag,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& offdiag, Scalar mu0) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  QuadratureRule<Scalar> rule;
  const Eigen::Index n = diag.size();
  if (n == 1) {
    rule.nodes = diag;
    rule.weights = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Constant(1, mu0);
    return rule;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  solver.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw DomainError("golub_welsch: eigen decomposition failed");
  rule.nodes = solver.eigenvalues();
  rule.weights = mu0 * solver.eigenvectors().row(0).transpose().array().square().matrix();
  return rule;
}

}  // namespace detail

/// n-point Gauss-Legendre rule on [-1, 1].
template <typename Scalar = double>
QuadratureRule<Scalar> gauss_legendre(int n) {
  if (n < 1) throw ValidationError("order", "quadrature order must be positive");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> diag = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> off(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) off(k - 1) = Scalar(k) / std::sqrt(Scalar(4) * k * k - 1);
  return detail::golub_welsch(diag, off, Scalar(2));
}

/// n-point Gauss-Jacobi rule on [-1, 1] for the weight (1-x)^a (1+x)^b, a, b > -1, a + b != -1.
template <typename Scalar = double>
QuadratureRule<Scalar> gauss_jacobi(int n, Scalar a, Scalar b) {
  if (n < 1) throw ValidationError("order", "quadrature order must be positive");
  if (!(a > -1 && b > -1)) throw DomainError("gauss_jacobi: exponents must exceed -1");
  const Scalar ab = a + b;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> diag(n), off(std::max(n - 1, 0));
  diag(0) = (b - a) / (ab + 2);
  for (int k = 1; k < n; ++k) {
    const Scalar s = 2 * Scalar(k) + ab;
    diag(k) = (b * b - a * a) / (s * (s + 2));
    const Scalar num = 4 * Scalar(k) * (k + a) * (k + b) * (k + ab);
    const Scalar den = s * s * (s + 1) * (s - 1);
    off(k - 1) = std::sqrt(num / den);
  }
  const Scalar mu0 = std::pow(Scalar(2), ab + 1) * std::tgamma(a + 1) * std::tgamma(b + 1) / std::tgamma(ab + 2);
  return detail::golub_welsch(diag, off, mu0);
}

}  // namespace fracpinn

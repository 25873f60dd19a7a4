#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fracpinn/network.hpp"

namespace fracpinn {

enum class OperatorKind { Subdiffusion, Burgers, FisherNagumo, ReactionDiffusion, AllenCahn };
enum class ConstraintMode { Hard, Soft };

std::string to_string(OperatorKind kind);
std::string to_string(ConstraintMode mode);
ConstraintMode parse_constraint_mode(const std::string& name);

/// Axis-aligned box.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int dim() const { return static_cast<int>(lower.size()); }
  static Box unit(int dim) { return Box{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)}; }
};

/// c t^mu with closed-form Caputo derivative c Gamma(mu+1)/Gamma(mu+1-alpha) t^{mu-alpha} (zero for mu = 0).
struct CaputoMonomial {
  double coefficient{1};
  double exponent{0};

  double value(double t) const { return exponent == 0 ? coefficient : coefficient * std::pow(t, exponent); }
  double caputo(double alpha, double t) const;
};

/// Coefficients entering the spatial operator; trainable ones are tape scalars in inverse runs.
template <typename P>
struct OperatorCoefficients {
  P lambda1;
  P lambda2;
  P epsilon;
  P mobility;
};

struct OperatorParams {
  double lambda1{1};
  double lambda2{1};
  double power{2};         // Burgers exponent p
  double reaction_rho{1};  // Fisher-Nagumo rho
  double epsilon{0};       // Allen-Cahn interface width
  double mobility{1};      // Allen-Cahn mobility
  double angle{0};         // Fisher-Nagumo front angle (2D)

  OperatorCoefficients<double> coefficients() const { return {lambda1, lambda2, epsilon, mobility}; }
};

/// N[w; lambda] for a jet w (value, d/dx_i, d^2/dx_i^2); T is double or a tape variable.
template <typename T, typename P>
T apply_operator(OperatorKind kind, const OperatorCoefficients<P>& c, const OperatorParams& fixed,
                 const Jet<T>& w) {
  using std::pow;
  const T& v = w.value;
  auto laplacian = [&w]() {
    T acc = w.d2[0];
    for (std::size_t i = 1; i < w.d2.size(); ++i) acc = acc + w.d2[i];
    return acc;
  };
  switch (kind) {
    case OperatorKind::Subdiffusion:
      return c.lambda1 * (v * v * v - v) - c.lambda2 * laplacian();
    case OperatorKind::Burgers:
      return c.lambda1 * (pow(v, fixed.power) * w.d1[0]) + c.lambda2 * w.d2[0];
    case OperatorKind::FisherNagumo: {
      T adv = c.lambda1 * w.d1[0];
      if (w.d1.size() > 1) adv = adv + c.lambda2 * w.d1[1];
      return adv + v * (v - 1.0) * (fixed.reaction_rho - v);
    }
    case OperatorKind::ReactionDiffusion:
      // lambda1 is the diffusion coefficient: D^alpha v = lambda1 lap v - lambda2 f(v) + g
      return c.lambda2 * (v * v * v - v) - c.lambda1 * laplacian();
    case OperatorKind::AllenCahn:
      return c.mobility * ((v * v * v - v) - c.epsilon * c.epsilon * laplacian());
  }
  throw std::logic_error("apply_operator: unknown operator");
}

/// Manufactured solution T(t) prod_i sin(pi x_i) with T a sum of Caputo monomials.
struct SeparableSolution {
  std::vector<CaputoMonomial> temporal;

  double time_factor(double t) const;
  double time_caputo(double alpha, double t) const;
  double value(const Eigen::VectorXd& x, double t) const;
  Jet<double> jet(const Eigen::VectorXd& x, double t) const;
};

struct ProblemSpec {
  std::string name;
  int dim{1};
  Box domain;
  double horizon{1};
  double alpha{0.5};
  OperatorKind op{OperatorKind::Subdiffusion};
  OperatorParams params;
  std::optional<SeparableSolution> exact;
  std::function<double(const Eigen::VectorXd&, double)> source;    // g(x, t)
  std::function<double(const Eigen::VectorXd&)> initial;           // v(x, 0)
  std::function<double(const Eigen::VectorXd&, double)> boundary;  // v on the boundary
  std::function<double(const Eigen::VectorXd&, double)> reference; // comparison field when no exact solution
  ConstraintMode mode{ConstraintMode::Hard};
  bool initial_lift{false};  // hard mode carries the nonzero initial data as a lift
  std::vector<std::string> unknowns;
  std::map<std::string, double> truth;
  int terminal_points{0};
};

ProblemSpec ntfsde(int dim, double alpha = 0.5, double lambda1 = 1, double lambda2 = 1);
ProblemSpec burgers(double power = 2, double alpha = 0.5, double lambda1 = 1, double lambda2 = -1);
ProblemSpec tffn(int dim, double alpha = 0.5, double rho_reaction = 1, double angle = 1.5707963267948966);
ProblemSpec tfrd_inverse(double alpha_true = 0.8, double lambda1_true = 1, double lambda2_true = 1);
ProblemSpec tfac_inverse(double alpha_true = 0.5, double eps_true = 0.11253953951963827, double psi_true = 1,
                         bool weak_singularity = true);

/// Registry lookup by name: ntfsde1d, ntfsde2d, ntfsde3d, burgers, tffn1d, tffn2d, tfrd-inv, tfac-inv.
ProblemSpec make_problem(const std::string& name, std::optional<double> alpha = std::nullopt);
std::vector<std::string> problem_names();

/// Largest |C d^alpha v + N[v] - g| over seeded random interior points using the generic operator
/// path (closed-form Caputo of the temporal monomials, analytic spatial jet).
double consistency_residual(const ProblemSpec& problem, int samples = 100, std::uint64_t seed = 7);

}  // namespace fracpinn

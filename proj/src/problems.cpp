#include "fracpinn/problems.hpp"

#include <cctype>
#include <numbers>
#include <random>

#include "fracpinn/errors.hpp"

namespace fracpinn {

namespace {
constexpr double kPi = std::numbers::pi;

double sine_product(const Eigen::VectorXd& x) {
  double s = 1;
  for (Eigen::Index i = 0; i < x.size(); ++i) s *= std::sin(kPi * x(i));
  return s;
}

void check_alpha(double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha", "must lie in (0,1)");
}

void check_dim(int dim, int max_dim) {
  if (dim < 1 || dim > max_dim) throw ValidationError("dim", "unsupported dimension " + std::to_string(dim));
}

/// t^{2+alpha} prod sin(pi x_i)
SeparableSolution smooth_solution(double alpha) { return SeparableSolution{{CaputoMonomial{1.0, 2.0 + alpha}}}; }

/// (1 + omega_{1+alpha}(t)) prod sin(pi x_i)
SeparableSolution weakly_singular_solution(double alpha) {
  return SeparableSolution{{CaputoMonomial{1.0, 0.0}, CaputoMonomial{1.0 / std::tgamma(1.0 + alpha), alpha}}};
}

}  // namespace

std::string to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::Subdiffusion: return "subdiffusion";
    case OperatorKind::Burgers: return "burgers";
    case OperatorKind::FisherNagumo: return "fisher-nagumo";
    case OperatorKind::ReactionDiffusion: return "reaction-diffusion";
    case OperatorKind::AllenCahn: return "allen-cahn";
  }
  return "unknown";
}

std::string to_string(ConstraintMode mode) { return mode == ConstraintMode::Hard ? "hard" : "soft"; }

ConstraintMode parse_constraint_mode(const std::string& name) {
  if (name == "hard") return ConstraintMode::Hard;
  if (name == "soft") return ConstraintMode::Soft;
  throw ValidationError("mode", "expected 'hard' or 'soft', got '" + name + "'");
}

double CaputoMonomial::caputo(double alpha, double t) const {
  if (exponent == 0) return 0;
  return coefficient * std::tgamma(exponent + 1) / std::tgamma(exponent + 1 - alpha) * std::pow(t, exponent - alpha);
}

double SeparableSolution::time_factor(double t) const {
  double s = 0;
  for (const auto& m : temporal) s += m.value(t);
  return s;
}

double SeparableSolution::time_caputo(double alpha, double t) const {
  double s = 0;
  for (const auto& m : temporal) s += m.caputo(alpha, t);
  return s;
}

double SeparableSolution::value(const Eigen::VectorXd& x, double t) const { return time_factor(t) * sine_product(x); }

Jet<double> SeparableSolution::jet(const Eigen::VectorXd& x, double t) const {
  const double T = time_factor(t);
  const auto d = x.size();
  Jet<double> j;
  j.value = T * sine_product(x);
  for (Eigen::Index i = 0; i < d; ++i) {
    double others = 1;
    for (Eigen::Index m = 0; m < d; ++m)
      if (m != i) others *= std::sin(kPi * x(m));
    j.d1.push_back(T * kPi * std::cos(kPi * x(i)) * others);
    j.d2.push_back(-kPi * kPi * j.value);
  }
  return j;
}

ProblemSpec ntfsde(int dim, double alpha, double lambda1, double lambda2) {
  check_dim(dim, 3);
  check_alpha(alpha);
  ProblemSpec p;
  p.name = "ntfsde" + std::to_string(dim) + "d";
  p.dim = dim;
  p.domain = Box::unit(dim);
  p.alpha = alpha;
  p.op = OperatorKind::Subdiffusion;
  p.params.lambda1 = lambda1;
  p.params.lambda2 = lambda2;
  p.exact = smooth_solution(alpha);
  const double caputo_scale = std::tgamma(3 + alpha) / 2;
  p.source = [=](const Eigen::VectorXd& x, double t) {
    const double S = sine_product(x);
    const double v = std::pow(t, 2 + alpha) * S;
    return caputo_scale * t * t * S + lambda1 * (v * v * v - v) + lambda2 * dim * kPi * kPi * v;
  };
  p.initial = [](const Eigen::VectorXd&) { return 0.0; };
  p.boundary = [](const Eigen::VectorXd&, double) { return 0.0; };
  p.mode = ConstraintMode::Hard;
  p.truth = {{"alpha", alpha}, {"lambda1", lambda1}, {"lambda2", lambda2}};
  return p;
}

ProblemSpec burgers(double power, double alpha, double lambda1, double lambda2) {
  if (!(power > 0)) throw ValidationError("power", "must be positive");
  check_alpha(alpha);
  ProblemSpec p;
  p.name = "burgers";
  p.dim = 1;
  p.domain = Box::unit(1);
  p.alpha = alpha;
  p.op = OperatorKind::Burgers;
  p.params.lambda1 = lambda1;
  p.params.lambda2 = lambda2;
  p.params.power = power;
  p.exact = weakly_singular_solution(alpha);
  const double g1 = std::tgamma(1 + alpha);
  p.source = [=](const Eigen::VectorXd& x, double t) {
    const double T = 1 + std::pow(t, alpha) / g1;
    const double v = T * std::sin(kPi * x(0));
    const double vx = T * kPi * std::cos(kPi * x(0));
    return std::sin(kPi * x(0)) + lambda1 * std::pow(v, power) * vx - lambda2 * kPi * kPi * v;
  };
  p.initial = [](const Eigen::VectorXd& x) { return std::sin(kPi * x(0)); };
  p.boundary = [](const Eigen::VectorXd&, double) { return 0.0; };
  p.mode = ConstraintMode::Hard;
  p.initial_lift = true;
  p.truth = {{"alpha", alpha}, {"lambda1", lambda1}, {"lambda2", lambda2}};
  return p;
}

ProblemSpec tffn(int dim, double alpha, double rho_reaction, double angle) {
  check_dim(dim, 2);
  check_alpha(alpha);
  ProblemSpec p;
  p.name = "tffn" + std::to_string(dim) + "d";
  p.dim = dim;
  p.domain = Box::unit(dim);
  p.alpha = alpha;
  p.op = OperatorKind::FisherNagumo;
  p.params.lambda1 = 1;
  p.params.lambda2 = 1;
  p.params.reaction_rho = rho_reaction;
  p.params.angle = angle;
  const double speed = (2 * rho_reaction - 1) / std::sqrt(2.0);
  const double inv8 = 1 / std::sqrt(8.0);
  std::function<double(const Eigen::VectorXd&, double)> fn;
  if (dim == 1) {
    fn = [=](const Eigen::VectorXd& x, double t) { return 0.5 + 0.5 * std::tanh(inv8 * (x(0) - t * speed)); };
  } else {
    const double sa = std::sin(angle), ca = std::cos(angle);
    fn = [=](const Eigen::VectorXd& x, double t) {
      return 0.5 + 0.5 * std::tanh(inv8 * (x(0) * sa + x(1) * ca) - t * speed);
    };
  }
  p.source = [](const Eigen::VectorXd&, double) { return 0.0; };
  p.initial = [fn](const Eigen::VectorXd& x) { return fn(x, 0.0); };
  p.boundary = fn;
  p.reference = fn;
  p.mode = ConstraintMode::Soft;
  p.truth = {{"alpha", alpha}, {"lambda1", 1.0}, {"lambda2", 1.0}};
  return p;
}

ProblemSpec tfrd_inverse(double alpha_true, double lambda1_true, double lambda2_true) {
  check_alpha(alpha_true);
  ProblemSpec p;
  p.name = "tfrd-inv";
  p.dim = 2;
  p.domain = Box::unit(2);
  p.alpha = alpha_true;
  p.op = OperatorKind::ReactionDiffusion;
  p.params.lambda1 = lambda1_true;
  p.params.lambda2 = lambda2_true;
  p.exact = smooth_solution(alpha_true);
  const double caputo_scale = std::tgamma(3 + alpha_true) / 2;
  p.source = [=](const Eigen::VectorXd& x, double t) {
    const double S = sine_product(x);
    const double v = std::pow(t, 2 + alpha_true) * S;
    return caputo_scale * t * t * S + lambda1_true * 2 * kPi * kPi * v + lambda2_true * (v * v * v - v);
  };
  p.initial = [](const Eigen::VectorXd&) { return 0.0; };
  p.boundary = [](const Eigen::VectorXd&, double) { return 0.0; };
  p.mode = ConstraintMode::Hard;
  p.unknowns = {"alpha", "lambda1", "lambda2"};
  p.truth = {{"alpha", alpha_true}, {"lambda1", lambda1_true}, {"lambda2", lambda2_true}};
  p.terminal_points = 30;
  return p;
}

ProblemSpec tfac_inverse(double alpha_true, double eps_true, double psi_true, bool weak_singularity) {
  check_alpha(alpha_true);
  if (!(eps_true > 0)) throw ValidationError("epsilon", "must be positive");
  ProblemSpec p;
  p.name = "tfac-inv";
  p.dim = 2;
  p.domain = Box::unit(2);
  p.alpha = alpha_true;
  p.op = OperatorKind::AllenCahn;
  p.params.epsilon = eps_true;
  p.params.mobility = psi_true;
  p.exact = weak_singularity ? weakly_singular_solution(alpha_true) : smooth_solution(alpha_true);
  const SeparableSolution sol = *p.exact;
  p.source = [=](const Eigen::VectorXd& x, double t) {
    const double S = sine_product(x);
    const double v = sol.time_factor(t) * S;
    const double laplacian = -2 * kPi * kPi * v;
    return sol.time_caputo(alpha_true, t) * S - psi_true * (eps_true * eps_true * laplacian - (v * v * v - v));
  };
  if (weak_singularity) {
    p.initial = [](const Eigen::VectorXd& x) { return sine_product(x); };
    p.initial_lift = true;
  } else {
    p.initial = [](const Eigen::VectorXd&) { return 0.0; };
  }
  p.boundary = [](const Eigen::VectorXd&, double) { return 0.0; };
  p.mode = ConstraintMode::Hard;
  p.unknowns = {"alpha", "epsilon", "mobility"};
  p.truth = {{"alpha", alpha_true}, {"epsilon", eps_true}, {"mobility", psi_true}};
  p.terminal_points = 30;
  return p;
}

std::vector<std::string> problem_names() {
  return {"ntfsde1d", "ntfsde2d", "ntfsde3d", "burgers", "tffn1d", "tffn2d", "tfrd-inv", "tfac-inv"};
}

ProblemSpec make_problem(const std::string& name, std::optional<double> alpha) {
  if (name == "ntfsde1d") return ntfsde(1, alpha.value_or(0.5));
  if (name == "ntfsde2d") return ntfsde(2, alpha.value_or(0.5));
  if (name == "ntfsde3d") return ntfsde(3, alpha.value_or(0.5));
  if (name == "burgers") return burgers(2, alpha.value_or(0.5));
  if (name == "tffn1d") return tffn(1, alpha.value_or(0.5));
  if (name == "tffn2d") return tffn(2, alpha.value_or(0.5));
  if (name == "tfrd-inv") return tfrd_inverse(alpha.value_or(0.8));
  if (name == "tfac-inv") return tfac_inverse(alpha.value_or(0.5));
  throw ValidationError("problem", "unknown problem '" + name + "'");
}

double consistency_residual(const ProblemSpec& problem, int samples, std::uint64_t seed) {
  if (!problem.exact) throw ValidationError("problem", problem.name + " has no exact solution");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0;
  const auto coeffs = problem.params.coefficients();
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd x(problem.dim);
    for (int i = 0; i < problem.dim; ++i)
      x(i) = problem.domain.lower(i) + (problem.domain.upper(i) - problem.domain.lower(i)) * unit(rng);
    const double t = problem.horizon * (0.01 + 0.99 * unit(rng));
    const Jet<double> jet = problem.exact->jet(x, t);
    double S = 1;
    for (int i = 0; i < problem.dim; ++i) S *= std::sin(kPi * x(i));
    const double caputo = problem.exact->time_caputo(problem.alpha, t) * S;
    const double r = caputo + apply_operator(problem.op, coeffs, problem.params, jet) - problem.source(x, t);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

}  // namespace fracpinn

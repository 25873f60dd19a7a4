#pragma once

// Reverse-mode gradients of a benchmark loss against central differences.

#include <algorithm>
#include <cmath>
#include <random>

#include "fracpinn/constraints.hpp"
#include "fracpinn/harness.hpp"

namespace gradcheck {

struct Result {
  double max_rel_error{0};
  int checked{0};
  double loss{0};
};

// A small but complete loss for the problem: K = 6 graded levels, a 4-per-axis lattice, a 2 x 8 net.
// Parameters are the flattened network (slope included) followed by the problem's non-alpha unknowns.
class BenchmarkLoss {
 public:
  explicit BenchmarkLoss(const fracpinn::ProblemSpec& problem, std::uint64_t seed = 5) : problem_(problem) {
    using namespace fracpinn;
    const auto mesh = make_mesh(problem_, 6, "2/alpha");
    const auto soe = build_soe(problem_.alpha, 1e-8, default_dt_cutoff(mesh), problem_.horizon);
    CollocationOptions opt;
    opt.per_axis = problem_.dim == 3 ? 3 : 4;
    opt.initial_points = 8;
    opt.boundary_points = 8;
    opt.seed = seed;
    data_ = make_collocation(problem_, opt, problem_.mode);
    ctx_ = make_residual_context(problem_, mesh, soe, data_.points);
    trial_ = make_trial(problem_, problem_.mode, problem_.initial_lift ? problem_.alpha : 1.0);
    net_ = make_network(problem_, {8, 8}, seed, Activation::Swish, 2);
    net_.slope = 0.7;
    for (const auto& u : problem_.unknowns)
      if (u != "alpha") names_.push_back(u);
    params_ = Eigen::VectorXd(net_.parameter_count() + static_cast<int>(names_.size()));
    params_.head(net_.parameter_count()) = net_.flatten();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    // move biases and weights off their initial values so no slot is trivially zero
    for (int i = 0; i < net_.parameter_count() - 1; ++i) params_(i) += jitter(rng);
    for (std::size_t u = 0; u < names_.size(); ++u)
      params_(net_.parameter_count() + static_cast<int>(u)) = problem_.truth.at(names_[u]) * 0.8;
  }

  const Eigen::VectorXd& params() const { return params_; }

  double operator()(const Eigen::VectorXd& p, Eigen::VectorXd* gradient) const {
    using namespace fracpinn;
    Network net = net_;
    net.unflatten(p.head(net.parameter_count()));
    ad::Tape tape;
    const NetworkVars vars = register_network(tape, net, true, true);
    OperatorCoefficients<ad::Var> coeffs = constant_coefficients(tape, problem_.params);
    std::vector<ad::Var> leaves;
    for (std::size_t u = 0; u < names_.size(); ++u) {
      ad::Var leaf = tape.scalar(p(net.parameter_count() + static_cast<int>(u)), true);
      if (names_[u] == "lambda1") coeffs.lambda1 = leaf;
      if (names_[u] == "lambda2") coeffs.lambda2 = leaf;
      if (names_[u] == "epsilon") coeffs.epsilon = leaf;
      if (names_[u] == "mobility") coeffs.mobility = leaf;
      leaves.push_back(leaf);
    }
    const StageWindow window = stage_window(ctx_.mesh, ctx_.mesh.levels());
    ad::Var loss;
    if (!names_.empty())
      loss = inverse_loss(tape, trial_, vars, net, problem_, ctx_, window, data_, coeffs);
    else if (problem_.mode == ConstraintMode::Soft)
      loss = soft_loss(tape, trial_, vars, net, problem_, ctx_, window, data_, coeffs);
    else
      loss = forward_loss(tape, trial_, vars, net, problem_, ctx_, window, coeffs);
    if (gradient) {
      tape.backward(loss);
      gradient->resize(p.size());
      gradient->head(net.parameter_count()) = gather_gradient(tape, vars, net);
      for (std::size_t u = 0; u < leaves.size(); ++u)
        (*gradient)(net.parameter_count() + static_cast<int>(u)) = tape.grad(leaves[u])(0, 0);
    }
    return loss.value()(0, 0);
  }

  int unknown_count() const { return static_cast<int>(names_.size()); }

 private:
  fracpinn::ProblemSpec problem_;
  fracpinn::CollocationSet data_;
  fracpinn::ResidualContext ctx_;
  fracpinn::TrialFunction trial_;
  fracpinn::Network net_;
  std::vector<std::string> names_;
  Eigen::VectorXd params_;
};

// Relative error |g - fd| / max(|g|, |fd|, floor) with floor = 1e-8 max(1, loss): below the floor the
// central difference itself carries no digits.
inline Result check(const BenchmarkLoss& loss, int samples, double step = 1e-5, std::uint64_t seed = 17) {
  Result r;
  Eigen::VectorXd p = loss.params();
  Eigen::VectorXd g;
  r.loss = loss(p, &g);
  std::mt19937_64 rng(seed);
  std::vector<int> idx(static_cast<std::size_t>(p.size()));
  for (int i = 0; i < p.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  // always include the unknown coefficients, which sit at the end
  std::vector<int> picked;
  for (int u = 0; u < loss.unknown_count(); ++u) picked.push_back(static_cast<int>(p.size()) - 1 - u);
  for (int i : idx) {
    if (static_cast<int>(picked.size()) >= samples) break;
    if (std::find(picked.begin(), picked.end(), i) == picked.end()) picked.push_back(i);
  }
  const double floor = 1e-8 * std::max(1.0, std::abs(r.loss));
  for (int i : picked) {
    Eigen::VectorXd q = p;
    q(i) = p(i) + step;
    const double up = loss(q, nullptr);
    q(i) = p(i) - step;
    const double down = loss(q, nullptr);
    const double fd = (up - down) / (2 * step);
    const double rel = std::abs(g(i) - fd) / std::max({std::abs(g(i)), std::abs(fd), floor});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.checked;
  }
  return r;
}

}  // namespace gradcheck

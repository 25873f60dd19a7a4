#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fracpinn/errors.hpp"

namespace fracpinn {

template <typename Scalar = double>
struct MeshSpec {
  Scalar horizon{1};
  int levels{1};
  Scalar grading{1};
  Scalar alpha{Scalar(0.5)};

  void validate() const {
    if (!(horizon > 0) || !std::isfinite(static_cast<double>(horizon)))
      throw ValidationError("horizon", "must be a finite positive time");
    if (levels < 1) throw ValidationError("levels", "must be at least 1");
    if (!(grading >= 1) || !std::isfinite(static_cast<double>(grading)))
      throw ValidationError("grading", "must be a finite real >= 1");
    if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha", "must lie in (0,1)");
  }
};

/// Temporal mesh t_0 < ... < t_K with steps, step ratios and offset points.
/// Accessors use 1-based mesh indices: step(k) = t_k - t_{k-1}, ratio(k) = step(k)/step(k+1),
/// offset(k) = t_{k-theta}.
template <typename Scalar = double>
class TimeMesh {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  TimeMesh() = default;

  static TimeMesh graded(const MeshSpec<Scalar>& spec) {
    spec.validate();
    Vector nodes(spec.levels + 1);
    nodes(0) = 0;
    for (int k = 1; k < spec.levels; ++k) {
      const Scalar r = Scalar(k) / Scalar(spec.levels);
      nodes(k) = spec.horizon * std::pow(r, spec.grading);
    }
    nodes(spec.levels) = spec.horizon;
    TimeMesh mesh(std::move(nodes), spec.alpha);
    mesh.grading_ = spec.grading;
    return mesh;
  }

  /// Raw-nodes constructor: nodes must start at 0 and increase strictly.
  static TimeMesh from_nodes(const Vector& nodes, Scalar alpha) {
    if (nodes.size() < 2) throw ValidationError("nodes", "need at least two nodes");
    if (nodes(0) != 0) throw ValidationError("nodes", "first node must be 0");
    for (Eigen::Index k = 1; k < nodes.size(); ++k)
      if (!(nodes(k) > nodes(k - 1)))
        throw ValidationError("nodes", "must be strictly increasing (index " + std::to_string(k) + ")");
    if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha", "must lie in (0,1)");
    return TimeMesh(nodes, alpha);
  }

  /// Same nodes, new fractional order (theta and offsets recomputed).
  TimeMesh with_alpha(Scalar alpha) const {
    if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha", "must lie in (0,1)");
    TimeMesh mesh(nodes_, alpha);
    mesh.grading_ = grading_;
    return mesh;
  }

  int levels() const { return static_cast<int>(nodes_.size()) - 1; }
  Scalar horizon() const { return nodes_(levels()); }
  Scalar alpha() const { return alpha_; }
  Scalar theta() const { return alpha_ / 2; }
  /// Grading exponent when built by graded(); NaN for raw-node meshes.
  Scalar grading() const { return grading_; }

  Scalar node(int k) const { return nodes_(check(k, 0, levels())); }
  Scalar step(int k) const { return steps_(check(k, 1, levels())); }
  Scalar ratio(int k) const { return steps_(check(k, 1, levels() - 1)) / steps_(k + 1); }
  Scalar offset(int k) const { return offsets_(check(k, 1, levels())); }

  const Vector& nodes() const { return nodes_; }
  /// steps()(k) = tau_k for k >= 1; entry 0 is unused and set to 0.
  const Vector& steps() const { return steps_; }
  /// offsets()(k) = t_{k-theta} for k >= 1; entry 0 is unused and set to 0.
  const Vector& offsets() const { return offsets_; }

  Scalar max_ratio() const {
    Scalar m = 0;
    for (int k = 1; k < levels(); ++k) m = std::max(m, ratio(k));
    return m;
  }

 private:
  TimeMesh(Vector nodes, Scalar alpha) : nodes_(std::move(nodes)), alpha_(alpha) {
    const int K = levels();
    steps_ = Vector::Zero(K + 1);
    offsets_ = Vector::Zero(K + 1);
    const Scalar th = alpha_ / 2;
    for (int k = 1; k <= K; ++k) {
      steps_(k) = nodes_(k) - nodes_(k - 1);
      offsets_(k) = th * nodes_(k - 1) + (1 - th) * nodes_(k);
    }
  }

  int check(int k, int lo, int hi) const {
    if (k < lo || k > hi)
      throw IndexError("mesh index " + std::to_string(k) + " outside [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
    return k;
  }

  Vector nodes_;
  Vector steps_;
  Vector offsets_;
  Scalar alpha_{Scalar(0.5)};
  Scalar grading_{std::numeric_limits<Scalar>::quiet_NaN()};
};

template <typename Scalar>
TimeMesh<Scalar> build_graded_mesh(const MeshSpec<Scalar>& spec) {
  return TimeMesh<Scalar>::graded(spec);
}

/// M1: max_k rho_k <= 3/2 up to relative tolerance 1e-12.
template <typename Scalar>
bool check_m1(const TimeMesh<Scalar>& mesh) {
  return mesh.max_ratio() <= Scalar(1.5) * (1 + Scalar(1e-12));
}

template <typename Scalar = double>
struct M2Result {
  bool satisfied{false};
  Scalar c1{0};
  Scalar c2{0};
};

/// M2: smallest C1, C2 with tau_n <= tau min{1, C1 t_n^{1-1/gamma}} and t_n <= C2 t_{n-1} (n >= 2),
/// where tau is the largest step. Satisfied iff both constants are finite and <= cap.
template <typename Scalar>
M2Result<Scalar> check_m2(const TimeMesh<Scalar>& mesh, Scalar gamma, Scalar cap = 100) {
  M2Result<Scalar> r;
  const int K = mesh.levels();
  const Scalar tau = mesh.steps().tail(K).maxCoeff();
  const Scalar expo = 1 - 1 / gamma;
  for (int n = 1; n <= K; ++n) {
    const Scalar scale = tau * std::pow(mesh.node(n), expo);
    r.c1 = std::max(r.c1, mesh.step(n) / scale);
  }
  r.c2 = 1;
  for (int n = 2; n <= K; ++n) r.c2 = std::max(r.c2, mesh.node(n) / mesh.node(n - 1));
  r.satisfied = std::isfinite(static_cast<double>(r.c1)) && std::isfinite(static_cast<double>(r.c2)) &&
                r.c1 <= cap && r.c2 <= cap;
  return r;
}

/// Parse a grading token: "1", "2/alpha", "(3-alpha)/alpha" or a real number.
inline double parse_grading(const std::string& token, double alpha) {
  std::string t;
  for (char c : token)
    if (c != ' ') t += c;
  if (t == "2/alpha") return 2.0 / alpha;
  if (t == "(3-alpha)/alpha") return (3.0 - alpha) / alpha;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ValidationError("gamma", "unrecognized grading '" + token + "'");
  }
  if (used != t.size()) throw ValidationError("gamma", "unrecognized grading '" + token + "'");
  return v;
}

}  // namespace fracpinn

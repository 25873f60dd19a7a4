#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "fracpinn/activation.hpp"
#include "fracpinn/autodiff.hpp"

namespace fracpinn {

/// Dense feed-forward network: hidden layers sigma(n a (W h + b)), affine output layer.
/// Optional input box [input_lower, input_upper] is mapped affinely onto [-1, 1] before the first layer.
struct Network {
  std::vector<int> widths;  // d_0 .. d_L
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double slope{1.0};
  int scale{1};
  Activation activation{Activation::Swish};
  std::uint64_t seed{0};
  Eigen::VectorXd input_lower;
  Eigen::VectorXd input_upper;

  int input_dim() const { return widths.empty() ? 0 : widths.front(); }
  int layers() const { return static_cast<int>(weights.size()); }
  /// Number of W, b entries plus the slope.
  int parameter_count() const;
  /// W^1 row-major, b^1, ..., W^L, b^L, a.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& params);
  void set_input_box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);
};

/// W entries ~ N(0, 2/(d_l + d_{l+1})), biases zero, slope 1.
Network xavier_init(const std::vector<int>& widths, std::uint64_t seed, Activation activation = Activation::Swish,
                    int scale = 1);

/// Network parameters registered on a tape (leaves when trainable, constants otherwise).
struct NetworkVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  ad::Var slope;
};

NetworkVars register_network(ad::Tape& tape, const Network& net, bool trainable, bool slope_trainable = true);

/// Value and spatial derivative slots of a field over a batch (each slot is 1 x B).
template <typename T>
struct Jet {
  T value;
  std::vector<T> d1;  // d/dx_i
  std::vector<T> d2;  // d^2/dx_i^2
};

using TapeJet = Jet<ad::Var>;

/// Forward jet over inputs (rows: d_0 coordinates, columns: points); derivative slots for the
/// first `spatial_dims` coordinates. Recorded on the tape so losses built from the slots are
/// differentiable in every parameter.
TapeJet network_jet(ad::Tape& tape, const NetworkVars& vars, const Network& net, const Eigen::MatrixXd& inputs,
                    int spatial_dims);

/// Plain evaluation; shares the tape code path so values agree bitwise with network_jet.
Eigen::RowVectorXd forward(const Network& net, const Eigen::MatrixXd& inputs);

struct JetValues {
  Eigen::RowVectorXd value;
  std::vector<Eigen::RowVectorXd> d1;
  std::vector<Eigen::RowVectorXd> d2;
};

JetValues forward_jet(const Network& net, const Eigen::MatrixXd& inputs, int spatial_dims);

/// Gradient blocks of the registered leaves, flattened in Network::flatten order.
Eigen::VectorXd gather_gradient(const ad::Tape& tape, const NetworkVars& vars, const Network& net);

/// Binary snapshot: header (magic, version, widths, activation, scale, seed, scalar count) then
/// f64 parameters in flatten order followed by the registered scalars.
void save_snapshot(const std::string& path, const Network& net, const std::vector<double>& scalars = {});
Network load_snapshot(const std::string& path, std::vector<double>* scalars = nullptr);

}  // namespace fracpinn

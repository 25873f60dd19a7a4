#pragma once

#include <string>
#include <vector>

#include "fracpinn/autodiff.hpp"

namespace fracpinn {

enum class Activation { Sigmoid, Swish, SeLU, ReLU, Tanh, XTanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation kind);

/// SeLU constants.
inline constexpr double kSeluLambda = 1.0507;
inline constexpr double kSeluAlpha = 1.67326;

/// m-th derivative (m = 0..3) of the fixed activation, elementwise.
ad::Block activation_derivative(Activation kind, const ad::Block& u, int order);

struct ActivationValue {
  double value{0};
  double d1{0};
  double d2{0};
};

/// Adaptive activation sigma(n a x) and its first two derivatives in x.
ActivationValue activation_eval(Activation kind, double a, int n, double x);

/// sigma^{(order)}(u) recorded on the tape; the adjoint uses sigma^{(order+1)}.
ad::Var activate(ad::Var u, Activation kind, int order);
/// Orders 0..max_order of sigma at u on the tape, sharing one evaluation of the derivative stack.
std::vector<ad::Var> activate_jet(ad::Var u, Activation kind, int max_order);
/// Derivatives of orders 0..max_order (max_order <= 3).
std::vector<ad::Block> activation_derivatives(Activation kind, const ad::Block& u, int max_order);

}  // namespace fracpinn

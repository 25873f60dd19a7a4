#include "fracpinn/activation.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "fracpinn/errors.hpp"

namespace fracpinn {

Activation parse_activation(const std::string& name) {
  std::string s;
  for (char c : name) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "swish") return Activation::Swish;
  if (s == "selu") return Activation::SeLU;
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "xtanh") return Activation::XTanh;
  throw ValidationError("activation", "unknown activation '" + name + "'");
}

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Swish: return "swish";
    case Activation::SeLU: return "selu";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::XTanh: return "xtanh";
  }
  return "unknown";
}

namespace {

// sigmoid and its derivatives up to third order
void sigmoid_stack(const ad::Block& u, ad::Block* s, int order) {
  s[0] = 1.0 / (1.0 + (-u).exp());
  if (order >= 1) s[1] = s[0] * (1.0 - s[0]);
  if (order >= 2) s[2] = s[1] * (1.0 - 2.0 * s[0]);
  if (order >= 3) s[3] = s[2] * (1.0 - 2.0 * s[0]) - 2.0 * s[1].square();
}

void tanh_stack(const ad::Block& u, ad::Block* T, int order) {
  T[0] = u.tanh();
  if (order >= 1) T[1] = 1.0 - T[0].square();
  if (order >= 2) T[2] = -2.0 * T[0] * T[1];
  if (order >= 3) T[3] = -2.0 * (T[1].square() + T[0] * T[2]);
}

}  // namespace

std::vector<ad::Block> activation_derivatives(Activation kind, const ad::Block& u, int max_order) {
  if (max_order < 0 || max_order > 3) throw std::invalid_argument("activation_derivative: order must be 0..3");
  std::vector<ad::Block> out(static_cast<std::size_t>(max_order + 1));
  ad::Block stack[4];
  switch (kind) {
    case Activation::Sigmoid:
      sigmoid_stack(u, stack, max_order);
      for (int m = 0; m <= max_order; ++m) out[m] = std::move(stack[m]);
      return out;
    case Activation::Tanh:
      tanh_stack(u, stack, max_order);
      for (int m = 0; m <= max_order; ++m) out[m] = std::move(stack[m]);
      return out;
    case Activation::Swish:
    case Activation::XTanh:
      // f = u s, f^{(m)} = m s^{(m-1)} + u s^{(m)}
      if (kind == Activation::Swish) {
        sigmoid_stack(u, stack, max_order);
      } else {
        tanh_stack(u, stack, max_order);
      }
      out[0] = u * stack[0];
      for (int m = 1; m <= max_order; ++m) out[m] = double(m) * stack[m - 1] + u * stack[m];
      return out;
    case Activation::SeLU:
    case Activation::ReLU:
      for (int m = 0; m <= max_order; ++m) out[m] = activation_derivative(kind, u, m);
      return out;
  }
  throw std::invalid_argument("activation_derivative: unknown kind");
}

ad::Block activation_derivative(Activation kind, const ad::Block& u, int order) {
  if (order < 0 || order > 3) throw std::invalid_argument("activation_derivative: order must be 0..3");
  ad::Block stack[4];
  switch (kind) {
    case Activation::Sigmoid:
      sigmoid_stack(u, stack, order);
      return stack[order];
    case Activation::Tanh:
      tanh_stack(u, stack, order);
      return stack[order];
    case Activation::Swish:
      // f = u s, f^{(m)} = m s^{(m-1)} + u s^{(m)}
      sigmoid_stack(u, stack, order);
      if (order == 0) return u * stack[0];
      return double(order) * stack[order - 1] + u * stack[order];
    case Activation::XTanh:
      tanh_stack(u, stack, order);
      if (order == 0) return u * stack[0];
      return double(order) * stack[order - 1] + u * stack[order];
    case Activation::SeLU: {
      const ad::Block pos = (u > 0).cast<double>();
      const ad::Block e = kSeluLambda * kSeluAlpha * u.min(0.0).exp();
      if (order == 0) return pos * (kSeluLambda * u) + (1.0 - pos) * (e - kSeluLambda * kSeluAlpha);
      if (order == 1) return pos * kSeluLambda + (1.0 - pos) * e;
      return (1.0 - pos) * e;
    }
    case Activation::ReLU:
      if (order == 0) return u.max(0.0);
      if (order == 1) return (u > 0).cast<double>();
      return ad::Block::Zero(u.rows(), u.cols());
  }
  throw std::invalid_argument("activation_derivative: unknown kind");
}

ActivationValue activation_eval(Activation kind, double a, int n, double x) {
  const double na = static_cast<double>(n) * a;
  ad::Block u = ad::Block::Constant(1, 1, na * x);
  ActivationValue out;
  out.value = activation_derivative(kind, u, 0)(0, 0);
  out.d1 = na * activation_derivative(kind, u, 1)(0, 0);
  out.d2 = na * na * activation_derivative(kind, u, 2)(0, 0);
  return out;
}

std::vector<ad::Var> activate_jet(ad::Var u, Activation kind, int max_order) {
  std::vector<ad::Block> d = activation_derivatives(kind, u.value(), max_order + 1);
  std::vector<ad::Var> out;
  const bool needs = u.tape->needs_grad(u.id);
  for (int m = 0; m <= max_order; ++m) {
    if (!needs) {
      out.push_back(u.tape->constant(std::move(d[m])));
      continue;
    }
    ad::Block slope = m + 1 == max_order + 1 ? std::move(d[m + 1]) : d[m + 1];  // d[m+1] is also the next value
    out.push_back(ad::map(u, std::move(d[m]), std::move(slope)));
  }
  return out;
}

ad::Var activate(ad::Var u, Activation kind, int order) {
  ad::Block value = activation_derivative(kind, u.value(), order);
  if (!u.tape->needs_grad(u.id)) return u.tape->constant(std::move(value));
  ad::Block slope = activation_derivative(kind, u.value(), order + 1);
  return ad::map(u, std::move(value), std::move(slope));
}

}  // namespace fracpinn

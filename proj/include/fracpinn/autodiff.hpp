#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace fracpinn::ad {

/// Every tape node holds a dense block; columns usually index collocation points.
using Block = Eigen::ArrayXXd;

class Tape;

/// Handle to a tape node.
struct Var {
  Tape* tape{nullptr};
  int id{-1};

  bool valid() const { return tape != nullptr && id >= 0; }
  const Block& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward() sweeps them in reverse,
/// calling each node's adjoint closure with the accumulated output gradient.
class Tape {
 public:
  using Adjoint = std::function<void(Tape&, const Block& grad_out)>;

  /// Trainable input; its gradient is available after backward().
  Var leaf(Block value);
  Var constant(Block value);
  Var scalar(double value, bool trainable);

  /// Appends an operation node. `adjoint` is dropped when no input needs a gradient.
  Var record(Block value, bool needs_grad, Adjoint adjoint);

  /// Seeds d(root)/d(root) = 1 and propagates; root must be 1x1.
  void backward(Var root);

  const Block& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  bool is_leaf(int id) const { return nodes_[static_cast<std::size_t>(id)].leaf; }
  /// Gradient of the last backward() root with respect to a trainable leaf (zero block if the root
  /// does not depend on it). Throws for constants, operation nodes, and foreign handles.
  Block grad(Var v) const;
  /// Adds g into the gradient buffer of node id (no-op if the node does not need a gradient).
  void accumulate(int id, const Block& g);
  void accumulate(int id, Block&& g);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Block value;
    Block grad;
    Adjoint adjoint;
    bool needs_grad{false};
    bool leaf{false};
  };
  std::vector<Node> nodes_;
  bool swept_{false};
};

// Elementwise binary operations broadcast dimensions of extent 1 (scalars, rows, columns).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var shift(Var a, double c);
/// a^p elementwise (real p; integer-valued p accepts negative bases).
Var pow(Var a, double p);
Var square(Var a);
Var tanh(Var a);
/// Matrix product of the underlying dense blocks.
Var matmul(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
/// Columns [start, start + count).
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Rows [start, start + count).
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
/// Horizontal concatenation.
Var concat_cols(const std::vector<Var>& parts);

/// Elementwise map with a caller-supplied derivative: value f(a), adjoint g * df(a).
Var map(Var a, Block value, Block derivative);

/// Linear operator node: value is supplied, the adjoint maps the output gradient to the input gradient.
Var linear(Var input, Block value, std::function<Block(const Block& grad_out)> adjoint);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator+(double c, Var a) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }
inline Var operator-(double c, Var a) { return shift(neg(a), c); }

}  // namespace fracpinn::ad

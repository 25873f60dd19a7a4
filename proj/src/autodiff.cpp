#include "fracpinn/autodiff.hpp"

#include <stdexcept>
#include <string>

namespace fracpinn::ad {

namespace {

Eigen::Index broadcast_extent(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw std::invalid_argument(std::string("broadcast mismatch in ") + what + ": " + std::to_string(a) + " vs " +
                              std::to_string(b));
}

Block expand(const Block& x, Eigen::Index rows, Eigen::Index cols) {
  if (x.rows() == rows && x.cols() == cols) return x;
  return x.replicate(rows / x.rows(), cols / x.cols());
}

/// Sums a broadcast gradient back to the operand shape.
Block reduce(const Block& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Block::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape != b.tape) throw std::invalid_argument("operands live on different tapes");
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("invalid tape handle");
  return *a.tape;
}

}  // namespace

const Block& Var::value() const {
  if (!valid()) throw std::invalid_argument("invalid tape handle");
  return tape->value(id);
}

Var Tape::leaf(Block value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Block value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::scalar(double value, bool trainable) {
  Block b = Block::Constant(1, 1, value);
  return trainable ? leaf(std::move(b)) : constant(std::move(b));
}

Var Tape::record(Block value, bool needs_grad, Adjoint adjoint) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Block& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::accumulate(int id, Block&& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = std::move(g);
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: root belongs to another tape");
  if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward: root must be a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  accumulate(root.id, Block::Ones(1, 1));
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.adjoint || n.grad.size() == 0) continue;
    const Block g = std::move(n.grad);  // operation nodes do not keep their gradient
    n.adjoint(*this, g);
  }
  swept_ = true;
}

Block Tape::grad(Var v) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::invalid_argument("grad: handle not recorded on this tape");
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.leaf) throw std::invalid_argument("grad: node " + std::to_string(v.id) + " is not a trainable leaf");
  if (!swept_ || n.grad.size() == 0) return Block::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

/// Gradient for an operand of shape (rows, cols) from an output gradient that may be broadcast.
void accumulate_reduced(Tape& tp, int id, Block g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) {
    tp.accumulate(id, std::move(g));
  } else {
    tp.accumulate(id, reduce(g, rows, cols));
  }
}

template <typename Op>
Block broadcast_apply(const Block& a, const Block& b, Eigen::Index r, Eigen::Index c, Op op) {
  if (a.rows() == r && a.cols() == c && b.rows() == r && b.cols() == c) return op(a, b);
  return op(expand(a, r, c), expand(b, r, c));
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const auto r = broadcast_extent(a.rows(), b.rows(), "add"), c = broadcast_extent(a.cols(), b.cols(), "add");
  Block v = broadcast_apply(a.value(), b.value(), r, c, [](const Block& x, const Block& y) -> Block { return x + y; });
  const auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const int ia = a.id, ib = b.id;
  return t.record(std::move(v), t.needs_grad(ia) || t.needs_grad(ib), [=](Tape& tp, const Block& g) {
    if (tp.needs_grad(ia)) accumulate_reduced(tp, ia, g, ar, ac);
    if (tp.needs_grad(ib)) accumulate_reduced(tp, ib, g, br, bc);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const auto r = broadcast_extent(a.rows(), b.rows(), "sub"), c = broadcast_extent(a.cols(), b.cols(), "sub");
  Block v = broadcast_apply(a.value(), b.value(), r, c, [](const Block& x, const Block& y) -> Block { return x - y; });
  const auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const int ia = a.id, ib = b.id;
  return t.record(std::move(v), t.needs_grad(ia) || t.needs_grad(ib), [=](Tape& tp, const Block& g) {
    if (tp.needs_grad(ia)) accumulate_reduced(tp, ia, g, ar, ac);
    if (tp.needs_grad(ib)) accumulate_reduced(tp, ib, -g, br, bc);
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const auto r = broadcast_extent(a.rows(), b.rows(), "mul"), c = broadcast_extent(a.cols(), b.cols(), "mul");
  Block v = broadcast_apply(a.value(), b.value(), r, c, [](const Block& x, const Block& y) -> Block { return x * y; });
  const auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const int ia = a.id, ib = b.id;
  auto times = [r, c](const Block& g, const Block& other) -> Block {
    if (other.rows() == r && other.cols() == c) return g * other;
    return g * expand(other, r, c);
  };
  return t.record(std::move(v), t.needs_grad(ia) || t.needs_grad(ib), [=](Tape& tp, const Block& g) {
    if (tp.needs_grad(ia)) accumulate_reduced(tp, ia, times(g, tp.value(ib)), ar, ac);
    if (tp.needs_grad(ib)) accumulate_reduced(tp, ib, times(g, tp.value(ia)), br, bc);
  });
}

Var neg(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.record(-a.value(), t.needs_grad(ia), [=](Tape& tp, const Block& g) { tp.accumulate(ia, -g); });
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.record(c * a.value(), t.needs_grad(ia), [=](Tape& tp, const Block& g) { tp.accumulate(ia, c * g); });
}

Var shift(Var a, double c) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.record(a.value() + c, t.needs_grad(ia), [=](Tape& tp, const Block& g) { tp.accumulate(ia, g); });
}

Var pow(Var a, double p) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  Block v = a.value().pow(p);
  return t.record(std::move(v), t.needs_grad(ia), [=](Tape& tp, const Block& g) {
    tp.accumulate(ia, g * p * tp.value(ia).pow(p - 1));
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.record(a.value().square(), t.needs_grad(ia),
                  [=](Tape& tp, const Block& g) { tp.accumulate(ia, 2 * g * tp.value(ia)); });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  Block v = a.value().tanh();
  const int out = static_cast<int>(t.size());
  return t.record(std::move(v), t.needs_grad(ia), [=](Tape& tp, const Block& g) {
    tp.accumulate(ia, g * (1 - tp.value(out).square()));
  });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()));
  Block v = (a.value().matrix() * b.value().matrix()).array();
  const int ia = a.id, ib = b.id;
  return t.record(std::move(v), t.needs_grad(ia) || t.needs_grad(ib), [=](Tape& tp, const Block& g) {
    if (tp.needs_grad(ia)) tp.accumulate(ia, (g.matrix() * tp.value(ib).matrix().transpose()).array());
    if (tp.needs_grad(ib)) tp.accumulate(ib, (tp.value(ia).matrix().transpose() * g.matrix()).array());
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  const auto r = a.rows(), c = a.cols();
  return t.record(Block::Constant(1, 1, a.value().sum()), t.needs_grad(ia),
                  [=](Tape& tp, const Block& g) { tp.accumulate(ia, Block::Constant(r, c, g(0, 0))); });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of an empty block");
  Tape& t = tape_of(a);
  const int ia = a.id;
  const auto r = a.rows(), c = a.cols();
  return t.record(Block::Constant(1, 1, a.value().sum() / n), t.needs_grad(ia),
                  [=](Tape& tp, const Block& g) { tp.accumulate(ia, Block::Constant(r, c, g(0, 0) / n)); });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  const int ia = a.id;
  const auto r = a.rows(), c = a.cols();
  return t.record(a.value().middleCols(start, count), t.needs_grad(ia), [=](Tape& tp, const Block& g) {
    Block full = Block::Zero(r, c);
    full.middleCols(start, count) = g;
    tp.accumulate(ia, full);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
  const int ia = a.id;
  const auto r = a.rows(), c = a.cols();
  return t.record(a.value().middleRows(start, count), t.needs_grad(ia), [=](Tape& tp, const Block& g) {
    Block full = Block::Zero(r, c);
    full.middleRows(start, count) = g;
    tp.accumulate(ia, full);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = tape_of(parts.front());
  const auto r = parts.front().rows();
  Eigen::Index total = 0;
  bool needs = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (p.tape != &t) throw std::invalid_argument("concat_cols: operands live on different tapes");
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
    total += p.cols();
    needs = needs || t.needs_grad(p.id);
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  Block v(r, total);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record(std::move(v), needs, [ids, widths](Tape& tp, const Block& g) {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      tp.accumulate(ids[i], g.middleCols(off, widths[i]));
      off += widths[i];
    }
  });
}

Var map(Var a, Block value, Block derivative) {
  Tape& t = tape_of(a);
  if (value.rows() != a.rows() || value.cols() != a.cols() || derivative.rows() != a.rows() ||
      derivative.cols() != a.cols())
    throw std::invalid_argument("map: shape mismatch");
  const int ia = a.id;
  return t.record(std::move(value), t.needs_grad(ia),
                  [ia, d = std::move(derivative)](Tape& tp, const Block& g) { tp.accumulate(ia, g * d); });
}

Var linear(Var input, Block value, std::function<Block(const Block&)> adjoint) {
  Tape& t = tape_of(input);
  const int ia = input.id;
  return t.record(std::move(value), t.needs_grad(ia),
                  [ia, adj = std::move(adjoint)](Tape& tp, const Block& g) { tp.accumulate(ia, adj(g)); });
}

}  // namespace fracpinn::ad

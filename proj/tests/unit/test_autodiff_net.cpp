#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <random>

#include "fracpinn/activation.hpp"
#include "fracpinn/autodiff.hpp"
#include "fracpinn/constraints.hpp"
#include "fracpinn/network.hpp"
#include "../support/gradcheck.hpp"

using namespace fracpinn;

namespace {

// d(sum of f(leaf))/d(leaf) by reverse mode and by central differences
template <typename F>
double max_fd_gap(const ad::Block& x0, F f, double h = 1e-6) {
  ad::Tape tape;
  ad::Var x = tape.leaf(x0);
  tape.backward(ad::sum(f(x)));
  const ad::Block g = tape.grad(x);
  double worst = 0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    ad::Block xp = x0, xm = x0;
    xp(i) += h;
    xm(i) -= h;
    ad::Tape t1, t2;
    const double up = ad::sum(f(t1.constant(xp))).value()(0, 0);
    const double down = ad::sum(f(t2.constant(xm))).value()(0, 0);
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - g(i)) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise operations and broadcasting") {
  ad::Block x = ad::Block::Random(3, 4) + 2;
  ad::Block row = ad::Block::Random(1, 4);
  ad::Block col = ad::Block::Random(3, 1);
  CHECK(max_fd_gap(x, [&](ad::Var v) { return v * v.tape->constant(row) + v.tape->constant(col); }) < 1e-7);
  CHECK(max_fd_gap(x, [&](ad::Var v) { return ad::pow(v, 1.7) - ad::tanh(v) * 3.0; }) < 1e-7);
  CHECK(max_fd_gap(x, [&](ad::Var v) { return ad::square(ad::slice_cols(v, 1, 2)); }) < 1e-7);
  CHECK(max_fd_gap(x, [&](ad::Var v) { return ad::concat_cols({ad::slice_rows(v, 0, 1), ad::mean(v)}); }) < 1e-7);
  const ad::Block left = ad::Block::Random(2, 3);
  CHECK(max_fd_gap(x, [&](ad::Var v) { return ad::matmul(v.tape->constant(left), v); }) < 1e-7);
  // broadcast in the other direction: a row leaf against a full block
  CHECK(max_fd_gap(row, [&](ad::Var v) { return v * v.tape->constant(x) - v; }) < 1e-7);
}

TEST_CASE("integer powers accept negative bases") {
  ad::Block x(1, 3);
  x << -1.5, -0.2, 0.7;
  CHECK(max_fd_gap(x, [](ad::Var v) { return ad::pow(v, 3.0); }) < 1e-7);
}

TEST_CASE("gradients are only served for leaves") {
  ad::Tape tape;
  ad::Var a = tape.leaf(ad::Block::Ones(1, 1));
  ad::Var c = tape.constant(ad::Block::Ones(1, 1));
  ad::Var y = a * c;
  tape.backward(y);
  CHECK(tape.grad(a)(0, 0) == 1.0);
  CHECK_THROWS(tape.grad(c));
  CHECK_THROWS(tape.grad(y));
  ad::Tape other;
  CHECK_THROWS(other.backward(other.leaf(ad::Block::Ones(2, 1))));
}

TEST_CASE("activation values") {
  CHECK(activation_eval(Activation::Swish, 1, 1, 0).value == 0.0);
  CHECK(activation_eval(Activation::Tanh, 1, 2, 0.5).value == doctest::Approx(0.76159416).epsilon(1e-8));
  const auto s = activation_eval(Activation::Sigmoid, 1, 1, 0);
  CHECK(s.value == doctest::Approx(0.5));
  CHECK(s.d1 == doctest::Approx(0.25));
  CHECK(parse_activation(to_string(Activation::XTanh)) == Activation::XTanh);
  CHECK_THROWS_AS(parse_activation("softsign"), ValidationError);
}

TEST_CASE("activation derivatives against differences") {
  ad::Block u = Eigen::RowVectorXd::LinSpaced(9, -2.1, 1.9).array();
  for (Activation kind : {Activation::Sigmoid, Activation::Swish, Activation::SeLU, Activation::Tanh, Activation::XTanh}) {
    for (int m = 0; m < 3; ++m) {
      const double h = 1e-5;
      const ad::Block fd = (activation_derivative(kind, u + h, m) - activation_derivative(kind, u - h, m)) / (2 * h);
      const ad::Block an = activation_derivative(kind, u, m + 1);
      CHECK((fd - an).abs().maxCoeff() < 1e-6 * std::max(1.0, an.abs().maxCoeff()));
    }
    const auto stack = activation_derivatives(kind, u, 3);
    for (int m = 0; m <= 3; ++m) CHECK((stack[static_cast<std::size_t>(m)] - activation_derivative(kind, u, m)).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("zero network gives zero output") {
  Network net = xavier_init({2, 5, 1}, 3);
  net.unflatten(Eigen::VectorXd::Zero(net.parameter_count()));
  net.slope = 1;
  CHECK(forward(net, Eigen::MatrixXd::Random(2, 7)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("initialization is reproducible bitwise") {
  Network a = xavier_init({3, 10, 10, 1}, 42, Activation::Tanh);
  Network b = xavier_init({3, 10, 10, 1}, 42, Activation::Tanh);
  CHECK(a.flatten() == b.flatten());
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
  CHECK(forward(a, x) == forward(b, x));
  Network c = xavier_init({3, 10, 10, 1}, 43, Activation::Tanh);
  CHECK(a.flatten() != c.flatten());
  CHECK(a.parameter_count() == 3 * 10 + 10 + 10 * 10 + 10 + 10 + 1 + 1);
}

TEST_CASE("jet matches the plain forward pass and finite differences") {
  Network net = xavier_init({3, 12, 12, 1}, 9, Activation::Swish, 3);
  net.slope = 0.4;
  Eigen::VectorXd lo(3), hi(3);
  lo << 0, -1, 0;
  hi << 1, 1, 2;
  net.set_input_box(lo, hi);
  const Eigen::MatrixXd x = (Eigen::MatrixXd::Random(3, 6).array() + 1) * 0.5;
  const JetValues jet = forward_jet(net, x, 2);
  CHECK(jet.value == forward(net, x));
  const double h = 1e-4;
  for (int i = 0; i < 2; ++i) {
    Eigen::MatrixXd xp = x, xm = x;
    xp.row(i).array() += h;
    xm.row(i).array() -= h;
    const Eigen::RowVectorXd fp = forward(net, xp), fm = forward(net, xm), f0 = forward(net, x);
    const Eigen::RowVectorXd d1 = (fp - fm) / (2 * h);
    const Eigen::RowVectorXd d2 = (fp - 2 * f0 + fm) / (h * h);
    CHECK((d1 - jet.d1[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff() < 1e-4 * std::max(1.0, d1.cwiseAbs().maxCoeff()));
    CHECK((d2 - jet.d2[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff() < 1e-4 * std::max(1.0, d2.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("squared output is stationary at zero output") {
  Network net = xavier_init({2, 4, 1}, 1);
  Eigen::VectorXd p = net.flatten();
  p.setZero();
  net.unflatten(p);
  ad::Tape tape;
  NetworkVars vars = register_network(tape, net, true, true);
  TapeJet jet = network_jet(tape, vars, net, Eigen::MatrixXd::Random(2, 3), 0);
  tape.backward(ad::sum(ad::square(jet.value)));
  CHECK(gather_gradient(tape, vars, net).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("snapshot round trip") {
  Network net = xavier_init({2, 6, 1}, 77, Activation::SeLU, 2);
  net.slope = 0.33;
  Eigen::VectorXd lo(2), hi(2);
  lo << -1, 0;
  hi << 1, 3;
  net.set_input_box(lo, hi);
  const auto path = std::filesystem::temp_directory_path() / "fracpinn_snapshot_test.bin";
  save_snapshot(path.string(), net, {0.75, -2.0});
  std::vector<double> scalars;
  Network back = load_snapshot(path.string(), &scalars);
  std::filesystem::remove(path);
  CHECK(back.flatten() == net.flatten());
  CHECK(back.widths == net.widths);
  CHECK(back.activation == net.activation);
  CHECK(back.scale == 2);
  CHECK(back.seed == 77);
  CHECK(back.input_lower == lo);
  CHECK(back.input_upper == hi);
  CHECK(scalars == std::vector<double>{0.75, -2.0});
  CHECK_THROWS(load_snapshot("/nonexistent/fracpinn.bin"));
}

TEST_CASE("fast Caputo operator adjoint") {
  MeshSpec<double> s;
  s.levels = 6;
  s.grading = 3;
  s.alpha = 0.4;
  const auto mesh = build_graded_mesh(s);
  const auto table = build_fast_table(mesh, build_soe(0.4, 1e-8, default_dt_cutoff(mesh), 1.0));
  const int N = 3, j = 5;
  ad::Block u = ad::Block::Random(1, (j + 1) * N);
  ad::Block w = ad::Block::Random(1, j * N);
  auto f = [&](ad::Var v) { return fast_caputo_op(v, table, j, N) * v.tape->constant(w); };
  CHECK(max_fd_gap(u, f) < 1e-7);
  // values agree with the scalar recursion at each point
  ad::Tape tape;
  const ad::Block out = fast_caputo_op(tape.constant(u), table, j, N).value();
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd series = Eigen::VectorXd::Zero(7);
    for (int k = 0; k <= j; ++k) series(k) = u(0, k * N + i);
    series(6) = series(5);
    const Eigen::VectorXd ref = fast_caputo_series(table, series);
    for (int k = 1; k <= j; ++k) CHECK(out(0, (k - 1) * N + i) == doctest::Approx(ref(k)).epsilon(1e-12));
  }
}

TEST_CASE("benchmark loss gradients") {
  for (const char* name : {"ntfsde1d", "burgers", "tffn1d", "tfrd-inv"}) {
    INFO(name);
    gradcheck::BenchmarkLoss loss(make_problem(name));
    const auto r = gradcheck::check(loss, 20);
    CHECK(r.checked >= 20);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("inverse coefficients receive gradient") {
  gradcheck::BenchmarkLoss loss(make_problem("tfac-inv"));
  Eigen::VectorXd g;
  loss(loss.params(), &g);
  CHECK(loss.unknown_count() == 2);
  CHECK(std::abs(g(g.size() - 1)) > 0);
  CHECK(std::abs(g(g.size() - 2)) > 0);
}

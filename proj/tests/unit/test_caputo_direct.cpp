#include "doctest.h"

#include <random>

#include "fracpinn/caputo_direct.hpp"
#include "../support/oracles.hpp"

using namespace fracpinn;

namespace {

TimeMesh<double> graded(int K, double gamma, double alpha) {
  MeshSpec<double> s;
  s.levels = K;
  s.grading = gamma;
  s.alpha = alpha;
  return build_graded_mesh(s);
}

}  // namespace

TEST_CASE("a and b against quadrature") {
  std::mt19937_64 rng(11);
  int cases = 0;
  for (double alpha : {0.3, 0.5, 0.9}) {
    for (double gamma : {1.0, 2 / alpha, (3 - alpha) / alpha}) {
      auto m = graded(32, gamma, alpha);
      for (int rep = 0; rep < 12; ++rep) {
        const int k = std::uniform_int_distribution<int>(2, 32)(rng);
        const int n = std::uniform_int_distribution<int>(1, k)(rng);
        CHECK(oracle::close(coeff_a(m, k, n), oracle::coeff_a(m, k, n), 1e-11));
        if (n < k) CHECK(oracle::close(coeff_b(m, k, n), oracle::coeff_b(m, k, n), 1e-11));
        ++cases;
      }
      // the last level contains the strongest cancellation in the textbook form
      CHECK(oracle::close(coeff_a(m, 32, 1), oracle::coeff_a(m, 32, 1), 1e-11));
      CHECK(oracle::close(coeff_b(m, 32, 1), oracle::coeff_b(m, 32, 1), 1e-11));
    }
  }
  CHECK(cases == 108);
}

TEST_CASE("leading coefficient for two orders on one mesh") {
  auto m = graded(16, 4, 0.5);
  for (double alpha : {0.3, 0.9}) {
    auto mm = m.with_alpha(alpha);
    for (int k = 1; k <= 16; ++k) CHECK(oracle::close(coeff_a(mm, k, k), oracle::coeff_a(mm, k, k), 1e-11));
  }
}

TEST_CASE("coefficient indices are checked") {
  auto m = graded(4, 1, 0.5);
  CHECK_THROWS_AS(coeff_a(m, 5, 1), IndexError);
  CHECK_THROWS_AS(coeff_a(m, 2, 3), IndexError);
  CHECK_THROWS_AS(coeff_b(m, 2, 2), IndexError);
  CHECK_THROWS_AS(assemble_D(m, 0), IndexError);
  CHECK_THROWS_AS(omega(0.0, 1.0), DomainError);
}

TEST_CASE("single level kernel is a") {
  auto m = graded(1, 1, 0.5);
  auto ks = assemble_D(m, 1);
  CHECK(ks.kernels(1) == coeff_a(m, 1, 1));
}

TEST_CASE("constant series has zero Caputo derivative") {
  auto m = graded(16, 4, 0.5);
  auto table = build_kernel_table(m);
  Eigen::VectorXd v = Eigen::VectorXd::Constant(17, 3.5);
  CHECK(direct_caputo_series(table, v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear series is reproduced exactly") {
  // the interpolant is exact for linear data, so the only error left is roundoff
  for (int K : {8, 16, 32, 64}) {
    auto m = graded(K, 1, 0.5);
    auto d = direct_caputo_series(build_kernel_table(m), Eigen::VectorXd(m.nodes()));
    for (int k = 1; k <= K; ++k) CHECK(d(k) == doctest::Approx(std::pow(m.offset(k), 0.5) / std::tgamma(1.5)).epsilon(1e-13));
  }
  CHECK(1 / std::tgamma(1.5) == doctest::Approx(1.12837917).epsilon(1e-8));
}

TEST_CASE("cubic series converges at second order on a uniform mesh") {
  const double alpha = 0.5;
  std::vector<double> err;
  for (int K : {8, 16, 32, 64}) {
    auto m = graded(K, 1, alpha);
    Eigen::VectorXd v = m.nodes().array().cube();
    auto d = direct_caputo_series(build_kernel_table(m), v);
    double e = 0;
    for (int k = 1; k <= K; ++k) e = std::max(e, std::abs(d(k) - 6 * omega(4 - alpha, m.offset(k))));
    err.push_back(e);
  }
  for (std::size_t i = 0; i + 1 < err.size(); ++i) CHECK(std::log2(err[i] / err[i + 1]) >= 1.9);
}

TEST_CASE("kernel properties hold on graded meshes") {
  for (double alpha : {0.3, 0.9}) {
    for (double gamma : {1.0, (3 - alpha) / alpha}) {
      auto rep = check_kernel_properties(graded(32, gamma, alpha));
      CHECK(rep.all_gating_hold());
      for (const auto& p : rep.predicates) CHECK(p.checked > 0);
    }
  }
}

TEST_CASE("complementary kernels invert the convolution") {
  auto m = graded(12, 3, 0.6);
  auto table = build_kernel_table(m, true);
  // sum_{i=n}^{k} C^{(k-i,k)} D^{(i-n,i)} = 1 for every n <= k
  for (int k = 1; k <= 12; ++k) {
    const auto& C = table.complementary[static_cast<std::size_t>(k - 1)];
    for (int n = 1; n <= k; ++n) {
      double s = 0;
      for (int i = n; i <= k; ++i) s += C(i) * table.level(i).kernels(n);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  // the round trip: v recovered from its discrete derivatives
  Eigen::VectorXd v(13);
  for (int k = 0; k <= 12; ++k) v(k) = std::sin(3 * m.node(k)) + m.node(k);
  auto d = direct_caputo_series(table, v);
  for (int k = 1; k <= 12; ++k) {
    const auto& C = table.complementary[static_cast<std::size_t>(k - 1)];
    double back = v(0);
    for (int j = 1; j <= k; ++j) back += C(j) * d(j);
    CHECK(back == doctest::Approx(v(k)).epsilon(1e-11));
  }
}

TEST_CASE("kernel cache rebuilds only on change") {
  KernelCache cache;
  auto m = graded(8, 2, 0.5);
  auto a = cache.get(m);
  auto b = cache.get(m);
  CHECK(a.get() == b.get());
  CHECK(cache.rebuilds() == 1);
  cache.get(m.with_alpha(0.6));
  CHECK(cache.rebuilds() == 2);
}

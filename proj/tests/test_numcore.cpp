#include <doctest.h>

#include <cstdlib>
#include <set>
#include <vector>

#include "mmea/numcore.hpp"
#include "support.hpp"

using mmea::Matrix;
using mmea::Param;

TEST_CASE("matmul checks shapes") {
  Matrix a(2, 3), b(2, 2);
  a.setOnes();
  b.setOnes();
  CHECK_THROWS_AS(mmea::matmul(a, b), std::invalid_argument);
  Matrix c(3, 1);
  c << 1, 2, 3;
  const Matrix p = mmea::matmul(a, c);
  CHECK(p(0, 0) == 6.0);
  CHECK(p(1, 0) == 6.0);
}

TEST_CASE("row_l2_normalize leaves zero rows alone") {
  Matrix x(3, 2);
  x << 3, 4, 0, 0, -2, 0;
  const Matrix n = mmea::row_l2_normalize(x);
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));
  CHECK(n(1, 0) == 0.0);
  CHECK(n(1, 1) == 0.0);
  CHECK(n(2, 0) == doctest::Approx(-1.0));
}

TEST_CASE("row_l2_normalize_backward matches finite differences") {
  std::mt19937_64 rng(3);
  Param x("x", testsupport::random_matrix(4, 5, rng));
  const Matrix up = testsupport::random_matrix(4, 5, rng);
  auto loss = [&] { return (mmea::row_l2_normalize(x.value).array() * up.array()).sum(); };
  const Matrix analytic = mmea::row_l2_normalize_backward(x.value, mmea::row_l2_normalize(x.value), up);
  const Matrix numeric = testsupport::finite_difference(loss, x);
  CHECK(testsupport::max_rel_error(analytic, numeric) < 1e-6);

  Matrix zero = Matrix::Zero(1, 3);
  const Matrix g = mmea::row_l2_normalize_backward(zero, zero, Matrix::Ones(1, 3));
  CHECK(g.isZero(0.0));
}

TEST_CASE("grad_check accepts a correct gradient and flags a wrong one") {
  std::mt19937_64 rng(1);
  Param w("w", testsupport::random_matrix(3, 3, rng));
  auto loss = [&] { return w.value.array().square().sum() + w.value(0, 1) * w.value(2, 2); };
  auto fill = [&] {
    w.grad = 2.0 * w.value;
    w.grad(0, 1) += w.value(2, 2);
    w.grad(2, 2) += w.value(0, 1);
  };
  std::vector<Param*> ps{&w};
  fill();
  auto rep = mmea::grad_check(loss, ps);
  CHECK(rep.passed());
  CHECK(rep.max_rel_error < 1e-6);
  CHECK(rep.params.at(0).entries_checked == 9);

  fill();
  w.grad(1, 1) *= 2.0;
  rep = mmea::grad_check(loss, ps);
  CHECK_FALSE(rep.passed());
  REQUIRE(rep.flagged.size() == 1);
  CHECK(rep.flagged[0].index == 4);
}

TEST_CASE("grad_check restores values and can subsample") {
  std::mt19937_64 rng(2);
  Param w("w", testsupport::random_matrix(10, 10, rng));
  const Matrix before = w.value;
  w.grad = 3.0 * w.value.array().square().matrix();
  auto loss = [&] { return w.value.array().cube().sum(); };
  std::vector<Param*> ps{&w};
  mmea::GradCheckOptions opts;
  opts.max_entries_per_param = 7;
  const auto rep = mmea::grad_check(loss, ps, opts);
  CHECK(rep.params.at(0).entries_checked == 7);
  CHECK(rep.passed());
  CHECK(w.value == before);
}

TEST_CASE("grad_check rejects a non-finite loss") {
  Param w("w", Matrix::Ones(1, 1));
  std::vector<Param*> ps{&w};
  CHECK_THROWS_AS(mmea::grad_check([] { return std::nan(""); }, ps), std::domain_error);
}

TEST_CASE("ensure_finite") {
  Matrix m = Matrix::Zero(2, 2);
  CHECK_NOTHROW(mmea::ensure_finite(m, "m"));
  m(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(mmea::ensure_finite(m, "m"), std::domain_error);
}

TEST_CASE("derive_seed gives distinct, repeatable streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 100; ++s) seen.insert(mmea::derive_seed(42, s));
  CHECK(seen.size() == 100);
  CHECK(mmea::derive_seed(42, 7) == mmea::derive_seed(42, 7));
  CHECK(mmea::derive_seed(42, 7) != mmea::derive_seed(43, 7));
}

TEST_CASE("parallel_for visits every index once under MMEA_THREADS") {
  ::setenv("MMEA_THREADS", "3", 1);
  CHECK(mmea::thread_budget() == 3);
  std::vector<int> hits(1000, 0);
  mmea::parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) REQUIRE(h == 1);
  ::setenv("MMEA_THREADS", "0", 1);
  CHECK(mmea::thread_budget() == 1);
  ::unsetenv("MMEA_THREADS");
  CHECK(mmea::thread_budget() == 1);
}

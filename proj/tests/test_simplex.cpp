#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "stochdual/simplex.hpp"

using namespace stochdual;

namespace {

template <class S>
LpResult<S> run(const std::vector<std::vector<S>>& Ain, const std::vector<S>& bin,
                const std::vector<std::vector<S>>& Ein, const std::vector<S>& din,
                const std::vector<S>& cin) {
  const int n = static_cast<int>(cin.size());
  MatX<S> A(Ain.size(), n), E(Ein.size(), n);
  for (std::size_t i = 0; i < Ain.size(); ++i)
    for (int j = 0; j < n; ++j) A(i, j) = Ain[i][j];
  for (std::size_t i = 0; i < Ein.size(); ++i)
    for (int j = 0; j < n; ++j) E(i, j) = Ein[i][j];
  VecX<S> b = to_vec(bin), d = to_vec(din), c = to_vec(cin);
  return solve_lp<S>(A, b, E, d, c);
}

}  // namespace

TEST_CASE("basic lp") {
  // min -x - y st x <= 2, y <= 3, x + y <= 4
  auto r = run<double>({{1, 0}, {0, 1}, {1, 1}}, {2, 3, 4}, {}, {}, {-1, -1});
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.objective == doctest::Approx(-4.0));
  // dual feasibility: c + A'lambda = 0
  CHECK(r.lambda.minCoeff() >= 0.0);
  VecX<double> g = VecX<double>::Zero(2);
  g << -1, -1;
  g += r.lambda[0] * VecX<double>(Eigen::Vector2d(1, 0));
  g += r.lambda[1] * VecX<double>(Eigen::Vector2d(0, 1));
  g += r.lambda[2] * VecX<double>(Eigen::Vector2d(1, 1));
  CHECK(g.lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
}

TEST_CASE("free variables and equalities") {
  // min x + 2y st x + y = 1, y >= -1  (i.e. -y <= 1)
  auto r = run<double>({{0, -1}}, {1}, {{1, 1}}, {1}, {1, 2});
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.objective == doctest::Approx(0.0));  // x = 2, y = -1
  CHECK(r.z[0] == doctest::Approx(2.0));
  CHECK(r.z[1] == doctest::Approx(-1.0));
  // c + A'lambda + E'nu = 0 -> nu = -1, lambda = 1
  CHECK(r.nu[0] == doctest::Approx(-1.0));
  CHECK(r.lambda[0] == doctest::Approx(1.0));
}

TEST_CASE("infeasible and unbounded detection") {
  auto inf = run<double>({{1}, {-1}}, {-1, -1}, {}, {}, {1});  // x <= -1, x >= 1
  CHECK(inf.status == LpStatus::Infeasible);
  CHECK(inf.infeasibility > 0.5);

  auto unb = run<double>({{-1}}, {0}, {}, {}, {-1});  // min -x st x >= 0
  REQUIRE(unb.status == LpStatus::Unbounded);
  CHECK(unb.ray[0] > 0.0);
}

TEST_CASE("exact rational optimum") {
  using R = Rational;
  // min -x - y st 3x + y <= 1, x + 3y <= 1 -> x = y = 1/4
  auto r = run<R>({{R(3), R(1)}, {R(1), R(3)}}, {R(1), R(1)}, {}, {}, {R(-1), R(-1)});
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.z[0] == R(1, 4));
  CHECK(r.z[1] == R(1, 4));
  CHECK(r.objective == R(-1, 2));
  CHECK(r.lambda[0] == R(1, 4));
  CHECK(r.lambda[1] == R(1, 4));
}

TEST_CASE("random lps agree between double and rational") {
  std::mt19937 rng(99);
  std::uniform_int_distribution<int> coef(-4, 4);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 3;
    const int m = 6;
    std::vector<std::vector<double>> Ad(m, std::vector<double>(n));
    std::vector<std::vector<Rational>> Ar(m, std::vector<Rational>(n));
    std::vector<double> bd(m);
    std::vector<Rational> br(m);
    std::vector<double> cd(n);
    std::vector<Rational> cr(n);
    // rows x_j <= 3, -x_j <= 3 keep it bounded
    for (int j = 0; j < n; ++j) {
      Ad[j][j] = 1;
      Ar[j][j] = 1;
      bd[j] = 3;
      br[j] = 3;
      Ad[n + j][j] = -1;
      Ar[n + j][j] = -1;
      bd[n + j] = 3;
      br[n + j] = 3;
    }
    for (int j = 0; j < n; ++j) {
      int c = coef(rng);
      cd[j] = c;
      cr[j] = c;
    }
    auto rd = run<double>(Ad, bd, {}, {}, cd);
    auto rr = run<Rational>(Ar, br, {}, {}, cr);
    REQUIRE(rd.status == LpStatus::Optimal);
    REQUIRE(rr.status == LpStatus::Optimal);
    CHECK(rd.objective == doctest::Approx(to_double(rr.objective)).epsilon(1e-9));
  }
}

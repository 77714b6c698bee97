#include <doctest.h>

#include <cmath>

#include "gen.hpp"
#include "rflab/error.hpp"
#include "rflab/moser.hpp"

using namespace rflab;
using namespace rflab::moser;

TEST_CASE("iteration schedule") {
  const auto s = schedule(3, 5.0, 0.1, 2.0, 6);
  CHECK(s.mu == doctest::Approx(5.0 / 3.0));
  CHECK(s.p.front() == 5.0);
  CHECK(s.R.front() == doctest::Approx(2.0));
  for (std::size_t k = 1; k < s.p.size(); ++k) {
    CHECK(s.p[k] / s.p[k - 1] == doctest::Approx(s.mu));
    CHECK(s.tau[k] > s.tau[k - 1]);
    CHECK(s.tau[k] < 0.1);
    CHECK(s.R[k] < s.R[k - 1]);
    CHECK(s.R[k] > 1.0);
  }
}

TEST_CASE("epsilon identity holds across parameters (property)") {
  test::Gen gen(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = gen.integer(3, 6);
    const double q = n + gen.uniform(0.05, 6.0);
    const double p = gen.uniform(1.0, 40.0);
    const double beta = std::exp(gen.uniform(-8.0, 4.0));
    const double cs = gen.uniform(0.05, 2.0);
    CHECK(std::abs(epsilon_identity(n, q, p, beta, cs) * p - 1.0) < 1e-12);
    const double le = log_epsilon_choice(n, q, p, beta, cs);
    const double direct = n * q / ((q - n) * (n - 2)) * std::log(q / (n * p * beta * cs * cs));
    CHECK(le == doctest::Approx(direct).epsilon(1e-14));
    if (std::abs(le) < 600) CHECK(epsilon_choice(n, q, p, beta, cs) == doctest::Approx(std::exp(le)));
  }
}

TEST_CASE("epsilon choice domain") {
  CHECK_THROWS_AS(epsilon_choice(3, 3.0, 2.0, 1.0, 1.0), Error);
  CHECK_THROWS_AS(epsilon_choice(2, 4.0, 2.0, 1.0, 1.0), Error);
  CHECK_THROWS_AS(epsilon_choice(3, 4.0, 2.0, 0.0, 1.0), Error);
}

TEST_CASE("C1 against its epsilon form and the beta -> 0 limit") {
  test::Gen gen(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3;
    const double q = gen.uniform(3.5, 8.0), p = gen.uniform(2.0, 20.0), beta = gen.uniform(0.01, 2.0);
    const double cs = gen.uniform(0.1, 1.0), l = gen.uniform(0.0, 3.0);
    const double eps = std::pow(q / (n * p * beta * cs * cs), n * q / ((q - n) * (n - 2.0)));
    const double oracle = p * beta * (1 - n / q) * std::pow(eps, -(n - 2.0) / q) + std::sqrt(3.0) * l;
    CHECK(c1(n, q, p, beta, cs, l) == doctest::Approx(oracle).epsilon(1e-11));
  }
  CHECK(c1(3, 4.0, 5.0, 0.0, 0.3, 2.0) == doctest::Approx(2.0 * std::sqrt(3.0)));
  CHECK(c1(3, 4.0, 5.0, 1e-14, 0.3, 2.0) == doctest::Approx(2.0 * std::sqrt(3.0)));
}

TEST_CASE("Moser coefficient is monotone in its inputs (property)") {
  test::Gen gen(12);
  for (int trial = 0; trial < 200; ++trial) {
    const double cs = gen.uniform(0.1, 1), c = gen.uniform(0, 5), t = gen.uniform(0.01, 1), l = gen.uniform(0, 2);
    const double T = t + gen.uniform(0, 1), R = gen.uniform(0.1, 2);
    const double base = moser_coefficient(3, 5.0, cs, c, t, l, T, R);
    CHECK(moser_coefficient(3, 5.0, cs, c * 1.1 + 0.01, t, l, T, R) >= base);
    CHECK(moser_coefficient(3, 5.0, cs, c, t * 1.1, l, T, R) <= base);
    CHECK(moser_coefficient(3, 5.0, cs, c, t, l, T, R * 1.1) <= base);
    CHECK(moser_coefficient(3, 5.0, cs, c, t, l + 0.1, T, R) >= base);
    CHECK(moser_coefficient(3, 5.0, cs * 1.1, c, t, l, T, R) >= base);
  }
  CHECK_THROWS_AS(moser_coefficient(3, 5.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0), Error);
}

TEST_CASE("heat solver: positivity, maximum principle and the growth factor") {
  MoserProblem p;
  p.nodes = 17;
  p.steps = 50;
  const auto s0 = solve_heat(p);
  REQUIRE(s0.frames.size() == 51);
  for (std::size_t k = 0; k < s0.frames.size(); ++k) {
    for (double v : s0.frames[k]) CHECK(v >= 0.0);
    if (k) CHECK(s0.sup(k) <= s0.sup(k - 1) * (1 + 1e-14));
    if (k) CHECK(s0.mass(k) <= s0.mass(k - 1) * (1 + 1e-14));
  }
  auto pb = p;
  pb.b = 2.0;
  const auto s1 = solve_heat(pb);
  double err = 0.0;
  for (std::size_t k = 0; k < s0.frames.size(); ++k)
    for (std::size_t v = 0; v < s0.frames[k].size(); ++v)
      err = std::max(err, std::abs(s1.frames[k][v] - std::exp(2.0 * s0.times[k]) * s0.frames[k][v]));
  CHECK(err < 1e-12);
}

TEST_CASE("weak maximum principle bound on a small flat ball") {
  for (double q : {4.0, 6.0})
    for (double b : {0.0, 1.0}) {
      MoserProblem p;
      p.nodes = 17;
      p.steps = 60;
      p.q = q;
      p.b = b;
      const auto rep = verify_moser(p);
      REQUIRE(!rep.checks.empty());
      for (const auto& c : rep.checks) CHECK(c.passed());
      CHECK(rep.max_sharpness < 1.0);
    }
}

TEST_CASE("homothetic metric: time-rescaled solution") {
  MoserProblem p;
  p.nodes = 17;
  p.steps = 40;
  p.sigma = {{0.0, 1.0}, {p.T, 1.5}};
  const auto rep = verify_moser(p);
  for (const auto& c : rep.checks) CHECK(c.passed());
  CHECK(resolved_l(p) == doctest::Approx(std::sqrt(3.0) * 0.5 / p.T));
}

TEST_CASE("problem validation") {
  MoserProblem p;
  p.b = -1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.q = 2.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("bound rejects points near the boundary") {
  MoserProblem p;
  p.nodes = 17;
  p.steps = 10;
  const auto sol = solve_heat(p);
  CHECK_THROWS_AS(moser_bound(p, sol, 0.05, {0.99, 0.0, 0.0, 0.0}), Error);
  CHECK_THROWS_AS(moser_bound(p, sol, 0.0, {0.0, 0.0, 0.0, 0.0}), Error);
  const auto terms = moser_bound(p, sol, 0.05, {0.0, 0.0, 0.0, 0.0});
  CHECK(terms.R == doctest::Approx(0.5));
  CHECK(terms.bound_c1_doubled >= terms.bound);
}

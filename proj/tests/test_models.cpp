#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gen.hpp"
#include "rflab/error.hpp"
#include "rflab/models.hpp"

using namespace rflab;
using zoo::ModelMetric;

namespace {

constexpr double kPi = std::numbers::pi;

// Milnor: [e2,e3] = c1 e1 cyclic in an orthonormal frame, Ric(e1) = 2 mu2 mu3.
std::array<double, 3> milnor_ricci(double l1, double l2, double l3) {
  const double s = std::sqrt(l1 * l2 * l3);
  const double c[3] = {2 * l1 / s, 2 * l2 / s, 2 * l3 / s};
  const double half = (c[0] + c[1] + c[2]) / 2;
  const double mu[3] = {half - c[0], half - c[1], half - c[2]};
  std::array<double, 3> r{2 * mu[1] * mu[2], 2 * mu[2] * mu[0], 2 * mu[0] * mu[1]};
  std::sort(r.begin(), r.end());
  return r;
}

}  // namespace

TEST_CASE("round sphere curvature") {
  for (int n : {2, 3, 4})
    for (double r : {0.5, 1.0, 2.0}) {
      const auto c = zoo::exact_curvature(ModelMetric::round_sphere(n, r));
      for (double e : c.ricci_eigenvalues) CHECK(e == doctest::Approx((n - 1) / (r * r)));
      CHECK(c.scalar == doctest::Approx(n * (n - 1) / (r * r)));
      CHECK(c.sectional_min == doctest::Approx(1 / (r * r)));
      CHECK(c.sectional_max == doctest::Approx(1 / (r * r)));
      CHECK(c.rm_norm == doctest::Approx(std::sqrt(2.0 * n * (n - 1)) / (r * r)));
      CHECK(c.ric_norm == doctest::Approx((n - 1) / (r * r)));
      CHECK(c.ric_full_norm == doctest::Approx(std::sqrt(double(n)) * (n - 1) / (r * r)));
    }
}

TEST_CASE("sphere volume") {
  CHECK(zoo::model_volume(ModelMetric::round_sphere(2, 2.0)) == doctest::Approx(4 * kPi * 4));
  CHECK(zoo::model_volume(ModelMetric::round_sphere(3, 1.0)) == doctest::Approx(2 * kPi * kPi));
  CHECK(zoo::model_volume(ModelMetric::flat_torus({1.0, 2.0, 3.0})) == doctest::Approx(6.0));
}

TEST_CASE("flat torus and product curvature") {
  const auto f = zoo::exact_curvature(ModelMetric::flat_torus({1.0, 2.0, 3.0}));
  CHECK(f.rm_norm == 0.0);
  CHECK(f.scalar == 0.0);
  const auto p = zoo::exact_curvature(ModelMetric::product_sphere_circle(2.0, 5.0));
  CHECK(p.ricci_eigenvalues.front() == doctest::Approx(0.0));
  CHECK(p.ricci_eigenvalues.back() == doctest::Approx(0.25));
  CHECK(p.scalar == doctest::Approx(0.5));
}

TEST_CASE("Milnor Ricci against Milnor's formula (property)") {
  test::Gen gen(17);
  for (int trial = 0; trial < 40; ++trial) {
    const double l1 = gen.uniform(0.2, 4), l2 = gen.uniform(0.2, 4), l3 = gen.uniform(0.2, 4);
    const auto m = ModelMetric::milnor(l1, l2, l3);
    const auto exact = zoo::exact_curvature(m);
    const auto oracle = milnor_ricci(l1, l2, l3);
    for (int i = 0; i < 3; ++i) CHECK(exact.ricci_eigenvalues[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
    auto frame = zoo::frame_algebra(m).ricci();
    std::array<double, 3> diag{frame[0], frame[4], frame[8]};
    std::sort(diag.begin(), diag.end());
    for (int i = 0; i < 3; ++i) CHECK(diag[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
    CHECK(std::abs(frame[1]) + std::abs(frame[2]) + std::abs(frame[5]) < 1e-12);
  }
}

TEST_CASE("round Milnor is the round 3-sphere") {
  const double l = 2.5;
  const auto a = zoo::exact_curvature(ModelMetric::milnor(l, l, l));
  const auto b = zoo::exact_curvature(ModelMetric::round_sphere(3, std::sqrt(l)));
  CHECK(a.scalar == doctest::Approx(b.scalar));
  CHECK(a.rm_norm == doctest::Approx(b.rm_norm));
  CHECK(zoo::model_volume(ModelMetric::milnor(l, l, l)) == doctest::Approx(zoo::model_volume(ModelMetric::round_sphere(3, std::sqrt(l)))));
}

TEST_CASE("Heisenberg curvature") {
  for (double eps : {0.25, 0.5, 1.0}) {
    const auto c = zoo::exact_curvature(ModelMetric::heisenberg(eps));
    const double e2 = eps * eps;
    REQUIRE(c.ricci_eigenvalues.size() == 3);
    CHECK(c.ricci_eigenvalues[0] == doctest::Approx(-e2 / 2));
    CHECK(c.ricci_eigenvalues[1] == doctest::Approx(-e2 / 2));
    CHECK(c.ricci_eigenvalues[2] == doctest::Approx(e2 / 2));
    CHECK(c.scalar == doctest::Approx(-e2 / 2));
  }
  CHECK_THROWS_AS(zoo::exact_flow(ModelMetric::heisenberg(1.0)), Error);
}

TEST_CASE("exact flows") {
  for (int n : {2, 3, 4}) {
    const double r = 1.3;
    const auto sol = zoo::exact_flow(ModelMetric::round_sphere(n, r));
    CHECK(sol.t_blowup() == doctest::Approx(r * r / (2.0 * (n - 1))));
    const double t = 0.3 * sol.t_blowup();
    CHECK(sol.at(t).radius * sol.at(t).radius == doctest::Approx(r * r - 2.0 * (n - 1) * t));
  }
  const auto prod = zoo::exact_flow(ModelMetric::product_sphere_circle(1.0, 3.0));
  CHECK(prod.t_blowup() == doctest::Approx(0.5));
  CHECK(prod.at(0.2).radius == doctest::Approx(std::sqrt(0.6)));
  CHECK(prod.at(0.2).circle_length == doctest::Approx(3.0));
  CHECK(std::isinf(zoo::exact_flow(ModelMetric::flat_torus({1.0, 1.0})).t_blowup()));

  const auto milnor = zoo::exact_flow(ModelMetric::milnor(1, 1, 1));
  CHECK(milnor.t_blowup() == doctest::Approx(0.25).epsilon(1e-8));
  for (double l : milnor.at(0.1).lambda) CHECK(l == doctest::Approx(0.6).epsilon(1e-10));
}

TEST_CASE("reduced rhs is the derivative of the exact flow (property)") {
  test::Gen gen(23);
  for (int trial = 0; trial < 6; ++trial) {
    const auto m = ModelMetric::milnor(gen.uniform(0.8, 2), gen.uniform(0.8, 2), gen.uniform(0.8, 2));
    const auto sol = zoo::exact_flow(m);
    const double t = 0.2 * sol.t_blowup(), h = 1e-4;
    const auto rhs = zoo::reduced_rhs(m, zoo::reduced_state(sol.at(t)));
    const auto up = zoo::reduced_state(sol.at(t + h));
    const auto down = zoo::reduced_state(sol.at(t - h));
    for (int i = 0; i < 3; ++i) CHECK((up[i] - down[i]) / (2 * h) == doctest::Approx(rhs[i]).epsilon(1e-6));
  }
}

TEST_CASE("reduced state round-trips") {
  const auto m = ModelMetric::milnor(1, 2, 3);
  const auto back = zoo::from_reduced(m, zoo::reduced_state(m));
  CHECK(back.lambda == m.lambda);
  const auto s = ModelMetric::round_sphere(3, 2.0);
  CHECK(zoo::from_reduced(s, zoo::reduced_state(s)).radius == doctest::Approx(2.0));
  CHECK(zoo::reduced_speed(s) == doctest::Approx(2 * zoo::exact_curvature(s).ric_full_norm));
}

TEST_CASE("c0 distance between sphere radii") {
  const auto a = ModelMetric::round_sphere(3, 1.0);
  const auto b = ModelMetric::round_sphere(3, 1.1);
  CHECK(zoo::model_c0_distance(b, a) == doctest::Approx(0.21));
}

TEST_CASE("validation rejects bad parameters") {
  CHECK_THROWS_AS(ModelMetric::round_sphere(3, -1.0).validate(), Error);
  CHECK_THROWS_AS(ModelMetric::flat_torus({1.0, 0.0}).validate(), Error);
  CHECK_THROWS_AS(ModelMetric::milnor(1, -1, 1).validate(), Error);
  CHECK_NOTHROW(ModelMetric::milnor(1, 2, 3).validate());
}

TEST_CASE("family names round-trip") {
  for (auto f : {zoo::Family::RoundSphere, zoo::Family::FlatTorus, zoo::Family::ProductSphereCircle,
                 zoo::Family::MilnorSU2, zoo::Family::HeisenbergNil})
    CHECK(zoo::parse_family(zoo::family_name(f)) == f);
  CHECK(!zoo::parse_family("klein-bottle").has_value());
}

TEST_CASE("perturbed torus (property)") {
  test::Gen gen(31);
  for (int trial = 0; trial < 6; ++trial) {
    zoo::Perturbation p;
    p.nodes = 12;
    p.amplitude = gen.uniform(0.01, 0.3);
    p.frequency = gen.integer(1, 3);
    p.modes = gen.integer(1, 4);
    p.seed = static_cast<std::uint64_t>(gen.integer(1, 1000));
    const auto g = zoo::perturbed_torus(p);
    CHECK(g.data() == zoo::perturbed_torus(p).data());
    auto q = p;
    q.seed += 1;
    CHECK(g.data() != zoo::perturbed_torus(q).data());

    // Every mode has mean zero on the grid and sum ||S_m||_2 = 1.
    std::vector<double> mean(sym_size(3), 0.0);
    double dev = 0.0;
    for (std::size_t v = 0; v < g.chart().node_count(); ++v)
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
          const double d = g(v, i, j) - (i == j ? 1.0 : 0.0);
          mean[sym_index(i, j, 3)] += d / g.chart().node_count();
          dev = std::max(dev, std::abs(d));
        }
    for (double m : mean) CHECK(std::abs(m) < 1e-12);
    CHECK(dev <= p.amplitude * (1 + 1e-12));
  }
}

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include <Eigen/Dense>

#include "gen.hpp"
#include "rflab/curvature.hpp"
#include "rflab/error.hpp"
#include "rflab/models.hpp"

using namespace rflab;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

core::MetricField constant_metric(const core::ChartGrid& chart, const std::vector<double>& G) {
  const int n = chart.dimension();
  return core::MetricField::sample(chart, [&](const Point&, std::span<double> g) {
    for (int i = 0; i < n * n; ++i) g[i] = G[i];
  });
}

// g = exp(2u) delta on the 2-torus, u = a sin x cos y: K = -exp(-2u) lap u.
core::MetricField conformal(int N, double a) {
  return core::MetricField::sample(core::ChartGrid::cube(2, N, kTwoPi), [&](const Point& x, std::span<double> g) {
    const double e = std::exp(2.0 * a * std::sin(x[0]) * std::cos(x[1]));
    g[0] = e, g[1] = 0.0, g[2] = 0.0, g[3] = e;
  });
}

double conformal_scalar_error(int N, double a) {
  const auto g = conformal(N, a);
  const auto b = core::riemann(g);
  double err = 0.0;
  for (std::size_t v = 0; v < g.chart().node_count(); ++v) {
    const auto x = g.chart().position(v);
    const double u = a * std::sin(x[0]) * std::cos(x[1]);
    const double K = 2.0 * u * std::exp(-2.0 * u);
    err = std::max(err, std::abs(b.scalar[v] - 2.0 * K));
  }
  return err;
}

}  // namespace

TEST_CASE("sym_index enumerates the upper triangle") {
  for (int n = 1; n <= kMaxDim; ++n) {
    std::set<int> seen;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        CHECK(sym_index(i, j, n) == sym_index(j, i, n));
        if (i <= j) seen.insert(sym_index(i, j, n));
      }
    CHECK(seen.size() == static_cast<std::size_t>(sym_size(n)));
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == sym_size(n) - 1);
  }
}

TEST_CASE("chart grid wraps periodically") {
  const auto c = core::ChartGrid::cube(3, 8, 2.0);
  CHECK(c.node_count() == 512);
  CHECK(c.spacing(0) == doctest::Approx(0.25));
  CHECK(c.cell_volume() == doctest::Approx(0.25 * 0.25 * 0.25));
  for (std::size_t v = 0; v < c.node_count(); v += 37) {
    for (int axis = 0; axis < 3; ++axis) {
      CHECK(c.neighbor(c.neighbor(v, axis, 1), axis, -1) == v);
      CHECK(c.shifted(v, axis, 8) == v);
    }
    CHECK(c.node(c.coords(v)) == v);
    CHECK(c.nearest_node(c.position(v)) == v);
  }
  CHECK(c.node({-1, 0, 0, 0}) == c.node({7, 0, 0, 0}));
}

TEST_CASE("degenerate metric names the node") {
  auto g = core::MetricField(core::ChartGrid::cube(2, 4, 1.0));
  g.set(5, 0, 0, 0.0);
  try {
    g.validate();
    FAIL("expected DegenerateMetric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateMetric);
    REQUIRE(e.node().has_value());
    CHECK(*e.node() == 5);
  }
}

TEST_CASE("constant metrics are flat (property)") {
  test::Gen gen(101);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = gen.integer(2, 4);
    const auto G = gen.spd(n, 0.3, 3.0);
    const auto g = constant_metric(core::ChartGrid::cube(n, n == 4 ? 5 : 7, gen.uniform(1.0, 7.0)), G);
    const auto b = core::riemann(g);
    CHECK(b.sup_norm_rm < 1e-12);
    CHECK(b.sup_norm_ric < 1e-12);
    double box = 1.0;
    for (int i = 0; i < n; ++i) box *= g.chart().period(i);
    const double det = Eigen::Map<const Eigen::MatrixXd>(G.data(), n, n).determinant();
    CHECK(core::total_volume(g) == doctest::Approx(std::sqrt(det) * box));
  }
}

TEST_CASE("conformal 2-torus curvature against the closed form") {
  const double e32 = conformal_scalar_error(32, 0.3);
  const double e64 = conformal_scalar_error(64, 0.3);
  CHECK(e64 < 5e-3);
  CHECK(e32 / e64 > 3.5);  // second order
}

TEST_CASE("Laplace-Beltrami on a conformal 2-torus") {
  const double a = 0.3;
  const auto g = conformal(64, a);
  core::ScalarField f(g.chart().node_count());
  for (std::size_t v = 0; v < f.size(); ++v) f[v] = std::cos(g.chart().position(v)[0]);
  const auto L = core::laplace_beltrami(g, f);
  double err = 0.0;
  for (std::size_t v = 0; v < f.size(); ++v) {
    const auto x = g.chart().position(v);
    const double u = a * std::sin(x[0]) * std::cos(x[1]);
    err = std::max(err, std::abs(L[v] + std::exp(-2.0 * u) * std::cos(x[0])));
  }
  CHECK(err < 5e-3);
}

TEST_CASE("curvature scales under g -> c g (property)") {
  test::Gen gen(7);
  const auto g = zoo::perturbed_torus({3, 12, kTwoPi, 0.1, 1, 3, 5});
  const auto b = core::riemann(g);
  for (int trial = 0; trial < 4; ++trial) {
    const double c = gen.uniform(0.2, 5.0);
    const auto bc = core::riemann(g.scaled(c));
    double ric = 0.0, scal = 0.0, rm = 0.0;
    for (std::size_t v = 0; v < g.chart().node_count(); ++v) {
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) ric = std::max(ric, std::abs(bc.ricci(v, i, j) - b.ricci(v, i, j)));
      scal = std::max(scal, std::abs(c * bc.scalar[v] - b.scalar[v]));
      rm = std::max(rm, std::abs(c * bc.rm_norm[v] - b.rm_norm[v]));
    }
    CHECK(ric < 1e-10);
    CHECK(scal < 1e-10);
    CHECK(rm < 1e-10);
  }
}

TEST_CASE("round sphere realization has sectional curvature 1/r^2 in the core") {
  const double r = 1.0;
  const auto real = zoo::realize(zoo::ModelMetric::round_sphere(3, r), 48, 2.0, 0.5);
  const auto b = core::riemann(real.metric);
  REQUIRE(!real.core_nodes.empty());
  double worst = 0.0;
  for (auto v : real.core_nodes) {
    const double X[3] = {1, 0, 0}, Y[3] = {0, 1, 0};
    worst = std::max(worst, std::abs(core::sectional_curvature(b, real.metric, v, X, Y) - 1.0 / (r * r)));
    worst = std::max(worst, std::abs(b.ric_norm[v] - 2.0 / (r * r)) / 2.0);
  }
  CHECK(worst < 2e-2);
}

TEST_CASE("c0 distance of a homothety") {
  test::Gen gen(3);
  const auto G = gen.spd(3, 0.5, 2.0);
  const auto g0 = constant_metric(core::ChartGrid::cube(3, 4, 1.0), G);
  for (double s : {0.01, 0.25, -0.3}) CHECK(core::metric_c0_distance(g0.scaled(1.0 + s), g0) == doctest::Approx(std::abs(s)));
}

TEST_CASE("ricci-only path agrees with the full bundle") {
  const auto g = zoo::perturbed_torus({3, 10, kTwoPi, 0.15, 1, 3, 9});
  const auto b = core::riemann(g);
  const auto ric = core::ricci(g);
  double err = 0.0;
  for (std::size_t i = 0; i < ric.data().size(); ++i) err = std::max(err, std::abs(ric.data()[i] - b.ricci.data()[i]));
  CHECK(err < 1e-12);
}

TEST_CASE("workers do not change curvature bits") {
  const auto g = zoo::perturbed_torus({3, 10, kTwoPi, 0.15, 2, 3, 4});
  const auto a = core::riemann(g, 1);
  const auto b = core::riemann(g, 3);
  CHECK(a.riemann == b.riemann);
  CHECK(a.scalar == b.scalar);
}

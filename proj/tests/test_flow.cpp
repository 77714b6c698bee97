#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rflab/error.hpp"
#include "rflab/flow.hpp"

using namespace rflab;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

flow::FlowConfig sphere(int n, double r, double T) {
  flow::FlowConfig c;
  c.initial = zoo::ModelMetric::round_sphere(n, r);
  c.T = T;
  return c;
}

}  // namespace

TEST_CASE("model sphere flow follows r^2 - 2(n-1)t at every snapshot") {
  for (int n : {2, 3}) {
    auto c = sphere(n, 1.5, 0.2);
    c.checkpoint_every = 0.02;
    const auto tr = flow::run(c);
    REQUIRE(tr.termination == flow::Termination::ReachedT);
    CHECK(tr.snapshots.size() == 11);
    for (const auto& s : tr.snapshots) {
      const double r2 = s.model->radius * s.model->radius;
      const double exact = 2.25 - 2.0 * (n - 1) * s.t;
      CHECK(std::abs(r2 - exact) / exact < 1e-8);
      CHECK(s.diag.sup_ric == doctest::Approx((n - 1) / r2));
      CHECK(s.diag.c0_distance == doctest::Approx(std::abs(r2 / 2.25 - 1.0)));
    }
  }
}

TEST_CASE("snapshots land on the checkpoint cadence") {
  auto c = sphere(3, 2.0, 0.1);
  c.checkpoint_every = 0.025;
  const auto tr = flow::run(c);
  REQUIRE(tr.snapshots.size() == 5);
  for (std::size_t k = 0; k < tr.snapshots.size(); ++k) CHECK(tr.snapshots[k].t == doctest::Approx(0.025 * k).epsilon(1e-14));
}

TEST_CASE("sphere past extinction ends in blowup") {
  auto c = sphere(2, 1.0, 0.6);
  const auto tr = flow::run(c);
  CHECK(tr.termination == flow::Termination::Blowup);
  CHECK(tr.snapshots.back().t < 0.5);
  CHECK(tr.snapshots.back().t > 0.49);
}

TEST_CASE("flat grid torus is stationary") {
  flow::FlowConfig c;
  c.initial = core::MetricField(core::ChartGrid::cube(3, 8, kTwoPi));
  c.T = 0.5;
  c.checkpoint_every = 0.25;
  const auto tr = flow::run(c);
  CHECK(tr.termination == flow::Termination::ReachedT);
  for (const auto& s : tr.snapshots) {
    CHECK(s.diag.c0_distance == 0.0);
    CHECK(s.diag.sup_rm < 1e-14);
  }
}

TEST_CASE("oversized steps are rejected") {
  flow::FlowConfig c;
  c.initial = zoo::perturbed_torus({3, 10, kTwoPi, 0.1, 1, 3, 2});
  const auto s = flow::initial_state(c);
  const double bound = flow::stability_bound(s, 0.1);
  CHECK(bound > 0.0);
  try {
    flow::step(s, 2.0 * bound);
    FAIL("expected RejectedStep");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RejectedStep);
  }
  CHECK_NOTHROW(flow::step(s, bound));
  CHECK_THROWS_AS(flow::step(s, 0.0), Error);
}

TEST_CASE("flow configuration is validated") {
  auto c = sphere(2, 1.0, -1.0);
  CHECK_THROWS_AS(flow::run(c), Error);
  c = sphere(2, 1.0, 0.1);
  c.curvature_every = 0;
  CHECK_THROWS_AS(flow::run(c), Error);
}

TEST_CASE("perturbed torus flow smooths and is reproducible across workers") {
  flow::FlowConfig c;
  c.initial = zoo::perturbed_torus({3, 12, kTwoPi, 0.2, 1, 3, 8});
  c.T = 0.05;
  c.checkpoint_every = 0.025;
  c.workers = 1;
  const auto a = flow::run(c);
  c.workers = 2;
  const auto b = flow::run(c);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  CHECK(a.steps == b.steps);
  CHECK(a.snapshots.back().metric.data() == b.snapshots.back().metric.data());
  CHECK(a.snapshots.back().diag.sup_rm < a.snapshots.front().diag.sup_rm);
}

TEST_CASE("residuals need three uniform snapshots") {
  auto c = sphere(3, 2.0, 0.01);
  c.checkpoint_every = 0.01;
  const auto tr = flow::run(c);
  try {
    flow::evolution_residuals(tr);
    FAIL("expected Resample");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Resample);
  }
}

TEST_CASE("sphere residuals: scalar identity and the |Rm| constant") {
  for (int n : {3, 4}) {
    auto c = sphere(n, 2.0, 0.1);
    c.checkpoint_every = 0.01;
    const auto rep = flow::evolution_residuals(flow::run(c));
    CHECK(rep.max_scalar_residual < 1e-6);
    CHECK(rep.c_min == doctest::Approx(std::sqrt(2.0 * (n - 1) / n)).epsilon(1e-4));
  }
}

TEST_CASE("chart ball matches a brute-force count") {
  const auto chart = core::ChartGrid::cube(3, 12, 3.0);
  const std::size_t center = chart.node({2, 11, 5, 0});
  const double radius = 0.8;
  const auto ball = flow::chart_ball(chart, center, radius);
  std::size_t count = 0;
  const auto c = chart.coords(center);
  for (std::size_t v = 0; v < chart.node_count(); ++v) {
    const auto x = chart.coords(v);
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      int d = std::abs(x[a] - c[a]);
      d = std::min(d, 12 - d);
      d2 += (d * 0.25) * (d * 0.25);
    }
    count += d2 <= radius * radius;
  }
  CHECK(ball.size() == count);
}

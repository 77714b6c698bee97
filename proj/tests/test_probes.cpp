#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gen.hpp"
#include "rflab/error.hpp"
#include "rflab/probes.hpp"

using namespace rflab;
using namespace rflab::probes;

namespace {

constexpr double kPi = std::numbers::pi;

// Composite Simpson on [a, b].
template <class F>
double simpson(F f, double a, double b, int m = 20000) {
  const double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// Nodes of a patch in row-major order (last axis fastest), centred at half.
std::vector<double> radial_on_patch(const SobolevPatch& p, double (*f)(double, double), double R) {
  std::vector<double> out(p.node_count(), 0.0);
  const int half = p.extents[0] / 2;
  for (std::size_t v = 0; v < out.size(); ++v) {
    std::size_t rest = v;
    double r2 = 0.0;
    for (int a = p.n - 1; a >= 0; --a) {
      const int i = static_cast<int>(rest % p.extents[a]);
      rest /= p.extents[a];
      r2 += ((i - half) * p.h) * ((i - half) * p.h);
    }
    if (p.inside[v]) out[v] = f(std::sqrt(r2), R);
  }
  return out;
}

double bump(double r, double R) { return r < R ? (R * R - r * r) * (R * R - r * r) : 0.0; }

}  // namespace

TEST_CASE("sphere geodesic reaches the antipode at length pi r") {
  const double r = 1.5;
  SphereGeometry geo(3, r);
  const ChartPoint p{};
  double G[9];
  geo.metric(p, G);
  const double v[3] = {1.0 / std::sqrt(G[0]), 0.0, 0.0};
  const auto path = geodesic(geo, p, v, kPi * r, 1e-3);
  const auto a = geo.embed(path.position.front());
  const auto b = geo.embed(path.position.back());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] + b[i] == doctest::Approx(0.0).epsilon(1e-6).scale(r));
}

TEST_CASE("Jacobi conjugate radius of round spheres") {
  for (double r : {1.0, 2.0}) {
    SphereGeometry geo(3, r);
    const auto c = jacobi_conjugate_radius(geo, {}, 6, 1.5 * kPi * r, kPi * r / 2000);
    CHECK(c.found);
    CHECK(std::abs(c.estimate - kPi * r) < 1e-4);
  }
}

TEST_CASE("flat torus has no conjugate points") {
  GridGeometry geo(core::MetricField(core::ChartGrid::cube(3, 8, 2.0)));
  const auto c = jacobi_conjugate_radius(geo, {}, 6, 30.0, 0.01);
  CHECK(!c.found);
  CHECK(c.estimate == doctest::Approx(30.0));
}

TEST_CASE("flat torus sample uses the minimum image (property)") {
  test::Gen gen(5);
  core::ChartGrid chart({6, 8, 10}, {3.0, 4.0, 5.0});
  FlatTorusSample s(chart);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t i = gen.integer(0, static_cast<int>(chart.node_count()) - 1);
    const std::size_t j = gen.integer(0, static_cast<int>(chart.node_count()) - 1);
    const auto a = chart.position(i), b = chart.position(j);
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double L = chart.period(k);
      double d = std::fmod(std::abs(a[k] - b[k]), L);
      d = std::min(d, L - d);
      d2 += d * d;
    }
    CHECK(s.distance(i, j) == doctest::Approx(std::sqrt(d2)));
  }
  const auto diam = diameter(s, 4);
  CHECK(diam.value == doctest::Approx(std::sqrt(1.5 * 1.5 + 2.0 * 2.0 + 2.5 * 2.5)));
}

TEST_CASE("sphere sample: antipodal excess vanishes") {
  SphereSample s(3, 2.0, 200);
  const auto d = s.distances_from(0);
  const std::size_t far = std::max_element(d.begin(), d.end()) - d.begin();
  CHECK(d[far] == doctest::Approx(2.0 * kPi));
  CHECK(std::abs(excess_for_pair(s, 0, far)) < 1e-12);
  CHECK(diameter(s).value == doctest::Approx(2.0 * kPi));
}

TEST_CASE("sphere volume by polar integration") {
  for (int n : {2, 3, 4, 5})
    for (double r : {0.7, 2.0}) {
      const double closed = 2 * std::pow(kPi, (n + 1) / 2.0) / std::tgamma((n + 1) / 2.0) * std::pow(r, n);
      CHECK(sphere_volume_polar(n, r) == doctest::Approx(closed).epsilon(1e-12));
    }
}

TEST_CASE("comparison ball volumes against Simpson") {
  for (int n : {2, 3, 4})
    for (double H : {-1.0, -0.25, 0.0, 0.5, 1.0})
      for (double rho : {0.3, 1.0, 2.5}) {
        const double k = std::sqrt(std::abs(H));
        const double top = H > 0 ? std::min(rho, kPi / k) : rho;
        const double oracle = simpson(
            [&](double s) {
              const double sn = H > 0 ? std::sin(k * s) / k : H < 0 ? std::sinh(k * s) / k : s;
              return std::pow(sn, n - 1);
            },
            0.0, top);
        CHECK(comparison_ball_volume(n, H, rho) == doctest::Approx(oracle).epsilon(1e-9));
      }
}

TEST_CASE("epsilon nets on flat tori (property)") {
  test::Gen gen(77);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = gen.integer(2, 3);
    const int N = n == 2 ? gen.integer(16, 40) : gen.integer(8, 14);
    const double L = gen.uniform(2.0, 8.0);
    FlatTorusSample s(core::ChartGrid::cube(n, N, L));
    const std::size_t p = gen.integer(0, static_cast<int>(s.size()) - 1);
    const double r = gen.uniform(0.2, 0.6) * L;
    const double eps = gen.uniform(0.1, 0.5) * r;
    const auto net = epsilon_net(s, p, r, eps);
    REQUIRE(net.count == net.centers.size());
    const auto dp = s.distances_from(p);
    for (std::size_t a = 0; a < net.centers.size(); ++a) {
      CHECK(dp[net.centers[a]] <= r);
      for (std::size_t b = a + 1; b < net.centers.size(); ++b) CHECK(s.distance(net.centers[a], net.centers[b]) > eps);
    }
    std::vector<std::vector<double>> dc;
    for (auto c : net.centers) dc.push_back(s.distances_from(c));
    std::size_t mult = 0;
    for (std::size_t x = 0; x < s.size(); ++x) {
      if (dp[x] > r) continue;
      std::size_t hits = 0;
      for (const auto& d : dc) hits += d[x] <= eps;
      CHECK(hits >= 1);
      mult = std::max(mult, hits);
    }
    CHECK(mult == net.multiplicity);
    const double flat_count = std::pow((2 * r + eps / 2) / (eps / 2), n);
    CHECK(covering_count_bound(n, 0.0, r, eps) == doctest::Approx(flat_count));
    CHECK(net.count <= covering_count_bound(n, 0.0, r, eps));
    CHECK(net.multiplicity <= covering_multiplicity_bound(n, 0.0, eps));
  }
}

TEST_CASE("graph distance on a constant metric approaches the norm") {
  core::ChartGrid chart = core::ChartGrid::cube(2, 32, 4.0);
  const auto g = core::MetricField::sample(chart, [](const Point&, std::span<double> G) {
    G[0] = 2.0, G[1] = 0.0, G[2] = 0.0, G[3] = 0.5;
  });
  GraphDistance d(g, 2);
  const auto row = d.distances_from(0);
  const std::size_t target = chart.node({4, 2, 0, 0});
  const double exact = std::sqrt(2.0 * 0.5 * 0.5 + 0.5 * 0.25 * 0.25);
  CHECK(row[target] >= exact - 1e-12);
  CHECK(row[target] <= exact * 1.01);
}

TEST_CASE("curve length on a constant metric") {
  core::ChartGrid chart = core::ChartGrid::cube(2, 8, 4.0);
  const auto g = core::MetricField::sample(chart, [](const Point&, std::span<double> G) {
    G[0] = 4.0, G[1] = 0.0, G[2] = 0.0, G[3] = 1.0;
  });
  ChartCurve c;
  for (int k = 0; k <= 10; ++k) c.nodes.push_back({0.1 * k, 0.2 * k, 0.0, 0.0});
  CHECK(curve_length(g, c) == doctest::Approx(std::sqrt(4.0 * 1.0 + 1.0 * 4.0)));
  const auto bundle = curve_bundle(chart, 16, 3);
  CHECK(bundle.size() == 16);
  for (const auto& cur : bundle) CHECK(curve_length(g, cur) > 0.0);
}

TEST_CASE("sharp Sobolev constant equals the bubble quotient") {
  // u = (1 + r^2)^{-1/2} attains K(3).
  const double top = 2000.0;
  const double num = simpson([](double r) { return std::pow(1 + r * r, -3.0) * r * r; }, 0.0, top, 400000);
  const double den = simpson([](double r) { return r * r * r * r * std::pow(1 + r * r, -3.0); }, 0.0, top, 400000) +
                     1.0 / top;  // tail
  const double quotient = std::pow(4 * kPi * num, 1.0 / 6) / std::sqrt(4 * kPi * den);
  CHECK(sharp_sobolev_constant(3) == doctest::Approx(quotient).epsilon(1e-5));
  CHECK(sharp_sobolev_constant(3) == doctest::Approx(std::pow(3 * kPi, -0.5) * std::cbrt(4.0 / std::sqrt(kPi))).epsilon(1e-12));
}

TEST_CASE("P1 Sobolev quotient of a radial bump against radial quadrature") {
  const double R = 1.0;
  const auto patch = flat_ball_patch(3, R, R / 24);
  const auto f = radial_on_patch(patch, bump, R);
  const double num = simpson([&](double r) { return std::pow(bump(r, R), 6) * r * r; }, 0.0, R);
  const double den = simpson([&](double r) { return std::pow(4 * r * (R * R - r * r), 2) * r * r; }, 0.0, R);
  const double oracle = std::pow(4 * kPi * num, 1.0 / 6) / std::sqrt(4 * kPi * den);
  CHECK(sobolev_quotient(patch, f) == doctest::Approx(oracle).epsilon(0.02));
  std::vector<double> scaled(f);
  for (auto& v : scaled) v *= 7.5;
  CHECK(sobolev_quotient(patch, scaled) == doctest::Approx(sobolev_quotient(patch, f)).epsilon(1e-12));
}

TEST_CASE("Sobolev estimate stays below the sharp constant") {
  const auto patch = flat_ball_patch(3, 1.0, 1.0 / 8);
  SobolevOptions opt;
  opt.graded_nodes = 17;
  const auto est = sobolev_constant(patch, opt);
  CHECK(est.value <= sharp_sobolev_constant(3) * (1 + 1e-9));
  CHECK(est.value >= 0.8 * sharp_sobolev_constant(3));
  CHECK(est.value >= est.reference_bump);
  CHECK_THROWS_AS(sobolev_constant(flat_ball_patch(2, 1.0, 0.25)), Error);
}

TEST_CASE("membership card of round spheres") {
  const auto card = membership_card(zoo::ModelMetric::round_sphere(3, 2.0), 1.0, 6);
  CHECK(card.sup_ric == doctest::Approx(0.5));
  CHECK(card.conj == doctest::Approx(2 * kPi).epsilon(1e-4));
  CHECK(card.member);
  CHECK(!membership_card(zoo::ModelMetric::round_sphere(3, 1.0), 1.0, 6).member);
}

TEST_CASE("halton points lie in the unit cube and differ") {
  for (int d = 0; d < 5; ++d) {
    CHECK(halton(1, d) > 0.0);
    for (std::uint64_t i = 1; i < 50; ++i) {
      CHECK(halton(i, d) >= 0.0);
      CHECK(halton(i, d) < 1.0);
      CHECK(halton(i, d) != halton(i + 1, d));
    }
  }
}

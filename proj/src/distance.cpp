#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <random>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rflab/probes.hpp"

#include "interp.hpp"

namespace rflab::probes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t argmax(const std::vector<double>& d) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i] > d[best]) best = i;
  return best;
}

}  // namespace

// GraphDistance --------------------------------------------------------------

GraphDistance::GraphDistance(const core::MetricField& g, int reach, const LocalGeometry* relax)
    : chart_(g.chart()), relax_(relax) {
  if (reach < 1) throw Error(ErrorCode::InvalidArgument, "graph reach must be >= 1");
  const int n = chart_.dimension();
  std::array<int, kMaxDim> o{};
  const int side = 2 * reach + 1;
  int total = 1;
  for (int a = 0; a < n; ++a) total *= side;
  for (int idx = 0; idx < total; ++idx) {
    int rem = idx, gcd = 0;
    bool zero = true;
    for (int a = n - 1; a >= 0; --a) {
      o[a] = rem % side - reach;
      rem /= side;
      if (o[a] != 0) zero = false;
      gcd = std::gcd(gcd, std::abs(o[a]));
    }
    if (!zero && gcd == 1) offsets_.push_back(o);
  }
  const std::size_t K = offsets_.size();
  weights_.assign(chart_.node_count() * K, 0.0);
  for (std::size_t node = 0; node < chart_.node_count(); ++node)
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          s += g(node, i, j) * offsets_[k][i] * chart_.spacing(i) * offsets_[k][j] * chart_.spacing(j);
      weights_[node * K + k] = std::sqrt(s);
    }
}

std::vector<double> GraphDistance::distances_from(std::size_t source) const {
  const int n = chart_.dimension();
  const std::size_t K = offsets_.size();
  std::vector<double> dist(chart_.node_count(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, node] = heap.top();
    heap.pop();
    if (d > dist[node]) continue;
    const Coords c = chart_.coords(node);
    for (std::size_t k = 0; k < K; ++k) {
      Coords t = c;
      for (int a = 0; a < n; ++a) t[a] += offsets_[k][a];
      const std::size_t nb = chart_.node(t);
      const double w = 0.5 * (weights_[node * K + k] + weights_[nb * K + k]);
      if (d + w < dist[nb]) {
        dist[nb] = d + w;
        heap.emplace(dist[nb], nb);
      }
    }
  }
  return dist;
}

double GraphDistance::relaxed(std::size_t i, std::size_t j, double upper) const {
  if (!relax_) return upper;
  const int n = chart_.dimension();
  ChartPoint a;
  a.x = chart_.position(i);
  Point b = chart_.position(j);
  for (int k = 0; k < n; ++k) {
    const double L = chart_.period(k);
    double d = b[k] - a.x[k];
    d -= L * std::round(d / L);
    b[k] = a.x[k] + d;
  }
  const auto s = shoot_distance(*relax_, a, b, 0.25 * chart_.min_spacing());
  return s ? std::min(upper, *s) : upper;
}

// FlatTorusSample ------------------------------------------------------------

double FlatTorusSample::distance(std::size_t i, std::size_t j) const {
  const Point a = chart_.position(i), b = chart_.position(j);
  double s = 0.0;
  for (int k = 0; k < chart_.dimension(); ++k) {
    const double L = chart_.period(k);
    double d = std::abs(b[k] - a[k]);
    d = std::min(d, L - d);
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<double> FlatTorusSample::distances_from(std::size_t i) const {
  std::vector<double> d(size());
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = distance(i, j);
  return d;
}

// SphereSample ---------------------------------------------------------------

SphereSample::SphereSample(int n, double r, std::size_t count) : n_(n), r_(r) {
  const int m = n + 1;
  for (int a = 0; a < m; ++a) {
    std::vector<double> p(m, 0.0);
    p[a] = 1.0;
    points_.push_back(p);
    p[a] = -1.0;
    points_.push_back(p);
  }
  for (std::uint64_t i = 1; points_.size() + 1 < count; ++i) {
    std::vector<double> p(m);
    double s = 0.0;
    for (int a = 0; a < m; ++a) {
      p[a] = 2.0 * halton(i, a) - 1.0;
      s += p[a] * p[a];
    }
    if (s > 1.0 || s < 0.01) continue;
    for (double& x : p) x /= std::sqrt(s);
    points_.push_back(p);
    for (double& x : p) x = -x;
    points_.push_back(p);
  }
}

double SphereSample::distance(std::size_t i, std::size_t j) const {
  double c = 0.0;
  for (int a = 0; a <= n_; ++a) c += points_[i][a] * points_[j][a];
  return r_ * std::acos(std::clamp(c, -1.0, 1.0));
}

std::vector<double> SphereSample::distances_from(std::size_t i) const {
  std::vector<double> d(size());
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = distance(i, j);
  return d;
}

// Shooting -------------------------------------------------------------------

std::optional<double> shoot_distance(const LocalGeometry& geo, const ChartPoint& a, const Point& b, double ds) {
  const int n = geo.dimension();
  Eigen::VectorXd w(n), target(n);
  for (int k = 0; k < n; ++k) {
    w[k] = b[k] - a.x[k];
    target[k] = b[k];
  }
  auto end_of = [&](const Eigen::VectorXd& v) {
    const ChartPoint p = exp_map(geo, a, std::span<const double>(v.data(), n), ds);
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x[k] = p.x[k];
    return x;
  };
  const double scale = 1.0 + target.norm();
  for (int it = 0; it < 30; ++it) {
    const Eigen::VectorXd F = end_of(w) - target;
    if (!F.allFinite()) return std::nullopt;
    if (F.norm() < 1e-11 * scale) {
      double g[kMaxDim * kMaxDim];
      geo.metric(a, g);
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s += g[i * n + j] * w[i] * w[j];
      return std::sqrt(s);
    }
    Eigen::MatrixXd J(n, n);
    const double step = 1e-6 * std::max(1.0, w.norm());
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd wp = w, wm = w;
      wp[k] += step;
      wm[k] -= step;
      J.col(k) = (end_of(wp) - end_of(wm)) / (2.0 * step);
    }
    w -= J.fullPivLu().solve(F);
  }
  return std::nullopt;
}

// Diameter, excess ------------------------------------------------------------

Diameter diameter(const MetricSample& sample, int sources) {
  Diameter best;
  const std::size_t N = sample.size();
  if (N == 0) return best;
  for (int s = 0; s < std::max(1, sources); ++s) {
    std::size_t from = static_cast<std::size_t>(s) * N / std::max(1, sources);
    for (int sweep = 0; sweep < 3; ++sweep) {
      const auto d = sample.distances_from(from);
      const std::size_t far = argmax(d);
      if (d[far] > best.graph_bound) {
        best.graph_bound = d[far];
        best.a = from;
        best.b = far;
      }
      from = far;
    }
  }
  best.value = sample.relaxed(best.a, best.b, best.graph_bound);
  return best;
}

double excess_for_pair(const MetricSample& sample, std::size_t p, std::size_t q) {
  const auto dp = sample.distances_from(p);
  const auto dq = sample.distances_from(q);
  double worst = 0.0;
  for (std::size_t x = 0; x < dp.size(); ++x) worst = std::max(worst, dp[x] + dq[x] - dp[q]);
  return worst;
}

Excess excess(const MetricSample& sample, int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t N = sample.size();
  auto pick = [&] { return std::min(N - 1, static_cast<std::size_t>(zoo::unit_from_bits(rng()) * N)); };
  Excess best;
  best.value = kInf;
  for (int k = 0; k < pairs; ++k) {
    const std::size_t p = pick();
    const auto dp = sample.distances_from(p);
    const std::size_t q = (k % 2 == 0) ? argmax(dp) : pick();
    if (q == p) continue;
    const auto dq = sample.distances_from(q);
    double worst = 0.0;
    for (std::size_t x = 0; x < N; ++x) worst = std::max(worst, dp[x] + dq[x] - dp[q]);
    if (worst < best.value) best = {worst, p, q};
  }
  if (best.value == kInf) best.value = 0.0;
  return best;
}

// Volume -----------------------------------------------------------------------

double volume(const core::MetricField& g) { return core::total_volume(g); }

double sphere_volume_polar(int n, double r) {
  using boost::math::quadrature::gauss_kronrod;
  const double shell = 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);  // vol(S^{n-1})
  const double radial = gauss_kronrod<double, 61>::integrate(
      [&](double s) { return std::pow(r * std::sin(s / r), n - 1); }, 0.0, std::numbers::pi * r, 15, 1e-14);
  return shell * radial;
}

// Coverings --------------------------------------------------------------------

EpsilonNet epsilon_net(const MetricSample& sample, std::size_t p, double r, double epsilon) {
  if (!(epsilon > 0.0) || !(r >= epsilon)) throw Error(ErrorCode::Domain, "epsilon_net needs 0 < epsilon <= r");
  const auto dp = sample.distances_from(p);
  std::vector<std::size_t> ball;
  for (std::size_t x = 0; x < dp.size(); ++x)
    if (dp[x] <= r) ball.push_back(x);
  std::stable_sort(ball.begin(), ball.end(), [&](std::size_t a, std::size_t b) { return dp[a] < dp[b]; });

  EpsilonNet net;
  std::vector<double> nearest(dp.size(), kInf);
  std::vector<std::size_t> covered(dp.size(), 0);
  for (std::size_t x : ball) {
    if (nearest[x] <= epsilon) continue;
    net.centers.push_back(x);
    const auto dx = (x == p) ? dp : sample.distances_from(x);
    for (std::size_t y : ball) {
      nearest[y] = std::min(nearest[y], dx[y]);
      if (dx[y] <= epsilon) ++covered[y];
    }
  }
  net.count = net.centers.size();
  for (std::size_t y : ball) net.multiplicity = std::max(net.multiplicity, covered[y]);
  return net;
}

double comparison_ball_volume(int n, double H, double rho) {
  using boost::math::quadrature::gauss_kronrod;
  if (H == 0.0) return std::pow(rho, n) / n;
  const double k = std::sqrt(std::abs(H));
  double upper = rho;
  if (H > 0.0) upper = std::min(rho, std::numbers::pi / k);
  auto sn = [&](double s) { return H > 0.0 ? std::sin(k * s) / k : std::sinh(k * s) / k; };
  return gauss_kronrod<double, 61>::integrate([&](double s) { return std::pow(sn(s), n - 1); }, 0.0, upper, 15,
                                               1e-13);
}

double covering_count_bound(int n, double H, double r, double epsilon) {
  return comparison_ball_volume(n, H, 2.0 * r + 0.5 * epsilon) / comparison_ball_volume(n, H, 0.5 * epsilon);
}

double covering_multiplicity_bound(int n, double H, double epsilon) {
  return comparison_ball_volume(n, H, 2.5 * epsilon) / comparison_ball_volume(n, H, 0.5 * epsilon);
}

// Curves -----------------------------------------------------------------------

double curve_length(const core::MetricField& g, const ChartCurve& c) {
  const int n = g.dimension();
  double total = 0.0;
  double G[kMaxDim * kMaxDim];
  for (std::size_t k = 1; k < c.nodes.size(); ++k) {
    Point mid{}, d{};
    for (int a = 0; a < n; ++a) {
      mid[a] = 0.5 * (c.nodes[k][a] + c.nodes[k - 1][a]);
      d[a] = c.nodes[k][a] - c.nodes[k - 1][a];
    }
    detail::interpolate_metric(g, mid, G);
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s += G[i * n + j] * d[i] * d[j];
    total += std::sqrt(s);
  }
  return total;
}

std::vector<ChartCurve> curve_bundle(const core::ChartGrid& chart, int count, std::uint64_t seed) {
  const int n = chart.dimension();
  std::mt19937_64 rng(seed);
  auto u = [&] { return zoo::unit_from_bits(rng()); };
  double Lmin = chart.period(0);
  for (int a = 1; a < n; ++a) Lmin = std::min(Lmin, chart.period(a));
  constexpr int kNodes = 96;
  std::vector<ChartCurve> out;
  for (int c = 0; c < count; ++c) {
    ChartCurve curve;
    Point start{};
    for (int a = 0; a < n; ++a) start[a] = u() * chart.period(a);
    if (c % 2 == 0) {
      Point dir{};
      double norm = 0.0;
      while (norm < 0.1) {
        norm = 0.0;
        for (int a = 0; a < n; ++a) {
          dir[a] = 2.0 * u() - 1.0;
          norm += dir[a] * dir[a];
        }
        norm = std::sqrt(norm);
      }
      const double len = (0.2 + 0.3 * u()) * Lmin;
      for (int k = 0; k <= kNodes; ++k) {
        Point x = start;
        for (int a = 0; a < n; ++a) x[a] += dir[a] / norm * len * k / kNodes;
        curve.nodes.push_back(x);
      }
    } else {
      const double radius = (0.1 + 0.15 * u()) * Lmin;
      const int a0 = c % n, a1 = (c + 1) % n;
      for (int k = 0; k <= kNodes; ++k) {
        const double th = 2.0 * std::numbers::pi * k / kNodes;
        Point x = start;
        x[a0] += radius * std::cos(th);
        x[a1] += radius * std::sin(th);
        curve.nodes.push_back(x);
      }
    }
    out.push_back(std::move(curve));
  }
  return out;
}

// Membership -------------------------------------------------------------------

MembershipCard membership_card(const zoo::ModelMetric& m, double r0, int samples) {
  const auto curv = zoo::exact_curvature(m);
  MembershipCard card;
  card.sup_ric = curv.ric_norm;
  switch (m.family) {
    case zoo::Family::RoundSphere:
      card.conj = std::numbers::pi * m.radius;
      card.conj_exact = true;
      card.injectivity_upper = std::numbers::pi * m.radius;
      break;
    case zoo::Family::FlatTorus:
      card.conj = kInf;
      card.conj_exact = true;
      card.injectivity_upper = 0.5 * *std::min_element(m.periods.begin(), m.periods.end());
      break;
    case zoo::Family::ProductSphereCircle:
      // K <= 1/r^2 gives conj >= pi r, attained along great circles of the sphere factor.
      card.conj = std::numbers::pi * m.radius;
      card.conj_exact = true;
      card.injectivity_upper = std::min(std::numbers::pi * m.radius, 0.5 * m.circle_length);
      break;
    case zoo::Family::MilnorSU2:
    case zoo::Family::HeisenbergNil: {
      const LeftInvariantGeometry geo(zoo::frame_algebra(m));
      const double kmax = std::max({std::abs(curv.sectional_max), std::abs(curv.sectional_min), 1e-6});
      const double cap = 4.0 * std::numbers::pi / std::sqrt(kmax);
      const auto conj = jacobi_conjugate_radius(geo, ChartPoint{}, std::max(samples, 6), cap, cap / 4000.0);
      card.conj = conj.found ? conj.estimate - conj.margin : kInf;
      if (m.family == zoo::Family::HeisenbergNil) card.injectivity_upper = 0.5 * m.epsilon;
      break;
    }
  }
  card.member = card.sup_ric <= 1.0 && card.conj >= r0;
  return card;
}

}  // namespace rflab::probes

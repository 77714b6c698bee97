#include "rflab/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "rflab/error.hpp"

namespace rflab::zoo {

namespace {

using Lambda = std::array<double, 3>;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::Validation, what); }

double unit_sphere_volume(int n) {
  // vol(S^n) = 2 pi^((n+1)/2) / Gamma((n+1)/2)
  return 2.0 * std::pow(std::numbers::pi, 0.5 * (n + 1)) / std::tgamma(0.5 * (n + 1));
}

Lambda milnor_rhs(const Lambda& l) {
  Lambda d{};
  for (int i = 0; i < 3; ++i) {
    const double a = l[i], b = l[(i + 1) % 3], c = l[(i + 2) % 3];
    d[i] = -4.0 * (a * a - (b - c) * (b - c)) / (b * c);
  }
  return d;
}

std::vector<double> three_dim_from_ricci(const std::array<double, 3>& rho, ExactCurvature& out) {
  std::vector<double> eig(rho.begin(), rho.end());
  std::sort(eig.begin(), eig.end());
  const double R = rho[0] + rho[1] + rho[2];
  double sq = 0.0;
  for (double r : rho) sq += r * r;
  out.scalar = R;
  // In dimension three the curvature operator is diagonal in the Ricci frame,
  // K(e_i, e_j) = R/2 - rho_k.
  out.sectional_min = R / 2.0 - eig[2];
  out.sectional_max = R / 2.0 - eig[0];
  out.rm_norm = std::sqrt(std::max(0.0, 4.0 * sq - R * R));
  out.ric_norm = std::max(std::abs(eig[0]), std::abs(eig[2]));
  out.ric_full_norm = std::sqrt(sq);
  return eig;
}

double smooth_step(double u) {
  auto psi = [](double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; };
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return psi(u) / (psi(u) + psi(1.0 - u));
}

}  // namespace

const char* family_name(Family f) noexcept {
  switch (f) {
    case Family::RoundSphere: return "round-sphere";
    case Family::FlatTorus: return "flat-torus";
    case Family::ProductSphereCircle: return "product-sphere-circle";
    case Family::MilnorSU2: return "milnor-su2";
    case Family::HeisenbergNil: return "heisenberg-nil";
  }
  return "unknown";
}

std::optional<Family> parse_family(std::string_view name) {
  for (Family f : {Family::RoundSphere, Family::FlatTorus, Family::ProductSphereCircle, Family::MilnorSU2,
                   Family::HeisenbergNil})
    if (name == family_name(f)) return f;
  return std::nullopt;
}

ModelMetric ModelMetric::round_sphere(int n, double r) {
  ModelMetric m;
  m.family = Family::RoundSphere;
  m.n = n;
  m.radius = r;
  m.validate();
  return m;
}

ModelMetric ModelMetric::flat_torus(std::vector<double> periods) {
  ModelMetric m;
  m.family = Family::FlatTorus;
  m.n = static_cast<int>(periods.size());
  m.periods = std::move(periods);
  m.validate();
  return m;
}

ModelMetric ModelMetric::product_sphere_circle(double r, double circle_length) {
  ModelMetric m;
  m.family = Family::ProductSphereCircle;
  m.n = 3;
  m.radius = r;
  m.circle_length = circle_length;
  m.validate();
  return m;
}

ModelMetric ModelMetric::milnor(double l1, double l2, double l3) {
  ModelMetric m;
  m.family = Family::MilnorSU2;
  m.n = 3;
  m.lambda = {l1, l2, l3};
  m.validate();
  return m;
}

ModelMetric ModelMetric::heisenberg(double eps) {
  ModelMetric m;
  m.family = Family::HeisenbergNil;
  m.n = 3;
  m.epsilon = eps;
  m.validate();
  return m;
}

void ModelMetric::validate() const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  switch (family) {
    case Family::RoundSphere:
      if (n < 2 || n > kMaxDim) invalid("round-sphere dimension must be in [2, 4]");
      if (!positive(radius)) invalid("round-sphere radius must be positive");
      break;
    case Family::FlatTorus:
      if (n < 2 || n > kMaxDim || static_cast<int>(periods.size()) != n)
        invalid("flat-torus needs 2..4 periods");
      for (double p : periods)
        if (!positive(p)) invalid("flat-torus periods must be positive");
      break;
    case Family::ProductSphereCircle:
      if (n != 3) invalid("product-sphere-circle is three-dimensional");
      if (!positive(radius) || !positive(circle_length)) invalid("product-sphere-circle parameters must be positive");
      break;
    case Family::MilnorSU2:
      if (n != 3) invalid("milnor-su2 is three-dimensional");
      for (double l : lambda)
        if (!positive(l)) invalid("milnor-su2 coefficients must be positive");
      break;
    case Family::HeisenbergNil:
      if (n != 3) invalid("heisenberg-nil is three-dimensional");
      if (!positive(epsilon) || epsilon > 1.0) invalid("heisenberg-nil epsilon must lie in (0, 1]");
      break;
  }
}

ModelMetric ModelMetric::scaled(double c) const {
  if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale factor must be positive");
  ModelMetric m = *this;
  const double s = std::sqrt(c);
  switch (family) {
    case Family::RoundSphere: m.radius *= s; break;
    case Family::FlatTorus:
      for (double& p : m.periods) p *= s;
      break;
    case Family::ProductSphereCircle:
      m.radius *= s;
      m.circle_length *= s;
      break;
    case Family::MilnorSU2:
      for (double& l : m.lambda) l *= c;
      break;
    case Family::HeisenbergNil:
      throw Error(ErrorCode::Unsupported, "heisenberg-nil is not closed under scaling");
  }
  return m;
}

ExactCurvature exact_curvature(const ModelMetric& m) {
  m.validate();
  ExactCurvature out;
  const int n = m.n;
  switch (m.family) {
    case Family::RoundSphere: {
      const double K = 1.0 / (m.radius * m.radius);
      out.ricci_eigenvalues.assign(n, (n - 1) * K);
      out.scalar = n * (n - 1) * K;
      out.sectional_min = out.sectional_max = K;
      out.rm_norm = std::sqrt(2.0 * n * (n - 1)) * K;
      out.ric_norm = (n - 1) * K;
      out.ric_full_norm = std::sqrt(static_cast<double>(n)) * (n - 1) * K;
      break;
    }
    case Family::FlatTorus:
      out.ricci_eigenvalues.assign(n, 0.0);
      break;
    case Family::ProductSphereCircle: {
      const double K = 1.0 / (m.radius * m.radius);
      out.ricci_eigenvalues = {0.0, K, K};
      out.scalar = 2.0 * K;
      out.sectional_min = 0.0;
      out.sectional_max = K;
      out.rm_norm = 2.0 * K;
      out.ric_norm = K;
      out.ric_full_norm = std::sqrt(2.0) * K;
      break;
    }
    case Family::MilnorSU2: {
      const auto& l = m.lambda;
      const double prod = l[0] * l[1] * l[2];
      std::array<double, 3> rho{};
      for (int i = 0; i < 3; ++i) {
        const double b = l[(i + 1) % 3], c = l[(i + 2) % 3];
        rho[i] = 2.0 * (l[i] * l[i] - (b - c) * (b - c)) / prod;
      }
      out.ricci_eigenvalues = three_dim_from_ricci(rho, out);
      break;
    }
    case Family::HeisenbergNil: {
      const double e2 = m.epsilon * m.epsilon;
      out.ricci_eigenvalues = three_dim_from_ricci({-e2 / 2.0, -e2 / 2.0, e2 / 2.0}, out);
      break;
    }
  }
  return out;
}

double model_volume(const ModelMetric& m) {
  switch (m.family) {
    case Family::RoundSphere: return unit_sphere_volume(m.n) * std::pow(m.radius, m.n);
    case Family::FlatTorus: {
      double v = 1.0;
      for (double p : m.periods) v *= p;
      return v;
    }
    case Family::ProductSphereCircle: return 4.0 * std::numbers::pi * m.radius * m.radius * m.circle_length;
    case Family::MilnorSU2:
      return 2.0 * std::numbers::pi * std::numbers::pi * std::sqrt(m.lambda[0] * m.lambda[1] * m.lambda[2]);
    case Family::HeisenbergNil: return m.epsilon;
  }
  return 0.0;
}

double model_c0_distance(const ModelMetric& g1, const ModelMetric& g0) {
  if (g1.family != g0.family || g1.n != g0.n)
    throw Error(ErrorCode::ChartMismatch, "c0 distance between different model families");
  auto ratio = [](double a, double b) { return std::abs(a / b - 1.0); };
  switch (g0.family) {
    case Family::RoundSphere: return ratio(g1.radius * g1.radius, g0.radius * g0.radius);
    case Family::FlatTorus: {
      double worst = 0.0;
      for (int i = 0; i < g0.n; ++i)
        worst = std::max(worst, ratio(g1.periods[i] * g1.periods[i], g0.periods[i] * g0.periods[i]));
      return worst;
    }
    case Family::ProductSphereCircle:
      return std::max(ratio(g1.radius * g1.radius, g0.radius * g0.radius),
                      ratio(g1.circle_length * g1.circle_length, g0.circle_length * g0.circle_length));
    case Family::MilnorSU2: {
      double worst = 0.0;
      for (int i = 0; i < 3; ++i) worst = std::max(worst, ratio(g1.lambda[i], g0.lambda[i]));
      return worst;
    }
    case Family::HeisenbergNil: return ratio(g1.epsilon * g1.epsilon, g0.epsilon * g0.epsilon);
  }
  return 0.0;
}

std::array<double, 27> FrameAlgebra::connection() const {
  std::array<double, 27> G{};
  auto c = [&](int a, int b, int k) { return C[(a * 3 + b) * 3 + k]; };
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int k = 0; k < 3; ++k) G[(a * 3 + b) * 3 + k] = 0.5 * (c(a, b, k) - c(b, k, a) + c(k, a, b));
  return G;
}

std::array<double, 81> FrameAlgebra::riemann() const {
  const auto G = connection();
  auto g = [&](int a, int b, int k) { return G[(a * 3 + b) * 3 + k]; };
  auto c = [&](int a, int b, int k) { return C[(a * 3 + b) * 3 + k]; };
  std::array<double, 81> R{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int k = 0; k < 3; ++k)
        for (int f = 0; f < 3; ++f) {
          double acc = 0.0;
          for (int d = 0; d < 3; ++d) acc += g(b, k, d) * g(a, d, f) - g(a, k, d) * g(b, d, f) - c(a, b, d) * g(d, k, f);
          R[((a * 3 + b) * 3 + k) * 3 + f] = acc;
        }
  return R;
}

std::array<double, 9> FrameAlgebra::ricci() const {
  const auto R = riemann();
  std::array<double, 9> ric{};
  for (int b = 0; b < 3; ++b)
    for (int k = 0; k < 3; ++k) {
      double acc = 0.0;
      for (int a = 0; a < 3; ++a) acc += R[((a * 3 + b) * 3 + k) * 3 + a];
      ric[b * 3 + k] = acc;
    }
  return ric;
}

FrameAlgebra frame_algebra(const ModelMetric& m) {
  m.validate();
  FrameAlgebra fa;
  auto set = [&](int a, int b, int k, double v) {
    fa.C[(a * 3 + b) * 3 + k] = v;
    fa.C[(b * 3 + a) * 3 + k] = -v;
  };
  if (m.family == Family::MilnorSU2) {
    const auto& l = m.lambda;
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3, k = (i + 2) % 3;
      set(j, k, i, 2.0 * std::sqrt(l[i] / (l[j] * l[k])));
    }
  } else if (m.family == Family::HeisenbergNil) {
    set(0, 1, 2, m.epsilon);
  } else {
    throw Error(ErrorCode::Unsupported, std::string("no left-invariant frame for ") + family_name(m.family));
  }
  return fa;
}

std::vector<double> reduced_state(const ModelMetric& m) {
  switch (m.family) {
    case Family::RoundSphere:
    case Family::ProductSphereCircle: return {m.radius * m.radius};
    case Family::FlatTorus: return {};
    case Family::MilnorSU2: return {m.lambda[0], m.lambda[1], m.lambda[2]};
    case Family::HeisenbergNil: break;
  }
  throw Error(ErrorCode::Unsupported, "heisenberg-nil has no reduced flow; use a grid realization");
}

ModelMetric from_reduced(const ModelMetric& like, std::span<const double> state) {
  ModelMetric m = like;
  switch (like.family) {
    case Family::RoundSphere:
    case Family::ProductSphereCircle:
      if (!(state[0] > 0.0)) throw Error(ErrorCode::PositivityLoss, "radius squared became non-positive");
      m.radius = std::sqrt(state[0]);
      break;
    case Family::FlatTorus: break;
    case Family::MilnorSU2:
      for (int i = 0; i < 3; ++i) {
        if (!(state[i] > 0.0)) throw Error(ErrorCode::PositivityLoss, "milnor coefficient became non-positive");
        m.lambda[i] = state[i];
      }
      break;
    case Family::HeisenbergNil:
      throw Error(ErrorCode::Unsupported, "heisenberg-nil has no reduced flow; use a grid realization");
  }
  return m;
}

std::vector<double> reduced_rhs(const ModelMetric& like, std::span<const double> state) {
  switch (like.family) {
    case Family::RoundSphere: return {-2.0 * (like.n - 1)};
    case Family::ProductSphereCircle: return {-2.0};
    case Family::FlatTorus: return {};
    case Family::MilnorSU2: {
      const auto d = milnor_rhs({state[0], state[1], state[2]});
      return {d[0], d[1], d[2]};
    }
    case Family::HeisenbergNil: break;
  }
  throw Error(ErrorCode::Unsupported, "heisenberg-nil has no reduced flow; use a grid realization");
}

double reduced_speed(const ModelMetric& m) { return 2.0 * exact_curvature(m).ric_full_norm; }

ExactFlowSolution::ExactFlowSolution(const ModelMetric& initial) : initial_(initial) {
  initial_.validate();
  switch (initial_.family) {
    case Family::RoundSphere: t_blowup_ = initial_.radius * initial_.radius / (2.0 * (initial_.n - 1)); break;
    case Family::ProductSphereCircle: t_blowup_ = initial_.radius * initial_.radius / 2.0; break;
    case Family::FlatTorus: break;
    case Family::MilnorSU2: {
      // Integrate until the metric has shrunk by 1e-6; the remaining time
      // follows from the asymptotically round end, where dlambda/dt -> -4.
      namespace odeint = boost::numeric::odeint;
      Lambda l = initial_.lambda;
      const double scale = *std::max_element(l.begin(), l.end());
      auto stepper = odeint::make_controlled(1e-13, 1e-13, odeint::runge_kutta_fehlberg78<Lambda>());
      auto rhs = [](const Lambda& x, Lambda& dx, double) { dx = milnor_rhs(x); };
      double t = 0.0, dt = 1e-6 * scale;
      while (*std::max_element(l.begin(), l.end()) > 1e-6 * scale) {
        // Keep every stage away from lambda = 0.
        const Lambda d = milnor_rhs(l);
        double rate = 0.0;
        for (double v : d) rate = std::max(rate, std::abs(v));
        dt = std::min(dt, 0.05 * *std::min_element(l.begin(), l.end()) / rate);
        stepper.try_step(rhs, l, t, dt);
      }
      t_blowup_ = t + (l[0] + l[1] + l[2]) / 12.0;
      break;
    }
    case Family::HeisenbergNil:
      throw Error(ErrorCode::Unsupported, "heisenberg-nil has no reduced flow; use a grid realization");
  }
}

ModelMetric ExactFlowSolution::at(double t) const {
  if (!(t >= 0.0) || !(t < t_blowup_)) throw Error(ErrorCode::Domain, "time outside [0, T_blowup)");
  ModelMetric m = initial_;
  switch (initial_.family) {
    case Family::RoundSphere:
      m.radius = std::sqrt(initial_.radius * initial_.radius - 2.0 * (initial_.n - 1) * t);
      break;
    case Family::ProductSphereCircle: m.radius = std::sqrt(initial_.radius * initial_.radius - 2.0 * t); break;
    case Family::FlatTorus: break;
    case Family::MilnorSU2: {
      namespace odeint = boost::numeric::odeint;
      Lambda l = initial_.lambda;
      if (t > 0.0) {
        auto rhs = [](const Lambda& x, Lambda& dx, double) { dx = milnor_rhs(x); };
        odeint::integrate_adaptive(odeint::make_controlled(1e-13, 1e-13, odeint::runge_kutta_fehlberg78<Lambda>()),
                                   rhs, l, 0.0, t, std::min(t, 1e-4));
      }
      m.lambda = l;
      break;
    }
    case Family::HeisenbergNil: break;
  }
  return m;
}

ExactFlowSolution exact_flow(const ModelMetric& m) { return ExactFlowSolution(m); }

GridRealization realize(const ModelMetric& m, int nodes_per_axis, double chart_period, double core_half_width) {
  m.validate();
  const int n = m.n;
  std::vector<double> periods(n, chart_period);
  std::vector<bool> windowed(n, true);
  switch (m.family) {
    case Family::FlatTorus:
      periods = m.periods;
      windowed.assign(n, false);
      break;
    case Family::ProductSphereCircle:
      periods[2] = m.circle_length;
      windowed[2] = false;
      break;
    case Family::HeisenbergNil:
      periods[1] = periods[2] = 1.0;
      windowed[1] = windowed[2] = false;
      break;
    case Family::RoundSphere: break;
    case Family::MilnorSU2: throw Error(ErrorCode::Unsupported, "milnor-su2 has no periodic grid realization");
  }
  if (!(core_half_width > 0.0) || core_half_width >= 0.5 * chart_period)
    throw Error(ErrorCode::InvalidArgument, "core half-width must lie in (0, period/2)");

  GridRealization out;
  const core::ChartGrid chart(std::vector<int>(n, nodes_per_axis), periods);
  for (int a = 0; a < n; ++a) out.center[a] = 0.5 * periods[a];
  const double outer = core_half_width + 0.7 * (0.5 * chart_period - core_half_width);

  auto model = [&](const Point& y, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    switch (m.family) {
      case Family::RoundSphere: {
        double s = 0.0;
        for (int a = 0; a < n; ++a) s += y[a] * y[a];
        const double f = 4.0 * m.radius * m.radius / ((1.0 + s) * (1.0 + s));
        for (int a = 0; a < n; ++a) g[a * n + a] = f;
        break;
      }
      case Family::ProductSphereCircle: {
        const double s = y[0] * y[0] + y[1] * y[1];
        const double f = 4.0 * m.radius * m.radius / ((1.0 + s) * (1.0 + s));
        g[0] = g[4] = f;
        g[8] = 1.0;
        break;
      }
      case Family::HeisenbergNil: {
        const double e2 = m.epsilon * m.epsilon;
        const double x = y[0];
        g[0] = 1.0;
        g[4] = 1.0 + e2 * x * x;
        g[5] = g[7] = -e2 * x;
        g[8] = e2;
        break;
      }
      default:
        for (int a = 0; a < n; ++a) g[a * n + a] = 1.0;
    }
  };

  std::vector<double> g0(n * n), g1(n * n);
  const Point origin{};
  model(origin, g0);
  out.metric = core::MetricField::sample(chart, [&](const Point& x, std::span<double> g) {
    Point y{};
    double w = 1.0;
    for (int a = 0; a < n; ++a) {
      y[a] = x[a] - out.center[a];
      if (windowed[a]) w *= 1.0 - smooth_step((std::abs(y[a]) - core_half_width) / (outer - core_half_width));
    }
    model(y, g1);
    for (int k = 0; k < n * n; ++k) g[k] = w * g1[k] + (1.0 - w) * g0[k];
  });

  for (std::size_t node = 0; node < chart.node_count(); ++node) {
    const Point x = chart.position(node);
    bool inside = true;
    for (int a = 0; a < n && inside; ++a)
      if (windowed[a] && std::abs(x[a] - out.center[a]) > core_half_width - 2.5 * chart.spacing(a)) inside = false;
    if (inside) out.core_nodes.push_back(node);
  }
  return out;
}

core::MetricField perturbed_torus(const Perturbation& p) {
  if (p.n < 2 || p.n > kMaxDim) throw Error(ErrorCode::Validation, "perturbed torus dimension must be in [2, 4]");
  if (!(p.amplitude >= 0.0) || p.amplitude >= 1.0)
    throw Error(ErrorCode::Validation, "perturbation amplitude must lie in [0, 1)");
  if (p.frequency < 1 || p.modes < 1) throw Error(ErrorCode::Validation, "perturbation frequency and modes must be >= 1");
  const int n = p.n;
  std::mt19937_64 rng(p.seed);
  auto uniform = [&] { return unit_from_bits(rng()); };

  struct Mode {
    std::array<int, kMaxDim> k{};
    double phase = 0.0;
    std::vector<double> S;
  };
  std::vector<Mode> modes(p.modes);
  for (Mode& mode : modes) {
    for (int a = 0; a < n; ++a)
      mode.k[a] = static_cast<int>(std::floor(uniform() * (2 * p.frequency + 1))) - p.frequency;
    const int axis = std::min(n - 1, static_cast<int>(uniform() * n));
    mode.k[axis] = uniform() < 0.5 ? -p.frequency : p.frequency;
    mode.phase = 2.0 * std::numbers::pi * uniform();
    mode.S.assign(n * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) mode.S[i * n + j] = mode.S[j * n + i] = 2.0 * uniform() - 1.0;
    Eigen::MatrixXd S = Eigen::Map<Eigen::MatrixXd>(mode.S.data(), n, n);
    const double norm = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .cwiseAbs()
                            .maxCoeff();
    for (double& s : mode.S) s /= norm * p.modes;
  }
  const core::ChartGrid chart = core::ChartGrid::cube(n, p.nodes, p.period);
  core::MetricField g = core::MetricField::sample(chart, [&](const Point& x, std::span<double> out) {
    for (int i = 0; i < n; ++i) out[i * n + i] = 1.0;
    for (const Mode& mode : modes) {
      double arg = mode.phase;
      for (int a = 0; a < n; ++a) arg += 2.0 * std::numbers::pi * mode.k[a] * x[a] / p.period;
      const double c = p.amplitude * std::cos(arg);
      for (int k = 0; k < n * n; ++k) out[k] += c * mode.S[k];
    }
  });
  g.validate();
  return g;
}

}  // namespace rflab::zoo

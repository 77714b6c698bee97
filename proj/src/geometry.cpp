#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "rflab/probes.hpp"

#include "interp.hpp"

namespace rflab::probes {

namespace {

double g_norm(const double* g, const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += g[i * n + j] * v[i] * v[j];
  return std::sqrt(std::max(0.0, s));
}

double g_dot(const double* g, const double* u, const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += g[i * n + j] * u[i] * v[j];
  return s;
}

// d/ds of a transported vector E along velocity v: -Gamma^k_ij v^i E^j.
void transport_rate(const double* gamma, const double* v, const double* E, double* out, int n) {
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) acc += gamma[(k * n + i) * n + j] * v[i] * E[j];
    out[k] = -acc;
  }
}

double radical_inverse(std::uint64_t i, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11};

}  // namespace

double halton(std::uint64_t index, int dim) { return radical_inverse(index, kPrimes[dim]); }

// GridGeometry ---------------------------------------------------------------

GridGeometry::GridGeometry(core::MetricField g, int workers) : g_(std::move(g)) {
  g_.validate();
  bundle_ = core::riemann(g_, workers);
}

void GridGeometry::metric(const ChartPoint& p, double* out) const { detail::interpolate_metric(g_, p.x, out); }

void GridGeometry::connection(const ChartPoint& p, double* out) const {
  const int n = dimension();
  std::fill(out, out + n * n * n, 0.0);
  detail::for_each_corner(g_.chart(), p.x, [&](std::size_t node, double w) {
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[(k * n + i) * n + j] += w * bundle_.christoffel(node, k, i, j);
  });
}

void GridGeometry::riemann(const ChartPoint& p, double* out) const {
  const int n = dimension();
  const int n4 = n * n * n * n;
  std::fill(out, out + n4, 0.0);
  detail::for_each_corner(g_.chart(), p.x, [&](std::size_t node, double w) {
    const auto R = bundle_.riemann_at(node);
    for (int k = 0; k < n4; ++k) out[k] += w * R[k];
  });
}

// SphereGeometry -------------------------------------------------------------

SphereGeometry::SphereGeometry(int n, double r) : n_(n), r_(r) {
  if (n < 2 || n > kMaxDim || !(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "sphere geometry: bad parameters");
}

void SphereGeometry::metric(const ChartPoint& p, double* g) const {
  double s = 0.0;
  for (int a = 0; a < n_; ++a) s += p.x[a] * p.x[a];
  const double f = 2.0 * r_ / (1.0 + s);
  std::fill(g, g + n_ * n_, 0.0);
  for (int a = 0; a < n_; ++a) g[a * n_ + a] = f * f;
}

void SphereGeometry::connection(const ChartPoint& p, double* gamma) const {
  // g = e^{2 phi} delta with phi = log(2r / (1 + |x|^2)).
  const int n = n_;
  double s = 0.0;
  for (int a = 0; a < n; ++a) s += p.x[a] * p.x[a];
  double dphi[kMaxDim];
  for (int a = 0; a < n; ++a) dphi[a] = -2.0 * p.x[a] / (1.0 + s);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double v = 0.0;
        if (i == k) v += dphi[j];
        if (j == k) v += dphi[i];
        if (i == j) v -= dphi[k];
        gamma[(k * n + i) * n + j] = v;
      }
}

void SphereGeometry::riemann(const ChartPoint& p, double* R) const {
  const int n = n_;
  double g[kMaxDim * kMaxDim];
  metric(p, g);
  const double K = 1.0 / (r_ * r_);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
          R[((i * n + j) * n + k) * n + l] = K * (g[j * n + k] * g[i * n + l] - g[i * n + k] * g[j * n + l]);
}

void SphereGeometry::normalize(ChartPoint& p, std::span<double> vectors) const {
  double s = 0.0;
  for (int a = 0; a < n_; ++a) s += p.x[a] * p.x[a];
  if (s <= 1.0) return;
  // Inversion x -> x/|x|^2 with Jacobian (I - 2 xhat xhat^T)/|x|^2.
  for (std::size_t off = 0; off + n_ <= vectors.size(); off += n_) {
    double xv = 0.0;
    for (int a = 0; a < n_; ++a) xv += p.x[a] * vectors[off + a];
    for (int a = 0; a < n_; ++a) vectors[off + a] = (vectors[off + a] - 2.0 * p.x[a] * xv / s) / s;
  }
  for (int a = 0; a < n_; ++a) p.x[a] /= s;
  p.chart ^= 1;
}

std::vector<double> SphereGeometry::embed(const ChartPoint& p) const {
  double s = 0.0;
  for (int a = 0; a < n_; ++a) s += p.x[a] * p.x[a];
  std::vector<double> X(n_ + 1);
  for (int a = 0; a < n_; ++a) X[a] = r_ * 2.0 * p.x[a] / (1.0 + s);
  X[n_] = r_ * (p.chart == 0 ? (s - 1.0) : (1.0 - s)) / (1.0 + s);
  return X;
}

// LeftInvariantGeometry ------------------------------------------------------

LeftInvariantGeometry::LeftInvariantGeometry(const zoo::FrameAlgebra& algebra) {
  const auto G = algebra.connection();  // <nabla_a e_b, e_c>
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) gamma_[(c * 3 + a) * 3 + b] = G[(a * 3 + b) * 3 + c];
  R_ = algebra.riemann();
}

void LeftInvariantGeometry::metric(const ChartPoint&, double* g) const {
  for (int i = 0; i < 9; ++i) g[i] = (i % 4 == 0) ? 1.0 : 0.0;
}

void LeftInvariantGeometry::connection(const ChartPoint&, double* gamma) const {
  std::copy(gamma_.begin(), gamma_.end(), gamma);
}

void LeftInvariantGeometry::riemann(const ChartPoint&, double* R) const { std::copy(R_.begin(), R_.end(), R); }

// Geodesics ------------------------------------------------------------------

namespace {

// State: x (n), v (n), then `extra` transported n-vectors.
struct FlowRates {
  const LocalGeometry& geo;
  int n;
  void operator()(const ChartPoint& p, const std::vector<double>& y, std::vector<double>& dy, int vectors) const {
    double gamma[kMaxDim * kMaxDim * kMaxDim];
    geo.connection(p, gamma);
    const double* v = y.data() + n;
    for (int a = 0; a < n; ++a) dy[a] = v[a];
    transport_rate(gamma, v, v, dy.data() + n, n);
    for (int e = 0; e < vectors; ++e) transport_rate(gamma, v, y.data() + (2 + e) * n, dy.data() + (2 + e) * n, n);
  }
};

// One RK4 step of the geodesic + transport system; positions live in y[0..n).
void rk4_transport(const LocalGeometry& geo, ChartPoint& p, std::vector<double>& y, int vectors, double h) {
  const int n = geo.dimension();
  FlowRates f{geo, n};
  const std::size_t m = y.size();
  std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
  auto point_of = [&](const std::vector<double>& s) {
    ChartPoint q = p;
    for (int a = 0; a < n; ++a) q.x[a] = s[a];
    return q;
  };
  f(point_of(y), y, k1, vectors);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  f(point_of(tmp), tmp, k2, vectors);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  f(point_of(tmp), tmp, k3, vectors);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * k3[i];
  f(point_of(tmp), tmp, k4, vectors);
  for (std::size_t i = 0; i < m; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  for (int a = 0; a < n; ++a) p.x[a] = y[a];
  std::span<double> vecs(y.data() + n, y.size() - n);
  geo.normalize(p, vecs);
  for (int a = 0; a < n; ++a) y[a] = p.x[a];
}

}  // namespace

GeodesicPath geodesic(const LocalGeometry& geo, const ChartPoint& x, std::span<const double> v, double length,
                      double ds) {
  const int n = geo.dimension();
  if (!(length > 0.0) || !(ds > 0.0)) throw Error(ErrorCode::InvalidArgument, "geodesic: length and step must be positive");
  if (static_cast<int>(v.size()) != n) throw Error(ErrorCode::InvalidArgument, "geodesic: velocity has wrong size");
  double g[kMaxDim * kMaxDim];
  geo.metric(x, g);
  if (std::abs(g_norm(g, v.data(), n) - 1.0) > 1e-6)
    throw Error(ErrorCode::InvalidArgument, "geodesic: initial velocity is not unit length");

  const int steps = std::max(1, static_cast<int>(std::ceil(length / ds - 1e-9)));
  const double h = length / steps;
  GeodesicPath path;
  path.base = x;
  ChartPoint p = x;
  std::vector<double> y(2 * n);
  for (int a = 0; a < n; ++a) {
    y[a] = x.x[a];
    y[n + a] = v[a];
  }
  auto record = [&](double s) {
    path.s.push_back(s);
    path.position.push_back(p);
    std::array<double, kMaxDim> vel{};
    for (int a = 0; a < n; ++a) vel[a] = y[n + a];
    path.velocity.push_back(vel);
  };
  record(0.0);
  for (int k = 1; k <= steps; ++k) {
    rk4_transport(geo, p, y, 0, h);
    if (!geo.resolvable(p)) throw ChartExitError("geodesic left the resolvable chart", path);
    record(k * h);
  }
  return path;
}

ChartPoint exp_map(const LocalGeometry& geo, const ChartPoint& x, std::span<const double> w, double ds) {
  const int n = geo.dimension();
  double g[kMaxDim * kMaxDim];
  geo.metric(x, g);
  const double len = g_norm(g, w.data(), n);
  if (len == 0.0) return x;
  // Unit-parameter geodesic with initial velocity w: arc length len.
  const int steps = std::max(4, static_cast<int>(std::ceil(len / ds)));
  ChartPoint p = x;
  std::vector<double> y(2 * n);
  for (int a = 0; a < n; ++a) {
    y[a] = x.x[a];
    y[n + a] = w[a];
  }
  for (int k = 0; k < steps; ++k) rk4_transport(geo, p, y, 0, 1.0 / steps);
  return p;
}

std::vector<std::vector<double>> sample_directions(const LocalGeometry& geo, const ChartPoint& p, int count) {
  const int n = geo.dimension();
  double gbuf[kMaxDim * kMaxDim];
  geo.metric(p, gbuf);
  Eigen::MatrixXd G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = gbuf[i * n + j];
  const Eigen::MatrixXd Linv = Eigen::LLT<Eigen::MatrixXd>(G).matrixL().toDenseMatrix().inverse();
  std::vector<std::vector<double>> out;
  auto push = [&](const Eigen::VectorXd& u) {
    const Eigen::VectorXd v = Linv.transpose() * u.normalized();
    out.emplace_back(v.data(), v.data() + n);
  };
  for (int a = 0; a < n && static_cast<int>(out.size()) < count; ++a) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    u[a] = 1.0;
    push(u);
    if (static_cast<int>(out.size()) < count) push(-u);
  }
  for (std::uint64_t i = 1; static_cast<int>(out.size()) < count; ++i) {
    Eigen::VectorXd u(n);
    for (int a = 0; a < n; ++a) u[a] = 2.0 * halton(i, a) - 1.0;
    const double r = u.norm();
    if (r > 1.0 || r < 0.1) continue;
    push(u);
  }
  return out;
}

// Jacobi fields --------------------------------------------------------------

namespace {

// Transverse Jacobi system along one geodesic: position/velocity/frame are
// carried by rk4_transport, the coefficient matrix Y (m x m) and Y' by RK4
// with the curvature sampled at the same stage points.
struct JacobiState {
  ChartPoint p;
  std::vector<double> y;  // x, v, E_1..E_m
  Eigen::MatrixXd Y, dY;
  double s = 0.0;
};

Eigen::MatrixXd curvature_matrix(const LocalGeometry& geo, const ChartPoint& p, const std::vector<double>& y, int m) {
  const int n = geo.dimension();
  double R[kMaxDim * kMaxDim * kMaxDim * kMaxDim];
  geo.riemann(p, R);
  const double* v = y.data() + n;
  Eigen::MatrixXd M(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      const double* Ea = y.data() + (2 + a) * n;
      const double* Eb = y.data() + (2 + b) * n;
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) acc += R[((i * n + j) * n + k) * n + l] * Ea[i] * v[j] * v[k] * Eb[l];
      M(a, b) = acc;
    }
  return 0.5 * (M + M.transpose());
}

// Advances the whole system by h. The geometric part uses rk4_transport; the
// Jacobi part is RK4 with curvature at the start, midpoint and end states.
JacobiState advance(const LocalGeometry& geo, const JacobiState& st, double h) {
  const int n = geo.dimension();
  const int m = n - 1;
  JacobiState mid = st, end = st;
  rk4_transport(geo, mid.p, mid.y, m, 0.5 * h);
  rk4_transport(geo, end.p, end.y, m, h);
  const Eigen::MatrixXd M0 = curvature_matrix(geo, st.p, st.y, m);
  const Eigen::MatrixXd M1 = curvature_matrix(geo, mid.p, mid.y, m);
  const Eigen::MatrixXd M2 = curvature_matrix(geo, end.p, end.y, m);
  // Y' = Z, Z' = -M Y
  const Eigen::MatrixXd kY1 = st.dY, kZ1 = -M0 * st.Y;
  const Eigen::MatrixXd kY2 = st.dY + 0.5 * h * kZ1, kZ2 = -M1 * (st.Y + 0.5 * h * kY1);
  const Eigen::MatrixXd kY3 = st.dY + 0.5 * h * kZ2, kZ3 = -M1 * (st.Y + 0.5 * h * kY2);
  const Eigen::MatrixXd kY4 = st.dY + h * kZ3, kZ4 = -M2 * (st.Y + h * kY3);
  end.Y = st.Y + h / 6.0 * (kY1 + 2.0 * kY2 + 2.0 * kY3 + kY4);
  end.dY = st.dY + h / 6.0 * (kZ1 + 2.0 * kZ2 + 2.0 * kZ3 + kZ4);
  end.s = st.s + h;
  return end;
}

double smallest_singular(const Eigen::MatrixXd& Y) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(Y).singularValues().minCoeff();
}

// First conjugate distance along one direction, or nullopt before the cap.
std::optional<double> first_conjugate(const LocalGeometry& geo, const ChartPoint& base, const std::vector<double>& v,
                                      double cap, double ds) {
  const int n = geo.dimension();
  const int m = n - 1;
  double g[kMaxDim * kMaxDim];
  geo.metric(base, g);

  JacobiState st;
  st.p = base;
  st.y.assign((2 + m) * n, 0.0);
  for (int a = 0; a < n; ++a) {
    st.y[a] = base.x[a];
    st.y[n + a] = v[a];
  }
  // Orthonormal transverse frame by Gram-Schmidt against v.
  std::vector<std::vector<double>> basis{v};
  for (int axis = 0; axis < n && static_cast<int>(basis.size()) < n; ++axis) {
    std::vector<double> e(n, 0.0);
    e[axis] = 1.0;
    for (const auto& b : basis) {
      const double c = g_dot(g, e.data(), b.data(), n);
      for (int a = 0; a < n; ++a) e[a] -= c * b[a];
    }
    const double len = g_norm(g, e.data(), n);
    if (len < 1e-6) continue;
    for (double& x : e) x /= len;
    basis.push_back(e);
  }
  for (int e = 0; e < m; ++e)
    for (int a = 0; a < n; ++a) st.y[(2 + e) * n + a] = basis[1 + e][a];
  st.Y = Eigen::MatrixXd::Zero(m, m);
  st.dY = Eigen::MatrixXd::Identity(m, m);

  const int steps = std::max(2, static_cast<int>(std::ceil(cap / ds)));
  const double h = cap / steps;
  JacobiState prev2 = st, prev = advance(geo, st, h);
  double sig_prev2 = 0.0, sig_prev = smallest_singular(prev.Y), sig_scale = sig_prev;
  double det_prev = prev.Y.determinant();

  for (int k = 2; k <= steps; ++k) {
    const JacobiState cur = advance(geo, prev, h);
    const double sig = smallest_singular(cur.Y);
    const double det = cur.Y.determinant();
    sig_scale = std::max(sig_scale, sig);

    std::optional<double> hit;
    if ((det > 0.0) != (det_prev > 0.0) && det != 0.0) {
      double lo = 0.0, hi = h;
      for (int it = 0; it < 60; ++it) {
        const double midp = 0.5 * (lo + hi);
        const double d = advance(geo, prev, midp).Y.determinant();
        if ((d > 0.0) == (det_prev > 0.0))
          lo = midp;
        else
          hi = midp;
      }
      hit = prev.s + 0.5 * (lo + hi);
    }
    if (k >= 3 && sig_prev < sig_prev2 && sig_prev <= sig) {
      // Golden-section search for a touching zero in [s_{k-2}, s_k].
      const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
      double a = 0.0, b = 2.0 * h;
      double c = b - phi * (b - a), d = a + phi * (b - a);
      auto sigma_at = [&](double off) { return smallest_singular(advance(geo, prev2, off).Y); };
      double fc = sigma_at(c), fd = sigma_at(d);
      for (int it = 0; it < 80 && b - a > 1e-14 * (1.0 + prev2.s); ++it) {
        if (fc < fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - phi * (b - a);
          fc = sigma_at(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + phi * (b - a);
          fd = sigma_at(d);
        }
      }
      const double at = 0.5 * (a + b);
      if (std::min(fc, fd) <= 1e-7 * std::max(1.0, sig_scale)) {
        const double s_touch = prev2.s + at;
        if (!hit || s_touch < *hit) hit = s_touch;
      }
    }
    if (hit) return hit;
    prev2 = prev;
    prev = cur;
    sig_prev2 = sig_prev;
    sig_prev = sig;
    det_prev = det;
  }
  return std::nullopt;
}

}  // namespace

ConjugateRadius jacobi_conjugate_radius(const LocalGeometry& geo, const ChartPoint& base, int samples, double cap,
                                        double ds) {
  const int n = geo.dimension();
  if (samples < 2 * n) throw Error(ErrorCode::InvalidArgument, "conjugate radius needs at least 2n directions");
  if (!(cap > 0.0) || !(ds > 0.0)) throw Error(ErrorCode::InvalidArgument, "conjugate radius: cap and step must be positive");
  const auto dirs = sample_directions(geo, base, samples);
  ConjugateRadius out;
  out.estimate = cap;
  out.directions = samples;
  std::size_t argmin = 0;
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    const auto s = first_conjugate(geo, base, dirs[d], std::min(cap, out.estimate + ds), ds);
    if (s && *s < out.estimate) {
      out.estimate = *s;
      out.found = true;
      argmin = d;
    }
  }
  if (out.found) {
    // Step-halving error estimate on the minimizing direction.
    const auto coarse = first_conjugate(geo, base, dirs[argmin], cap, 2.0 * ds);
    out.margin = coarse ? std::abs(*coarse - out.estimate) : ds;
  }
  return out;
}

}  // namespace rflab::probes

#include "rflab/curvature.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "rflab/error.hpp"
#include "rflab/parallel.hpp"

namespace rflab::core {

namespace {

template <int N>
using Mat = Eigen::Matrix<double, N, N>;

template <int N>
constexpr int kSym = N * (N + 1) / 2;

template <int N>
Mat<N> unpack(const double* p) {
  Mat<N> m;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) m(i, j) = p[sym_index(i, j, N)];
  return m;
}

template <int N>
Eigen::Matrix<double, N, 1> eigenvalues(const Mat<N>& m) {
  Eigen::SelfAdjointEigenSolver<Mat<N>> es;
  if constexpr (N <= 3)
    es.computeDirect(m, Eigen::EigenvaluesOnly);
  else
    es.compute(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

[[noreturn]] void degenerate(const ChartGrid& chart, std::size_t node, double lo) {
  const Coords c = chart.coords(node);
  std::ostringstream msg;
  msg << "degenerate metric at node " << node << " (";
  for (int a = 0; a < chart.dimension(); ++a) msg << (a ? "," : "") << c[a];
  msg << "): smallest eigenvalue " << lo;
  throw Error(ErrorCode::DegenerateMetric, msg.str(), node);
}

template <int N>
std::array<double, N> inverse_double_spacing(const ChartGrid& chart) {
  std::array<double, N> out{};
  for (int a = 0; a < N; ++a) out[a] = 0.5 / chart.spacing(a);
  return out;
}

template <int N>
void christoffel_kernel(const MetricField& g, ChristoffelField& out, int workers) {
  constexpr int NS = kSym<N>;
  const ChartGrid& chart = g.chart();
  const double* G = g.data().data();
  double* gam = out.data().data();
  const auto inv2h = inverse_double_spacing<N>(chart);

  parallel_for(chart.node_count(), workers, [&](std::size_t begin, std::size_t end) {
    double dg[N][NS];
    double low[N][NS];
    for (std::size_t node = begin; node < end; ++node) {
      const Mat<N> m = unpack<N>(G + node * NS);
      const double lo = eigenvalues<N>(m)(0);
      if (!(lo >= MetricField::kMinEigenvalue)) degenerate(chart, node, lo);
      const Mat<N> gi = m.inverse();
      for (int a = 0; a < N; ++a) {
        const double* p = G + chart.neighbor(node, a, +1) * NS;
        const double* q = G + chart.neighbor(node, a, -1) * NS;
        for (int s = 0; s < NS; ++s) dg[a][s] = (p[s] - q[s]) * inv2h[a];
      }
      for (int l = 0; l < N; ++l)
        for (int i = 0; i < N; ++i)
          for (int j = i; j < N; ++j)
            low[l][sym_index(i, j, N)] =
                0.5 * (dg[i][sym_index(j, l, N)] + dg[j][sym_index(i, l, N)] - dg[l][sym_index(i, j, N)]);
      double* dst = gam + node * N * NS;
      for (int k = 0; k < N; ++k)
        for (int s = 0; s < NS; ++s) {
          double acc = 0.0;
          for (int l = 0; l < N; ++l) acc += gi(k, l) * low[l][s];
          dst[k * NS + s] = acc;
        }
    }
  });
}

/// Derivatives d_m Gamma^k_s at a node by centered differences.
template <int N>
void christoffel_derivatives(const ChartGrid& chart, const double* gam, std::size_t node,
                             const std::array<double, N>& inv2h, double (&dgam)[N][N][kSym<N>]) {
  constexpr int NS = kSym<N>;
  for (int m = 0; m < N; ++m) {
    const double* p = gam + chart.neighbor(node, m, +1) * N * NS;
    const double* q = gam + chart.neighbor(node, m, -1) * N * NS;
    for (int k = 0; k < N; ++k)
      for (int s = 0; s < NS; ++s) dgam[m][k][s] = (p[k * NS + s] - q[k * NS + s]) * inv2h[m];
  }
}

/// Ric_jk = d_l G^l_jk - d_j G^l_lk + G^l_lm G^m_jk - G^l_jm G^m_lk, symmetrized.
template <int N>
void ricci_from(const double* g0, const double (&dgam)[N][N][kSym<N>], Mat<N>& ric) {
  constexpr int NS = kSym<N>;
  auto G = [&](int k, int i, int j) { return g0[k * NS + sym_index(i, j, N)]; };
  double trace[N];  // G^l_lm
  for (int m = 0; m < N; ++m) {
    double acc = 0.0;
    for (int l = 0; l < N; ++l) acc += G(l, l, m);
    trace[m] = acc;
  }
  Mat<N> raw;
  for (int j = 0; j < N; ++j)
    for (int k = 0; k < N; ++k) {
      double acc = 0.0;
      for (int l = 0; l < N; ++l) {
        acc += dgam[l][l][sym_index(j, k, N)] - dgam[j][l][sym_index(l, k, N)];
        acc += trace[l] * G(l, j, k);
        for (int m = 0; m < N; ++m) acc -= G(l, j, m) * G(m, l, k);
      }
      raw(j, k) = acc;
    }
  ric = 0.5 * (raw + raw.transpose());
}

template <int N>
void ricci_kernel(const MetricField& g, const ChristoffelField& gam, SymmetricField& out, int workers) {
  constexpr int NS = kSym<N>;
  const ChartGrid& chart = g.chart();
  const double* Gm = gam.data().data();
  const auto inv2h = inverse_double_spacing<N>(chart);
  double* dst = out.data().data();
  parallel_for(chart.node_count(), workers, [&](std::size_t begin, std::size_t end) {
    double dgam[N][N][NS];
    Mat<N> ric;
    for (std::size_t node = begin; node < end; ++node) {
      christoffel_derivatives<N>(chart, Gm, node, inv2h, dgam);
      ricci_from<N>(Gm + node * N * NS, dgam, ric);
      for (int i = 0; i < N; ++i)
        for (int j = i; j < N; ++j) dst[node * NS + sym_index(i, j, N)] = ric(i, j);
    }
  });
}

template <int N>
void bundle_kernel(const MetricField& g, CurvatureBundle& b, int workers) {
  constexpr int NS = kSym<N>;
  constexpr int N4 = N * N * N * N;
  const ChartGrid& chart = g.chart();
  const double* G = g.data().data();
  const double* Gm = b.christoffel.data().data();
  const auto inv2h = inverse_double_spacing<N>(chart);

  parallel_for(chart.node_count(), workers, [&](std::size_t begin, std::size_t end) {
    double dgam[N][N][NS];
    double up[N4];  // R^l_ijk at index ((i*N+j)*N+k)*N+l
    double t1[N4], t2[N4];
    Mat<N> ric;
    for (std::size_t node = begin; node < end; ++node) {
      christoffel_derivatives<N>(chart, Gm, node, inv2h, dgam);
      const double* g0 = Gm + node * N * NS;
      auto Gam = [&](int k, int i, int j) { return g0[k * NS + sym_index(i, j, N)]; };
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
          for (int k = 0; k < N; ++k)
            for (int l = 0; l < N; ++l) {
              double acc = dgam[i][l][sym_index(j, k, N)] - dgam[j][l][sym_index(i, k, N)];
              for (int m = 0; m < N; ++m) acc += Gam(l, i, m) * Gam(m, j, k) - Gam(l, j, m) * Gam(m, i, k);
              up[((i * N + j) * N + k) * N + l] = acc;
            }
      const Mat<N> gm = unpack<N>(G + node * NS);
      const Mat<N> gi = gm.inverse();
      double* R = b.riemann.data() + node * N4;
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
          for (int k = 0; k < N; ++k)
            for (int l = 0; l < N; ++l) {
              double acc = 0.0;
              for (int m = 0; m < N; ++m) acc += gm(l, m) * up[((i * N + j) * N + k) * N + m];
              R[((i * N + j) * N + k) * N + l] = acc;
            }

      // |Rm|^2 = R_ijkl R^ijkl, raising one slot at a time.
      auto raise = [&](const double* src, double* dst, int slot) {
        for (int idx = 0; idx < N4; ++idx) {
          int c[4] = {idx / (N * N * N), (idx / (N * N)) % N, (idx / N) % N, idx % N};
          double acc = 0.0;
          const int a = c[slot];
          for (int m = 0; m < N; ++m) {
            c[slot] = m;
            acc += gi(a, m) * src[((c[0] * N + c[1]) * N + c[2]) * N + c[3]];
          }
          dst[idx] = acc;
        }
      };
      raise(R, t1, 0);
      raise(t1, t2, 1);
      raise(t2, t1, 2);
      raise(t1, t2, 3);
      double rm2 = 0.0;
      for (int idx = 0; idx < N4; ++idx) rm2 += R[idx] * t2[idx];
      b.rm_norm[node] = std::sqrt(std::max(0.0, rm2));

      ricci_from<N>(g0, dgam, ric);
      for (int i = 0; i < N; ++i)
        for (int j = i; j < N; ++j) b.ricci.set(node, i, j, ric(i, j));
      const Mat<N> mixed = gi * ric;
      b.scalar[node] = mixed.trace();
      b.ric_full_norm[node] = std::sqrt(std::max(0.0, (mixed * mixed).trace()));
      const Eigen::LLT<Mat<N>> llt(gm);
      const Mat<N> Linv = llt.matrixL().toDenseMatrix().inverse();
      const Mat<N> sym = Linv * ric * Linv.transpose();
      const auto ev = eigenvalues<N>(0.5 * (sym + sym.transpose()));
      b.ric_norm[node] = std::max(std::abs(ev(0)), std::abs(ev(N - 1)));
      b.volume_density[node] = std::sqrt(gm.determinant());
    }
  });
}

template <int N>
void laplace_kernel(const MetricField& g, const ScalarField& u, ScalarField& out, int workers) {
  constexpr int NS = kSym<N>;
  const ChartGrid& chart = g.chart();
  const double* G = g.data().data();
  const auto inv2h = inverse_double_spacing<N>(chart);
  std::vector<double> flux(chart.node_count() * N);
  std::vector<double> vol(chart.node_count());
  parallel_for(chart.node_count(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t node = begin; node < end; ++node) {
      const Mat<N> m = unpack<N>(G + node * NS);
      const Mat<N> gi = m.inverse();
      const double sq = std::sqrt(m.determinant());
      vol[node] = sq;
      double du[N];
      for (int a = 0; a < N; ++a)
        du[a] = (u[chart.neighbor(node, a, +1)] - u[chart.neighbor(node, a, -1)]) * inv2h[a];
      for (int i = 0; i < N; ++i) {
        double acc = 0.0;
        for (int j = 0; j < N; ++j) acc += gi(i, j) * du[j];
        flux[node * N + i] = sq * acc;
      }
    }
  });
  parallel_for(chart.node_count(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t node = begin; node < end; ++node) {
      double div = 0.0;
      for (int a = 0; a < N; ++a)
        div += (flux[chart.neighbor(node, a, +1) * N + a] - flux[chart.neighbor(node, a, -1) * N + a]) * inv2h[a];
      out[node] = div / vol[node];
    }
  });
}

template <class Fn>
decltype(auto) dispatch(int n, Fn&& fn) {
  switch (n) {
    case 2: return fn(std::integral_constant<int, 2>{});
    case 3: return fn(std::integral_constant<int, 3>{});
    case 4: return fn(std::integral_constant<int, 4>{});
    default: throw Error(ErrorCode::Unsupported, "tensor kernels support dimensions 2..4");
  }
}

}  // namespace

ChristoffelField::ChristoffelField(ChartGrid chart) : chart_(std::move(chart)) {
  const int n = chart_.dimension();
  data_.assign(chart_.node_count() * static_cast<std::size_t>(n * sym_size(n)), 0.0);
}

ChristoffelField christoffel(const MetricField& g, int workers) {
  ChristoffelField out(g.chart());
  dispatch(g.dimension(), [&](auto N) { christoffel_kernel<decltype(N)::value>(g, out, workers); });
  return out;
}

SymmetricField ricci(const MetricField& g, int workers) {
  const ChristoffelField gam = christoffel(g, workers);
  SymmetricField out(g.chart());
  dispatch(g.dimension(), [&](auto N) { ricci_kernel<decltype(N)::value>(g, gam, out, workers); });
  return out;
}

CurvatureBundle riemann(const MetricField& g, int workers) {
  CurvatureBundle b;
  b.chart = g.chart();
  b.christoffel = christoffel(g, workers);
  const std::size_t count = g.chart().node_count();
  const int n = g.dimension();
  b.riemann.assign(count * static_cast<std::size_t>(n * n * n * n), 0.0);
  b.ricci = SymmetricField(g.chart());
  b.scalar.assign(count, 0.0);
  b.rm_norm.assign(count, 0.0);
  b.ric_norm.assign(count, 0.0);
  b.ric_full_norm.assign(count, 0.0);
  b.volume_density.assign(count, 0.0);
  dispatch(n, [&](auto N) { bundle_kernel<decltype(N)::value>(g, b, workers); });
  for (std::size_t node = 0; node < count; ++node) {
    b.sup_norm_rm = std::max(b.sup_norm_rm, b.rm_norm[node]);
    b.sup_norm_ric = std::max(b.sup_norm_ric, b.ric_norm[node]);
    b.sup_full_norm_ric = std::max(b.sup_full_norm_ric, b.ric_full_norm[node]);
  }
  return b;
}

double CurvatureBundle::lp_norm_rm(double p) const {
  if (!(p >= 1.0)) throw Error(ErrorCode::Domain, "L^p norm needs p >= 1");
  double acc = 0.0;
  for (std::size_t node = 0; node < rm_norm.size(); ++node)
    acc += std::pow(rm_norm[node], p) * volume_density[node];
  return std::pow(acc * chart.cell_volume(), 1.0 / p);
}

double CurvatureBundle::lp_norm_rm(double p, std::span<const std::size_t> nodes) const {
  if (!(p >= 1.0)) throw Error(ErrorCode::Domain, "L^p norm needs p >= 1");
  double acc = 0.0;
  for (std::size_t node : nodes) acc += std::pow(rm_norm[node], p) * volume_density[node];
  return std::pow(acc * chart.cell_volume(), 1.0 / p);
}

ScalarField operator_norm(const MetricField& g, const SymmetricField& t) {
  if (!t.chart().same_as(g.chart())) throw Error(ErrorCode::ChartMismatch, "operator_norm: chart mismatch");
  const int n = g.dimension();
  ScalarField out(g.chart().node_count());
  Eigen::MatrixXd G(n, n), T(n, n);
  for (std::size_t node = 0; node < out.size(); ++node) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        G(i, j) = g(node, i, j);
        T(i, j) = t(node, i, j);
      }
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(T, G, Eigen::EigenvaluesOnly);
    out[node] = std::max(std::abs(es.eigenvalues()[0]), std::abs(es.eigenvalues()[n - 1]));
  }
  return out;
}

CurvatureNorms norms(const CurvatureBundle& bundle, const MetricField& g, double p) {
  if (!(p >= 1.0)) throw Error(ErrorCode::Domain, "norms: p must be >= 1");
  if (!bundle.chart.same_as(g.chart())) throw Error(ErrorCode::ChartMismatch, "norms: bundle/metric chart mismatch");
  return {bundle.sup_norm_rm, bundle.sup_norm_ric, bundle.lp_norm_rm(p)};
}

double sectional_curvature(const CurvatureBundle& bundle, const MetricField& g, std::size_t node,
                           std::span<const double> X, std::span<const double> Y) {
  const int n = g.dimension();
  double num = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) num += bundle.R(node, i, j, k, l) * X[i] * Y[j] * Y[k] * X[l];
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      xx += g(node, i, j) * X[i] * X[j];
      yy += g(node, i, j) * Y[i] * Y[j];
      xy += g(node, i, j) * X[i] * Y[j];
    }
  const double area = xx * yy - xy * xy;
  if (!(area > 0.0)) throw Error(ErrorCode::InvalidArgument, "sectional curvature: vectors are dependent");
  return num / area;
}

ScalarField laplace_beltrami(const MetricField& g, const ScalarField& u, int workers) {
  if (u.size() != g.chart().node_count())
    throw Error(ErrorCode::ChartMismatch, "laplace_beltrami: scalar field does not match chart");
  ScalarField out(u.size());
  dispatch(g.dimension(), [&](auto N) { laplace_kernel<decltype(N)::value>(g, u, out, workers); });
  return out;
}

double metric_c0_distance(const MetricField& g1, const MetricField& g0) {
  if (!g1.chart().same_as(g0.chart())) throw Error(ErrorCode::ChartMismatch, "metric_c0_distance: chart mismatch");
  const int n = g0.dimension();
  double worst = 0.0;
  Eigen::MatrixXd a(n, n), b(n, n);
  for (std::size_t node = 0; node < g0.chart().node_count(); ++node) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        a(i, j) = g0(node, i, j);
        b(i, j) = g1(node, i, j) - g0(node, i, j);
      }
    if (b.cwiseAbs().maxCoeff() == 0.0) continue;
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::DegenerateMetric, "metric_c0_distance: reference metric not positive", node);
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::MatrixXd Linv = L.inverse();
    Eigen::MatrixXd s = Linv * b * Linv.transpose();
    s = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    worst = std::max(worst, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return worst;
}

ScalarField volume_density(const MetricField& g) {
  const int n = g.dimension();
  ScalarField out(g.chart().node_count());
  Eigen::MatrixXd m(n, n);
  for (std::size_t node = 0; node < out.size(); ++node) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = g(node, i, j);
    out[node] = std::sqrt(m.determinant());
  }
  return out;
}

double total_volume(const MetricField& g) {
  const ScalarField vd = volume_density(g);
  double acc = 0.0;
  for (double v : vd) acc += v;
  return acc * g.chart().cell_volume();
}

}  // namespace rflab::core

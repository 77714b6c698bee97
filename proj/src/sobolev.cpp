#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include "rflab/probes.hpp"

namespace rflab::probes {

namespace {

constexpr int kMaxVerts = kMaxDim + 1;

int factorial(int k) { return k <= 1 ? 1 : k * factorial(k - 1); }

int sobolev_exponent(int n) {
  if (n == 2) throw Error(ErrorCode::Unsupported, "Sobolev exponent 2n/(n-2) degenerates for n = 2");
  if (n != 3 && n != 4) throw Error(ErrorCode::Unsupported, "Sobolev estimator supports n = 3, 4");
  return 2 * n / (n - 2);
}

std::size_t product(const std::vector<int>& e) {
  std::size_t N = 1;
  for (int x : e) N *= static_cast<std::size_t>(x);
  return N;
}

// Kuhn triangulation of a rectilinear box of nodes (last axis fastest).
struct Mesh {
  int n = 3;
  int p = 6;
  std::vector<int> extents;
  std::vector<std::vector<double>> coord;  // per axis, origin at the box centre
  std::vector<double> metric;              // packed per node
  std::vector<std::size_t> stride;
  std::vector<std::array<int, kMaxDim>> perms;
  std::vector<std::ptrdiff_t> unknown;  // node -> free index or -1
  std::size_t free_count = 0;
  double lp_weight = 0.0;  // n! p! / (n+p)!

  std::size_t node_count() const { return unknown.size(); }

  int axis_index(std::size_t v, int a) const { return static_cast<int>(v / stride[a]) % extents[a]; }

  void finish(const std::function<bool(std::size_t)>& admit) {
    p = sobolev_exponent(n);
    stride.assign(n, 1);
    for (int a = n - 2; a >= 0; --a) stride[a] = stride[a + 1] * extents[a + 1];
    std::array<int, kMaxDim> perm{};
    std::iota(perm.begin(), perm.begin() + n, 0);
    do perms.push_back(perm);
    while (std::next_permutation(perm.begin(), perm.begin() + n));
    const std::size_t N = product(extents);
    unknown.assign(N, -1);
    for (std::size_t v = 0; v < N; ++v) {
      bool boundary = false;
      for (int a = 0; a < n; ++a) {
        const int c = axis_index(v, a);
        boundary = boundary || c == 0 || c == extents[a] - 1;
      }
      if (!boundary && admit(v)) unknown[v] = static_cast<std::ptrdiff_t>(free_count++);
    }
    double c = 1.0;
    for (int k = 1; k <= n; ++k) c *= static_cast<double>(k) / (p + k);
    lp_weight = c;
  }

  // fn(verts[n+1], ginv[n*n], weight = |T| sqrt(det g), perm, spacing[n])
  template <class Fn>
  void for_each_simplex(Fn&& fn) const {
    const int ps = sym_size(n);
    const double nfact = factorial(n);
    std::size_t cells = 1;
    for (int a = 0; a < n; ++a) cells *= extents[a] - 1;
    std::size_t verts[kMaxVerts];
    double d[kMaxDim];
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim> G(n, n), Gi(n, n);
    double ginv[kMaxDim * kMaxDim];
    for (std::size_t cell = 0; cell < cells; ++cell) {
      std::size_t rem = cell, base = 0;
      double vol = 1.0 / nfact;
      for (int a = n - 1; a >= 0; --a) {
        const int c = static_cast<int>(rem % (extents[a] - 1));
        rem /= extents[a] - 1;
        base += c * stride[a];
        d[a] = coord[a][c + 1] - coord[a][c];
        vol *= d[a];
      }
      for (const auto& perm : perms) {
        verts[0] = base;
        bool any = unknown[base] >= 0;
        for (int k = 1; k <= n; ++k) {
          verts[k] = verts[k - 1] + stride[perm[k - 1]];
          any = any || unknown[verts[k]] >= 0;
        }
        if (!any) continue;
        G.setZero();
        for (int k = 0; k <= n; ++k) {
          const double* m = metric.data() + verts[k] * ps;
          for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) G(i, j) += m[sym_index(i, j, n)];
        }
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < i; ++j) G(i, j) = G(j, i);
        G /= n + 1;
        const double det = G.determinant();
        if (!(det > 0.0)) throw Error(ErrorCode::DegenerateMetric, "degenerate metric in Sobolev patch", verts[0]);
        Gi = G.inverse();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) ginv[i * n + j] = Gi(i, j);
        fn(verts, ginv, vol * std::sqrt(det), perm, d);
      }
    }
  }

  double value(std::span<const double> f, std::size_t v) const { return unknown[v] >= 0 ? f[v] : 0.0; }
};

std::vector<double> centred_axis(int extent, double h) {
  std::vector<double> x(extent);
  for (int i = 0; i < extent; ++i) x[i] = (i - 0.5 * (extent - 1)) * h;
  return x;
}

Mesh patch_mesh(const SobolevPatch& patch) {
  const std::size_t N = patch.node_count();
  if (static_cast<int>(patch.extents.size()) != patch.n || patch.inside.size() != N ||
      patch.metric.size() != N * sym_size(patch.n))
    throw Error(ErrorCode::InvalidArgument, "patch arrays do not match its extents");
  Mesh m;
  m.n = patch.n;
  m.extents = patch.extents;
  for (int a = 0; a < patch.n; ++a) m.coord.push_back(centred_axis(patch.extents[a], patch.h));
  m.metric = patch.metric;
  m.finish([&](std::size_t v) { return patch.inside[v] != 0; });
  return m;
}

// Tensor mesh with `nodes` nodes per axis over the patch box, stretched by
// x = L sinh(beta s) / sinh(beta) so that it is finest at the centre. The
// metric is interpolated multilinearly from the patch.
Mesh graded_mesh(const SobolevPatch& patch, int nodes, double beta) {
  if (!(patch.radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "graded Sobolev mesh needs a ball patch");
  const int n = patch.n, ps = sym_size(n);
  if (nodes % 2 == 0) ++nodes;
  Mesh m;
  m.n = n;
  m.extents.assign(n, nodes);
  for (int a = 0; a < n; ++a) {
    const double L = 0.5 * (patch.extents[a] - 1) * patch.h;
    std::vector<double> x(nodes);
    for (int i = 0; i < nodes; ++i) {
      const double s = -1.0 + 2.0 * i / (nodes - 1);
      x[i] = beta > 0.0 ? L * std::sinh(beta * s) / std::sinh(beta) : L * s;
    }
    x[(nodes - 1) / 2] = 0.0;
    m.coord.push_back(std::move(x));
  }
  const std::size_t N = product(m.extents);
  m.metric.assign(N * ps, 0.0);
  std::vector<std::size_t> pstride(n, 1);
  for (int a = n - 2; a >= 0; --a) pstride[a] = pstride[a + 1] * patch.extents[a + 1];
  for (std::size_t v = 0; v < N; ++v) {
    int lo[kMaxDim];
    double t[kMaxDim];
    std::size_t rem = v;
    for (int a = n - 1; a >= 0; --a) {
      const double x = m.coord[a][rem % nodes] / patch.h + 0.5 * (patch.extents[a] - 1);
      rem /= nodes;
      lo[a] = std::clamp(static_cast<int>(std::floor(x)), 0, patch.extents[a] - 2);
      t[a] = std::clamp(x - lo[a], 0.0, 1.0);
    }
    for (int corner = 0; corner < (1 << n); ++corner) {
      double w = 1.0;
      std::size_t src = 0;
      for (int a = 0; a < n; ++a) {
        const int bit = (corner >> a) & 1;
        w *= bit ? t[a] : 1.0 - t[a];
        src += (lo[a] + bit) * pstride[a];
      }
      if (w == 0.0) continue;
      for (int k = 0; k < ps; ++k) m.metric[v * ps + k] += w * patch.metric[src * ps + k];
    }
  }
  m.finish([&](std::size_t v) {
    double r2 = 0.0;
    for (int a = 0; a < n; ++a) {
      const double x = m.coord[a][m.axis_index(v, a)];
      r2 += x * x;
    }
    return r2 < patch.radius * patch.radius;
  });
  return m;
}

// Complete homogeneous symmetric polynomials h_0..h_p of the values.
void complete_homogeneous(const double* a, int count, int p, double* h) {
  h[0] = 1.0;
  for (int k = 1; k <= p; ++k) h[k] = 0.0;
  for (int i = 0; i < count; ++i)
    for (int k = 1; k <= p; ++k) h[k] += a[i] * h[k - 1];
}

struct Functional {
  double energy = 0.0;
  double lp = 0.0;  // int f^p
};

// Energy and L^p integral of the P1 interpolant; optionally the gradient of
// the L^p integral with respect to free values (indexed by free index).
Functional evaluate(const Mesh& mesh, std::span<const double> f, Eigen::VectorXd* lp_grad) {
  const int n = mesh.n, p = mesh.p;
  Functional out;
  if (lp_grad) lp_grad->setZero(static_cast<Eigen::Index>(mesh.free_count));
  double a[kMaxVerts], hp[16], hq[16], grad[kMaxDim];
  mesh.for_each_simplex(
      [&](const std::size_t* v, const double* gi, double w, const std::array<int, kMaxDim>& perm, const double* d) {
        for (int k = 0; k <= n; ++k) a[k] = mesh.value(f, v[k]);
        for (int k = 1; k <= n; ++k) grad[perm[k - 1]] = (a[k] - a[k - 1]) / d[perm[k - 1]];
        double e = 0.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) e += grad[i] * gi[i * n + j] * grad[j];
        out.energy += w * e;
        complete_homogeneous(a, n + 1, p, hp);
        const double wl = w * mesh.lp_weight;
        out.lp += wl * hp[p];
        if (!lp_grad) return;
        for (int k = 0; k <= n; ++k) {
          const auto idx = mesh.unknown[v[k]];
          if (idx < 0) continue;
          hq[0] = 1.0;
          for (int m = 1; m < p; ++m) hq[m] = hp[m] + a[k] * hq[m - 1];
          (*lp_grad)[idx] += wl * hq[p - 1];
        }
      });
  return out;
}

double quotient(const Mesh& mesh, const Functional& F) {
  if (!(F.energy > 0.0) || !(F.lp > 0.0)) return 0.0;
  return std::pow(F.lp, 1.0 / mesh.p) / std::sqrt(F.energy);
}

// Stiffness matrix on free nodes, assembled column by column over the Kuhn
// stencil (offsets that are sums of a sign-consistent set of axis steps).
Eigen::SparseMatrix<double> stiffness(const Mesh& mesh) {
  const int n = mesh.n;
  std::vector<std::ptrdiff_t> stencil;
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::ptrdiff_t off = 0;
    for (int a = 0; a < n; ++a)
      if (mask & (1 << a)) off += static_cast<std::ptrdiff_t>(mesh.stride[a]);
    stencil.push_back(off);
    stencil.push_back(-off);
  }
  stencil.push_back(0);
  std::sort(stencil.begin(), stencil.end());

  const std::size_t M = mesh.free_count;
  const auto N = static_cast<std::ptrdiff_t>(mesh.node_count());
  std::vector<int> outer(M + 1, 0);
  std::vector<int> inner;
  inner.reserve(M * stencil.size());
  std::vector<std::size_t> node_of(M);
  for (std::size_t v = 0; v < mesh.unknown.size(); ++v)
    if (mesh.unknown[v] >= 0) node_of[mesh.unknown[v]] = v;
  for (std::size_t col = 0; col < M; ++col) {
    const auto v = static_cast<std::ptrdiff_t>(node_of[col]);
    for (const auto off : stencil) {
      const auto w = v + off;
      if (w >= 0 && w < N && mesh.unknown[w] >= 0) inner.push_back(static_cast<int>(mesh.unknown[w]));
    }
    outer[col + 1] = static_cast<int>(inner.size());
  }
  std::vector<double> values(inner.size(), 0.0);

  double D[kMaxDim][kMaxVerts];
  double K[kMaxVerts][kMaxVerts];
  mesh.for_each_simplex(
      [&](const std::size_t* v, const double* gi, double w, const std::array<int, kMaxDim>& perm, const double* d) {
        for (int i = 0; i < n; ++i)
          for (int k = 0; k <= n; ++k) D[i][k] = 0.0;
        for (int k = 1; k <= n; ++k) {
          D[perm[k - 1]][k] = 1.0 / d[perm[k - 1]];
          D[perm[k - 1]][k - 1] = -1.0 / d[perm[k - 1]];
        }
        for (int a = 0; a <= n; ++a)
          for (int b = 0; b <= n; ++b) {
            double s = 0.0;
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < n; ++j) s += D[i][a] * gi[i * n + j] * D[j][b];
            K[a][b] = w * s;
          }
        for (int b = 0; b <= n; ++b) {
          const auto col = mesh.unknown[v[b]];
          if (col < 0) continue;
          for (int a = 0; a <= n; ++a) {
            const auto row = mesh.unknown[v[a]];
            if (row < 0) continue;
            const auto begin = inner.begin() + outer[col], end = inner.begin() + outer[col + 1];
            const auto it = std::lower_bound(begin, end, static_cast<int>(row));
            values[it - inner.begin()] += K[a][b];
          }
        }
      });
  const Eigen::Map<const Eigen::SparseMatrix<double>> map(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M),
                                                          static_cast<Eigen::Index>(inner.size()), outer.data(),
                                                          inner.data(), values.data());
  return Eigen::SparseMatrix<double>(map);
}

void mask_ball(SobolevPatch& patch, double radius) {
  const int n = patch.n;
  patch.radius = radius;
  patch.inside.assign(patch.node_count(), 0);
  for (std::size_t v = 0; v < patch.inside.size(); ++v) {
    std::size_t rem = v;
    double r2 = 0.0;
    for (int a = n - 1; a >= 0; --a) {
      const double d = (static_cast<double>(rem % patch.extents[a]) - 0.5 * (patch.extents[a] - 1)) * patch.h;
      rem /= patch.extents[a];
      r2 += d * d;
    }
    patch.inside[v] = r2 < radius * radius ? 1 : 0;
  }
}

}  // namespace

std::size_t SobolevPatch::node_count() const { return product(extents); }

SobolevPatch flat_ball_patch(int n, double radius, double h) {
  if (n < 2 || n > kMaxDim || !(radius > 0.0) || !(h > 0.0))
    throw Error(ErrorCode::InvalidArgument, "flat_ball_patch needs 2 <= n <= 4 and positive radius, spacing");
  SobolevPatch patch;
  patch.n = n;
  patch.h = h;
  const int half = static_cast<int>(std::ceil(radius / h)) + 1;
  patch.extents.assign(n, 2 * half + 1);
  const int ps = sym_size(n);
  patch.metric.assign(patch.node_count() * ps, 0.0);
  for (std::size_t v = 0; v < patch.node_count(); ++v)
    for (int i = 0; i < n; ++i) patch.metric[v * ps + sym_index(i, i, n)] = 1.0;
  mask_ball(patch, radius);
  return patch;
}

SobolevPatch ball_patch(const core::MetricField& g, std::size_t center, double radius) {
  const auto& chart = g.chart();
  const int n = chart.dimension();
  const double h = chart.spacing(0);
  for (int a = 1; a < n; ++a)
    if (std::abs(chart.spacing(a) - h) > 1e-12 * h)
      throw Error(ErrorCode::InvalidArgument, "ball_patch needs equal spacing on every axis");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "ball_patch needs a positive radius");
  const int half = static_cast<int>(std::ceil(radius / h)) + 1;
  for (int a = 0; a < n; ++a)
    if (2 * half + 1 > chart.extent(a))
      throw Error(ErrorCode::ChartTooSmall, "chart ball of this radius wraps onto itself");
  SobolevPatch patch;
  patch.n = n;
  patch.h = h;
  patch.extents.assign(n, 2 * half + 1);
  const int ps = sym_size(n);
  patch.metric.resize(patch.node_count() * ps);
  const Coords c0 = chart.coords(center);
  for (std::size_t v = 0; v < patch.node_count(); ++v) {
    std::size_t rem = v;
    Coords c = c0;
    for (int a = n - 1; a >= 0; --a) {
      c[a] += static_cast<int>(rem % patch.extents[a]) - half;
      rem /= patch.extents[a];
    }
    const auto src = g.packed(chart.node(c));
    std::copy(src.begin(), src.end(), patch.metric.begin() + v * ps);
  }
  mask_ball(patch, radius);
  return patch;
}

SobolevPatch restrict_ball(const SobolevPatch& patch, double radius) {
  SobolevPatch out = patch;
  mask_ball(out, radius);
  for (std::size_t v = 0; v < out.inside.size(); ++v) out.inside[v] = out.inside[v] && patch.inside[v];
  if (patch.radius > 0.0) out.radius = std::min(radius, patch.radius);
  return out;
}

double sobolev_quotient(const SobolevPatch& patch, std::span<const double> f) {
  const Mesh mesh = patch_mesh(patch);
  if (f.size() != patch.node_count()) throw Error(ErrorCode::InvalidArgument, "function size does not match patch");
  return quotient(mesh, evaluate(mesh, f, nullptr));
}

SobolevEstimate sobolev_constant(const SobolevPatch& patch, const SobolevOptions& opt) {
  const Mesh mesh = opt.graded_nodes > 0 ? graded_mesh(patch, opt.graded_nodes, opt.grading) : patch_mesh(patch);
  const int n = mesh.n;
  if (mesh.free_count == 0) throw Error(ErrorCode::InvalidArgument, "patch has no free nodes");
  const std::size_t N = mesh.node_count();
  const int ps = sym_size(n);

  // Bubble family centred in the box, shaped by the metric at the centre.
  std::size_t mid = 0;
  for (int a = 0; a < n; ++a) mid += static_cast<std::size_t>((mesh.extents[a] - 1) / 2) * mesh.stride[a];
  Eigen::MatrixXd G0(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G0(i, j) = mesh.metric[mid * ps + sym_index(i, j, n)];
  std::vector<double> rho2(N);
  double radius = 0.0;
  double rho2_out = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < N; ++v) {
    Eigen::VectorXd y(n);
    for (int a = 0; a < n; ++a) y[a] = mesh.coord[a][mesh.axis_index(v, a)];
    rho2[v] = y.dot(G0 * y);
    if (mesh.unknown[v] >= 0)
      radius = std::max(radius, std::sqrt(rho2[v]));
    else
      rho2_out = std::min(rho2_out, rho2[v]);
  }

  auto bubble = [&](double lambda) {
    const double e = 0.5 * (n - 2);
    const double floor = std::pow(lambda / (lambda * lambda + rho2_out), e);
    std::vector<double> f(N, 0.0);
    for (std::size_t v = 0; v < N; ++v)
      if (mesh.unknown[v] >= 0) f[v] = std::max(0.0, std::pow(lambda / (lambda * lambda + rho2[v]), e) - floor);
    return f;
  };

  struct Start {
    double q;
    std::vector<double> f;
  };
  std::vector<Start> starts;
  SobolevEstimate est;
  for (int k = 2; k <= 20; ++k) {
    auto f = bubble(radius * std::pow(2.0, -0.5 * k));
    const double q = quotient(mesh, evaluate(mesh, f, nullptr));
    est.reference_bump = std::max(est.reference_bump, q);
    starts.push_back({q, std::move(f)});
  }
  std::stable_sort(starts.begin(), starts.end(), [](const Start& a, const Start& b) { return a.q > b.q; });
  starts.resize(std::min<std::size_t>(starts.size(), static_cast<std::size_t>(std::max(0, opt.starts))));
  if (opt.warm_start.size() == N) {
    std::vector<double> f(opt.warm_start.begin(), opt.warm_start.end());
    starts.insert(starts.begin(), {quotient(mesh, evaluate(mesh, f, nullptr)), std::move(f)});
  }
  est.value = 0.0;
  for (const auto& s : starts)
    if (s.q > est.value) {
      est.value = s.q;
      est.maximizer = s.f;
    }
  if (opt.max_iterations <= 0 || starts.empty()) return est;

  const auto A = stiffness(mesh);
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>>
      cg;
  cg.setTolerance(1e-10);
  cg.compute(A);
  if (cg.info() != Eigen::Success) throw Error(ErrorCode::Stepping, "Sobolev stiffness factorization failed");

  Eigen::VectorXd x(static_cast<Eigen::Index>(mesh.free_count)), grad;
  for (auto& s : starts) {
    std::vector<double> f = s.f;
    double prev = s.q;
    for (int it = 0; it < opt.max_iterations; ++it) {
      ++est.iterations;
      const auto F = evaluate(mesh, f, &grad);
      const double q = quotient(mesh, F);
      if (q > est.value) {
        est.value = q;
        est.maximizer = f;
      }
      if (it > 0 && q - prev <= opt.tolerance * q) break;
      prev = q;
      for (std::size_t v = 0; v < N; ++v)
        if (mesh.unknown[v] >= 0) x[mesh.unknown[v]] = f[v];
      // A f = c grad F at a critical point, with c = E / (p F) by homogeneity.
      x *= mesh.p * F.lp / F.energy;
      x = cg.solveWithGuess(grad, x);
      const double top = x.maxCoeff();
      if (!(top > 0.0)) break;
      for (std::size_t v = 0; v < N; ++v) f[v] = mesh.unknown[v] >= 0 ? std::max(0.0, x[mesh.unknown[v]]) / top : 0.0;
    }
  }
  return est;
}

double sharp_sobolev_constant(int n) {
  if (n < 3) throw Error(ErrorCode::Unsupported, "sharp Sobolev constant needs n >= 3");
  return std::pow(std::numbers::pi * n * (n - 2), -0.5) * std::pow(std::tgamma(n) / std::tgamma(0.5 * n), 1.0 / n);
}

double comparison_sobolev_bound(const SobolevPatch& patch) {
  const int n = patch.n, ps = sym_size(n);
  if (patch.metric.size() != patch.node_count() * ps) throw Error(ErrorCode::InvalidArgument, "patch metric size");
  double a = std::numeric_limits<double>::infinity(), b = 0.0;
  Eigen::MatrixXd G(n, n);
  for (std::size_t v = 0; v < patch.node_count(); ++v) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = patch.metric[v * ps + sym_index(i, j, n)];
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    a = std::min(a, es.eigenvalues()[0]);
    b = std::max(b, es.eigenvalues()[n - 1]);
  }
  if (!(a > 0.0)) throw Error(ErrorCode::DegenerateMetric, "metric not positive on patch");
  return sharp_sobolev_constant(n) * std::pow(b / a, 0.25 * n);
}

}  // namespace rflab::probes

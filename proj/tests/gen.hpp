#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace rflab::test {

// Seeded case generator for property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }

  // Symmetric positive definite n x n (row-major), eigenvalues in [lo, hi].
  std::vector<double> spd(int n, double lo, double hi) {
    std::vector<double> q(n * n, 0.0);
    for (auto& v : q) v = uniform(-1.0, 1.0);
    for (int j = 0; j < n; ++j) {  // Gram-Schmidt on columns
      for (int k = 0; k < j; ++k) {
        double d = 0;
        for (int i = 0; i < n; ++i) d += q[i * n + j] * q[i * n + k];
        for (int i = 0; i < n; ++i) q[i * n + j] -= d * q[i * n + k];
      }
      double norm = 0;
      for (int i = 0; i < n; ++i) norm += q[i * n + j] * q[i * n + j];
      norm = std::sqrt(norm);
      for (int i = 0; i < n; ++i) q[i * n + j] /= norm;
    }
    std::vector<double> lam(n);
    for (auto& l : lam) l = uniform(lo, hi);
    std::vector<double> g(n * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) g[i * n + j] += q[i * n + k] * lam[k] * q[j * n + k];
    return g;
  }
};

}  // namespace rflab::test

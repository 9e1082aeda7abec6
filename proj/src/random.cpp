#include "implab/random.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace implab {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Complex complex_gaussian(Rng& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  const double re = nd(rng);
  return {re, nd(rng)};
}

ComplexField band_limited_field(const GridSpec& grid, int cutoff, std::uint64_t seed) {
  const int n = grid.n(), K = cutoff, M = 2 * K + 1;
  Rng rng(seed);
  std::vector<Complex> c(std::size_t(M) * M * M);
  for (int mz = -K; mz <= K; ++mz)
    for (int my = -K; my <= K; ++my)
      for (int mx = -K; mx <= K; ++mx) {
        const double damp = 1.0 / (1.0 + mx * mx + my * my + mz * mz);
        c[std::size_t(mx + K) + M * (std::size_t(my + K) + M * std::size_t(mz + K))] = damp * complex_gaussian(rng);
      }
  // E[m][x] = exp(i pi m x / (n-1)): period 2L in physical units.
  std::vector<Complex> E(std::size_t(M) * n);
  for (int m = -K; m <= K; ++m)
    for (int x = 0; x < n; ++x)
      E[std::size_t(m + K) * n + x] = std::polar(1.0, std::numbers::pi * m * x / (n - 1));

  std::vector<Complex> t1(std::size_t(n) * M * M, 0.0), t2(std::size_t(n) * n * M, 0.0);
  for (int mz = 0; mz < M; ++mz)
    for (int my = 0; my < M; ++my)
      for (int x = 0; x < n; ++x) {
        Complex s = 0.0;
        for (int mx = 0; mx < M; ++mx) s += c[mx + M * (my + std::size_t(M) * mz)] * E[std::size_t(mx) * n + x];
        t1[x + n * (my + std::size_t(M) * mz)] = s;
      }
  for (int mz = 0; mz < M; ++mz)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        Complex s = 0.0;
        for (int my = 0; my < M; ++my) s += t1[x + n * (my + std::size_t(M) * mz)] * E[std::size_t(my) * n + y];
        t2[x + n * (y + std::size_t(n) * mz)] = s;
      }
  ComplexField u(grid);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        Complex s = 0.0;
        for (int mz = 0; mz < M; ++mz) s += t2[x + n * (y + std::size_t(n) * mz)] * E[std::size_t(mz) * n + z];
        u.at(x, y, z) = s;
      }
  return u;
}

ScalarField band_limited_real_field(const GridSpec& grid, int cutoff, std::uint64_t seed) {
  const ComplexField c = band_limited_field(grid, cutoff, seed);
  ScalarField r(grid);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = c[i].real();
  return r;
}

}  // namespace implab

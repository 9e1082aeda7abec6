#pragma once

#include <cstdint>
#include <random>

#include "implab/grid.hpp"

namespace implab {

using Rng = std::mt19937_64;

// Derives an independent stream from (seed, stream) via splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Complex complex_gaussian(Rng& rng);

// Smooth random field: trigonometric sum over integer modes |m_j| <= cutoff
// with period 2L, Gaussian coefficients damped by 1/(1+|m|^2).
ComplexField band_limited_field(const GridSpec& grid, int cutoff, std::uint64_t seed);
ScalarField band_limited_real_field(const GridSpec& grid, int cutoff, std::uint64_t seed);

}  // namespace implab

#pragma once

#include <array>
#include <string>
#include <vector>

#include "implab/grid.hpp"

namespace implab {

// Faces are numbered axis*2 + side, side 0 = lower coordinate plane.
constexpr int kFaceCount = 6;
inline int face_axis(int face) { return face / 2; }
inline int face_side(int face) { return face % 2; }
int parse_face(const std::string& name);
std::string face_name(int face);

// One boundary sample: a node on a face together with that face's unit inner
// normal. Edge and corner nodes appear once per incident face.
struct BoundarySample {
  std::size_t node;
  int face;
  Index3 ijk;
  Vec3 normal;
  int a, b;  // in-face coordinates along axes (axis+1)%3 and (axis+2)%3
};

struct BoundaryPatch {
  std::vector<std::size_t> samples;  // sorted indices into DomainSpec::boundary
  std::size_t size() const { return samples.size(); }
};

using BoundaryTrace = std::vector<Complex>;

struct GammaSpec {
  std::string face = "z+";            // face name, or "all" for the whole boundary
  std::array<double, 2> center_uv{0.5, 0.5};  // fractions of the face side
  double radius = 0.25;               // length units
};

struct DomainSpec {
  GridSpec grid;
  Mask interior_mask;  // every node of the closed box
  std::vector<BoundarySample> boundary;
  BoundaryPatch gamma;
  BoundaryPatch full;  // all samples, for convenience
  bool partial = false;

  std::size_t sample_index(int face, int a, int b) const {
    const std::size_t n = std::size_t(grid.n());
    return std::size_t(face) * n * n + std::size_t(a) + n * std::size_t(b);
  }
  // Surface quadrature weight: dx^2 times the trapezoid weights of the two
  // in-face axes. Makes the Robin closure's discrete Green identity exact.
  double surface_weight(std::size_t sample) const;
  // Volume trapezoid weight dx^3 * prod w_j (w = 1/2 on boundary planes).
  double volume_weight(std::size_t node) const;
};

DomainSpec build_box_domain(const GridSpec& grid, const GammaSpec& gamma_spec);

// Distance of a node to the nearest face plane along each axis, and overall.
Vec3 axis_distances(const GridSpec& grid, std::size_t node);
double boundary_distance(const GridSpec& grid, std::size_t node);

struct AnnulusFamily {
  std::array<Mask, 4> omega;
  ScalarField chi;    // 0 on omega3, 1 off omega2
  ScalarField theta;  // 1 near dOmega and on omega1, 0 near the inner rim of omega0
  std::array<double, 4> widths;
};

AnnulusFamily build_annuli(const DomainSpec& domain, const std::array<double, 4>& widths);

ScalarField restrict_potential_support(const ScalarField& q, const AnnulusFamily& family);

// Quintic smoothstep, clamped to [0,1].
double smoothstep5(double t);

}  // namespace implab

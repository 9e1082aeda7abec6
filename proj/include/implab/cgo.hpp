#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "implab/geometry.hpp"

namespace implab {

// Continuum: multiplier 1/(|w|^2 + 2 zeta.w). GridExact: multiplier built from
// the 7-point Laplacian's symbol, so e^{i zeta x}(1+r) solves the discrete
// equation at the nodes (requires a frame from discretize_frame).
enum class CgoMode { Continuum, GridExact };

struct CgoFrame {
  Vec3 xi{}, mu1{}, mu2{};
  double a = 0.0, k = 0.0;
  CVec3 zeta1{}, zeta2{};
  Index3 mu2_lattice{0, 0, 0};  // integer direction parallel to mu2, if one exists
  double grid_dx = 0.0;         // > 0 once corrected to the discrete dispersion relation
};

CgoFrame build_frame(const Vec3& xi, double k, double a, std::uint64_t orientation_seed);
// Newton-corrects zeta_j = -xi/2 +- eta so that the discrete symbol
// D(zeta) = sum_j (2 - 2 cos(zeta_j dx))/dx^2 equals k^2 for both j, keeping
// zeta1 + zeta2 = -xi.
CgoFrame discretize_frame(const CgoFrame& frame, double dx);
Complex discrete_dispersion(const CVec3& zeta, double dx);
const CVec3& frame_zeta(const CgoFrame& f, int which);

// Periodization cube: same spacing as the box grid, pad_factor*(N-1) cells per
// axis, box nodes embedded at index offset.
struct CubeSpec {
  int n_box = 0, pad = 2, M = 0, offset = 0;
  double h = 0.0, P = 0.0;
  Vec3 origin{};
  GridSpec grid() const { return GridSpec(origin, (M - 1) * h, M); }
  Index3 to_cube(const Index3& box) const { return {box[0] + offset, box[1] + offset, box[2] + offset}; }
  std::size_t index(const Index3& c) const {
    return std::size_t(c[0]) + std::size_t(M) * (std::size_t(c[1]) + std::size_t(M) * std::size_t(c[2]));
  }
  // Radius of the origin-centred ball containing the cube.
  double enclosing_radius() const;
};

CubeSpec make_cube(const GridSpec& box, int pad_factor);
ScalarField extend_potential(const ScalarField& q, const CubeSpec& cube);

struct CgoSolution {
  CgoFrame frame;
  int which = 1;
  CgoMode mode = CgoMode::Continuum;
  CubeSpec cube;
  std::vector<Complex> r;  // cube values
  double remainder_l2 = 0.0;       // ||r|| over the cube
  double residual = 0.0;           // relative residual of the remainder equation
  double contraction = 0.0;        // largest observed ||dr_{m+1}||/||dr_m||
  double contraction_bound = 0.0;  // ||q||_inf / min |symbol|
  double min_symbol = 0.0;
  double q_sup = 0.0;
  int iterations = 0;
};

CgoSolution solve_remainder(const ScalarField& q_extended, const CubeSpec& cube, const CgoFrame& frame, int which,
                            double tolerance, CgoMode mode = CgoMode::Continuum, int max_iterations = 500);

struct CgoEvaluation {
  ComplexField u;          // box nodes
  double cube_l2 = 0.0;    // ||u|| over the cube
  double growth_ratio = 0.0;  // cube_l2 / e^{aR}
  double R = 0.0;
};

Complex cgo_value(const CgoSolution& s, const Index3& cube_index);
CgoEvaluation evaluate_cgo(const CgoSolution& s, const GridSpec& box);
// Bound constant for ||u|| <= C e^{aR}: |u| <= e^{aR}|1+r| pointwise, so
// C = vol(cube)^{1/2} + C1 ||q||_inf / a.
double growth_constant(const CgoSolution& s, double C1);

// Robin data (d_nu - ik)u on every boundary sample. Continuum mode: closed form
// for the exponential, one-sided second-order difference for r. GridExact mode:
// centred difference using the cube's ghost values (matches the solver closure).
BoundaryTrace cgo_robin_trace(const CgoSolution& s, const DomainSpec& domain);

struct CalibrationEntry {
  std::size_t member;
  double a, k, ratio, contraction;
  bool ok;
  std::string note;
};

struct CgoConstants {
  double C0 = 1.0, C1 = 1.0;
  std::vector<CalibrationEntry> calibration_log;
};

CgoConstants calibrate_constants(const DomainSpec& domain, const std::vector<ScalarField>& q_family,
                                 const std::vector<double>& a_grid, const std::vector<double>& k_grid,
                                 std::uint64_t seed, int pad_factor = 2, double tolerance = 1e-10);
void write_constants(const std::string& path, const CgoConstants& c);
CgoConstants read_constants(const std::string& path);

// ||u||_{H2(Omega)} / ((1+k^2) ||u||_{L2(cube)}), second differences on the box.
double h2_ratio(const ComplexField& u_box, double u_tilde_l2, double k);
double check_h2_bound(const CgoSolution& s, const DomainSpec& domain);

}  // namespace implab

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "implab/cgo.hpp"
#include "implab/geometry.hpp"
#include "implab/impedance.hpp"
#include "implab/rtd.hpp"

namespace implab {

struct ScheduleParams {
  double h0_gamma = 1.0, alpha4 = 1.0, delta = 0.0, k = 1.0;
  double a = 0.0, rho = 0.0;
  bool clamped = false;  // a raised to a_floor
};

// a = k/h0_gamma + log(1/delta)/(4 alpha4), rho = a^{2/5}; a is raised to
// a_floor (= max(C0 M, 1)) when smaller. delta must lie in (0, 1/e).
ScheduleParams make_schedule(double k, double delta, double h0_gamma, double alpha4, double a_floor = 1.0);
// Noise-free variant (delta = 0): the log term is dropped, a = k/h0_gamma.
ScheduleParams make_noise_free_schedule(double k, double h0_gamma, double a_floor = 1.0);

// Frequencies 2 pi m / P of the cube of side P = pad * L around the box.
struct ProbeLattice {
  int pad = 2;
  double P = 0.0, step = 0.0, rho = 0.0;
  std::vector<Index3> half;  // one representative of each +-m pair (m = 0 included)
  Vec3 xi(const Index3& m) const { return {step * m[0], step * m[1], step * m[2]}; }
  std::size_t full_count() const;  // modes in the closed ball after Hermitian completion
};

ProbeLattice make_probe_lattice(const GridSpec& box, int pad, double rho);

// Grid quadrature of (q1 - q2) u1 u2 (no conjugation).
Complex alessandrini_pairing(const ScalarField& q1, const ScalarField& q2, const ComplexField& u1,
                             const ComplexField& u2, const DomainSpec& domain);

struct IdentityCheck {
  Complex pairing = 0.0, commutator = 0.0;
  double residual = 0.0;  // |pairing - commutator|
  double scale = 0.0;     // ||q1-q2||_inf ||u1|| ||u2||
};

// u1, u2 are CGOs for q1, q2 sampled on the box (Robin data g2 of u2 drives
// the q1 solve). commutator = sum W u1 [A1, chi] u with u = v - u2.
IdentityCheck alessandrini_identity(const ScalarField& q1, const ScalarField& q2, const ComplexField& u1,
                                    const ComplexField& u2, const BoundaryTrace& g2, const ScalarField& chi,
                                    const DomainSpec& domain, const SolverParams& params);

struct ProbeResult {
  Vec3 xi{};
  Index3 mode{0, 0, 0};
  Complex fourier_estimate = 0.0;
  double identity_residual = 0.0;  // |pairing in one order - pairing in the other|
  double r1_l2 = 0.0, r2_l2 = 0.0, contraction = 0.0;
};

// Boundary-data estimator of the Fourier transform of q1 - q2 at xi:
// sum over Gamma of s_e [(Lambda1 - Lambda2) g2]_e g1_e, g_j the Robin data of
// the CGO u_j. q1 enters only through lambda1.
ProbeResult fourier_estimate(const RtdMatrix& lambda1, const RtdMatrix& lambda2, const CgoSolution& q2_cgo,
                             const CgoSolution& q1_cgo, const Vec3& xi, const DomainSpec& domain);

// Trapezoid quadrature of int f e^{-i xi.x} dx; on lattice modes this equals
// the FFT spectrum used by the norms below.
Complex direct_fourier(const ScalarField& f, const Vec3& xi);

struct ReconstructionResult {
  ScalarField lowpass_field;
  double h_minus1_error = 0.0, linf_error = 0.0;
  double imaginary_residue = 0.0;
};

// Inverse series (1/P^3) sum est(m) e^{i xi_m.x} over the Hermitian-completed
// ball; when truth is given, errors of (recovered - truth) are filled in.
ReconstructionResult lowpass_reconstruct(const std::vector<ProbeResult>& estimates, const ProbeLattice& lattice,
                                         const DomainSpec& domain, const ScalarField* truth = nullptr);

// Parseval norms over the full DFT lattice of the zero-extended field, with
// trapezoid weights on box-boundary nodes.
double h_minus1_norm(const ScalarField& field, int pad = 2);
double sobolev_norm(const ScalarField& field, double s, int pad = 2);
// Same on a field already living on a periodic cube grid of side P.
double cube_sobolev_norm(const std::vector<double>& values, int M, double P, double s);
// Truncated-in-ball Fourier coefficients of the lowpass projection error.
double lowpass_h_minus1_error(const ScalarField& field, const ProbeLattice& lattice,
                              const std::vector<Complex>* estimates = nullptr);

struct InterpolationReport {
  double s = 0.0, eps = 0.0, exp_minus1 = 0.0, exp_s = 0.0;
  double linf = 0.0, h_minus1 = 0.0, h_s = 0.0, c_emp = 0.0;
  bool trivial = false;
};
InterpolationReport interpolation_check(const ScalarField& field, double s, int pad = 2);

struct StabilityRecord {
  double k = 0.0, delta = 0.0, a = 0.0, rho = 0.0;
  std::size_t n_probes = 0;
  double h_minus1_err = 0.0, linf_err = 0.0, identity_residual_max = 0.0, wall_seconds = 0.0;
  std::uint64_t seed = 0;
  double truth_h_minus1 = 0.0;
  bool ok = true;
  std::string note;
};

struct StabilityConfig {
  double h0_gamma = 1.0, alpha4 = 1.0;
  bool use_synthetic_delta = true;
  bool noise_free = false;  // delta = 0 variant
  int lattice_pad = 2;
  int cgo_pad = 2;
  double cgo_tolerance = 1e-12;
  double C0 = 1.0;
  std::uint64_t seed = 1;
  int jobs = 1;
  SolverParams solver;  // k overwritten per sweep point
  bool quiet = true;
};

// Optional hook so callers (the lab cache) can supply RtD maps.
using RtdProvider = std::function<RtdMatrix(const ScalarField& q, double k)>;

std::vector<ProbeResult> run_probes(const RtdMatrix& lambda1, const RtdMatrix& lambda2, const ScalarField& q1_oracle,
                                    const ScalarField& q2, const ProbeLattice& lattice, double k, double a,
                                    const DomainSpec& domain, const StabilityConfig& cfg);

std::vector<StabilityRecord> run_stability_experiment(const DomainSpec& domain, const ScalarField& q1,
                                                      const ScalarField& q2, const std::vector<double>& k_list,
                                                      double noise_delta, const StabilityConfig& cfg,
                                                      const RtdProvider& provider = {});

void write_stability_csv(const std::string& path, const std::vector<StabilityRecord>& records);

// Slope of log y vs log x by least squares.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace implab

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "implab/geometry.hpp"

namespace implab {

struct CarlemanWeight {
  ScalarField psi;
  Mask support;  // nodes where psi is defined (whole box or omega0)
  double beta0 = 1.0;
  ScalarField phi;  // e^{beta0 psi} (psi = 0 off the support)
  double kappa = 0.0;
};

struct CarlemanCheckParams {
  std::vector<double> h_sequence{0.4, 0.2, 0.1, 0.05};
  std::vector<double> gamma_grid{1.0, 2.0};  // FI check: weight exponents
  std::vector<double> E_values{0.0, 0.5, 1.0};
  std::vector<double> k_values{1.0, 2.0};  // Robin check
  double h0 = 1.0;                          // Robin regime h k <= h0
  int trial_count = 4;
  std::uint64_t seed = 1;
  int jobs = 1;
};

// psi = x1 - min x1 + 1 on the whole box; kappa = min(psi)/2.
CarlemanWeight build_simple_weight(const DomainSpec& domain, double beta0);
CarlemanWeight with_beta(const CarlemanWeight& w, double beta0);

struct WeightReport {
  bool positivity = false, gradient = false, boundary_values = false, normal_derivative = false;
  double min_interior_psi = 0.0, min_gradient = 0.0, max_boundary_abs = 0.0, min_normal_difference = 0.0;
  Index3 worst_gradient_node{0, 0, 0};
  Index3 worst_normal_node{0, 0, 0};
  int attempts = 0;
  bool ok() const { return positivity && gradient && boundary_values && normal_derivative; }
  std::string describe() const;
};

// Nodal checks of a candidate weight on omega0. Box edges and corners are
// skipped for the gradient and normal-difference checks.
WeightReport verify_gamma_weight(const DomainSpec& domain, const AnnulusFamily& family, const ScalarField& psi,
                                 double g_min);

// Poisson candidate -Lap psi = c on omega0, psi = 1 on Gamma nodes, 0 on the
// rest of the boundary of omega0; c is redrawn until the checks pass. With
// accept_unverified the candidate with the largest gradient floor is returned
// instead of throwing; report->ok() then tells whether it was verified.
CarlemanWeight build_gamma_weight(const DomainSpec& domain, const AnnulusFamily& family, std::uint64_t seed,
                                  double beta0 = 3.0, double g_min = 0.05, int retry_budget = 8,
                                  WeightReport* report = nullptr, bool accept_unverified = false);

// e^{phi/h} (-h^2 Lap - E) e^{-phi/h} u at interior nodes (boundary nodes get
// 0), using exponent differences phi(x)-phi(y) per stencil arm.
ComplexField apply_conjugated(const ComplexField& u, const CarlemanWeight& weight, double h, double E);
// (-h^2 Lap - E)u with the Robin ghost closure (f = 0) at boundary nodes.
ComplexField apply_robin_operator(const ComplexField& u, double h, double E, double k);

// Max relative gap between the conjugated operator computed by automatic
// differentiation of e^{phi/h}P(e^{-phi/h}u) and the split form A2 + i A1,
// for seeded analytic u and phi at sample points.
double decomposition_identity_error(std::uint64_t seed, double h, double E, int points = 64);
// Max relative gap |P_phi u / u - ((xi + i phi')^2 - E)| at interior nodes for
// u = e^{i x1 / h} and xi = e1 (an O(h) quantity).
double symbol_check(const CarlemanWeight& weight, double h, double E);

struct RatioRow {
  double h, gamma_or_k, E;
  int trial;
  double lhs, rhs, ratio;
};

struct RatioTable {
  std::vector<RatioRow> rows;
  // min ratio over trials for a (gamma_or_k, E) pair, per h in sequence order
  std::vector<double> min_ratios(const std::vector<double>& h_sequence, double gamma_or_k, double E) const;
};

// d log(min ratio) / d log(1/h) by least squares; >= -0.1 means no decay.
double refinement_slope(const std::vector<double>& h_sequence, const std::vector<double>& min_ratios);

RatioTable check_fursikov_imanuvilov(const DomainSpec& domain, const CarlemanWeight& simple_weight,
                                     const CarlemanCheckParams& params);

// Test fields: theta times a band-limited field, boundary values reset so the
// one-sided normal difference matches d_nu u = i k u.
ComplexField robin_test_field(const DomainSpec& domain, const AnnulusFamily& family, double k, std::uint64_t seed);

RatioTable check_robin_carleman(const DomainSpec& domain, const AnnulusFamily& family, const CarlemanWeight& weight,
                                const CarlemanCheckParams& params, bool gamma_is_full_boundary = false);

struct UcpMemberNorms {
  std::string label;
  double mid_h1 = 0.0, global_h1 = 0.0, gamma_h1 = 0.0;
  std::vector<double> w_mid, w_comm, w_gamma;  // per h
};

struct UcpFit {
  double alpha1 = 0.0, alpha2 = 0.0;
  bool degenerate = false;
  std::vector<UcpMemberNorms> members;
};

// Family: impedance solves with interior sources near Gamma, away from Gamma,
// and Robin data supported on Gamma.
UcpFit check_ucp_bound(const DomainSpec& domain, const AnnulusFamily& family, const CarlemanWeight& weight,
                       const ScalarField& q, double k, const std::vector<double>& h_sequence, std::uint64_t seed);

void write_ratio_csv(const std::string& path, const RatioTable& table);

}  // namespace implab

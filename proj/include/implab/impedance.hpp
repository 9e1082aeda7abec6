#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "implab/geometry.hpp"
#include "implab/sparse_lu.hpp"

namespace implab {

enum class SolverMethod { Direct, Iterative };
SolverMethod parse_solver_method(const std::string& s);

struct SolverParams {
  double k = 1.0;
  double tolerance = 1e-10;
  int max_iterations = 4000;
  SolverMethod method = SolverMethod::Direct;
};

struct ImpedanceSolution {
  ComplexField u;
  double residual = 0.0;
  int iterations = 0;
};

// (-Delta_h - k^2 + q) with the ghost-node Robin closure on every face:
// u_{-1} = u_{1} - 2 dx (f + i k u_0) along the inner normal.
class ImpedanceOperator {
 public:
  ImpedanceOperator(const DomainSpec& domain, const ScalarField& q, const SolverParams& params);

  const SpMat& matrix() const { return A_; }
  const DomainSpec& domain() const { return domain_; }
  const SolverParams& params() const { return params_; }

  // Right-hand side F - (2/dx) sum_faces f for a full-boundary trace f.
  std::vector<Complex> rhs(const ComplexField* F, const BoundaryTrace* f) const;
  ComplexField apply(const ComplexField& u) const;

  ImpedanceSolution solve(const ComplexField* F, const BoundaryTrace* f) const;
  ImpedanceSolution solve_rhs(const std::vector<Complex>& b) const;
  // Factorization is built on first use (guarded), then shared read-only.
  void factorize() const;

 private:
  DomainSpec domain_;
  SolverParams params_;
  SpMat A_;
  mutable std::once_flag factor_once_;
  mutable std::unique_ptr<SparseLU> lu_;
};

ImpedanceOperator assemble(const DomainSpec& domain, const ScalarField& q, const SolverParams& params);
ImpedanceSolution solve(const DomainSpec& domain, const ScalarField& q, const ComplexField& F, const BoundaryTrace& f,
                        const SolverParams& params);

// Robin data (d_nu - i k)u for u given analytically with its gradient.
using AnalyticField = std::function<Complex(const Vec3&)>;
using AnalyticGradient = std::function<CVec3(const Vec3&)>;
BoundaryTrace robin_trace(const DomainSpec& domain, double k, const AnalyticField& u, const AnalyticGradient& grad);
ComplexField sample_field(const GridSpec& grid, const AnalyticField& u);

struct BaskinRow {
  double k;
  double max_ratio;
  std::vector<double> ratios;
};

// (||grad u|| + k||u||) / (||F|| + ||f||) for q = 0 and seeded random data;
// trial t uses the same (F, f) for every k.
std::vector<BaskinRow> check_baskin_bound(const DomainSpec& domain, const std::vector<double>& k_list, int trial_count,
                                          std::uint64_t seed, const SolverParams& base = {});

// max over k in [k_lo, k_hi] (k_samples points) and random F of ||u||_H1 / ||F||, f = 0.
double check_bounded_k_bound(const DomainSpec& domain, const ScalarField& q, double k_lo, double k_hi, int k_samples,
                             int trial_count, std::uint64_t seed, const SolverParams& base = {});

// Binary dump: "IMPS", u32 version, u32 N, f64 L, complex64 payload x-fastest.
void write_imps(const std::string& path, const ComplexField& u);
ComplexField read_imps(const std::string& path);

}  // namespace implab

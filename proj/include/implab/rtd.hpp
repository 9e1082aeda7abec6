#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <string>

#include "implab/impedance.hpp"

namespace implab {

// Columns: nodal basis functions on all boundary samples. Rows: Gamma samples.
struct RtdMatrix {
  double k = 0.0;
  BoundaryPatch target;
  std::size_t source_count = 0;
  Eigen::MatrixXcd entries;
};

struct DataDistance {
  double delta = 0.0;
  int iterations = 0;
  bool converged = true;
};

RtdMatrix assemble_rtd(const DomainSpec& domain, const ScalarField& q, const SolverParams& params, int jobs = 1);
RtdMatrix assemble_rtd(const ImpedanceOperator& op, const BoundaryPatch& target, int jobs = 1);
RtdMatrix restrict_rtd(const RtdMatrix& full, const DomainSpec& domain, const BoundaryPatch& patch);

// dx^2 (I + Du^H Du + Dv^H Dv): tangential differences stay inside the patch
// and inside one face (forward where possible, backward on the rim).
Eigen::SparseMatrix<double> h1_gram(const DomainSpec& domain, const BoundaryPatch& patch);
double h1_patch_norm(const DomainSpec& domain, const BoundaryPatch& patch, const Eigen::VectorXcd& y);

// Largest singular value of A : (C^|dOmega|, dx^2 l2) -> (C^|patch|, H1 Gram),
// power iteration on the weighted normal operator.
DataDistance operator_norm(const DomainSpec& domain, const BoundaryPatch& patch, const Eigen::MatrixXcd& A,
                           double tol = 1e-8, int max_iterations = 20000, std::uint64_t seed = 7);
DataDistance data_distance(const DomainSpec& domain, const RtdMatrix& A, const RtdMatrix& B);

RtdMatrix add_noise(const DomainSpec& domain, const RtdMatrix& A, double level, std::uint64_t seed);

// RTDM file: "RTDM", u32 version, f64 k, u32 |Gamma|, u32 |dOmega|, then the
// entries row-major. Version 1 stores complex64; version 2 stores complex128
// and is what the cache writes.
void write_rtdm(const std::string& path, const RtdMatrix& A, int version);
RtdMatrix read_rtdm(const std::string& path, const BoundaryPatch& target);

}  // namespace implab

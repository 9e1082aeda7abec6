#pragma once

#include "implab/geometry.hpp"
#include "implab/grid.hpp"

namespace implab {

// Discrete norms shared by every module: L2(Omega) is a dx^3-weighted sum over
// the node mask, L2(dOmega) a dx^2-weighted sum over boundary samples, and
// gradients are one-sided (forward, backward on the last plane).
double l2_norm(const ComplexField& u, const Mask* mask = nullptr);
double l2_norm(const ScalarField& u, const Mask* mask = nullptr);
double grad_l2_norm(const ComplexField& u, const Mask* mask = nullptr);
double h1_norm(const ComplexField& u, const Mask* mask = nullptr);
double boundary_l2_norm(const DomainSpec& domain, const BoundaryTrace& f);

// One-sided difference of u along axis c at node i.
Complex forward_difference(const ComplexField& u, std::size_t i, int c);

}  // namespace implab

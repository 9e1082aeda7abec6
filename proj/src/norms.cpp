#include "implab/norms.hpp"

#include <cmath>

namespace implab {

namespace {
template <class T>
double masked_sq(const GridField<T>& u, const Mask* mask) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!mask || (*mask)[i]) s += std::norm(u[i]);
  return s;
}
}  // namespace

double l2_norm(const ComplexField& u, const Mask* mask) {
  const double h = u.grid().spacing();
  return std::sqrt(h * h * h * masked_sq(u, mask));
}

double l2_norm(const ScalarField& u, const Mask* mask) {
  const double h = u.grid().spacing();
  return std::sqrt(h * h * h * masked_sq(u, mask));
}

Complex forward_difference(const ComplexField& u, std::size_t i, int c) {
  const GridSpec& g = u.grid();
  Index3 p = g.ijk(i);
  const double h = g.spacing();
  if (p[c] + 1 < g.n()) {
    Index3 q = p;
    q[c] += 1;
    return (u[g.index(q)] - u[i]) / h;
  }
  Index3 q = p;
  q[c] -= 1;
  return (u[i] - u[g.index(q)]) / h;
}

double grad_l2_norm(const ComplexField& u, const Mask* mask) {
  const double h = u.grid().spacing();
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    for (int c = 0; c < 3; ++c) s += std::norm(forward_difference(u, i, c));
  }
  return std::sqrt(h * h * h * s);
}

double h1_norm(const ComplexField& u, const Mask* mask) {
  const double a = l2_norm(u, mask), b = grad_l2_norm(u, mask);
  return std::sqrt(a * a + b * b);
}

double boundary_l2_norm(const DomainSpec& domain, const BoundaryTrace& f) {
  const double h = domain.grid.spacing();
  double s = 0.0;
  for (const Complex& v : f) s += std::norm(v);
  return std::sqrt(h * h * s);
}

}  // namespace implab

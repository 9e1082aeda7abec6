#include "implab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "implab/errors.hpp"

namespace implab {

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

GridSpec::GridSpec(const Vec3& origin, double side, int points_per_axis)
    : origin_(origin), side_(side), n_(points_per_axis) {
  if (!(side > 0.0) || !std::isfinite(side)) throw ConfigError("box_side must be positive");
  if (points_per_axis < 8) {
    throw ConfigError("points_per_axis must be >= 8, got " + std::to_string(points_per_axis));
  }
}

GridSpec GridSpec::centered(double side, int points_per_axis) {
  return GridSpec({-side / 2, -side / 2, -side / 2}, side, points_per_axis);
}

Index3 GridSpec::ijk(std::size_t idx) const {
  const std::size_t n = std::size_t(n_);
  return {int(idx % n), int((idx / n) % n), int(idx / (n * n))};
}

Vec3 GridSpec::position(int i, int j, int l) const {
  const double h = spacing();
  return {origin_[0] + i * h, origin_[1] + j * h, origin_[2] + l * h};
}

Vec3 GridSpec::position(std::size_t idx) const {
  const Index3 p = ijk(idx);
  return position(p[0], p[1], p[2]);
}

bool GridSpec::contains(const Index3& p) const {
  return p[0] >= 0 && p[1] >= 0 && p[2] >= 0 && p[0] < n_ && p[1] < n_ && p[2] < n_;
}

double GridSpec::enclosing_radius() const {
  double r2 = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double lo = origin_[c], hi = origin_[c] + side_;
    r2 += std::max(lo * lo, hi * hi);
  }
  return std::sqrt(r2);
}

template <class T>
GridField<T>::GridField(const GridSpec& grid, std::vector<T> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.node_count()) throw ConfigError("field size does not match grid");
}

template class GridField<double>;
template class GridField<Complex>;
template class GridField<unsigned char>;

double sup_norm(const ScalarField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

double sup_norm(const ComplexField& f) {
  double m = 0.0;
  for (const Complex& v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace implab

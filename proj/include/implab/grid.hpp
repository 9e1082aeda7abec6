#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

namespace implab {

using Complex = std::complex<double>;
using Vec3 = std::array<double, 3>;
using CVec3 = std::array<Complex, 3>;
using Index3 = std::array<int, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Complex dot(const CVec3& a, const CVec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Complex dot(const CVec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a);

// Vertex-centred uniform grid on an axis-aligned cube. Node (i,j,l) sits at
// origin + (i,j,l)*spacing; linear index is x-fastest.
class GridSpec {
 public:
  GridSpec(const Vec3& origin, double side, int points_per_axis);
  static GridSpec centered(double side, int points_per_axis);

  const Vec3& origin() const { return origin_; }
  double side() const { return side_; }
  int n() const { return n_; }
  double spacing() const { return side_ / (n_ - 1); }
  std::size_t node_count() const { return std::size_t(n_) * n_ * n_; }

  std::size_t index(int i, int j, int l) const {
    return std::size_t(i) + std::size_t(n_) * (std::size_t(j) + std::size_t(n_) * std::size_t(l));
  }
  std::size_t index(const Index3& p) const { return index(p[0], p[1], p[2]); }
  Index3 ijk(std::size_t idx) const;
  Vec3 position(int i, int j, int l) const;
  Vec3 position(std::size_t idx) const;
  bool contains(const Index3& p) const;

  // Radius of the smallest origin-centred ball containing the box.
  double enclosing_radius() const;

  bool operator==(const GridSpec& o) const {
    return origin_ == o.origin_ && side_ == o.side_ && n_ == o.n_;
  }

 private:
  Vec3 origin_;
  double side_;
  int n_;
};

template <class T>
class GridField {
 public:
  using value_type = T;
  GridField(const GridSpec& grid, T fill = T{}) : grid_(grid), values_(grid.node_count(), fill) {}
  GridField(const GridSpec& grid, std::vector<T> values);

  const GridSpec& grid() const { return grid_; }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& at(int i, int j, int l) { return values_[grid_.index(i, j, l)]; }
  const T& at(int i, int j, int l) const { return values_[grid_.index(i, j, l)]; }

 private:
  GridSpec grid_;
  std::vector<T> values_;
};

using ScalarField = GridField<double>;
using ComplexField = GridField<Complex>;
using Mask = GridField<unsigned char>;

double sup_norm(const ScalarField& f);
double sup_norm(const ComplexField& f);

}  // namespace implab

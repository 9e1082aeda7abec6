#include "implab/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "implab/errors.hpp"

namespace implab {

namespace {
const char* kFaceNames[kFaceCount] = {"x-", "x+", "y-", "y+", "z-", "z+"};
}

int parse_face(const std::string& name) {
  for (int f = 0; f < kFaceCount; ++f)
    if (name == kFaceNames[f]) return f;
  if (name == "top") return 5;
  if (name == "bottom") return 4;
  throw ConfigError("unknown face name '" + name + "' (expected x-, x+, y-, y+, z-, z+, top, bottom or all)");
}

std::string face_name(int face) { return kFaceNames[face]; }

double DomainSpec::surface_weight(std::size_t sample) const {
  const BoundarySample& s = boundary[sample];
  const int n = grid.n();
  const double h = grid.spacing();
  double w = h * h;
  if (s.a == 0 || s.a == n - 1) w *= 0.5;
  if (s.b == 0 || s.b == n - 1) w *= 0.5;
  return w;
}

double DomainSpec::volume_weight(std::size_t node) const {
  const Index3 p = grid.ijk(node);
  const int n = grid.n();
  const double h = grid.spacing();
  double w = h * h * h;
  for (int c = 0; c < 3; ++c)
    if (p[c] == 0 || p[c] == n - 1) w *= 0.5;
  return w;
}

DomainSpec build_box_domain(const GridSpec& grid, const GammaSpec& gamma_spec) {
  DomainSpec d{grid, Mask(grid, 1), {}, {}, {}, false};
  const int n = grid.n();
  d.boundary.reserve(std::size_t(kFaceCount) * n * n);
  for (int f = 0; f < kFaceCount; ++f) {
    const int ax = face_axis(f), u = (ax + 1) % 3, v = (ax + 2) % 3;
    Vec3 normal{0, 0, 0};
    normal[ax] = face_side(f) == 0 ? 1.0 : -1.0;
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        Index3 p{};
        p[ax] = face_side(f) == 0 ? 0 : n - 1;
        p[u] = a;
        p[v] = b;
        d.boundary.push_back({grid.index(p), f, p, normal, a, b});
      }
  }
  d.full.samples.resize(d.boundary.size());
  for (std::size_t s = 0; s < d.boundary.size(); ++s) d.full.samples[s] = s;

  if (gamma_spec.face == "all") {
    d.gamma = d.full;
    d.partial = false;
    return d;
  }
  const int face = parse_face(gamma_spec.face);
  if (!(gamma_spec.radius >= 0))
    throw ConfigError("gamma radius must be non-negative (got " + std::to_string(gamma_spec.radius) + ")");
  const double h = grid.spacing(), L = grid.side();
  const double cu = gamma_spec.center_uv[0] * L, cv = gamma_spec.center_uv[1] * L;
  const double r2 = gamma_spec.radius * gamma_spec.radius * (1 + 1e-12) + 1e-24;
  for (int b = 0; b < n; ++b)
    for (int a = 0; a < n; ++a) {
      const double du = a * h - cu, dv = b * h - cv;
      if (du * du + dv * dv <= r2) d.gamma.samples.push_back(d.sample_index(face, a, b));
    }
  if (d.gamma.samples.empty()) {
    throw ConfigError("gamma selects no boundary node (face " + gamma_spec.face + ", radius " +
                      std::to_string(gamma_spec.radius) + ")");
  }
  d.partial = true;
  return d;
}

Vec3 axis_distances(const GridSpec& grid, std::size_t node) {
  const Index3 p = grid.ijk(node);
  const int n = grid.n();
  const double h = grid.spacing();
  Vec3 out{};
  for (int c = 0; c < 3; ++c) out[c] = h * std::min(p[c], n - 1 - p[c]);
  return out;
}

double boundary_distance(const GridSpec& grid, std::size_t node) {
  const Vec3 d = axis_distances(grid, node);
  return std::min({d[0], d[1], d[2]});
}

double smoothstep5(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (t * (6 * t - 15) + 10);
}

AnnulusFamily build_annuli(const DomainSpec& domain, const std::array<double, 4>& widths) {
  const GridSpec& g = domain.grid;
  for (int j = 0; j < 4; ++j)
    if (!(widths[j] > 0)) throw GeometryError("annulus widths must be positive");
  for (int j = 1; j < 4; ++j)
    if (!(widths[j] < widths[j - 1]))
      throw GeometryError("annulus widths must be strictly decreasing (omega" + std::to_string(j) +
                          " not thinner than omega" + std::to_string(j - 1) + ")");

  AnnulusFamily fam{{Mask(g, 0), Mask(g, 0), Mask(g, 0), Mask(g, 0)}, ScalarField(g, 0.0), ScalarField(g, 0.0), widths};
  const std::size_t nn = g.node_count();
  for (std::size_t i = 0; i < nn; ++i) {
    const double d = boundary_distance(g, i);
    for (int j = 0; j < 4; ++j) fam.omega[j][i] = d < widths[j] ? 1 : 0;
  }

  // Core must be nonempty and keep a one-cell collar from omega0.
  bool core_interior = false;
  for (std::size_t i = 0; i < nn && !core_interior; ++i) {
    if (fam.omega[0][i]) continue;
    const Index3 p = g.ijk(i);
    bool all = true;
    for (int c = 0; c < 3 && all; ++c)
      for (int s : {-1, 1}) {
        Index3 q = p;
        q[c] += s;
        if (fam.omega[0][g.index(q)]) all = false;
      }
    core_interior = all;
  }
  if (!core_interior) throw GeometryError("omega0 is too thick: no interior core with a one-cell collar remains in Omega");

  for (int j = 1; j < 4; ++j) {
    bool strict = false;
    for (std::size_t i = 0; i < nn; ++i) {
      if (fam.omega[j - 1][i] && !fam.omega[j][i]) strict = true;
      if (!fam.omega[j][i]) continue;
      const Index3 p = g.ijk(i);
      for (int c = 0; c < 3; ++c)
        for (int s : {-1, 1}) {
          Index3 q = p;
          q[c] += s;
          if (g.contains(q) && !fam.omega[j - 1][g.index(q)])
            throw GeometryError("closure(omega" + std::to_string(j) + ") is not inside omega" +
                                std::to_string(j - 1) + " with a one-cell collar");
        }
    }
    if (!strict) throw GeometryError("omega" + std::to_string(j) + " equals omega" + std::to_string(j - 1) + " on this grid");
  }

  const double t1 = widths[1] + 0.25 * (widths[0] - widths[1]);
  const double t0 = widths[0] - 0.25 * (widths[0] - widths[1]);
  for (std::size_t i = 0; i < nn; ++i) {
    const Vec3 d = axis_distances(g, i);
    double chi = 1.0, inner = 1.0;
    for (int c = 0; c < 3; ++c) {
      chi *= smoothstep5((d[c] - widths[3]) / (widths[2] - widths[3]));
      inner *= smoothstep5((d[c] - t1) / (t0 - t1));
    }
    fam.chi[i] = chi;
    fam.theta[i] = 1.0 - inner;
  }
  return fam;
}

ScalarField restrict_potential_support(const ScalarField& q, const AnnulusFamily& family) {
  ScalarField out = q;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (family.omega[0][i]) out[i] = 0.0;
  return out;
}

}  // namespace implab

#include "implab/cgo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "implab/errors.hpp"
#include "implab/fft.hpp"

namespace implab {

namespace {

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return {v[0] / n, v[1] / n, v[2] / n};
}

// Smallest integer vector parallel to v with entries <= 64, or zero.
Index3 integer_direction(const Vec3& v) {
  double mx = 0;
  for (double c : v) mx = std::max(mx, std::abs(c));
  if (mx == 0) return {0, 0, 0};
  for (int s = 1; s <= 64; ++s) {
    double scale = 0;
    for (double c : v)
      if (std::abs(c) > 1e-12 * mx) {
        scale = s / std::abs(c);
        break;
      }
    // try each nonzero component as the one mapped to +-s
    for (int j = 0; j < 3; ++j) {
      if (std::abs(v[j]) <= 1e-12 * mx) continue;
      scale = s / std::abs(v[j]);
      Index3 n{};
      bool ok = true;
      for (int c = 0; c < 3 && ok; ++c) {
        const double x = v[c] * scale;
        n[c] = int(std::lround(x));
        ok = std::abs(x - n[c]) < 1e-8 && std::abs(n[c]) <= 64;
      }
      if (ok) {
        const int g = std::gcd(std::gcd(std::abs(n[0]), std::abs(n[1])), std::abs(n[2]));
        for (int& c : n) c /= g;
        return n;
      }
    }
  }
  return {0, 0, 0};
}

}  // namespace

CgoFrame build_frame(const Vec3& xi, double k, double a, std::uint64_t orientation_seed) {
  if (!(a >= 1.0)) throw PreconditionError("CGO frame needs a >= 1, got a = " + std::to_string(a));
  const double xi2 = dot(xi, xi);
  if (k * k + a * a < xi2 / 4)
    throw PreconditionError("|xi| too large for (k, a): need k^2 + a^2 >= |xi|^2/4 (|xi| = " +
                            std::to_string(std::sqrt(xi2)) + ")");
  CgoFrame f;
  f.xi = xi;
  f.a = a;
  f.k = k;
  const double xn = std::sqrt(xi2);
  if (xn == 0.0) {
    f.mu1 = {0, 1, 0};
    f.mu2 = {0, 0, 1};
  } else {
    std::vector<Vec3> cands;
    for (int c = 0; c < 3; ++c)
      if (std::abs(xi[c]) <= 1e-12 * xn) {
        Vec3 e{0, 0, 0};
        e[c] = 1;
        cands.push_back(e);
      }
    if (cands.empty())
      for (int j = 0; j < 3; ++j) {
        Vec3 e{0, 0, 0};
        e[j] = 1;
        cands.push_back(normalized(cross(xi, e)));
      }
    f.mu2 = cands[orientation_seed % cands.size()];
    f.mu1 = normalized(cross(f.mu2, xi));
  }
  f.mu2_lattice = integer_direction(f.mu2);
  const double s = std::sqrt(k * k + a * a - xi2 / 4);
  for (int c = 0; c < 3; ++c) {
    const Complex e(s * f.mu1[c], a * f.mu2[c]);
    f.zeta1[c] = -xi[c] / 2 + e;
    f.zeta2[c] = -xi[c] / 2 - e;
  }
  return f;
}

Complex discrete_dispersion(const CVec3& zeta, double dx) {
  Complex s = 0.0;
  for (const Complex& z : zeta) s += 2.0 - 2.0 * std::cos(z * dx);
  return s / (dx * dx);
}

const CVec3& frame_zeta(const CgoFrame& f, int which) {
  if (which != 1 && which != 2) throw ConfigError("CGO index must be 1 or 2");
  return which == 1 ? f.zeta1 : f.zeta2;
}

CgoFrame discretize_frame(const CgoFrame& frame, double dx) {
  CgoFrame f = frame;
  const double xn = norm(frame.xi);
  const Vec3 nu = xn > 0 ? Vec3{frame.xi[0] / xn, frame.xi[1] / xn, frame.xi[2] / xn} : Vec3{0, 0, 0};
  std::array<double, 3> A{}, sA{}, cA{};
  for (int j = 0; j < 3; ++j) {
    A[j] = frame.xi[j] * dx / 2;
    sA[j] = std::sin(A[j]);
    cA[j] = std::cos(A[j]);
  }
  const double target = 3.0 - frame.k * frame.k * dx * dx / 2;
  Complex alpha = std::sqrt(frame.k * frame.k + frame.a * frame.a - dot(frame.xi, frame.xi) / 4), gamma = 0.0;
  auto eta_of = [&](Complex al, Complex ga) {
    CVec3 e;
    for (int j = 0; j < 3; ++j) e[j] = al * frame.mu1[j] + Complex(0, frame.a * frame.mu2[j]) + ga * nu[j];
    return e;
  };
  bool done = false;
  for (int it = 0; it < 100 && !done; ++it) {
    const CVec3 eta = eta_of(alpha, gamma);
    Complex E1 = 0.0, E2 = -target, J11 = 0.0, J12 = 0.0, J21 = 0.0, J22 = 0.0;
    for (int j = 0; j < 3; ++j) {
      const Complex s = std::sin(eta[j] * dx), c = std::cos(eta[j] * dx);
      E1 += sA[j] * s;
      E2 += cA[j] * c;
      J11 += sA[j] * c * dx * frame.mu1[j];
      J12 += sA[j] * c * dx * nu[j];
      J21 += -cA[j] * s * dx * frame.mu1[j];
      J22 += -cA[j] * s * dx * nu[j];
    }
    Complex dal, dga = 0.0;
    if (xn == 0.0) {
      dal = -E2 / J21;
    } else {
      const Complex det = J11 * J22 - J12 * J21;
      dal = -(J22 * E1 - J12 * E2) / det;
      dga = -(-J21 * E1 + J11 * E2) / det;
    }
    alpha += dal;
    gamma += dga;
    done = std::abs(dal) + std::abs(dga) < 1e-14 * (1 + std::abs(alpha));
  }
  if (!done) throw NumericalError("cgo frame", "discrete dispersion correction did not converge");
  const CVec3 eta = eta_of(alpha, gamma);
  for (int j = 0; j < 3; ++j) {
    f.zeta1[j] = -frame.xi[j] / 2 + eta[j];
    f.zeta2[j] = -frame.xi[j] / 2 - eta[j];
  }
  f.grid_dx = dx;
  return f;
}

double CubeSpec::enclosing_radius() const {
  double r2 = 0;
  for (int c = 0; c < 3; ++c) {
    const double lo = origin[c], hi = origin[c] + (M - 1) * h;
    r2 += std::max(lo * lo, hi * hi);
  }
  return std::sqrt(r2);
}

CubeSpec make_cube(const GridSpec& box, int pad_factor) {
  if (pad_factor < 2) throw ConfigError("cgo.pad_factor must be >= 2");
  CubeSpec c;
  c.n_box = box.n();
  c.pad = pad_factor;
  c.M = pad_factor * (box.n() - 1);
  c.offset = ((pad_factor - 1) * (box.n() - 1)) / 2;
  c.h = box.spacing();
  c.P = c.M * c.h;
  for (int j = 0; j < 3; ++j) c.origin[j] = box.origin()[j] - c.offset * c.h;
  return c;
}

ScalarField extend_potential(const ScalarField& q, const CubeSpec& cube) {
  ScalarField out(cube.grid(), 0.0);
  const GridSpec& g = q.grid();
  if (g.n() != cube.n_box || g.spacing() != cube.h) throw ConfigError("potential grid does not match the cube");
  for (std::size_t i = 0; i < q.size(); ++i) out[cube.index(cube.to_cube(g.ijk(i)))] = q[i];
  return out;
}

namespace {

struct Multiplier {
  std::vector<Complex> symbol;      // M^3, FFT index order
  std::vector<Complex> phase_axis;  // e^{i tau_c x_c} along the shift axis
  int shift_axis = 2;
  double min_abs = 0.0;
};

Multiplier build_multiplier(const CubeSpec& cube, const CgoFrame& frame, int which, CgoMode mode) {
  Multiplier m;
  const int M = cube.M;
  const double step = 2 * std::numbers::pi / cube.P;
  int axis = -1;
  for (int c = 0; c < 3; ++c)
    if (std::abs(std::abs(frame.mu2[c]) - 1.0) < 1e-12) axis = c;
  if (axis < 0) {
    const Index3& n = frame.mu2_lattice;
    for (int c = 0; c < 3 && axis < 0; ++c)
      if (n[c] % 2 != 0) axis = c;
  }
  if (axis < 0) {
    axis = 0;
    for (int c = 1; c < 3; ++c)
      if (std::abs(frame.mu2[c]) > std::abs(frame.mu2[axis])) axis = c;
  }
  m.shift_axis = axis;
  const double tau = step / 2;
  m.phase_axis.resize(M);
  for (int I = 0; I < M; ++I) m.phase_axis[I] = std::polar(1.0, tau * (cube.origin[axis] + I * cube.h));

  const CVec3& z = frame_zeta(frame, which);
  if (mode == CgoMode::GridExact) {
    if (!(frame.grid_dx > 0) || std::abs(frame.grid_dx - cube.h) > 1e-12 * cube.h)
      throw ConfigError("grid-exact CGO needs a frame discretized on the cube spacing");
  }
  std::vector<double> w(M);
  for (int I = 0; I < M; ++I) w[I] = step * (I < M / 2 ? I : I - M);
  m.symbol.resize(std::size_t(M) * M * M);
  m.min_abs = INFINITY;
  const double h = cube.h;
  CVec3 cz{};
  for (int c = 0; c < 3; ++c) cz[c] = 2.0 * std::cos(z[c] * h);
  for (int K = 0; K < M; ++K)
    for (int J = 0; J < M; ++J)
      for (int I = 0; I < M; ++I) {
        Vec3 om{w[I], w[J], w[K]};
        om[axis] += tau;
        Complex s;
        if (mode == CgoMode::Continuum) {
          s = dot(om, om) + 2.0 * dot(z, om);
        } else {
          s = 0.0;
          for (int c = 0; c < 3; ++c) s += cz[c] - 2.0 * std::cos((z[c] + om[c]) * h);
          s /= h * h;
        }
        m.symbol[std::size_t(I) + std::size_t(M) * (J + std::size_t(M) * K)] = s;
        m.min_abs = std::min(m.min_abs, std::abs(s));
      }
  return m;
}

double l2(const std::vector<Complex>& v, double h3) {
  double s = 0;
  for (const Complex& z : v) s += std::norm(z);
  return std::sqrt(h3 * s);
}

}  // namespace

CgoSolution solve_remainder(const ScalarField& q_ext, const CubeSpec& cube, const CgoFrame& frame, int which,
                            double tolerance, CgoMode mode, int max_iterations) {
  const int M = cube.M;
  const std::size_t total = std::size_t(M) * M * M;
  if (q_ext.size() != total) throw ConfigError("extended potential does not live on the periodization cube");
  CgoSolution sol;
  sol.frame = frame;
  sol.which = which;
  sol.mode = mode;
  sol.cube = cube;
  sol.r.assign(total, 0.0);
  sol.q_sup = sup_norm(q_ext);

  const Multiplier mult = build_multiplier(cube, frame, which, mode);
  sol.min_symbol = mult.min_abs;
  const double step = 2 * std::numbers::pi / cube.P;
  if (!(mult.min_abs > 1e-9 * frame.a * step))
    throw NumericalError("cgo remainder", "multiplier nearly vanishes on the shifted lattice (min |symbol| = " +
                                              std::to_string(mult.min_abs) + ")");
  sol.contraction_bound = sol.q_sup / mult.min_abs;
  if (sol.q_sup == 0.0) {
    sol.iterations = 1;
    return sol;
  }

  const Fft3 fft(M);
  const double h3 = cube.h * cube.h * cube.h;
  const int ax = mult.shift_axis;
  auto phase = [&](std::size_t idx) {
    const std::size_t I[3] = {idx % M, (idx / M) % M, idx / (std::size_t(M) * M)};
    return mult.phase_axis[I[ax]];
  };
  // r <- -G(q(1+r)) written into out.
  std::vector<Complex> work(total);
  auto apply_G = [&](const std::vector<Complex>& r, std::vector<Complex>& out) {
    for (std::size_t i = 0; i < total; ++i) work[i] = -q_ext[i] * (1.0 + r[i]) * std::conj(phase(i));
    fft.forward(work.data());
    for (std::size_t i = 0; i < total; ++i) work[i] /= mult.symbol[i];
    fft.backward(work.data());
    const double inv = 1.0 / double(total);
    for (std::size_t i = 0; i < total; ++i) out[i] = work[i] * inv * phase(i);
  };

  std::vector<Complex> next(total), diff(total);
  double prev_step = 0.0;
  bool converged = false;
  for (int it = 1; it <= max_iterations; ++it) {
    apply_G(sol.r, next);
    for (std::size_t i = 0; i < total; ++i) diff[i] = next[i] - sol.r[i];
    const double dn = l2(diff, h3), rn = l2(next, h3);
    sol.r.swap(next);
    sol.iterations = it;
    if (it >= 2) {
      const double theta = dn / prev_step;
      sol.contraction = std::max(sol.contraction, theta);
      if (theta >= 1.0 && dn > 1e-300)
        throw NumericalError("cgo remainder", "contraction-rate estimate " + std::to_string(theta) +
                                                  " >= 1 at iteration " + std::to_string(it) + "; increase a (a = " +
                                                  std::to_string(frame.a) + ")");
    }
    prev_step = dn;
    if (dn <= tolerance * rn || rn == 0.0) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NumericalError("cgo remainder", "no convergence after " + std::to_string(max_iterations) + " iterations");

  // Forward application: L r + q(1+r), L with the same symbol.
  for (std::size_t i = 0; i < total; ++i) work[i] = sol.r[i] * std::conj(phase(i));
  fft.forward(work.data());
  for (std::size_t i = 0; i < total; ++i) work[i] *= mult.symbol[i];
  fft.backward(work.data());
  double rs = 0, qs = 0;
  for (std::size_t i = 0; i < total; ++i) {
    const Complex res = work[i] / double(total) * phase(i) + q_ext[i] * (1.0 + sol.r[i]);
    rs += std::norm(res);
    qs += q_ext[i] * q_ext[i];
  }
  sol.residual = std::sqrt(rs / qs);
  sol.remainder_l2 = l2(sol.r, h3);
  return sol;
}

Complex cgo_value(const CgoSolution& s, const Index3& c) {
  const CVec3& z = frame_zeta(s.frame, s.which);
  const Vec3 x{s.cube.origin[0] + c[0] * s.cube.h, s.cube.origin[1] + c[1] * s.cube.h,
               s.cube.origin[2] + c[2] * s.cube.h};
  return std::exp(Complex(0, 1) * dot(z, x)) * (1.0 + s.r[s.cube.index(c)]);
}

CgoEvaluation evaluate_cgo(const CgoSolution& s, const GridSpec& box) {
  CgoEvaluation ev{ComplexField(box), 0.0, 0.0, s.cube.enclosing_radius()};
  for (std::size_t i = 0; i < box.node_count(); ++i) ev.u[i] = cgo_value(s, s.cube.to_cube(box.ijk(i)));
  const int M = s.cube.M;
  double acc = 0;
  for (int K = 0; K < M; ++K)
    for (int J = 0; J < M; ++J)
      for (int I = 0; I < M; ++I) acc += std::norm(cgo_value(s, {I, J, K}));
  ev.cube_l2 = std::sqrt(acc * s.cube.h * s.cube.h * s.cube.h);
  ev.growth_ratio = ev.cube_l2 / std::exp(s.frame.a * ev.R);
  return ev;
}

double growth_constant(const CgoSolution& s, double C1) {
  const double side = s.cube.M * s.cube.h;
  return std::sqrt(side * side * side) + C1 * s.q_sup / s.frame.a;
}

BoundaryTrace cgo_robin_trace(const CgoSolution& s, const DomainSpec& domain) {
  BoundaryTrace g(domain.boundary.size());
  const double h = s.cube.h, k = s.frame.k;
  const CVec3& z = frame_zeta(s.frame, s.which);
  const Complex I(0, 1);
  for (std::size_t e = 0; e < g.size(); ++e) {
    const BoundarySample& b = domain.boundary[e];
    const Index3 c = s.cube.to_cube(b.ijk);
    const int ax = face_axis(b.face);
    const int dir = b.normal[ax] > 0 ? 1 : -1;
    Index3 p1 = c, m1 = c, p2 = c;
    p1[ax] += dir;
    m1[ax] -= dir;
    p2[ax] += 2 * dir;
    const Complex u0 = cgo_value(s, c);
    if (s.mode == CgoMode::GridExact) {
      g[e] = (cgo_value(s, p1) - cgo_value(s, m1)) / (2 * h) - I * k * u0;
    } else {
      const Vec3 x = domain.grid.position(b.node);
      const Complex ex = std::exp(I * dot(z, x));
      const Complex r0 = s.r[s.cube.index(c)], r1 = s.r[s.cube.index(p1)], r2 = s.r[s.cube.index(p2)];
      const Complex dr = (-3.0 * r0 + 4.0 * r1 - r2) / (2 * h);
      g[e] = ex * (I * dot(z, b.normal) * (1.0 + r0) + dr) - I * k * u0;
    }
  }
  return g;
}

CgoConstants calibrate_constants(const DomainSpec& domain, const std::vector<ScalarField>& q_family,
                                 const std::vector<double>& a_grid, const std::vector<double>& k_grid,
                                 std::uint64_t seed, int pad_factor, double tolerance) {
  if (q_family.empty()) throw PreconditionError("calibration family must be nonempty");
  const CubeSpec cube = make_cube(domain.grid, pad_factor);
  CgoConstants out;
  double max_ratio = 0.0, max_fail = 0.0;
  for (std::size_t m = 0; m < q_family.size(); ++m) {
    const ScalarField qe = extend_potential(q_family[m], cube);
    const double M = sup_norm(q_family[m]);
    for (double k : k_grid)
      for (double a : a_grid) {
        CalibrationEntry e{m, a, k, 0.0, 0.0, true, ""};
        try {
          const CgoFrame f = build_frame({0, 0, 0}, k, a, seed);
          const CgoSolution s = solve_remainder(qe, cube, f, 1, tolerance);
          e.contraction = s.contraction;
          if (M > 0) {
            e.ratio = s.remainder_l2 * a / M;
            max_ratio = std::max(max_ratio, e.ratio);
          }
        } catch (const NumericalError& err) {
          e.ok = false;
          e.note = err.what();
          if (M > 0) max_fail = std::max(max_fail, a / M);
        }
        out.calibration_log.push_back(e);
      }
  }
  out.C1 = std::max(1.0, 1.5 * max_ratio);
  out.C0 = std::max(1.0, 1.5 * max_fail);
  return out;
}

void write_constants(const std::string& path, const CgoConstants& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out.precision(17);
  out << "# CGO constants (calibrated)\nC0 = " << c.C0 << "\nC1 = " << c.C1 << "\n";
  for (const CalibrationEntry& e : c.calibration_log)
    out << "# member=" << e.member << " a=" << e.a << " k=" << e.k << " ratio=" << e.ratio
        << " contraction=" << e.contraction << " ok=" << (e.ok ? 1 : 0) << "\n";
}

CgoConstants read_constants(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read CGO constants file " + path);
  CgoConstants c;
  bool have0 = false, have1 = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, eq;
    double v;
    if (!(ls >> key >> eq >> v) || eq != "=") throw ConfigError("malformed line in " + path + ": " + line);
    if (key == "C0") c.C0 = v, have0 = true;
    else if (key == "C1") c.C1 = v, have1 = true;
    else throw ConfigError("unknown key '" + key + "' in " + path);
  }
  if (!have0 || !have1) throw ConfigError("constants file " + path + " lacks C0 or C1");
  return c;
}

double h2_ratio(const ComplexField& u, double u_tilde_l2, double k) {
  if (u_tilde_l2 == 0.0) return 0.0;
  const GridSpec& g = u.grid();
  const int n = g.n();
  const double h = g.spacing();
  auto val = [&](Index3 p) { return u[g.index(p)]; };
  double acc = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Index3 p = g.ijk(i);
    acc += std::norm(u[i]);
    for (int c = 0; c < 3; ++c) {
      Index3 q = p;
      q[c] = p[c] + 1 < n ? p[c] + 1 : p[c] - 1;
      acc += std::norm((val(q) - u[i]) / h);
    }
    for (int c = 0; c < 3; ++c)
      for (int d = 0; d < 3; ++d) {
        Complex v;
        if (c == d) {
          Index3 m = p, lo = p, hi = p;
          m[c] = std::clamp(p[c], 1, n - 2);
          lo = m, hi = m;
          lo[c] -= 1;
          hi[c] += 1;
          v = (val(hi) - 2.0 * val(m) + val(lo)) / (h * h);
        } else {
          Index3 b = p;
          b[c] = std::min(p[c], n - 2);
          b[d] = std::min(p[d], n - 2);
          Index3 bc = b, bd = b, bcd = b;
          bc[c] += 1;
          bd[d] += 1;
          bcd[c] += 1;
          bcd[d] += 1;
          v = (val(bcd) - val(bc) - val(bd) + val(b)) / (h * h);
        }
        acc += std::norm(v);
      }
  }
  return std::sqrt(acc * h * h * h) / ((1 + k * k) * u_tilde_l2);
}

double check_h2_bound(const CgoSolution& s, const DomainSpec& domain) {
  const CgoEvaluation ev = evaluate_cgo(s, domain.grid);
  return h2_ratio(ev.u, ev.cube_l2, s.frame.k);
}

}  // namespace implab

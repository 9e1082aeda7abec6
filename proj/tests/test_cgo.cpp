#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "implab/cgo.hpp"
#include "implab/errors.hpp"
#include "implab/impedance.hpp"
#include "implab/norms.hpp"
#include "implab/random.hpp"

using namespace implab;

namespace {

ScalarField gaussian_bump(const GridSpec& g, double amp, double w) {
  ScalarField q(g, 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Vec3 x = g.position(i);
    q[i] = amp * std::exp(-dot(x, x) / w);
  }
  return q;
}

double max_abs(const std::vector<Complex>& v) {
  double m = 0;
  for (const Complex& z : v) m = std::max(m, std::abs(z));
  return m;
}

}  // namespace

TEST_SUITE("cgo") {
  TEST_CASE("frame satisfies the complex dispersion relation") {
    Rng rng(17);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    for (int t = 0; t < 20; ++t) {
      const Vec3 xi{U(rng), U(rng), U(rng)};
      const double k = 1.0 + t % 4, a = 1.0 + 2 * t;
      const CgoFrame f = build_frame(xi, k, a, std::uint64_t(t));
      CHECK(std::abs(dot(f.zeta1, f.zeta1) - k * k) < 1e-10 * (k * k + a * a));
      CHECK(std::abs(dot(f.zeta2, f.zeta2) - k * k) < 1e-10 * (k * k + a * a));
      for (int c = 0; c < 3; ++c) CHECK(std::abs(f.zeta1[c] + f.zeta2[c] + xi[c]) < 1e-14);
      CHECK(std::abs(dot(f.mu1, f.mu2)) < 1e-14);
      CHECK(std::abs(dot(f.mu1, xi)) < 1e-12);
      CHECK(std::abs(dot(f.mu2, xi)) < 1e-12);
      CHECK(norm(f.mu2) == doctest::Approx(1.0));
      // imaginary part has length a
      double im2 = 0;
      for (const Complex& z : f.zeta1) im2 += z.imag() * z.imag();
      CHECK(std::sqrt(im2) == doctest::Approx(a).epsilon(1e-12));
    }
  }

  TEST_CASE("hand-computed frame") {
    // xi = 2 e1, k = 2, a = 3, mu2 = e3: zeta1 = (-1, sqrt(12), 3i)
    bool found = false;
    for (std::uint64_t s = 0; s < 4; ++s) {
      const CgoFrame f = build_frame({2, 0, 0}, 2.0, 3.0, s);
      if (f.mu2 != Vec3{0, 0, 1}) continue;
      found = true;
      CHECK(std::abs(f.zeta1[0] - Complex(-1, 0)) < 1e-14);
      CHECK(std::abs(f.zeta1[1] - Complex(std::sqrt(12.0), 0)) < 1e-14);
      CHECK(std::abs(f.zeta1[2] - Complex(0, 3)) < 1e-14);
      CHECK(f.mu2_lattice == Index3{0, 0, 1});
    }
    CHECK(found);
  }

  TEST_CASE("frame preconditions") {
    CHECK_THROWS_AS(build_frame({0, 0, 0}, 1.0, 0.5, 1), PreconditionError);
    CHECK_THROWS_AS(build_frame({10, 0, 0}, 1.0, 1.0, 1), PreconditionError);
    CHECK_THROWS_AS(frame_zeta(build_frame({0, 0, 0}, 1.0, 1.0, 1), 3), ConfigError);
  }

  TEST_CASE("discrete frame matches the 7-point symbol") {
    for (const Vec3& xi : {Vec3{0, 0, 0}, Vec3{1.0, -0.5, 2.0}, Vec3{3.1, 0, 0}}) {
      const double dx = 1.0 / 16;
      const CgoFrame f = discretize_frame(build_frame(xi, 2.0, 6.0, 2), dx);
      CHECK(f.grid_dx == dx);
      CHECK(std::abs(discrete_dispersion(f.zeta1, dx) - 4.0) < 1e-10);
      CHECK(std::abs(discrete_dispersion(f.zeta2, dx) - 4.0) < 1e-10);
      for (int c = 0; c < 3; ++c) CHECK(std::abs(f.zeta1[c] + f.zeta2[c] + xi[c]) < 1e-13);
    }
  }

  TEST_CASE("zero potential leaves a pure exponential") {
    const GridSpec g = GridSpec::centered(1.0, 9);
    const CubeSpec cube = make_cube(g, 2);
    CHECK(cube.M == 16);  // periodic: 2(N-1) points per axis
    CHECK(cube.h == g.spacing());
    const CgoFrame f = build_frame({1.0, 0, 0}, 2.0, 4.0, 0);
    const CgoSolution s = solve_remainder(extend_potential(ScalarField(g, 0.0), cube), cube, f, 1, 1e-12);
    CHECK(max_abs(s.r) == 0.0);
    const CgoEvaluation ev = evaluate_cgo(s, g);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      const Vec3 x = g.position(i);
      const Complex phase = std::exp(Complex(0, 1) * dot(f.zeta1, x));
      CHECK(std::abs(ev.u[i] - phase) <= 1e-12 * std::abs(phase));
      // modulus is e^{-a mu2.x}
      CHECK(std::abs(ev.u[i]) == doctest::Approx(std::exp(-4.0 * dot(f.mu2, x))).epsilon(1e-12));
    }
    CHECK(ev.cube_l2 <= growth_constant(s, 1.0) * std::exp(4.0 * ev.R));
  }

  TEST_CASE("remainder solves its equation and decays like 1/a") {
    const GridSpec g = GridSpec::centered(1.0, 17);
    const CubeSpec cube = make_cube(g, 2);
    const ScalarField qe = extend_potential(gaussian_bump(g, 1.0, 0.05), cube);
    std::vector<double> ar;
    for (double a : {4.0, 8.0, 16.0}) {
      const CgoSolution s = solve_remainder(qe, cube, build_frame({0, 0, 0}, 2.0, a, 1), 1, 1e-12);
      CHECK(s.residual <= 1e-11);
      CHECK(s.contraction < 1.0);
      CHECK(s.contraction <= s.contraction_bound * (1 + 1e-9));
      CHECK(s.q_sup == doctest::Approx(1.0));
      ar.push_back(a * s.remainder_l2);
    }
    const double hi = *std::max_element(ar.begin(), ar.end()), lo = *std::min_element(ar.begin(), ar.end());
    CHECK(hi / lo <= 2.0);
    CHECK(lo > 0);
  }

  TEST_CASE("grid-exact CGO is reproduced by the impedance solver") {
    const GridSpec g = GridSpec::centered(1.0, 13);
    const DomainSpec d = build_box_domain(g, GammaSpec{"all", {0.5, 0.5}, 0});
    const CubeSpec cube = make_cube(g, 2);
    const ScalarField q = gaussian_bump(g, 0.8, 0.04);
    const CgoFrame f = discretize_frame(build_frame({1.2, 0.4, 0}, 2.0, 4.0, 1), cube.h);
    for (int which : {1, 2}) {
      const CgoSolution s = solve_remainder(extend_potential(q, cube), cube, f, which, 1e-13, CgoMode::GridExact);
      const ComplexField u = evaluate_cgo(s, g).u;
      SolverParams sp;
      sp.k = 2.0;
      const ComplexField v = solve(d, q, ComplexField(g, Complex(0.0)), cgo_robin_trace(s, d), sp).u;
      ComplexField diff(g);
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = v[i] - u[i];
      CHECK(l2_norm(diff) / l2_norm(u) < 1e-8);
    }
  }

  TEST_CASE("continuum Robin trace is second order for a pure exponential") {
    // closed form for the exponential: (d_nu - ik) e^{i zeta x} = i(zeta.nu - k) e^{i zeta x}
    const GridSpec g = GridSpec::centered(1.0, 9);
    const DomainSpec d = build_box_domain(g, GammaSpec{"all", {0.5, 0.5}, 0});
    const CubeSpec cube = make_cube(g, 2);
    const CgoFrame f = build_frame({0, 1, 0}, 1.0, 2.0, 0);
    const CgoSolution s = solve_remainder(extend_potential(ScalarField(g, 0.0), cube), cube, f, 1, 1e-12);
    const BoundaryTrace t = cgo_robin_trace(s, d);
    for (std::size_t b = 0; b < d.boundary.size(); ++b) {
      const BoundarySample& bs = d.boundary[b];
      const Vec3 x = g.position(bs.node);
      const Complex expected = Complex(0, 1) * (dot(f.zeta1, bs.normal) - 1.0) * std::exp(Complex(0, 1) * dot(f.zeta1, x));
      CHECK(std::abs(t[b] - expected) <= 1e-12 * (1 + std::abs(expected)));
    }
  }

  TEST_CASE("calibration constants") {
    const GridSpec g = GridSpec::centered(1.0, 9);
    const DomainSpec d = build_box_domain(g, GammaSpec{"all", {0.5, 0.5}, 0});
    const CgoConstants zero = calibrate_constants(d, {ScalarField(g, 0.0)}, {4, 8}, {1, 2}, 1);
    CHECK(zero.C1 == 1.0);
    CHECK(zero.C0 == 1.0);
    CHECK(zero.calibration_log.size() == 4);
    const ScalarField q = gaussian_bump(g, 0.2, 0.05);
    ScalarField q2 = q;
    for (double& v : q2.values()) v *= 2;
    const CgoConstants one = calibrate_constants(d, {q}, {8, 16}, {1, 2}, 1);
    const CgoConstants two = calibrate_constants(d, {q, q2}, {8, 16}, {1, 2}, 1);
    CHECK(one.C1 >= 1.0);
    CHECK(two.C1 >= one.C1);
    CHECK(two.C1 <= 1.05 * one.C1);
  }

  TEST_CASE("constants file round trip") {
    const std::string path = (std::filesystem::temp_directory_path() / "implab_test_constants.txt").string();
    CgoConstants c;
    c.C0 = 2.5;
    c.C1 = 1.0 / 3.0;
    c.calibration_log.push_back({0, 4, 1, 0.1, 0.2, true, ""});
    write_constants(path, c);
    const CgoConstants r = read_constants(path);
    CHECK(r.C0 == c.C0);
    CHECK(r.C1 == c.C1);
    {
      std::ofstream out(path);
      out << "C0 = 1\nC2 = 3\n";
    }
    CHECK_THROWS_AS(read_constants(path), ConfigError);
    {
      std::ofstream out(path);
      out << "C0 = 1\n";
    }
    CHECK_THROWS_AS(read_constants(path), ConfigError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_constants(path), ConfigError);
  }

  TEST_CASE("H2 ratio of a plane wave") {
    // |u|^2 + |grad u|^2 + sum |d_c d_d u|^2 = 1 + k^2 + k^4 pointwise
    const int N = 33;
    const GridSpec g = GridSpec::centered(1.0, N);
    const double h = g.spacing();
    const Vec3 dir{0.48, 0.6, 0.64};
    for (double k : {1.0, 2.0}) {
      const ComplexField u = sample_field(g, [&](const Vec3& x) { return std::polar(1.0, k * dot(dir, x)); });
      const double ref = std::sqrt(double(N) * N * N * h * h * h);
      const double expected = std::sqrt(1 + k * k + k * k * k * k) / (1 + k * k);
      CHECK(h2_ratio(u, ref, k) == doctest::Approx(expected).epsilon(1e-2));
    }
    CHECK(h2_ratio(ComplexField(g, Complex(1.0)), 0.0, 1.0) == 0.0);
  }
}

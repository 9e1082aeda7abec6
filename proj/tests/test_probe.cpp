#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "implab/errors.hpp"
#include "implab/probe.hpp"
#include "implab/random.hpp"

using namespace implab;

namespace {

DomainSpec full_domain(int N) {
  return build_box_domain(GridSpec::centered(1.0, N), GammaSpec{"all", {0.5, 0.5}, 0});
}

ScalarField bump(const GridSpec& g, double amp, double w) {
  ScalarField q(g, 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Vec3 x = g.position(i);
    q[i] = amp * std::exp(-dot(x, x) / w);
  }
  return q;
}

}  // namespace

TEST_SUITE("probe") {
  TEST_CASE("parameter schedule") {
    const ScheduleParams p = make_schedule(1.0, std::exp(-4.0), 1.0, 1.0);
    CHECK(p.a == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(p.rho == doctest::Approx(1.3195079107728942).epsilon(1e-12));  // 2^{2/5}
    CHECK(!p.clamped);
    const ScheduleParams q = make_schedule(3.0, 1e-6, 2.0, 0.5);
    CHECK(q.a == doctest::Approx(1.5 + std::log(1e6) / 2.0).epsilon(1e-14));
    const ScheduleParams c = make_schedule(1.0, 0.3, 1.0, 1.0, 10.0);
    CHECK(c.a == 10.0);
    CHECK(c.clamped);
    CHECK(c.rho == doctest::Approx(std::pow(10.0, 0.4)));
    CHECK_THROWS_AS(make_schedule(1.0, std::exp(-1.0), 1.0, 1.0), PreconditionError);
    CHECK_THROWS_AS(make_schedule(1.0, 0.0, 1.0, 1.0), PreconditionError);
    CHECK_THROWS_AS(make_schedule(0.5, 0.1, 1.0, 1.0), PreconditionError);
    CHECK_THROWS_AS(make_schedule(1.0, 0.1, 0.0, 1.0), ConfigError);
    const ScheduleParams nf = make_noise_free_schedule(4.0, 0.5);
    CHECK(nf.a == 8.0);
    CHECK(nf.delta == 0.0);
    CHECK(make_noise_free_schedule(1.0, 2.0).clamped);
  }

  TEST_CASE("pairing is a trapezoid quadrature") {
    const DomainSpec d = full_domain(9);
    const GridSpec& g = d.grid;
    const ComplexField u1 = band_limited_field(g, 2, 1), u2 = band_limited_field(g, 2, 2);
    const ScalarField q = band_limited_real_field(g, 2, 3);
    CHECK(alessandrini_pairing(q, q, u1, u2, d) == Complex(0.0));
    ScalarField spike(g, 0.0);
    const std::size_t n = g.index(4, 3, 5), corner = g.index(0, 0, 8);
    spike[n] = 0.75;
    spike[corner] = 2.0;
    const double dx3 = std::pow(g.spacing(), 3);
    const Complex want = 0.75 * u1[n] * u2[n] * dx3 + 2.0 * u1[corner] * u2[corner] * dx3 / 8.0;
    const Complex got = alessandrini_pairing(spike, ScalarField(g, 0.0), u1, u2, d);
    CHECK(std::abs(got - want) <= 1e-14 * std::abs(want));
  }

  TEST_CASE("probe lattice") {
    const GridSpec g = GridSpec::centered(1.0, 17);
    const ProbeLattice z = make_probe_lattice(g, 2, 0.0);
    CHECK(z.half.size() == 1);
    CHECK(z.full_count() == 1);
    const double step = std::numbers::pi;  // 2 pi / (2 L)
    const ProbeLattice one = make_probe_lattice(g, 2, step);
    CHECK(one.step == doctest::Approx(step));
    CHECK(one.full_count() == 7);
    const ProbeLattice two = make_probe_lattice(g, 2, std::sqrt(2.0) * step);
    CHECK(two.full_count() == 19);
    CHECK(make_probe_lattice(g, 4, step).full_count() == 33);  // radius 2 in units of pi/2
    CHECK_THROWS_AS(make_probe_lattice(g, 1, 1.0), ConfigError);
    CHECK_THROWS_AS(make_probe_lattice(g, 2, 100.0), ConfigError);
    for (const Index3& m : two.half) {
      const Index3 mm{-m[0], -m[1], -m[2]};
      if (m != Index3{0, 0, 0}) CHECK(std::find(two.half.begin(), two.half.end(), mm) == two.half.end());
    }
  }

  TEST_CASE("single Fourier mode Sobolev norm") {
    // cos(xi.x) on the periodic cube has coefficients P^3/2 at +-m
    const int M = 16;
    const double P = 2.0;
    const Index3 m{1, 2, 0};
    const double step = 2 * std::numbers::pi / P;
    const Vec3 xi{step * m[0], step * m[1], step * m[2]};
    std::vector<double> v(std::size_t(M) * M * M);
    for (int K = 0; K < M; ++K)
      for (int J = 0; J < M; ++J)
        for (int I = 0; I < M; ++I) {
          const Vec3 x{I * P / M, J * P / M, K * P / M};
          v[std::size_t(I) + std::size_t(M) * (J + std::size_t(M) * K)] = std::cos(dot(xi, x));
        }
    for (double s : {-1.0, 0.0, 2.5}) {
      const double expected = std::sqrt(P * P * P / 2 * std::pow(1 + dot(xi, xi), s));
      CHECK(cube_sobolev_norm(v, M, P, s) == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK_THROWS_AS(cube_sobolev_norm(std::vector<double>(5), M, P, 0.0), ConfigError);
  }

  TEST_CASE("FFT spectrum agrees with the direct transform") {
    const GridSpec g = GridSpec::centered(1.0, 9);
    const DomainSpec d = full_domain(9);
    const ScalarField f = bump(g, 1.0, 0.05);
    const ProbeLattice lat = make_probe_lattice(g, 2, 2 * std::numbers::pi);
    std::vector<Complex> c;
    std::vector<ProbeResult> est(lat.half.size());
    for (std::size_t j = 0; j < lat.half.size(); ++j) {
      est[j].xi = lat.xi(lat.half[j]);
      c.push_back(direct_fourier(f, est[j].xi));
      est[j].fourier_estimate = c.back();
    }
    const double total = h_minus1_norm(f, 2), tail = lowpass_h_minus1_error(f, lat, &c);
    double head = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      const Index3& m = lat.half[j];
      const double w = (m == Index3{0, 0, 0}) ? 1.0 : 2.0;
      head += w * std::norm(c[j]) / (1 + dot(est[j].xi, est[j].xi));
    }
    head /= std::pow(lat.P, 3);
    CHECK(tail * tail == doctest::Approx(total * total - head).epsilon(1e-10));
    CHECK(lowpass_h_minus1_error(f, lat) == doctest::Approx(total).epsilon(1e-12));
    const ReconstructionResult rr = lowpass_reconstruct(est, lat, d, &f);
    CHECK(rr.h_minus1_error == doctest::Approx(tail).epsilon(1e-10));
    CHECK(rr.imaginary_residue < 1e-10);
    est[0].xi[0] += 0.1;
    CHECK_THROWS_AS(lowpass_reconstruct(est, lat, d), ConfigError);
  }

  TEST_CASE("Sobolev norms are ordered in s") {
    const GridSpec g = GridSpec::centered(1.0, 17);
    const ScalarField f = band_limited_real_field(g, 3, 11);
    const double hm = h_minus1_norm(f, 2), l2 = sobolev_norm(f, 0.0, 2), h2 = sobolev_norm(f, 2.0, 2);
    CHECK(hm < l2);
    CHECK(l2 < h2);
    CHECK(h_minus1_norm(ScalarField(g, 0.0), 2) == 0.0);
    // Parseval: the s = 0 norm is the grid l2 norm of the trapezoid-weighted field
    const DomainSpec d = full_domain(17);
    const double dx3 = std::pow(g.spacing(), 3);
    double acc = 0;
    for (std::size_t i = 0; i < f.size(); ++i) acc += std::pow(d.volume_weight(i) / dx3 * f[i], 2);
    CHECK(l2 == doctest::Approx(std::sqrt(acc * dx3)).epsilon(1e-12));
  }

  TEST_CASE("interpolation inequality") {
    const GridSpec g = GridSpec::centered(1.0, 17);
    const InterpolationReport r = interpolation_check(band_limited_real_field(g, 2, 4), 2.5, 2);
    CHECK(r.eps == doctest::Approx(0.5));
    CHECK(r.exp_minus1 == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    CHECK(r.exp_s == doctest::Approx(6.0 / 7.0).epsilon(1e-15));
    CHECK(interpolation_check(ScalarField(g, 0.0), 2.5, 2).trivial);
    CHECK_THROWS_AS(interpolation_check(ScalarField(g, 0.0), 1.5, 2), PreconditionError);
    double lo = 1e300, hi = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const InterpolationReport x = interpolation_check(band_limited_real_field(g, 3, seed), 2.5, 2);
      CHECK(x.c_emp > 0);
      lo = std::min(lo, x.c_emp);
      hi = std::max(hi, x.c_emp);
    }
    CHECK(hi / lo <= 10.0);
  }

  TEST_CASE("log-log slope") {
    const std::vector<double> x{1, 2, 4, 8};
    std::vector<double> y;
    for (double v : x) y.push_back(5.0 * std::pow(v, -0.7));
    CHECK(loglog_slope(x, y) == doctest::Approx(-0.7).epsilon(1e-12));
    CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), PreconditionError);
  }

  TEST_CASE("boundary estimator equals the volume pairing and approaches the transform") {
    const DomainSpec d = full_domain(9);
    const GridSpec& g = d.grid;
    const ScalarField q1 = bump(g, 0.5, 0.05), q2 = bump(g, 0.2, 0.1);
    ScalarField dq(g);
    for (std::size_t i = 0; i < dq.size(); ++i) dq[i] = q1[i] - q2[i];
    SolverParams sp;
    sp.k = 1.0;
    const RtdMatrix L1 = assemble_rtd(d, q1, sp), L2 = assemble_rtd(d, q2, sp);
    const CubeSpec cube = make_cube(g, 2);
    for (const Vec3& xi : {Vec3{0, 0, 0}, Vec3{std::numbers::pi, 0, 0}}) {
      const Complex truth = direct_fourier(dq, xi);
      double prev = 1e300;
      for (double a : {2.0, 4.0, 8.0}) {
        const CgoFrame f = discretize_frame(build_frame(xi, 1.0, a, 1), cube.h);
        const CgoSolution s1 = solve_remainder(extend_potential(q1, cube), cube, f, 1, 1e-13, CgoMode::GridExact);
        const CgoSolution s2 = solve_remainder(extend_potential(q2, cube), cube, f, 2, 1e-13, CgoMode::GridExact);
        const ProbeResult r = fourier_estimate(L1, L2, s2, s1, xi, d);
        const Complex pair = alessandrini_pairing(q1, q2, evaluate_cgo(s1, g).u, evaluate_cgo(s2, g).u, d);
        CHECK(std::abs(r.fourier_estimate - pair) <= 1e-9 * std::abs(pair));
        CHECK(r.identity_residual <= 1e-9 * std::abs(pair));
        const double err = std::abs(r.fourier_estimate - truth);
        CHECK(err < prev);
        CHECK(err < 0.05 * std::abs(truth));
        prev = err;
        CHECK_THROWS_AS(fourier_estimate(L1, L2, s1, s2, xi, d), ConfigError);
      }
    }
  }

  TEST_CASE("identity with a cutoff") {
    const DomainSpec d = full_domain(9);
    const GridSpec& g = d.grid;
    const ScalarField q1 = bump(g, 0.5, 0.05), q2(g, 0.0);
    const CubeSpec cube = make_cube(g, 2);
    const CgoFrame f = discretize_frame(build_frame({0, 0, 0}, 1.0, 3.0, 1), cube.h);
    const CgoSolution s1 = solve_remainder(extend_potential(q1, cube), cube, f, 1, 1e-13, CgoMode::GridExact);
    const CgoSolution s2 = solve_remainder(extend_potential(q2, cube), cube, f, 2, 1e-13, CgoMode::GridExact);
    SolverParams sp;
    sp.k = 1.0;
    // chi = 1 everywhere: the commutator vanishes, so the residual is the pairing itself
    const IdentityCheck ones = alessandrini_identity(q1, q2, evaluate_cgo(s1, g).u, evaluate_cgo(s2, g).u,
                                                     cgo_robin_trace(s2, d), ScalarField(g, 1.0), d, sp);
    CHECK(std::abs(ones.commutator) <= 1e-12 * ones.scale);
    CHECK(ones.residual == doctest::Approx(std::abs(ones.pairing)));
    CHECK(ones.scale > 0);
  }

  TEST_CASE("identical potentials reconstruct zero") {
    const DomainSpec d = full_domain(9);
    const ScalarField q = bump(d.grid, 0.5, 0.05);
    StabilityConfig cfg;
    cfg.noise_free = true;
    const auto rec = run_stability_experiment(d, q, q, {1.0, 2.0}, 0.0, cfg);
    REQUIRE(rec.size() == 2);
    for (const StabilityRecord& r : rec) {
      CHECK(r.ok);
      CHECK(r.truth_h_minus1 == 0.0);
      CHECK(r.h_minus1_err <= 1e-12);
      CHECK(r.n_probes >= 1);
    }
    // k dx above 0.5 is recorded, not thrown
    const auto bad = run_stability_experiment(d, q, q, {5.0}, 0.0, cfg);
    CHECK(!bad[0].ok);
    CHECK(std::isnan(bad[0].h_minus1_err));
  }
}

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "implab/errors.hpp"
#include "implab/impedance.hpp"
#include "implab/norms.hpp"
#include "implab/random.hpp"

using namespace implab;

namespace {

const Vec3 kDir{0.48, 0.6, 0.64};

DomainSpec full_domain(int N) {
  return build_box_domain(GridSpec::centered(1.0, N), GammaSpec{"all", {0.5, 0.5}, 0});
}

AnalyticField plane(double k) {
  return [k](const Vec3& x) { return std::polar(1.0, k * dot(kDir, x)); };
}
AnalyticGradient plane_grad(double k) {
  return [k](const Vec3& x) {
    const Complex v = Complex(0, k) * std::polar(1.0, k * dot(kDir, x));
    return CVec3{v * kDir[0], v * kDir[1], v * kDir[2]};
  };
}

double rel_error(const ComplexField& a, const ComplexField& b) {
  ComplexField d(a.grid());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  return l2_norm(d) / l2_norm(b);
}

double plane_wave_error(int N, double k, SolverMethod method = SolverMethod::Direct) {
  const DomainSpec d = full_domain(N);
  SolverParams sp;
  sp.k = k;
  sp.method = method;
  sp.tolerance = 1e-12;
  const ComplexField u = solve(d, ScalarField(d.grid, 0.0), ComplexField(d.grid, Complex(0.0)),
                               robin_trace(d, k, plane(k), plane_grad(k)), sp)
                             .u;
  return rel_error(u, sample_field(d.grid, plane(k)));
}

}  // namespace

TEST_SUITE("impedance") {
  TEST_CASE("Laplacian rows sum to zero and every node is an unknown") {
    const DomainSpec d = full_domain(9);
    SolverParams sp;
    sp.k = 0.0;
    const ImpedanceOperator op(d, ScalarField(d.grid, 0.0), sp);
    CHECK(op.matrix().rows() == Eigen::Index(d.grid.node_count()));
    const Eigen::VectorXcd sums = op.matrix() * Eigen::VectorXcd::Ones(op.matrix().cols());
    for (int l = 1; l < 8; ++l)
      for (int j = 1; j < 8; ++j)
        for (int i = 1; i < 8; ++i) CHECK(std::abs(sums(Eigen::Index(d.grid.index(i, j, l)))) < 1e-10);
  }

  TEST_CASE("zero data gives the zero solution") {
    const DomainSpec d = full_domain(9);
    SolverParams sp;
    sp.k = 1.0;
    const ImpedanceSolution s = solve(d, ScalarField(d.grid, 0.0), ComplexField(d.grid, Complex(0.0)),
                                      BoundaryTrace(d.boundary.size(), Complex(0.0)), sp);
    CHECK(sup_norm(s.u) == 0.0);
  }

  TEST_CASE("plane-wave interior residual is second order") {
    // Apply the assembled operator to the sampled plane wave; the interior
    // residual is the 7-point truncation error, O(dx^2).
    const double k = 2.0;
    std::vector<double> res;
    for (int N : {9, 17, 33}) {
      const DomainSpec d = full_domain(N);
      SolverParams sp;
      sp.k = k;
      const ImpedanceOperator op(d, ScalarField(d.grid, 0.0), sp);
      const ComplexField Au = op.apply(sample_field(d.grid, plane(k)));
      double worst = 0;
      for (int l = 1; l < N - 1; ++l)
        for (int j = 1; j < N - 1; ++j)
          for (int i = 1; i < N - 1; ++i) worst = std::max(worst, std::abs(Au.at(i, j, l)));
      res.push_back(worst);
    }
    CHECK(std::log2(res[0] / res[1]) >= 1.9);
    CHECK(std::log2(res[1] / res[2]) >= 1.9);
  }

  TEST_CASE("plane wave recovered at second order") {
    const double e17 = plane_wave_error(17, 2.0), e25 = plane_wave_error(25, 2.0), e33 = plane_wave_error(33, 2.0);
    const double order = std::log(e17 / e33) / std::log(2.0);
    CHECK(order == doctest::Approx(2.0).epsilon(0.1));
    CHECK(std::log(e17 / e25) / std::log(24.0 / 16.0) > 1.8);
    CHECK(e33 <= 2e-2);
  }

  TEST_CASE("manufactured solution with a potential") {
    const double k = 1.5;
    const double pi = std::acos(-1.0);
    auto ustar = [&](const Vec3& x) {
      return Complex(std::cos(pi * x[0]) * std::cos(pi * x[1]) * std::cos(pi * x[2]), 0.3 * x[0] * x[1]);
    };
    auto grad = [&](const Vec3& x) {
      const double c0 = std::cos(pi * x[0]), c1 = std::cos(pi * x[1]), c2 = std::cos(pi * x[2]);
      const double s0 = std::sin(pi * x[0]), s1 = std::sin(pi * x[1]), s2 = std::sin(pi * x[2]);
      return CVec3{Complex(-pi * s0 * c1 * c2, 0.3 * x[1]), Complex(-pi * c0 * s1 * c2, 0.3 * x[0]),
                   Complex(-pi * c0 * c1 * s2, 0.0)};
    };
    auto qf = [](const Vec3& x) { return 1.0 + 0.5 * std::sin(2 * x[0] + x[2]); };
    std::vector<double> err;
    for (int N : {9, 17, 33}) {
      const DomainSpec d = full_domain(N);
      ScalarField q(d.grid);
      ComplexField F(d.grid);
      for (std::size_t i = 0; i < q.size(); ++i) {
        const Vec3 x = d.grid.position(i);
        q[i] = qf(x);
        // -Lap of the cosine product is 3 pi^2 times itself; the bilinear part is harmonic
        const double cp = std::cos(pi * x[0]) * std::cos(pi * x[1]) * std::cos(pi * x[2]);
        F[i] = Complex(3 * pi * pi * cp, 0.0) + (q[i] - k * k) * ustar(x);
      }
      SolverParams sp;
      sp.k = k;
      const ComplexField u = solve(d, q, F, robin_trace(d, k, ustar, grad), sp).u;
      err.push_back(rel_error(u, sample_field(d.grid, ustar)));
    }
    CHECK(std::log2(err[0] / err[1]) > 1.7);
    CHECK(std::log2(err[1] / err[2]) > 1.8);
  }

  TEST_CASE("iterative and direct paths agree") {
    const double ed = plane_wave_error(17, 2.0), ei = plane_wave_error(17, 2.0, SolverMethod::Iterative);
    CHECK(ei == doctest::Approx(ed).epsilon(1e-6));
  }

  TEST_CASE("a priori bound ratios") {
    const DomainSpec d = full_domain(17);
    const auto rows = check_baskin_bound(d, {1.0, 4.0}, 3, 11);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) CHECK(std::isfinite(r.max_ratio));
    CHECK(rows[1].max_ratio / rows[0].max_ratio < 10.0);
    CHECK(rows[0].max_ratio / rows[1].max_ratio < 10.0);
  }

  TEST_CASE("bounded-frequency bound is stable under more trials") {
    const DomainSpec d = full_domain(9);
    ScalarField q(d.grid, 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = 0.5 * std::exp(-dot(d.grid.position(i), d.grid.position(i)) / 0.1);
    const double m4 = check_bounded_k_bound(d, q, 1.0, 4.0, 6, 4, 5);
    const double m8 = check_bounded_k_bound(d, q, 1.0, 4.0, 6, 8, 5);
    CHECK(std::isfinite(m4));
    CHECK(m8 >= m4);
    CHECK(m8 <= 1.2 * m4);
    ScalarField mq = q;
    for (double& v : mq.values()) v = -v;
    const double mneg = check_bounded_k_bound(d, mq, 1.0, 4.0, 6, 4, 5);
    CHECK(std::isfinite(mneg));
    CHECK(mneg != m4);
  }

  TEST_CASE("IMPS dump round trip") {
    const GridSpec g = GridSpec::centered(1.0, 9);
    const ComplexField u = band_limited_field(g, 2, 3);
    const std::string path = (std::filesystem::temp_directory_path() / "implab_test.imps").string();
    write_imps(path, u);
    {
      std::ifstream in(path, std::ios::binary);
      char magic[4];
      in.read(magic, 4);
      CHECK(std::string(magic, 4) == "IMPS");
    }
    const ComplexField v = read_imps(path);
    CHECK(v.grid().n() == 9);
    double worst = 0;
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, std::abs(u[i] - v[i]) / std::abs(u[i]));
    CHECK(worst < 1e-6);  // complex64 payload
    std::filesystem::remove(path);
  }

  TEST_CASE("solver method names") {
    CHECK(parse_solver_method("direct") == SolverMethod::Direct);
    CHECK(parse_solver_method("iterative") == SolverMethod::Iterative);
    CHECK_THROWS_AS(parse_solver_method("cg"), ConfigError);
  }
}

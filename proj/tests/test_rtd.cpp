#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "implab/errors.hpp"
#include "implab/norms.hpp"
#include "implab/random.hpp"
#include "implab/rtd.hpp"

using namespace implab;

namespace {

struct Fixture {
  GridSpec g = GridSpec::centered(1.0, 9);
  DomainSpec full = build_box_domain(g, GammaSpec{"all", {0.5, 0.5}, 0});
  SolverParams sp;
  Fixture() { sp.k = 1.0; }
};

Eigen::VectorXcd random_vector(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = complex_gaussian(rng);
  return v;
}

}  // namespace

TEST_SUITE("rtd") {
  TEST_CASE_FIXTURE(Fixture, "each column is the trace of a direct solve") {
    const RtdMatrix A = assemble_rtd(full, ScalarField(g, 0.0), sp);
    CHECK(A.entries.rows() == Eigen::Index(full.boundary.size()));
    CHECK(A.source_count == full.boundary.size());
    for (std::size_t b : {std::size_t(0), std::size_t(200), full.boundary.size() - 1}) {
      BoundaryTrace f(full.boundary.size(), Complex(0.0));
      f[b] = 1.0;
      const ComplexField u = solve(full, ScalarField(g, 0.0), ComplexField(g, Complex(0.0)), f, sp).u;
      for (std::size_t r = 0; r < A.target.size(); ++r)
        CHECK(A.entries(Eigen::Index(r), Eigen::Index(b)) == u[full.boundary[A.target.samples[r]].node]);
    }
  }

  TEST_CASE_FIXTURE(Fixture, "restricting the full map equals assembling on the patch") {
    const ScalarField q = band_limited_real_field(g, 2, 5);
    const DomainSpec patch = build_box_domain(g, GammaSpec{"z+", {0.5, 0.5}, 0.3});
    const RtdMatrix direct = assemble_rtd(patch, q, sp);
    const RtdMatrix restricted = restrict_rtd(assemble_rtd(full, q, sp), full, patch.gamma);
    CHECK((direct.entries - restricted.entries).cwiseAbs().maxCoeff() < 1e-13);
  }

  TEST_CASE_FIXTURE(Fixture, "reciprocity of the weighted bilinear pairing") {
    const RtdMatrix A = assemble_rtd(full, ScalarField(g, 0.0), sp);
    const Eigen::Index n = A.entries.cols();
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = full.surface_weight(std::size_t(i));
    const Eigen::VectorXcd f = random_vector(n, 1), h = random_vector(n, 2);
    const Complex lhs = (s.cwiseProduct(A.entries * f)).transpose() * h;
    const Complex rhs = (s.cwiseProduct(f)).transpose() * (A.entries * h);
    const double dx = g.spacing();
    const double scale = std::sqrt(s.dot(f.cwiseAbs2())) * std::sqrt(s.dot(h.cwiseAbs2()));
    CHECK(std::abs(lhs - rhs) <= dx * scale);
  }

  TEST_CASE_FIXTURE(Fixture, "data distance vanishes on equal maps and is symmetric") {
    const RtdMatrix A = assemble_rtd(full, band_limited_real_field(g, 2, 6), sp);
    const RtdMatrix B = assemble_rtd(full, ScalarField(g, 0.0), sp);
    CHECK(data_distance(full, A, A).delta == 0.0);
    const double ab = data_distance(full, A, B).delta, ba = data_distance(full, B, A).delta;
    CHECK(ab > 0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-8));
  }

  TEST_CASE_FIXTURE(Fixture, "rank-one operator norm has a closed form") {
    const DomainSpec patch = build_box_domain(g, GammaSpec{"z+", {0.5, 0.5}, 0.3});
    const Eigen::VectorXcd u = random_vector(Eigen::Index(patch.gamma.size()), 3);
    const Eigen::VectorXcd v = random_vector(Eigen::Index(patch.boundary.size()), 4);
    const Eigen::MatrixXcd A = u * v.adjoint();
    // sup_x |<Ax>|_G / (dx |x|) = sqrt(u^H G u) |v| / dx
    const Eigen::SparseMatrix<double> G = h1_gram(patch, patch.gamma);
    const double uG = std::sqrt((u.adjoint() * (G * u))(0).real());
    const double expected = uG * v.norm() / g.spacing();
    CHECK(operator_norm(patch, patch.gamma, A, 1e-12).delta == doctest::Approx(expected).epsilon(1e-6));
    CHECK(h1_patch_norm(patch, patch.gamma, u) == doctest::Approx(uG).epsilon(1e-12));
  }

  TEST_CASE_FIXTURE(Fixture, "noise has the requested operator norm") {
    const RtdMatrix A = assemble_rtd(full, ScalarField(g, 0.0), sp);
    CHECK(add_noise(full, A, 0.0, 3).entries == A.entries);
    const RtdMatrix N1 = add_noise(full, A, 1e-3, 3), N2 = add_noise(full, A, 1e-3, 4);
    const Eigen::MatrixXcd E1 = N1.entries - A.entries, E2 = N2.entries - A.entries;
    const double n1 = operator_norm(full, A.target, E1).delta, n2 = operator_norm(full, A.target, E2).delta;
    CHECK(n1 >= 0.98e-3);
    CHECK(n1 <= 1.02e-3);
    CHECK(std::abs(n1 - n2) <= 0.02 * n1);
    CHECK((E1 - E2).cwiseAbs().maxCoeff() > 0);
    CHECK_THROWS_AS(add_noise(full, A, -1.0, 3), PreconditionError);
  }

  TEST_CASE_FIXTURE(Fixture, "RTDM files round trip in both versions") {
    const RtdMatrix A = assemble_rtd(full, band_limited_real_field(g, 2, 7), sp);
    const auto dir = std::filesystem::temp_directory_path();
    for (int version : {1, 2}) {
      const std::string path = (dir / ("implab_test_v" + std::to_string(version) + ".rtdm")).string();
      write_rtdm(path, A, version);
      const RtdMatrix B = read_rtdm(path, A.target);
      CHECK(B.k == A.k);
      const double gap = (A.entries - B.entries).cwiseAbs().maxCoeff() / A.entries.cwiseAbs().maxCoeff();
      if (version == 2) CHECK(gap == 0.0);
      else CHECK(gap < 1e-6);
      std::filesystem::remove(path);
    }
  }
}

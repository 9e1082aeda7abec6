#include "implab/rtd.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "implab/errors.hpp"
#include "implab/parallel.hpp"
#include "implab/random.hpp"

namespace implab {

RtdMatrix assemble_rtd(const ImpedanceOperator& op, const BoundaryPatch& target, int jobs) {
  const DomainSpec& d = op.domain();
  const std::size_t ns = d.boundary.size();
  RtdMatrix out{op.params().k, target, ns, Eigen::MatrixXcd(Eigen::Index(target.size()), Eigen::Index(ns))};
  op.factorize();
  const double s = -2.0 / d.grid.spacing();
  parallel_for(ns, jobs, [&](std::size_t j) {
    std::vector<Complex> b(d.grid.node_count(), 0.0);
    b[d.boundary[j].node] = s;
    std::vector<Complex> u;
    try {
      u = op.solve_rhs(b).u.values();
    } catch (const NumericalError& e) {
      throw NumericalError("rtd column " + std::to_string(j), e.what());
    }
    for (std::size_t r = 0; r < target.size(); ++r)
      out.entries(Eigen::Index(r), Eigen::Index(j)) = u[d.boundary[target.samples[r]].node];
  });
  return out;
}

RtdMatrix assemble_rtd(const DomainSpec& domain, const ScalarField& q, const SolverParams& params, int jobs) {
  ImpedanceOperator op(domain, q, params);
  return assemble_rtd(op, domain.gamma, jobs);
}

RtdMatrix restrict_rtd(const RtdMatrix& full, const DomainSpec& domain, const BoundaryPatch& patch) {
  std::vector<long> row_of(domain.boundary.size(), -1);
  for (std::size_t r = 0; r < full.target.size(); ++r) row_of[full.target.samples[r]] = long(r);
  RtdMatrix out{full.k, patch, full.source_count, Eigen::MatrixXcd(Eigen::Index(patch.size()), full.entries.cols())};
  for (std::size_t r = 0; r < patch.size(); ++r) {
    const long src = row_of[patch.samples[r]];
    if (src < 0) throw ConfigError("restriction patch is not contained in the assembled target patch");
    out.entries.row(Eigen::Index(r)) = full.entries.row(src);
  }
  return out;
}

Eigen::SparseMatrix<double> h1_gram(const DomainSpec& domain, const BoundaryPatch& patch) {
  const int n = domain.grid.n();
  const double h = domain.grid.spacing();
  std::vector<long> pos(domain.boundary.size(), -1);
  for (std::size_t r = 0; r < patch.size(); ++r) pos[patch.samples[r]] = long(r);
  std::vector<Eigen::Triplet<double>> D;  // rows: 2 per sample
  for (std::size_t r = 0; r < patch.size(); ++r) {
    const BoundarySample& s = domain.boundary[patch.samples[r]];
    for (int dir = 0; dir < 2; ++dir) {
      const int row = int(2 * r + dir);
      auto lookup = [&](int da) -> long {
        int a = s.a, b = s.b;
        (dir == 0 ? a : b) += da;
        if (a < 0 || b < 0 || a >= n || b >= n) return -1;
        return pos[domain.sample_index(s.face, a, b)];
      };
      const long fwd = lookup(1), bwd = lookup(-1);
      if (fwd >= 0) {
        D.emplace_back(row, int(fwd), 1.0 / h);
        D.emplace_back(row, int(r), -1.0 / h);
      } else if (bwd >= 0) {
        D.emplace_back(row, int(r), 1.0 / h);
        D.emplace_back(row, int(bwd), -1.0 / h);
      }
    }
  }
  const int m = int(patch.size());
  Eigen::SparseMatrix<double> Dm(2 * m, m);
  Dm.setFromTriplets(D.begin(), D.end());
  Eigen::SparseMatrix<double> I(m, m);
  I.setIdentity();
  Eigen::SparseMatrix<double> G = h * h * (I + Eigen::SparseMatrix<double>(Dm.transpose() * Dm));
  G.makeCompressed();
  return G;
}

double h1_patch_norm(const DomainSpec& domain, const BoundaryPatch& patch, const Eigen::VectorXcd& y) {
  const Eigen::SparseMatrix<double> G = h1_gram(domain, patch);
  return std::sqrt(std::max(0.0, y.dot(G * y).real()));
}

DataDistance operator_norm(const DomainSpec& domain, const BoundaryPatch& patch, const Eigen::MatrixXcd& A, double tol,
                           int max_iterations, std::uint64_t seed) {
  if (A.rows() != Eigen::Index(patch.size())) throw ConfigError("operator rows do not match the target patch");
  DataDistance out;
  if (A.size() == 0 || A.cwiseAbs().maxCoeff() == 0.0) return out;
  const Eigen::SparseMatrix<double> G = h1_gram(domain, patch);
  const double h2 = domain.grid.spacing() * domain.grid.spacing();
  Rng rng(seed);
  Eigen::VectorXcd v(A.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = complex_gaussian(rng);
  v.normalize();
  double lambda = 0.0;
  out.converged = false;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXcd Av = A * v;
    const Eigen::VectorXcd w = A.adjoint() * (G * Av) / h2;
    const double lam = v.dot(w).real();
    const double wn = w.norm();
    out.iterations = it;
    if (wn == 0.0) {
      lambda = 0.0;
      out.converged = true;
      break;
    }
    v = w / wn;
    if (it > 1 && std::abs(lam - lambda) <= tol * std::abs(lam)) {
      lambda = lam;
      out.converged = true;
      break;
    }
    lambda = lam;
  }
  out.delta = std::sqrt(std::max(0.0, lambda));
  return out;
}

DataDistance data_distance(const DomainSpec& domain, const RtdMatrix& A, const RtdMatrix& B) {
  if (A.target.samples != B.target.samples || A.source_count != B.source_count)
    throw ConfigError("RtD matrices use different discretizations");
  return operator_norm(domain, A.target, A.entries - B.entries);
}

RtdMatrix add_noise(const DomainSpec& domain, const RtdMatrix& A, double level, std::uint64_t seed) {
  if (level < 0) throw PreconditionError("noise level must be nonnegative");
  RtdMatrix out = A;
  if (level == 0.0) return out;
  Rng rng(seed);
  Eigen::MatrixXcd E(A.entries.rows(), A.entries.cols());
  for (Eigen::Index j = 0; j < E.cols(); ++j)
    for (Eigen::Index i = 0; i < E.rows(); ++i) E(i, j) = complex_gaussian(rng);
  const DataDistance n = operator_norm(domain, A.target, E, 1e-8, 20000, derive_seed(seed, 1));
  out.entries += (level / n.delta) * E;
  return out;
}

void write_rtdm(const std::string& path, const RtdMatrix& A, int version) {
  if (version != 1 && version != 2) throw ConfigError("RTDM version must be 1 or 2");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  const std::uint32_t ver = std::uint32_t(version), rows = std::uint32_t(A.entries.rows()),
                      cols = std::uint32_t(A.entries.cols());
  out.write("RTDM", 4);
  out.write(reinterpret_cast<const char*>(&ver), 4);
  out.write(reinterpret_cast<const char*>(&A.k), 8);
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      const Complex z = A.entries(r, c);
      if (version == 1) {
        const float p[2] = {float(z.real()), float(z.imag())};
        out.write(reinterpret_cast<const char*>(p), sizeof p);
      } else {
        const double p[2] = {z.real(), z.imag()};
        out.write(reinterpret_cast<const char*>(p), sizeof p);
      }
    }
  if (!out) throw ConfigError("write failed for " + path);
}

RtdMatrix read_rtdm(const std::string& path, const BoundaryPatch& target) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  char magic[4];
  std::uint32_t ver = 0, rows = 0, cols = 0;
  RtdMatrix A;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&ver), 4);
  in.read(reinterpret_cast<char*>(&A.k), 8);
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  if (!in || std::memcmp(magic, "RTDM", 4) != 0 || (ver != 1 && ver != 2))
    throw CacheCorruption("bad RTDM header in " + path);
  if (rows != target.size()) throw CacheCorruption("RTDM row count does not match the target patch in " + path);
  A.target = target;
  A.source_count = cols;
  A.entries.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      if (ver == 1) {
        float p[2];
        in.read(reinterpret_cast<char*>(p), sizeof p);
        A.entries(r, c) = {p[0], p[1]};
      } else {
        double p[2];
        in.read(reinterpret_cast<char*>(p), sizeof p);
        A.entries(r, c) = {p[0], p[1]};
      }
    }
  if (!in) throw CacheCorruption("truncated RTDM payload in " + path);
  return A;
}

}  // namespace implab

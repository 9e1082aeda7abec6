#include "implab/impedance.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "implab/errors.hpp"
#include "implab/norms.hpp"
#include "implab/random.hpp"

namespace implab {

SolverMethod parse_solver_method(const std::string& s) {
  if (s == "direct") return SolverMethod::Direct;
  if (s == "iterative") return SolverMethod::Iterative;
  throw ConfigError("solver.method must be 'direct' or 'iterative', got '" + s + "'");
}

ImpedanceOperator::ImpedanceOperator(const DomainSpec& domain, const ScalarField& q, const SolverParams& params)
    : domain_(domain), params_(params) {
  const GridSpec& g = domain.grid;
  if (!(q.grid() == g)) throw ConfigError("potential grid does not match domain grid");
  if (!(params.tolerance > 0 && params.tolerance < 1)) throw ConfigError("solver.tolerance must lie in (0,1)");
  const int n = g.n();
  const double h = g.spacing(), ih2 = 1.0 / (h * h), k = params.k;
  const Complex robin(0.0, 2.0 * k / h);
  std::vector<Eigen::Triplet<Complex, int>> trip;
  trip.reserve(g.node_count() * 7);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const Index3 p = g.ijk(i);
    Complex diag = 6.0 * ih2 - k * k + q[i];
    for (int c = 0; c < 3; ++c) {
      Index3 lo = p, hi = p;
      lo[c] -= 1;
      hi[c] += 1;
      if (p[c] == 0) {
        trip.emplace_back(int(i), int(g.index(hi)), -2.0 * ih2);
        diag += robin;
      } else if (p[c] == n - 1) {
        trip.emplace_back(int(i), int(g.index(lo)), -2.0 * ih2);
        diag += robin;
      } else {
        trip.emplace_back(int(i), int(g.index(lo)), -ih2);
        trip.emplace_back(int(i), int(g.index(hi)), -ih2);
      }
    }
    trip.emplace_back(int(i), int(i), diag);
  }
  A_.resize(int(g.node_count()), int(g.node_count()));
  A_.setFromTriplets(trip.begin(), trip.end());
  A_.makeCompressed();
}

std::vector<Complex> ImpedanceOperator::rhs(const ComplexField* F, const BoundaryTrace* f) const {
  const GridSpec& g = domain_.grid;
  std::vector<Complex> b(g.node_count(), 0.0);
  if (F) {
    if (!(F->grid() == g)) throw ConfigError("source grid does not match domain grid");
    b = F->values();
  }
  if (f) {
    if (f->size() != domain_.boundary.size()) throw ConfigError("boundary trace size does not match boundary samples");
    const double s = 2.0 / g.spacing();
    for (std::size_t e = 0; e < f->size(); ++e) b[domain_.boundary[e].node] -= s * (*f)[e];
  }
  return b;
}

ComplexField ImpedanceOperator::apply(const ComplexField& u) const {
  Eigen::Map<const Eigen::VectorXcd> x(u.values().data(), Eigen::Index(u.size()));
  Eigen::VectorXcd y = A_ * x;
  return ComplexField(u.grid(), std::vector<Complex>(y.data(), y.data() + y.size()));
}

void ImpedanceOperator::factorize() const {
  std::call_once(factor_once_, [this] { lu_ = std::make_unique<SparseLU>(A_); });
}

ImpedanceSolution ImpedanceOperator::solve_rhs(const std::vector<Complex>& b) const {
  const GridSpec& g = domain_.grid;
  ImpedanceSolution sol{ComplexField(g), 0.0, 0};
  Eigen::Map<const Eigen::VectorXcd> bv(b.data(), Eigen::Index(b.size()));
  const double bnorm = bv.norm();
  if (bnorm == 0.0) return sol;
  Eigen::Map<Eigen::VectorXcd> x(sol.u.values().data(), Eigen::Index(b.size()));
  if (params_.method == SolverMethod::Direct) {
    factorize();
    lu_->solve(b.data(), sol.u.values().data());
    sol.iterations = 1;
    sol.residual = (A_ * x - bv).norm() / bnorm;
    if (!(sol.residual <= params_.tolerance))
      throw NumericalError("impedance solve", "direct solve residual " + std::to_string(sol.residual) +
                                                  " exceeds tolerance " + std::to_string(params_.tolerance));
    return sol;
  }
  Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<Complex>> it;
  it.setTolerance(params_.tolerance);
  it.setMaxIterations(params_.max_iterations);
  it.compute(A_);
  x = it.solve(bv);
  sol.iterations = int(it.iterations());
  sol.residual = (A_ * x - bv).norm() / bnorm;
  if (it.info() != Eigen::Success || !(sol.residual <= params_.tolerance * 1.0000001))
    throw NumericalError("impedance solve", "BiCGSTAB did not converge after " + std::to_string(sol.iterations) +
                                                " iterations, last relative residual " + std::to_string(sol.residual));
  return sol;
}

ImpedanceSolution ImpedanceOperator::solve(const ComplexField* F, const BoundaryTrace* f) const {
  return solve_rhs(rhs(F, f));
}

ImpedanceOperator assemble(const DomainSpec& domain, const ScalarField& q, const SolverParams& params) {
  return ImpedanceOperator(domain, q, params);
}

ImpedanceSolution solve(const DomainSpec& domain, const ScalarField& q, const ComplexField& F, const BoundaryTrace& f,
                        const SolverParams& params) {
  ImpedanceOperator op(domain, q, params);
  return op.solve(&F, &f);
}

BoundaryTrace robin_trace(const DomainSpec& domain, double k, const AnalyticField& u, const AnalyticGradient& grad) {
  BoundaryTrace f(domain.boundary.size());
  const Complex ik(0.0, k);
  for (std::size_t e = 0; e < f.size(); ++e) {
    const BoundarySample& s = domain.boundary[e];
    const Vec3 x = domain.grid.position(s.node);
    f[e] = dot(grad(x), s.normal) - ik * u(x);
  }
  return f;
}

ComplexField sample_field(const GridSpec& grid, const AnalyticField& u) {
  ComplexField out(grid);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = u(grid.position(i));
  return out;
}

namespace {
BoundaryTrace boundary_samples_of(const DomainSpec& domain, const ComplexField& G) {
  BoundaryTrace f(domain.boundary.size());
  for (std::size_t e = 0; e < f.size(); ++e) f[e] = G[domain.boundary[e].node];
  return f;
}
}  // namespace

std::vector<BaskinRow> check_baskin_bound(const DomainSpec& domain, const std::vector<double>& k_list, int trial_count,
                                          std::uint64_t seed, const SolverParams& base) {
  const GridSpec& g = domain.grid;
  const int cutoff = std::max(1, g.n() / 4);
  std::vector<ComplexField> Fs;
  std::vector<BoundaryTrace> fs;
  for (int t = 0; t < trial_count; ++t) {
    Fs.push_back(band_limited_field(g, cutoff, derive_seed(seed, 2 * t)));
    fs.push_back(boundary_samples_of(domain, band_limited_field(g, cutoff, derive_seed(seed, 2 * t + 1))));
  }
  const ScalarField zero(g, 0.0);
  std::vector<BaskinRow> rows;
  for (double k : k_list) {
    SolverParams p = base;
    p.k = k;
    ImpedanceOperator op(domain, zero, p);
    BaskinRow row{k, 0.0, {}};
    for (int t = 0; t < trial_count; ++t) {
      const double data = l2_norm(Fs[t]) + boundary_l2_norm(domain, fs[t]);
      double ratio = 0.0;
      if (data > 0) {
        const ImpedanceSolution s = op.solve(&Fs[t], &fs[t]);
        ratio = (grad_l2_norm(s.u) + k * l2_norm(s.u)) / data;
      }
      row.ratios.push_back(ratio);
      row.max_ratio = std::max(row.max_ratio, ratio);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double check_bounded_k_bound(const DomainSpec& domain, const ScalarField& q, double k_lo, double k_hi, int k_samples,
                             int trial_count, std::uint64_t seed, const SolverParams& base) {
  const GridSpec& g = domain.grid;
  const int cutoff = std::max(1, g.n() / 4);
  double best = 0.0;
  for (int j = 0; j < k_samples; ++j) {
    SolverParams p = base;
    p.k = k_samples == 1 ? k_lo : k_lo + (k_hi - k_lo) * j / (k_samples - 1);
    ImpedanceOperator op(domain, q, p);
    for (int t = 0; t < trial_count; ++t) {
      const ComplexField F = band_limited_field(g, cutoff, derive_seed(seed, t));
      const double fn = l2_norm(F);
      if (fn == 0) continue;
      const ImpedanceSolution s = op.solve(&F, nullptr);
      best = std::max(best, h1_norm(s.u) / fn);
    }
  }
  return best;
}

namespace {
constexpr std::uint32_t kImpsVersion = 1;
}

void write_imps(const std::string& path, const ComplexField& u) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  const std::uint32_t n = std::uint32_t(u.grid().n());
  const double L = u.grid().side();
  out.write("IMPS", 4);
  out.write(reinterpret_cast<const char*>(&kImpsVersion), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&L), 8);
  std::vector<float> buf(2 * u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    buf[2 * i] = float(u[i].real());
    buf[2 * i + 1] = float(u[i].imag());
  }
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
  if (!out) throw ConfigError("write failed for " + path);
}

ComplexField read_imps(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  char magic[4];
  std::uint32_t version = 0, n = 0;
  double L = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&L), 8);
  if (!in || std::memcmp(magic, "IMPS", 4) != 0 || version != kImpsVersion)
    throw CacheCorruption("bad IMPS header in " + path);
  ComplexField u(GridSpec::centered(L, int(n)));
  std::vector<float> buf(2 * u.size());
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
  if (!in) throw CacheCorruption("truncated IMPS payload in " + path);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = {buf[2 * i], buf[2 * i + 1]};
  return u;
}

}  // namespace implab

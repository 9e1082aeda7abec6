#include "implab/probe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "implab/errors.hpp"
#include "implab/fft.hpp"
#include "implab/norms.hpp"
#include "implab/parallel.hpp"
#include "implab/random.hpp"

namespace implab {

namespace {

constexpr double kInvE = 0.36787944117144233;

// Trapezoid factor: 1/2 per axis on which the node sits on the box boundary.
double edge_factor(const GridSpec& g, std::size_t node) {
  const Index3 p = g.ijk(node);
  double w = 1.0;
  for (int c = 0; c < 3; ++c)
    if (p[c] == 0 || p[c] == g.n() - 1) w *= 0.5;
  return w;
}

bool in_half(const Index3& m) {
  if (m[2] != 0) return m[2] > 0;
  if (m[1] != 0) return m[1] > 0;
  return m[0] >= 0;
}

// Zero-extended field on the lattice cube: DFT coefficients
// int f e^{-i xi_m.x} dx in FFT index order.
struct CubeSpectrum {
  int M = 0;
  double P = 0.0, step = 0.0;
  std::vector<Complex> coef;
  int mode(int I) const { return I < M / 2 ? I : I - M; }
};

CubeSpectrum spectrum(const ScalarField& f, int pad) {
  const GridSpec& g = f.grid();
  const CubeSpec cube = make_cube(g, pad);
  CubeSpectrum s;
  s.M = cube.M;
  s.P = cube.P;
  s.step = 2 * std::numbers::pi / cube.P;
  const std::size_t total = std::size_t(s.M) * s.M * s.M;
  s.coef.assign(total, 0.0);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    s.coef[cube.index(cube.to_cube(g.ijk(i)))] = edge_factor(g, i) * f[i];
  const Fft3 fft(s.M);
  fft.forward(s.coef.data());
  const double dx3 = std::pow(cube.h, 3);
  for (int K = 0; K < s.M; ++K)
    for (int J = 0; J < s.M; ++J)
      for (int I = 0; I < s.M; ++I) {
        const Vec3 xi{s.step * s.mode(I), s.step * s.mode(J), s.step * s.mode(K)};
        s.coef[cube.index({I, J, K})] *= dx3 * std::polar(1.0, -dot(xi, cube.origin));
      }
  return s;
}

std::size_t spectrum_index(const CubeSpectrum& s, const Index3& m) {
  auto w = [&](int v) { return std::size_t(v < 0 ? v + s.M : v); };
  return w(m[0]) + std::size_t(s.M) * (w(m[1]) + std::size_t(s.M) * w(m[2]));
}

}  // namespace

ScheduleParams make_schedule(double k, double delta, double h0_gamma, double alpha4, double a_floor) {
  if (!(delta > 0 && delta < kInvE))
    throw PreconditionError("data distance delta = " + std::to_string(delta) +
                            " is outside the stability regime 0 < delta < 1/e");
  if (!(k >= 1)) throw PreconditionError("schedule needs k >= 1");
  if (!(h0_gamma > 0) || !(alpha4 > 0)) throw ConfigError("probe.h0_gamma and probe.alpha4 must be positive");
  ScheduleParams p;
  p.h0_gamma = h0_gamma;
  p.alpha4 = alpha4;
  p.delta = delta;
  p.k = k;
  p.a = k / h0_gamma + std::log(1.0 / delta) / (4 * alpha4);
  if (p.a < a_floor) {
    p.a = a_floor;
    p.clamped = true;
  }
  p.rho = std::pow(p.a, 2.0 / 5.0);
  return p;
}

ScheduleParams make_noise_free_schedule(double k, double h0_gamma, double a_floor) {
  if (!(k >= 1)) throw PreconditionError("schedule needs k >= 1");
  if (!(h0_gamma > 0)) throw ConfigError("probe.h0_gamma must be positive");
  ScheduleParams p;
  p.h0_gamma = h0_gamma;
  p.k = k;
  p.a = k / h0_gamma;
  if (p.a < a_floor) {
    p.a = a_floor;
    p.clamped = true;
  }
  p.rho = std::pow(p.a, 2.0 / 5.0);
  return p;
}

std::size_t ProbeLattice::full_count() const {
  std::size_t n = 0;
  for (const Index3& m : half) n += (m[0] == 0 && m[1] == 0 && m[2] == 0) ? 1 : 2;
  return n;
}

ProbeLattice make_probe_lattice(const GridSpec& box, int pad, double rho) {
  if (pad < 2) throw ConfigError("probe.lattice_pad must be >= 2");
  if (!(rho >= 0)) throw ConfigError("lattice radius must be nonnegative");
  ProbeLattice L;
  L.pad = pad;
  L.P = pad * box.side();
  L.step = 2 * std::numbers::pi / L.P;
  L.rho = rho;
  const CubeSpec cube = make_cube(box, pad);
  const int R = int(std::floor(rho / L.step)) + 1;
  if (R >= cube.M / 2) throw ConfigError("probe ball radius exceeds the lattice Nyquist range");
  for (int z = -R; z <= R; ++z)
    for (int y = -R; y <= R; ++y)
      for (int x = -R; x <= R; ++x) {
        const Index3 m{x, y, z};
        const double r = L.step * std::sqrt(double(x * x + y * y + z * z));
        if (r <= rho * (1 + 1e-12) && in_half(m)) L.half.push_back(m);
      }
  return L;
}

Complex alessandrini_pairing(const ScalarField& q1, const ScalarField& q2, const ComplexField& u1,
                             const ComplexField& u2, const DomainSpec& domain) {
  Complex s = 0.0;
  for (std::size_t i = 0; i < q1.size(); ++i) {
    const double dq = q1[i] - q2[i];
    if (dq != 0.0) s += domain.volume_weight(i) * dq * u1[i] * u2[i];
  }
  return s;
}

IdentityCheck alessandrini_identity(const ScalarField& q1, const ScalarField& q2, const ComplexField& u1,
                                    const ComplexField& u2, const BoundaryTrace& g2, const ScalarField& chi,
                                    const DomainSpec& domain, const SolverParams& params) {
  const ImpedanceOperator op(domain, q1, params);
  const ComplexField v = op.solve(nullptr, &g2).u;
  ComplexField u(domain.grid), cu(domain.grid);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = v[i] - u2[i];
    cu[i] = chi[i] * u[i];
  }
  const ComplexField a_cu = op.apply(cu), a_u = op.apply(u);
  IdentityCheck r;
  r.pairing = alessandrini_pairing(q1, q2, u1, u2, domain);
  for (std::size_t i = 0; i < u.size(); ++i)
    r.commutator += domain.volume_weight(i) * u1[i] * (a_cu[i] - chi[i] * a_u[i]);
  r.residual = std::abs(r.pairing - r.commutator);
  double dq = 0;
  for (std::size_t i = 0; i < q1.size(); ++i) dq = std::max(dq, std::abs(q1[i] - q2[i]));
  r.scale = dq * l2_norm(u1) * l2_norm(u2);
  return r;
}

ProbeResult fourier_estimate(const RtdMatrix& lambda1, const RtdMatrix& lambda2, const CgoSolution& q2_cgo,
                             const CgoSolution& q1_cgo, const Vec3& xi, const DomainSpec& domain) {
  if (lambda1.entries.rows() != lambda2.entries.rows() || lambda1.entries.cols() != lambda2.entries.cols() ||
      lambda1.target.samples != lambda2.target.samples)
    throw ConfigError("RtD maps have different layouts");
  if (std::size_t(lambda1.entries.cols()) != domain.boundary.size())
    throw ConfigError("RtD map columns do not match the boundary sampling");
  if (q1_cgo.which != 1 || q2_cgo.which != 2) throw ConfigError("fourier_estimate expects (u1, u2) = (which 1, which 2)");
  for (int c = 0; c < 3; ++c)
    if (std::abs(q1_cgo.frame.xi[c] - xi[c]) > 1e-12 || std::abs(q2_cgo.frame.xi[c] - xi[c]) > 1e-12)
      throw ConfigError("CGO frames were built for a different xi");

  const BoundaryTrace g1 = cgo_robin_trace(q1_cgo, domain), g2 = cgo_robin_trace(q2_cgo, domain);
  const Eigen::Map<const Eigen::VectorXcd> G1(g1.data(), Eigen::Index(g1.size())), G2(g2.data(), Eigen::Index(g2.size()));
  const Eigen::MatrixXcd D = lambda1.entries - lambda2.entries;
  const Eigen::VectorXcd y2 = D * G2, y1 = D * G1;
  Complex est = 0.0, rev = 0.0;
  const auto& rows = lambda1.target.samples;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double s = domain.surface_weight(rows[i]);
    est += s * y2[Eigen::Index(i)] * g1[rows[i]];
    rev += s * y1[Eigen::Index(i)] * g2[rows[i]];
  }
  ProbeResult r;
  r.xi = xi;
  r.fourier_estimate = est;
  r.identity_residual = std::abs(est - rev);
  r.r1_l2 = q1_cgo.remainder_l2;
  r.r2_l2 = q2_cgo.remainder_l2;
  r.contraction = std::max(q1_cgo.contraction, q2_cgo.contraction);
  return r;
}

Complex direct_fourier(const ScalarField& f, const Vec3& xi) {
  const GridSpec& g = f.grid();
  Complex s = 0.0;
  for (std::size_t i = 0; i < g.node_count(); ++i)
    if (f[i] != 0.0) s += edge_factor(g, i) * f[i] * std::polar(1.0, -dot(xi, g.position(i)));
  return s * std::pow(g.spacing(), 3);
}

double cube_sobolev_norm(const std::vector<double>& values, int M, double P, double s) {
  const std::size_t total = std::size_t(M) * M * M;
  if (values.size() != total) throw ConfigError("cube field has the wrong size");
  std::vector<Complex> c(values.begin(), values.end());
  const Fft3 fft(M);
  fft.forward(c.data());
  const double step = 2 * std::numbers::pi / P, h = P / M, dx3 = h * h * h;
  double acc = 0;
  for (int K = 0; K < M; ++K)
    for (int J = 0; J < M; ++J)
      for (int I = 0; I < M; ++I) {
        const int a = I < M / 2 ? I : I - M, b = J < M / 2 ? J : J - M, d = K < M / 2 ? K : K - M;
        const double xi2 = step * step * double(a * a + b * b + d * d);
        acc += std::norm(dx3 * c[std::size_t(I) + std::size_t(M) * (J + std::size_t(M) * K)]) * std::pow(1 + xi2, s);
      }
  return std::sqrt(acc / (P * P * P));
}

double sobolev_norm(const ScalarField& field, double s, int pad) {
  const CubeSpec cube = make_cube(field.grid(), pad);
  std::vector<double> v(std::size_t(cube.M) * cube.M * cube.M, 0.0);
  for (std::size_t i = 0; i < field.size(); ++i)
    v[cube.index(cube.to_cube(field.grid().ijk(i)))] = edge_factor(field.grid(), i) * field[i];
  return cube_sobolev_norm(v, cube.M, cube.P, s);
}

double h_minus1_norm(const ScalarField& field, int pad) { return sobolev_norm(field, -1.0, pad); }

double lowpass_h_minus1_error(const ScalarField& field, const ProbeLattice& lattice,
                              const std::vector<Complex>* estimates) {
  const CubeSpectrum sp = spectrum(field, lattice.pad);
  std::vector<Complex> c = sp.coef;
  for (std::size_t j = 0; j < lattice.half.size(); ++j) {
    const Index3& m = lattice.half[j];
    const Complex e = estimates ? (*estimates)[j] : Complex(0.0);
    const std::size_t ip = spectrum_index(sp, m);
    const Index3 mm{-m[0], -m[1], -m[2]};
    const std::size_t im = spectrum_index(sp, mm);
    c[ip] = sp.coef[ip] - e;
    if (im != ip) c[im] = sp.coef[im] - std::conj(e);
  }
  double acc = 0;
  for (int K = 0; K < sp.M; ++K)
    for (int J = 0; J < sp.M; ++J)
      for (int I = 0; I < sp.M; ++I) {
        const double xi2 = sp.step * sp.step * double(sp.mode(I) * sp.mode(I) + sp.mode(J) * sp.mode(J) +
                                                      sp.mode(K) * sp.mode(K));
        acc += std::norm(c[std::size_t(I) + std::size_t(sp.M) * (J + std::size_t(sp.M) * K)]) / (1 + xi2);
      }
  return std::sqrt(acc / std::pow(sp.P, 3));
}

ReconstructionResult lowpass_reconstruct(const std::vector<ProbeResult>& estimates, const ProbeLattice& lattice,
                                         const DomainSpec& domain, const ScalarField* truth) {
  if (estimates.size() != lattice.half.size()) throw ConfigError("probe estimates do not match the lattice");
  const GridSpec& g = domain.grid;
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    const Vec3 xi = lattice.xi(lattice.half[j]);
    for (int c = 0; c < 3; ++c)
      if (std::abs(xi[c] - estimates[j].xi[c]) > 1e-9 * (1 + std::abs(xi[c])))
        throw ConfigError("probe frequency does not lie on the reconstruction lattice");
  }
  const double P3 = std::pow(lattice.P, 3);
  ReconstructionResult out{ScalarField(g, 0.0), 0.0, 0.0, 0.0};
  double re_max = 0, im_max = 0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const Vec3 x = g.position(i);
    Complex s = 0.0;
    for (std::size_t j = 0; j < estimates.size(); ++j) {
      const Index3& m = lattice.half[j];
      const Complex t = estimates[j].fourier_estimate * std::polar(1.0, dot(lattice.xi(m), x));
      s += (m[0] == 0 && m[1] == 0 && m[2] == 0) ? Complex(t.real(), 0.0) : t + std::conj(t);
    }
    s /= P3;
    out.lowpass_field[i] = s.real();
    re_max = std::max(re_max, std::abs(s.real()));
    im_max = std::max(im_max, std::abs(s.imag()));
  }
  out.imaginary_residue = re_max > 0 ? im_max / re_max : im_max;
  if (truth) {
    std::vector<Complex> est(estimates.size());
    for (std::size_t j = 0; j < est.size(); ++j) est[j] = estimates[j].fourier_estimate;
    out.h_minus1_error = lowpass_h_minus1_error(*truth, lattice, &est);
    for (std::size_t i = 0; i < g.node_count(); ++i)
      out.linf_error = std::max(out.linf_error, std::abs(out.lowpass_field[i] - (*truth)[i]));
  }
  return out;
}

InterpolationReport interpolation_check(const ScalarField& field, double s, int pad) {
  if (!(s > 1.5)) throw PreconditionError("interpolation needs s > n/2 = 1.5");
  InterpolationReport r;
  r.s = s;
  r.eps = (s - 1.5) / 2;
  r.exp_minus1 = r.eps / (1 + s);
  r.exp_s = (1 - r.eps + s) / (1 + s);
  r.linf = sup_norm(field);
  r.h_minus1 = h_minus1_norm(field, pad);
  r.h_s = sobolev_norm(field, s, pad);
  if (r.linf == 0.0) {
    r.trivial = true;
    return r;
  }
  r.c_emp = r.linf / (std::pow(r.h_minus1, r.exp_minus1) * std::pow(r.h_s, r.exp_s));
  return r;
}

std::vector<ProbeResult> run_probes(const RtdMatrix& lambda1, const RtdMatrix& lambda2, const ScalarField& q1_oracle,
                                    const ScalarField& q2, const ProbeLattice& lattice, double k, double a,
                                    const DomainSpec& domain, const StabilityConfig& cfg) {
  const CubeSpec cube = make_cube(domain.grid, cfg.cgo_pad);
  const ScalarField q1e = extend_potential(q1_oracle, cube), q2e = extend_potential(q2, cube);
  std::vector<ProbeResult> out(lattice.half.size());
  parallel_for(out.size(), cfg.jobs, [&](std::size_t j) {
    const Vec3 xi = lattice.xi(lattice.half[j]);
    const CgoFrame f = discretize_frame(build_frame(xi, k, a, cfg.seed), cube.h);
    const CgoSolution s1 = solve_remainder(q1e, cube, f, 1, cfg.cgo_tolerance, CgoMode::GridExact);
    const CgoSolution s2 = solve_remainder(q2e, cube, f, 2, cfg.cgo_tolerance, CgoMode::GridExact);
    out[j] = fourier_estimate(lambda1, lambda2, s2, s1, xi, domain);
    out[j].mode = lattice.half[j];
  });
  return out;
}

std::vector<StabilityRecord> run_stability_experiment(const DomainSpec& domain, const ScalarField& q1,
                                                      const ScalarField& q2, const std::vector<double>& k_list,
                                                      double noise_delta, const StabilityConfig& cfg,
                                                      const RtdProvider& provider) {
  if (!cfg.noise_free && cfg.use_synthetic_delta) make_schedule(1.0, noise_delta, cfg.h0_gamma, cfg.alpha4);
  if (noise_delta < 0) throw ConfigError("probe.noise_delta must be >= 0");
  const double M = std::max(sup_norm(q1), sup_norm(q2));
  const double a_floor = std::max(cfg.C0 * M, 1.0);
  ScalarField dq(domain.grid);
  for (std::size_t i = 0; i < dq.size(); ++i) dq[i] = q1[i] - q2[i];
  const double truth_norm = h_minus1_norm(dq, cfg.lattice_pad);

  std::vector<StabilityRecord> records;
  for (double k : k_list) {
    StabilityRecord rec;
    rec.k = k;
    rec.seed = cfg.seed;
    rec.truth_h_minus1 = truth_norm;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (k * domain.grid.spacing() > 0.5 + 1e-12)
        throw PreconditionError("k dx = " + std::to_string(k * domain.grid.spacing()) + " exceeds 0.5");
      SolverParams sp = cfg.solver;
      sp.k = k;
      const RtdMatrix L1 = provider ? provider(q1, k) : assemble_rtd(domain, q1, sp, cfg.jobs);
      const RtdMatrix L2 = provider ? provider(q2, k) : assemble_rtd(domain, q2, sp, cfg.jobs);
      const RtdMatrix L1m =
          noise_delta > 0 ? add_noise(domain, L1, noise_delta, derive_seed(cfg.seed, std::uint64_t(k * 1000))) : L1;
      ScheduleParams sch;
      if (cfg.noise_free) {
        rec.delta = 0.0;
        sch = make_noise_free_schedule(k, cfg.h0_gamma, a_floor);
      } else {
        rec.delta = cfg.use_synthetic_delta ? noise_delta : data_distance(domain, L1m, L2).delta;
        sch = make_schedule(k, rec.delta, cfg.h0_gamma, cfg.alpha4, a_floor);
      }
      rec.a = sch.a;
      rec.rho = sch.rho;
      const ProbeLattice lat = make_probe_lattice(domain.grid, cfg.lattice_pad, sch.rho);
      const std::vector<ProbeResult> probes = run_probes(L1m, L2, q1, q2, lat, k, sch.a, domain, cfg);
      rec.n_probes = lat.full_count();
      for (const ProbeResult& p : probes) rec.identity_residual_max = std::max(rec.identity_residual_max, p.identity_residual);
      const ReconstructionResult rr = lowpass_reconstruct(probes, lat, domain, &dq);
      rec.h_minus1_err = rr.h_minus1_error;
      rec.linf_err = rr.linf_error;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.note = e.what();
      rec.h_minus1_err = NAN;
      rec.linf_err = NAN;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!cfg.quiet)
      std::fprintf(stderr, "k=%g a=%.3f rho=%.3f probes=%zu H-1 err=%.4e %s\n", rec.k, rec.a, rec.rho, rec.n_probes,
                   rec.h_minus1_err, rec.note.c_str());
    records.push_back(rec);
  }
  return records;
}

void write_stability_csv(const std::string& path, const std::vector<StabilityRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "k,delta,a,rho,n_probes,h_minus1_err,linf_err,identity_residual_max,wall_seconds,seed\n";
  char buf[512];
  for (const StabilityRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%zu,%.17g,%.17g,%.17g,%.6f,%llu\n", r.k, r.delta, r.a, r.rho,
                  r.n_probes, r.h_minus1_err, r.linf_err, r.identity_residual_max, r.wall_seconds,
                  static_cast<unsigned long long>(r.seed));
    out << buf;
  }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw PreconditionError("slope fit needs at least two points");
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace implab

#include "implab/carleman.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "implab/errors.hpp"
#include "implab/impedance.hpp"
#include "implab/norms.hpp"
#include "implab/parallel.hpp"
#include "implab/random.hpp"
#include "implab/rtd.hpp"

namespace implab {

namespace {

constexpr double kMaxExponent = 700.0;

bool on_boundary(const GridSpec& g, const Index3& p) {
  for (int c = 0; c < 3; ++c)
    if (p[c] == 0 || p[c] == g.n() - 1) return true;
  return false;
}

int boundary_axes(const GridSpec& g, const Index3& p) {
  int m = 0;
  for (int c = 0; c < 3; ++c)
    if (p[c] == 0 || p[c] == g.n() - 1) ++m;
  return m;
}

// Centred differences inside, one-sided on the faces.
template <class F>
std::array<typename F::value_type, 3> nodal_gradient(const F& f, const Index3& p) {
  const GridSpec& g = f.grid();
  const double h = g.spacing();
  std::array<typename F::value_type, 3> d{};
  for (int c = 0; c < 3; ++c) {
    Index3 lo = p, hi = p;
    double span = 2 * h;
    if (p[c] == 0) {
      hi[c] += 1;
      span = h;
    } else if (p[c] == g.n() - 1) {
      lo[c] -= 1;
      span = h;
    } else {
      lo[c] -= 1;
      hi[c] += 1;
    }
    d[c] = (f[g.index(hi)] - f[g.index(lo)]) / span;
  }
  return d;
}

double grad_sq(const ComplexField& u, const Index3& p) {
  const auto d = nodal_gradient(u, p);
  return std::norm(d[0]) + std::norm(d[1]) + std::norm(d[2]);
}

// In-face tangential gradient for a boundary sample.
double tangential_grad_sq(const ComplexField& u, const BoundarySample& s) {
  const auto d = nodal_gradient(u, s.ijk);
  const int ax = face_axis(s.face);
  double acc = 0;
  for (int c = 0; c < 3; ++c)
    if (c != ax) acc += std::norm(d[c]);
  return acc;
}

Mask gamma_node_mask(const DomainSpec& domain, const BoundaryPatch& patch) {
  Mask m(domain.grid, 0);
  for (std::size_t e : patch.samples) m[domain.boundary[e].node] = 1;
  return m;
}

double max_phi(const CarlemanWeight& w) {
  double m = -INFINITY;
  for (std::size_t i = 0; i < w.phi.size(); ++i)
    if (w.support[i]) m = std::max(m, w.phi[i]);
  return m;
}

void fill_phi(CarlemanWeight& w) {
  w.phi = ScalarField(w.psi.grid());
  for (std::size_t i = 0; i < w.psi.size(); ++i) w.phi[i] = std::exp(w.beta0 * w.psi[i]);
}

// Least-squares slope of y against x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

CarlemanWeight build_simple_weight(const DomainSpec& domain, double beta0) {
  const GridSpec& g = domain.grid;
  CarlemanWeight w{ScalarField(g), Mask(g, 1), beta0, ScalarField(g), 0.0};
  const double x0 = g.origin()[0];
  for (std::size_t i = 0; i < g.node_count(); ++i) w.psi[i] = g.position(i)[0] - x0 + 1.0;
  fill_phi(w);
  w.kappa = 0.5;
  return w;
}

CarlemanWeight with_beta(const CarlemanWeight& w, double beta0) {
  CarlemanWeight out = w;
  out.beta0 = beta0;
  fill_phi(out);
  return out;
}

std::string WeightReport::describe() const {
  std::ostringstream os;
  os << "positivity " << (positivity ? "ok" : "FAIL") << " (min interior psi " << min_interior_psi << "); gradient "
     << (gradient ? "ok" : "FAIL") << " (min |grad psi| " << min_gradient << " at node " << worst_gradient_node[0]
     << "," << worst_gradient_node[1] << "," << worst_gradient_node[2] << "); boundary values "
     << (boundary_values ? "ok" : "FAIL") << " (max |psi| " << max_boundary_abs << "); inner-normal difference "
     << (normal_derivative ? "ok" : "FAIL") << " (min " << min_normal_difference << " at node "
     << worst_normal_node[0] << "," << worst_normal_node[1] << "," << worst_normal_node[2] << ")";
  return os.str();
}

WeightReport verify_gamma_weight(const DomainSpec& domain, const AnnulusFamily& family, const ScalarField& psi,
                                 double g_min) {
  const GridSpec& g = domain.grid;
  const Mask& w0 = family.omega[0];
  const Mask gam = gamma_node_mask(domain, domain.gamma);
  WeightReport r;
  r.min_interior_psi = INFINITY;
  r.min_gradient = INFINITY;
  r.min_normal_difference = INFINITY;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const Index3 p = g.ijk(i);
    const bool bnd = on_boundary(g, p);
    if (w0[i] && !bnd) r.min_interior_psi = std::min(r.min_interior_psi, psi[i]);
    if (w0[i] && boundary_axes(g, p) < 2) {
      const auto d = nodal_gradient(psi, p);
      const double gn = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      if (gn < r.min_gradient) {
        r.min_gradient = gn;
        r.worst_gradient_node = p;
      }
    }
    // Zero set: boundary outside Gamma, and the rim just outside omega0.
    bool rim = false;
    if (!w0[i])
      for (int c = 0; c < 3 && !rim; ++c)
        for (int s : {-1, 1}) {
          Index3 q = p;
          q[c] += s;
          if (g.contains(q) && w0[g.index(q)]) rim = true;
        }
    if ((bnd && !gam[i]) || rim) r.max_boundary_abs = std::max(r.max_boundary_abs, std::abs(psi[i]));
  }
  for (const BoundarySample& s : domain.boundary) {
    if (gam[s.node] || boundary_axes(g, s.ijk) >= 2) continue;
    Index3 q = s.ijk;
    const int ax = face_axis(s.face);
    q[ax] += s.normal[ax] > 0 ? 1 : -1;
    const double diff = psi[g.index(q)] - psi[s.node];
    if (diff < r.min_normal_difference) {
      r.min_normal_difference = diff;
      r.worst_normal_node = s.ijk;
    }
  }
  r.positivity = r.min_interior_psi > 0;
  r.gradient = r.min_gradient >= g_min;
  r.boundary_values = r.max_boundary_abs == 0.0;
  r.normal_derivative = r.min_normal_difference > 0;
  return r;
}

CarlemanWeight build_gamma_weight(const DomainSpec& domain, const AnnulusFamily& family, std::uint64_t seed,
                                  double beta0, double g_min, int retry_budget, WeightReport* report,
                                  bool accept_unverified) {
  if (domain.gamma.size() == 0) throw PreconditionError("gamma weight needs a nonempty Gamma");
  if (retry_budget < 1) throw ConfigError("carleman.retry_budget must be >= 1");
  const GridSpec& g = domain.grid;
  const Mask& w0 = family.omega[0];
  const Mask gam = gamma_node_mask(domain, domain.gamma);
  const double h2 = g.spacing() * g.spacing();

  std::vector<long> unknown(g.node_count(), -1);
  long nu = 0;
  for (std::size_t i = 0; i < g.node_count(); ++i)
    if (w0[i] && !on_boundary(g, g.ijk(i))) unknown[i] = nu++;

  using SpR = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd lift = Eigen::VectorXd::Zero(nu);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (unknown[i] < 0) continue;
    const Index3 p = g.ijk(i);
    trip.emplace_back(unknown[i], unknown[i], 6.0 / h2);
    for (int c = 0; c < 3; ++c)
      for (int s : {-1, 1}) {
        Index3 q = p;
        q[c] += s;
        const std::size_t j = g.index(q);
        if (unknown[j] >= 0) trip.emplace_back(unknown[i], unknown[j], -1.0 / h2);
        else if (gam[j]) lift[unknown[i]] += 1.0 / h2;
      }
  }
  SpR A(nu, nu);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SpR> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw NumericalError("carleman weight", "Poisson factorization failed");

  WeightReport best;
  ScalarField best_psi(g, 0.0);
  bool have = false;
  for (int attempt = 0; attempt < retry_budget; ++attempt) {
    const ScalarField r = band_limited_real_field(g, std::max(1, g.n() / 4), derive_seed(seed, 0xC0 + attempt));
    const double rs = std::max(sup_norm(r), 1e-300);
    Eigen::VectorXd b = lift;
    for (std::size_t i = 0; i < g.node_count(); ++i)
      if (unknown[i] >= 0) {
        // heavier forcing toward dOmega keeps the ridge of psi off a node layer
        const double tilt = std::exp(2.0 * (0.5 - boundary_distance(g, i) / family.widths[0]));
        b[unknown[i]] += 10.0 * tilt * std::exp(0.5 * r[i] / rs);
      }
    const Eigen::VectorXd x = ldlt.solve(b);
    ScalarField psi(g, 0.0);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      if (unknown[i] >= 0) psi[i] = x[unknown[i]];
      else if (gam[i]) psi[i] = 1.0;
    }
    WeightReport rep = verify_gamma_weight(domain, family, psi, g_min);
    rep.attempts = attempt + 1;
    const bool better = !have || (rep.ok() && !best.ok()) ||
                        (rep.ok() == best.ok() && rep.min_gradient > best.min_gradient);
    if (better) {
      best = rep;
      best_psi = psi;
      have = true;
    }
    if (rep.ok()) break;
  }
  best.attempts = best.ok() ? best.attempts : retry_budget;
  if (report) *report = best;
  if (!best.ok() && !accept_unverified)
    throw NumericalError("carleman weight", "no admissible weight within " + std::to_string(retry_budget) +
                                                " draws; best candidate: " + best.describe());
  CarlemanWeight w{best_psi, w0, beta0, ScalarField(g), 0.0};
  fill_phi(w);
  double m = INFINITY;
  for (std::size_t i = 0; i < g.node_count(); ++i)
    if (family.omega[2][i] && !family.omega[3][i]) m = std::min(m, best_psi[i]);
  w.kappa = 0.5 * m;
  return w;
}

ComplexField apply_conjugated(const ComplexField& u, const CarlemanWeight& weight, double h, double E) {
  if (!(h > 0)) throw PreconditionError("semiclassical h must be positive");
  const GridSpec& g = u.grid();
  const int n = g.n();
  const double s = h * h / (g.spacing() * g.spacing());
  ComplexField out(g, 0.0);
  for (int l = 1; l < n - 1; ++l)
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        const std::size_t x = g.index(i, j, l);
        const std::size_t nb[6] = {x - 1, x + 1, x - n, x + n, x - std::size_t(n) * n, x + std::size_t(n) * n};
        Complex acc = 0.0;
        for (std::size_t y : nb) {
          const double ex = (weight.phi[x] - weight.phi[y]) / h;
          if (std::abs(ex) > kMaxExponent)
            throw NumericalError("carleman conjugation", "local weight exponent " + std::to_string(ex) +
                                                             " out of range; use a larger h or a flatter phi");
          acc += std::exp(ex) * u[y] - u[x];
        }
        out[x] = -s * acc - E * u[x];
      }
  return out;
}

ComplexField apply_robin_operator(const ComplexField& u, double h, double E, double k) {
  const GridSpec& g = u.grid();
  const int n = g.n();
  const double dx = g.spacing(), s = h * h / (dx * dx);
  const Complex ik(0, k);
  ComplexField out(g, 0.0);
  for (std::size_t x = 0; x < g.node_count(); ++x) {
    const Index3 p = g.ijk(x);
    Complex lap = 0.0;
    for (int c = 0; c < 3; ++c) {
      Index3 lo = p, hi = p;
      lo[c] -= 1;
      hi[c] += 1;
      if (p[c] == 0) {
        const Complex u1 = u[g.index(hi)];
        lap += 2.0 * u1 - 2.0 * dx * ik * u[x] - 2.0 * u[x];
      } else if (p[c] == n - 1) {
        const Complex u1 = u[g.index(lo)];
        lap += 2.0 * u1 - 2.0 * dx * ik * u[x] - 2.0 * u[x];
      } else {
        lap += u[g.index(lo)] + u[g.index(hi)] - 2.0 * u[x];
      }
    }
    out[x] = -s * lap - E * u[x];
  }
  return out;
}

namespace {

// Second-order hyper-dual number: a + b1 e1 + b2 e2 + c e1 e2, e1^2 = e2^2 = 0.
struct HD {
  Complex a, b1, b2, c;
};
HD operator+(HD x, HD y) { return {x.a + y.a, x.b1 + y.b1, x.b2 + y.b2, x.c + y.c}; }
HD operator*(HD x, HD y) {
  return {x.a * y.a, x.a * y.b1 + x.b1 * y.a, x.a * y.b2 + x.b2 * y.a, x.a * y.c + x.b1 * y.b2 + x.b2 * y.b1 + x.c * y.a};
}
HD operator*(Complex s, HD x) { return {s * x.a, s * x.b1, s * x.b2, s * x.c}; }
// f(x) with f' = d1, f'' = d2 at x.a
HD chain(HD x, Complex f, Complex d1, Complex d2) {
  return {f, d1 * x.b1, d1 * x.b2, d1 * x.c + d2 * x.b1 * x.b2};
}
HD hexp(HD x) {
  const Complex e = std::exp(x.a);
  return chain(x, e, e, e);
}
HD hsin(HD x) { return chain(x, std::sin(x.a), std::cos(x.a), -std::sin(x.a)); }
HD constant(Complex v) { return {v, 0.0, 0.0, 0.0}; }

struct AnalyticPair {
  std::vector<std::array<double, 3>> freq;
  std::vector<Complex> coef;
  std::array<double, 4> phi_c;
  // u = sum c_m e^{i w_m.x}
  HD u(const std::array<HD, 3>& x) const {
    HD s = constant(0.0);
    for (std::size_t m = 0; m < coef.size(); ++m) {
      HD arg = constant(0.0);
      for (int c = 0; c < 3; ++c) arg = arg + Complex(0, freq[m][c]) * x[c];
      s = s + coef[m] * hexp(arg);
    }
    return s;
  }
  // phi = exp(c0 (1 + x1 + c1 sin(x2) + c2 x3^2 + c3 x1 x2))
  HD phi(const std::array<HD, 3>& x) const {
    HD t = constant(1.0) + x[0] + phi_c[1] * hsin(x[1]) + phi_c[2] * (x[2] * x[2]) + phi_c[3] * (x[0] * x[1]);
    return hexp(phi_c[0] * t);
  }
};

std::array<HD, 3> seed_axis(const Vec3& p, int axis) {
  std::array<HD, 3> x;
  for (int c = 0; c < 3; ++c) x[c] = {p[c], c == axis ? 1.0 : 0.0, c == axis ? 1.0 : 0.0, 0.0};
  return x;
}

}  // namespace

double decomposition_identity_error(std::uint64_t seed, double h, double E, int points) {
  Rng rng(seed);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  AnalyticPair f;
  for (int m = 0; m < 4; ++m) {
    f.freq.push_back({4 * U(rng), 4 * U(rng), 4 * U(rng)});
    f.coef.push_back(complex_gaussian(rng));
  }
  f.phi_c = {0.8, 0.6 * U(rng), 0.6 * U(rng), 0.6 * U(rng)};
  const Complex I(0, 1);
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    const Vec3 p{U(rng), U(rng), U(rng)};
    Complex lap_w = 0.0, lap_u = 0.0, lap_phi = 0.0, phi0 = 0.0, u0 = 0.0, grad_dot = 0.0, grad_phi_sq = 0.0;
    for (int c = 0; c < 3; ++c) {
      const auto x = seed_axis(p, c);
      const HD uu = f.u(x), ph = f.phi(x);
      const HD w = hexp((-1.0 / h) * ph) * uu;
      lap_w += w.c;
      lap_u += uu.c;
      lap_phi += ph.c;
      grad_dot += ph.b1 * uu.b1;
      grad_phi_sq += ph.b1 * ph.b1;
      phi0 = ph.a;
      u0 = uu.a;
    }
    // conjugated operator, computed on e^{-phi/h}u
    const Complex direct = std::exp(phi0 / h) * (-h * h * lap_w - E * std::exp(-phi0 / h) * u0);
    // A2 u = (hD)^2 u - |phi'|^2 u - E u ; A1 u = 2 phi'.hD u - i h (Lap phi) u, D = -i grad
    const Complex A2 = -h * h * lap_u - grad_phi_sq * u0 - E * u0;
    const Complex A1 = 2.0 * h * (-I) * grad_dot - I * h * lap_phi * u0;
    const Complex split = A2 + I * A1;
    const double scale = std::abs(h * h * lap_u) + std::abs(grad_phi_sq * u0) + std::abs(E * u0) +
                         std::abs(2.0 * h * grad_dot) + std::abs(h * lap_phi * u0);
    worst = std::max(worst, std::abs(direct - split) / scale);
  }
  return worst;
}

double symbol_check(const CarlemanWeight& weight, double h, double E) {
  const GridSpec& g = weight.psi.grid();
  ComplexField u(g);
  for (std::size_t i = 0; i < g.node_count(); ++i) u[i] = std::polar(1.0, g.position(i)[0] / h);
  const ComplexField pu = apply_conjugated(u, weight, h, E);
  const int n = g.n();
  double worst = 0.0;
  for (int l = 1; l < n - 1; ++l)
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        const std::size_t x = g.index(i, j, l);
        const auto d = nodal_gradient(weight.phi, Index3{i, j, l});
        const Complex z0 = 1.0 + Complex(0, d[0]);
        const Complex sym = z0 * z0 - d[1] * d[1] - d[2] * d[2] - E;
        worst = std::max(worst, std::abs(pu[x] / u[x] - sym) / std::abs(sym));
      }
  return worst;
}

std::vector<double> RatioTable::min_ratios(const std::vector<double>& h_sequence, double gk, double E) const {
  std::vector<double> out;
  for (double h : h_sequence) {
    double m = INFINITY;
    for (const RatioRow& r : rows)
      if (r.h == h && r.gamma_or_k == gk && r.E == E && std::isfinite(r.ratio)) m = std::min(m, r.ratio);
    out.push_back(m);
  }
  return out;
}

double refinement_slope(const std::vector<double>& h_sequence, const std::vector<double>& min_ratios) {
  if (h_sequence.size() != min_ratios.size() || h_sequence.size() < 2)
    throw PreconditionError("slope fit needs at least two (h, ratio) pairs");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < h_sequence.size(); ++i) {
    x.push_back(std::log(1.0 / h_sequence[i]));
    y.push_back(std::log(min_ratios[i]));
  }
  return ls_slope(x, y);
}

RatioTable check_fursikov_imanuvilov(const DomainSpec& domain, const CarlemanWeight& simple_weight,
                                     const CarlemanCheckParams& params) {
  const GridSpec& g = domain.grid;
  const int n = g.n();
  const double dx3 = std::pow(g.spacing(), 3);
  const std::size_t T = std::size_t(params.trial_count);
  const std::size_t per_trial = params.h_sequence.size() * params.gamma_grid.size() * params.E_values.size();
  std::vector<RatioRow> rows(T * per_trial);
  parallel_for(T, params.jobs, [&](std::size_t t) {
    const ComplexField u = band_limited_field(g, std::max(1, n / 4), derive_seed(params.seed, t));
    std::vector<double> gsq(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) gsq[i] = grad_sq(u, g.ijk(i));
    std::size_t r = t * per_trial;
    for (double h : params.h_sequence)
      for (double gamma : params.gamma_grid) {
        const CarlemanWeight w = with_beta(simple_weight, gamma);
        for (double E : params.E_values) {
          const ComplexField pu = apply_conjugated(u, w, h, E);
          double vol_p = 0, vol_u = 0, vol_g = 0, bnd_u = 0, bnd_g = 0;
          for (int l = 1; l < n - 1; ++l)
            for (int j = 1; j < n - 1; ++j)
              for (int i = 1; i < n - 1; ++i) {
                const std::size_t x = g.index(i, j, l);
                const double ph = w.phi[x];
                vol_p += std::norm(pu[x]);
                vol_u += ph * ph * ph * std::norm(u[x]);
                vol_g += ph * h * h * gsq[x];
              }
          for (std::size_t e = 0; e < domain.boundary.size(); ++e) {
            const std::size_t x = domain.boundary[e].node;
            const double s = domain.surface_weight(e), ph = w.phi[x];
            bnd_u += s * ph * ph * ph * std::norm(u[x]);
            bnd_g += s * ph * h * h * gsq[x];
          }
          const double lhs = dx3 * vol_p + h * (std::pow(gamma, 3) * bnd_u + gamma * bnd_g);
          const double rhs = h * dx3 * (std::pow(gamma, 4) * vol_u + gamma * gamma * vol_g);
          rows[r++] = {h, gamma, E, int(t), lhs, rhs, rhs > 0 ? lhs / rhs : NAN};
        }
      }
  });
  return {rows};
}

ComplexField robin_test_field(const DomainSpec& domain, const AnnulusFamily& family, double k, std::uint64_t seed) {
  const GridSpec& g = domain.grid;
  const ComplexField v = band_limited_field(g, std::max(1, g.n() / 4), seed);
  ComplexField u(g);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = family.theta[i] * v[i];
  const Complex denom(3.0, 2.0 * k * g.spacing());
  std::vector<Complex> acc(g.node_count(), 0.0);
  std::vector<int> cnt(g.node_count(), 0);
  for (const BoundarySample& s : domain.boundary) {
    const int ax = face_axis(s.face), dir = s.normal[ax] > 0 ? 1 : -1;
    Index3 p1 = s.ijk, p2 = s.ijk;
    p1[ax] += dir;
    p2[ax] += 2 * dir;
    acc[s.node] += (4.0 * u[g.index(p1)] - u[g.index(p2)]) / denom;
    cnt[s.node] += 1;
  }
  for (std::size_t i = 0; i < u.size(); ++i)
    if (cnt[i]) u[i] = acc[i] / double(cnt[i]);
  return u;
}

RatioTable check_robin_carleman(const DomainSpec& domain, const AnnulusFamily& family, const CarlemanWeight& weight,
                                const CarlemanCheckParams& params, bool gamma_is_full_boundary) {
  const GridSpec& g = domain.grid;
  const Mask& w0 = family.omega[0];
  const BoundaryPatch& patch = gamma_is_full_boundary ? domain.full : domain.gamma;
  for (double k : params.k_values)
    for (double h : params.h_sequence)
      if (h * k > params.h0)
        throw PreconditionError("Robin Carleman check needs h k <= h0 (h = " + std::to_string(h) +
                                ", k = " + std::to_string(k) + ")");
  const double pmax = max_phi(weight);
  const std::size_t T = std::size_t(params.trial_count);
  const std::size_t per_trial = params.h_sequence.size() * params.E_values.size();
  const std::size_t units = params.k_values.size() * T;
  std::vector<RatioRow> rows(units * per_trial);
  parallel_for(units, params.jobs, [&](std::size_t unit) {
    const double k = params.k_values[unit / T];
    const std::size_t t = unit % T;
    const ComplexField u = robin_test_field(domain, family, k, derive_seed(params.seed, 1000 + t));
    std::vector<double> gsq(g.node_count(), 0.0);
    for (std::size_t i = 0; i < g.node_count(); ++i)
      if (w0[i]) gsq[i] = grad_sq(u, g.ijk(i));
    std::size_t r = unit * per_trial;
    for (double h : params.h_sequence) {
      std::vector<double> ew(g.node_count(), 0.0);
      for (std::size_t i = 0; i < g.node_count(); ++i)
        if (w0[i]) ew[i] = std::exp(2.0 * (weight.phi[i] - pmax) / h);
      for (double E : params.E_values) {
        const ComplexField pu = apply_robin_operator(u, h, E, k);
        double vol_p = 0, vol_r = 0, bnd = 0;
        for (std::size_t i = 0; i < g.node_count(); ++i) {
          if (!w0[i]) continue;
          const double W = domain.volume_weight(i) * ew[i];
          vol_p += W * std::norm(pu[i]);
          vol_r += W * (std::norm(u[i]) + h * h * gsq[i]);
        }
        for (std::size_t e : patch.samples) {
          const BoundarySample& s = domain.boundary[e];
          const double nu2 = h * h * k * k * std::norm(u[s.node]);  // d_nu u = i k u
          bnd += domain.surface_weight(e) * ew[s.node] *
                 (std::norm(u[s.node]) + h * h * tangential_grad_sq(u, s) + nu2);
        }
        const double lhs = vol_p + h * bnd, rhs = h * vol_r;
        rows[r++] = {h, k, E, int(t), lhs, rhs, rhs > 0 ? lhs / rhs : NAN};
      }
    }
  });
  return {rows};
}

UcpFit check_ucp_bound(const DomainSpec& domain, const AnnulusFamily& family, const CarlemanWeight& weight,
                       const ScalarField& q, double k, const std::vector<double>& h_sequence, std::uint64_t seed) {
  const GridSpec& g = domain.grid;
  if (h_sequence.size() < 2) throw PreconditionError("UCP fit needs at least two h values");
  SolverParams sp;
  sp.k = k;
  const ImpedanceOperator op(domain, q, sp);
  const Mask gam = gamma_node_mask(domain, domain.gamma);

  // Unit normal of the Gamma face, pointing out of the box.
  const int gface = domain.boundary[domain.gamma.samples.front()].face;
  const int gax = face_axis(gface);
  const double gsign = face_side(gface) == 1 ? 1.0 : -1.0;

  struct Member {
    std::string label;
    ComplexField F;
    BoundaryTrace f;
  };
  std::vector<Member> members;
  auto bump = [&](double offset, const std::string& label) {
    Member m{label, ComplexField(g, 0.0), BoundaryTrace(domain.boundary.size(), 0.0)};
    Vec3 c{0, 0, 0};
    c[gax] = gsign * offset;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      const Vec3 x = g.position(i);
      Vec3 d{x[0] - c[0], x[1] - c[1], x[2] - c[2]};
      const double r2 = dot(d, d) / (0.12 * 0.12);
      if (r2 < 1 && !family.omega[0][i]) m.F[i] = std::pow(1 - r2, 3);
    }
    members.push_back(std::move(m));
  };
  const double core = 0.5 * g.side() - family.widths[0];
  bump(0.6 * core, "source near Gamma");
  bump(-0.6 * core, "source away from Gamma");
  {
    Member m{"Robin data on Gamma", ComplexField(g, 0.0), BoundaryTrace(domain.boundary.size(), 0.0)};
    const ComplexField v = band_limited_field(g, std::max(1, g.n() / 4), derive_seed(seed, 77));
    for (std::size_t e : domain.gamma.samples) m.f[e] = v[domain.boundary[e].node];
    members.push_back(std::move(m));
  }

  std::vector<std::size_t> gsamples = domain.gamma.samples;
  Mask mid(g, 0);
  for (std::size_t i = 0; i < g.node_count(); ++i) mid[i] = family.omega[2][i] && !family.omega[3][i];
  const double pmax = max_phi(weight);
  const double dx = g.spacing();

  UcpFit fit;
  fit.alpha1 = INFINITY;
  fit.alpha2 = INFINITY;
  for (const Member& m : members) {
    const ComplexField u = op.solve(&m.F, &m.f).u;
    UcpMemberNorms nm;
    nm.label = m.label;
    nm.mid_h1 = h1_norm(u, &mid);
    nm.global_h1 = h1_norm(u);
    Eigen::VectorXcd tr(gsamples.size());
    for (std::size_t i = 0; i < gsamples.size(); ++i) tr[i] = u[domain.boundary[gsamples[i]].node];
    nm.gamma_h1 = h1_patch_norm(domain, domain.gamma, tr);

    ComplexField tu(g), lap_u(g, 0.0), lap_tu(g, 0.0);
    for (std::size_t i = 0; i < g.node_count(); ++i) tu[i] = family.theta[i] * u[i];
    const int n = g.n();
    for (int l = 1; l < n - 1; ++l)
      for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) {
          const std::size_t x = g.index(i, j, l);
          const std::size_t nb[6] = {x - 1, x + 1, x - n, x + n, x - std::size_t(n) * n, x + std::size_t(n) * n};
          Complex a = -6.0 * u[x], b = -6.0 * tu[x];
          for (std::size_t y : nb) {
            a += u[y];
            b += tu[y];
          }
          lap_u[x] = a / (dx * dx);
          lap_tu[x] = b / (dx * dx);
        }
    for (double h : h_sequence) {
      double wm = 0, wc = 0, wg = 0;
      for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (!family.omega[0][i]) continue;
        const double ew = std::exp(2.0 * (weight.phi[i] - pmax) / h);
        const double W = domain.volume_weight(i) * ew;
        if (mid[i]) wm += W * (std::norm(u[i]) + h * h * grad_sq(u, g.ijk(i)));
        if (!on_boundary(g, g.ijk(i))) wc += W * std::norm(h * h * (lap_tu[i] - family.theta[i] * lap_u[i]));
      }
      for (std::size_t e : gsamples) {
        const BoundarySample& s = domain.boundary[e];
        const double ew = std::exp(2.0 * (weight.phi[s.node] - pmax) / h);
        const Complex dn = m.f[e] + Complex(0, k) * u[s.node];
        wg += domain.surface_weight(e) * ew *
              (std::norm(u[s.node]) + h * h * tangential_grad_sq(u, s) + h * h * std::norm(dn));
      }
      nm.w_mid.push_back(h * wm);
      nm.w_comm.push_back(wc);
      nm.w_gamma.push_back(h * wg);
    }
    std::vector<double> x, y1, y2;
    bool degenerate = false;
    for (std::size_t i = 0; i < h_sequence.size(); ++i) {
      if (!(nm.w_mid[i] > 0 && nm.w_comm[i] > 0 && nm.w_gamma[i] > 0)) degenerate = true;
      x.push_back(1.0 / h_sequence[i]);
      y1.push_back(std::log(nm.w_mid[i] / nm.w_comm[i]));
      y2.push_back(std::log(nm.w_gamma[i] / nm.w_mid[i]));
    }
    if (degenerate) {
      fit.degenerate = true;
    } else {
      fit.alpha1 = std::min(fit.alpha1, 0.5 * ls_slope(x, y1));
      fit.alpha2 = std::min(fit.alpha2, 0.5 * ls_slope(x, y2));
    }
    fit.members.push_back(std::move(nm));
  }
  if (fit.degenerate) {
    fit.alpha1 = 0.0;
    fit.alpha2 = 0.0;
  }
  return fit;
}

void write_ratio_csv(const std::string& path, const RatioTable& table) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "h,gamma_or_k,E,trial,lhs,rhs,ratio\n";
  char buf[256];
  for (const RatioRow& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d,%.17g,%.17g,%.17g\n", r.h, r.gamma_or_k, r.E, r.trial, r.lhs,
                  r.rhs, r.ratio);
    out << buf;
  }
}

}  // namespace implab

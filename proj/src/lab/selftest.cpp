#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <unistd.h>

#include "implab/errors.hpp"
#include "implab/lab.hpp"
#include "implab/norms.hpp"
#include "implab/random.hpp"

namespace fs = std::filesystem;

namespace implab::lab {
namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Complex plane_wave(const Vec3& d, double k, const Vec3& x) { return std::polar(1.0, k * dot(d, x)); }

double plane_wave_error(int N, double k) {
  const GridSpec g = GridSpec::centered(1.0, N);
  const DomainSpec dom = build_box_domain(g, GammaSpec{"all", {0.5, 0.5}, 0});
  const Vec3 d{0.48, 0.6, 0.64};
  auto u = [&](const Vec3& x) { return plane_wave(d, k, x); };
  auto gu = [&](const Vec3& x) {
    const Complex v = Complex(0, k) * plane_wave(d, k, x);
    return CVec3{v * d[0], v * d[1], v * d[2]};
  };
  SolverParams sp;
  sp.k = k;
  const BoundaryTrace f = robin_trace(dom, k, u, gu);
  const ComplexField F(g, Complex(0.0));
  const ComplexField sol = solve(dom, ScalarField(g, 0.0), F, f, sp).u;
  const ComplexField ex = sample_field(g, u);
  ComplexField diff(g);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = sol[i] - ex[i];
  return l2_norm(diff) / l2_norm(ex);
}

}  // namespace

std::vector<SelftestResult> run_selftest(const LabConfig& cfg, int jobs, bool quiet) {
  std::vector<SelftestResult> out;
  auto run = [&](const std::string& name, const std::function<std::string(bool&)>& body) {
    SelftestResult r{name, false, ""};
    try {
      bool ok = false;
      r.detail = body(ok);
      r.ok = ok;
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    if (!quiet) std::fprintf(stderr, "[%s] %s  %s\n", r.ok ? "pass" : "FAIL", name.c_str(), r.detail.c_str());
    out.push_back(r);
  };

  const GridSpec g17 = GridSpec::centered(1.0, 17);

  // geometry
  run("geometry.full_top_face", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"z+", {0.5, 0.5}, 10.0});
    ok = d.gamma.size() == 17 * 17;
    return "gamma size " + std::to_string(d.gamma.size());
  });
  run("geometry.degenerate_patch", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"z+", {0.5, 0.5}, 0.0});
    ok = d.gamma.size() == 1;
    return "gamma size " + std::to_string(d.gamma.size());
  });
  run("geometry.disc_enumeration", [&](bool& ok) {
    const GridSpec g = GridSpec::centered(1.0, 33);
    const DomainSpec d = build_box_domain(g, GammaSpec{"z+", {0.5, 0.5}, 0.25});
    std::size_t brute = 0;
    for (int j = 0; j < 33; ++j)
      for (int i = 0; i < 33; ++i) {
        const double x = -0.5 + i / 32.0, y = -0.5 + j / 32.0;
        if (x * x + y * y <= 0.25 * 0.25 + 1e-12) ++brute;
      }
    ok = d.gamma.size() == brute;
    return std::to_string(d.gamma.size()) + " vs " + std::to_string(brute);
  });
  run("geometry.annuli_nesting_and_chi", [&](bool& ok) {
    const GridSpec g = GridSpec::centered(1.0, 33);
    const DomainSpec d = build_box_domain(g, GammaSpec{"all", {0.5, 0.5}, 0});
    const AnnulusFamily fam = build_annuli(d, {0.2, 0.15, 0.1, 0.05});
    ok = true;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      if (fam.omega[3][i] && fam.chi[i] != 0.0) ok = false;
      if (!fam.omega[2][i] && fam.chi[i] != 1.0) ok = false;
      for (int j = 1; j < 4; ++j)
        if (fam.omega[j][i] && !fam.omega[j - 1][i]) ok = false;
    }
    return std::string("chi plateaus and inclusions");
  });
  run("geometry.nonmonotone_widths_rejected", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"all", {0.5, 0.5}, 0});
    try {
      build_annuli(d, {0.1, 0.15, 0.05, 0.02});
    } catch (const GeometryError&) {
      ok = true;
    }
    return std::string("GeometryError expected");
  });
  run("geometry.restrict_support", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"all", {0.5, 0.5}, 0});
    const AnnulusFamily fam = build_annuli(d, {0.2, 0.15, 0.1, 0.05});
    const ScalarField r = restrict_potential_support(ScalarField(g17, 1.0), fam);
    ok = true;
    for (std::size_t i = 0; i < r.size(); ++i)
      if (r[i] != (fam.omega[0][i] ? 0.0 : 1.0)) ok = false;
    ok = ok && restrict_potential_support(r, fam).values() == r.values();
    return std::string("indicator and idempotence");
  });

  // impedance solver
  run("solver.row_sums_and_rows", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"all", {0.5, 0.5}, 0});
    SolverParams sp;
    sp.k = 0.0;
    const ImpedanceOperator op(d, ScalarField(g17, 0.0), sp);
    const SpMat& A = op.matrix();
    const Eigen::VectorXcd sums = A * Eigen::VectorXcd::Ones(A.cols());
    double worst = 0;
    for (int l = 1; l < 16; ++l)
      for (int j = 1; j < 16; ++j)
        for (int i = 1; i < 16; ++i) worst = std::max(worst, std::abs(sums(Eigen::Index(g17.index(i, j, l)))));
    ok = A.rows() == Eigen::Index(g17.node_count()) && worst < 1e-9;
    return fmt("max interior row sum %.2e", worst);
  });
  run("solver.zero_data", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"all", {0.5, 0.5}, 0});
    SolverParams sp;
    sp.k = 1.0;
    const ComplexField u = solve(d, ScalarField(g17, 0.0), ComplexField(g17, Complex(0.0)),
                                 BoundaryTrace(d.boundary.size(), Complex(0.0)), sp)
                               .u;
    ok = sup_norm(u) == 0.0;
    return fmt("sup |u| = %.2e", sup_norm(u));
  });
  run("solver.plane_wave_order", [&](bool& ok) {
    const double e1 = plane_wave_error(17, 2.0), e2 = plane_wave_error(33, 2.0);
    const double order = std::log(e1 / e2) / std::log(32.0 / 16.0);
    ok = order >= 1.7 && order <= 2.3;
    return fmt("order %.3f, error at 33 = %.2e", order, e2);
  });

  // RtD maps on a small grid
  const GridSpec g9 = GridSpec::centered(1.0, 9);
  const DomainSpec d9 = build_box_domain(g9, GammaSpec{"all", {0.5, 0.5}, 0});
  SolverParams sp1;
  sp1.k = 1.0;
  run("rtd.column_matches_solve", [&](bool& ok) {
    const RtdMatrix A = assemble_rtd(d9, ScalarField(g9, 0.0), sp1, jobs);
    const std::size_t b = 37;
    BoundaryTrace f(d9.boundary.size(), Complex(0.0));
    f[b] = 1.0;
    const ComplexField u = solve(d9, ScalarField(g9, 0.0), ComplexField(g9, Complex(0.0)), f, sp1).u;
    double worst = 0;
    for (std::size_t r = 0; r < A.target.size(); ++r)
      worst = std::max(worst, std::abs(A.entries(Eigen::Index(r), Eigen::Index(b)) -
                                        u[d9.boundary[A.target.samples[r]].node]));
    ok = worst == 0.0;
    return fmt("max gap %.2e", worst);
  });
  run("rtd.restriction_consistency", [&](bool& ok) {
    const ScalarField q = band_limited_real_field(g9, 2, 5);
    const RtdMatrix full = assemble_rtd(d9, q, sp1, jobs);
    const DomainSpec dp = build_box_domain(g9, GammaSpec{"z+", {0.5, 0.5}, 0.3});
    const RtdMatrix direct = assemble_rtd(dp, q, sp1, jobs);
    const RtdMatrix restricted = restrict_rtd(full, d9, dp.gamma);
    const double gap = (direct.entries - restricted.entries).cwiseAbs().maxCoeff();
    ok = gap < 1e-12;
    return fmt("max gap %.2e", gap);
  });
  run("rtd.distance_zero_and_symmetric", [&](bool& ok) {
    const ScalarField q = band_limited_real_field(g9, 2, 6);
    const RtdMatrix A = assemble_rtd(d9, q, sp1, jobs), B = assemble_rtd(d9, ScalarField(g9, 0.0), sp1, jobs);
    const double zero = data_distance(d9, A, A).delta;
    const double ab = data_distance(d9, A, B).delta, ba = data_distance(d9, B, A).delta;
    ok = zero == 0.0 && std::abs(ab - ba) <= 1e-6 * ab;
    return fmt("delta(A,A) = %.1e, |ab-ba|/ab = %.1e", zero, std::abs(ab - ba) / ab);
  });
  run("rtd.noise_level", [&](bool& ok) {
    const RtdMatrix A = assemble_rtd(d9, ScalarField(g9, 0.0), sp1, jobs);
    const bool same = add_noise(d9, A, 0.0, 3).entries == A.entries;
    const RtdMatrix N = add_noise(d9, A, 1e-3, 3);
    RtdMatrix D = N;
    D.entries = N.entries - A.entries;
    const double n = operator_norm(d9, A.target, D.entries).delta;
    ok = same && n >= 0.98e-3 && n <= 1.02e-3;
    return fmt("||noise|| = %.4e", n);
  });

  // CGO
  run("cgo.frame_identities", [&](bool& ok) {
    const CgoFrame f = build_frame({0, 0, 0}, 1.0, 1.0, 1);
    const Complex zz = dot(f.zeta1, f.zeta1);
    bool hand = false;
    for (std::uint64_t s = 0; s < 16 && !hand; ++s) {
      const CgoFrame h = build_frame({2, 0, 0}, 2.0, 3.0, s);
      if (h.mu2 != Vec3{0, 0, 1}) continue;
      hand = std::abs(h.zeta1[0] - Complex(-1, 0)) < 1e-14 && std::abs(h.zeta1[1] - std::sqrt(12.0)) < 1e-14 &&
             std::abs(h.zeta1[2] - Complex(0, 3)) < 1e-14 && std::abs(dot(h.zeta1, h.zeta1) - 4.0) < 1e-12;
    }
    const CgoFrame t = build_frame({1.5, -0.5, 2.0}, 2.0, 5.0, 3);
    double sum_gap = 0;
    for (int c = 0; c < 3; ++c) sum_gap = std::max(sum_gap, std::abs(t.zeta1[c] + t.zeta2[c] + t.xi[c]));
    ok = std::abs(zz - 1.0) < 1e-12 && hand && sum_gap < 1e-14;
    return fmt("zeta.zeta-1 = %.1e, zeta1+zeta2+xi = %.1e", std::abs(zz - 1.0), sum_gap);
  });
  run("cgo.zero_potential", [&](bool& ok) {
    const CubeSpec cube = make_cube(g17, 2);
    const CgoFrame f = build_frame({0, 0, 0}, 2.0, 4.0, 1);
    const CgoSolution s = solve_remainder(extend_potential(ScalarField(g17, 0.0), cube), cube, f, 1, 1e-12);
    double m = 0;
    for (const Complex& v : s.r) m = std::max(m, std::abs(v));
    ok = m == 0.0 && s.iterations <= 1;
    return fmt("max |r| = %.1e", m);
  });
  run("cgo.residual_and_decay", [&](bool& ok) {
    const Setup st = build_setup(cfg);
    const GridSpec& g = st.domain.grid;
    ScalarField q(g, 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) {
      const Vec3 x = g.position(i);
      q[i] = std::exp(-dot(x, x) / 0.05);
    }
    const CubeSpec cube = make_cube(g, cfg.cgo.pad_factor);
    const ScalarField qe = extend_potential(q, cube);
    double lo = 1e300, hi = 0, res = 0;
    for (double a : {4.0, 8.0, 16.0}) {
      const CgoSolution s = solve_remainder(qe, cube, build_frame({0, 0, 0}, 2.0, a, 1), 1, 1e-12);
      lo = std::min(lo, s.remainder_l2 * a);
      hi = std::max(hi, s.remainder_l2 * a);
      res = std::max(res, s.residual);
    }
    ok = hi / lo <= 2.0 && res <= 1e-11;
    return fmt("a||r|| spread %.3f, residual %.1e", hi / lo, res);
  });
  run("cgo.impedance_reproduces_cgo", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"all", {0.5, 0.5}, 0});
    const CubeSpec cube = make_cube(g17, 2);
    const CgoFrame f = discretize_frame(build_frame({0, 0, 0}, 2.0, 3.0, 1), cube.h);
    const CgoSolution s =
        solve_remainder(extend_potential(ScalarField(g17, 0.0), cube), cube, f, 1, 1e-12, CgoMode::GridExact);
    const ComplexField u = evaluate_cgo(s, g17).u;
    SolverParams sp;
    sp.k = 2.0;
    const ComplexField v = solve(d, ScalarField(g17, 0.0), ComplexField(g17, Complex(0.0)), cgo_robin_trace(s, d), sp).u;
    ComplexField diff(g17);
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = v[i] - u[i];
    const double rel = l2_norm(diff) / l2_norm(u);
    ok = rel < 1e-8;
    return fmt("relative gap %.2e", rel);
  });

  // Carleman
  run("carleman.simple_weight", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"all", {0.5, 0.5}, 0});
    const CarlemanWeight w = build_simple_weight(d, 2.0);
    double mn = 1e300, gx = 0, mx = 0, pmin = 1e300, pmax = 0;
    const double h = g17.spacing();
    for (std::size_t i = 0; i < g17.node_count(); ++i) {
      mn = std::min(mn, w.psi[i]);
      pmin = std::min(pmin, w.phi[i]);
      pmax = std::max(pmax, w.phi[i]);
    }
    for (int l = 1; l < 16; ++l)
      for (int j = 1; j < 16; ++j)
        for (int i = 1; i < 16; ++i) {
          gx = std::max(gx, std::abs((w.psi.at(i + 1, j, l) - w.psi.at(i - 1, j, l)) / (2 * h) - 1.0));
          mx = std::max(mx, std::abs(w.psi.at(i, j + 1, l) - w.psi.at(i, j - 1, l)) +
                                std::abs(w.psi.at(i, j, l + 1) - w.psi.at(i, j, l - 1)));
        }
    const double ratio_gap = std::abs(std::log(pmax / pmin) - std::log(std::exp(2.0 * 1.0)));
    ok = std::abs(mn - 1.0) < 1e-14 && gx < 1e-12 && mx == 0.0 && ratio_gap < 1e-12;
    return fmt("min psi %.3f, gradient gap %.1e", mn, gx);
  });
  run("carleman.constant_phi_is_plain_operator", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"all", {0.5, 0.5}, 0});
    CarlemanWeight w = build_simple_weight(d, 1.0);
    for (std::size_t i = 0; i < g17.node_count(); ++i) w.phi[i] = 2.0;
    const ComplexField u = band_limited_field(g17, 3, 9);
    const double h = 0.1, E = 0.5;
    const ComplexField a = apply_conjugated(u, w, h, E);
    const double dx = g17.spacing();
    double worst = 0;
    for (int l = 1; l < 16; ++l)
      for (int j = 1; j < 16; ++j)
        for (int i = 1; i < 16; ++i) {
          const Complex lap = (u.at(i + 1, j, l) + u.at(i - 1, j, l) + u.at(i, j + 1, l) + u.at(i, j - 1, l) +
                               u.at(i, j, l + 1) + u.at(i, j, l - 1) - 6.0 * u.at(i, j, l)) /
                              (dx * dx);
          worst = std::max(worst, std::abs(a.at(i, j, l) - (-h * h * lap - E * u.at(i, j, l))));
        }
    ok = worst < 1e-10;
    return fmt("max gap %.2e", worst);
  });
  run("carleman.decomposition_identity", [&](bool& ok) {
    const double e = decomposition_identity_error(cfg.seed, 0.1, 0.5, 32);
    ok = e < 1e-10;
    return fmt("max relative gap %.2e", e);
  });

  // probe
  run("probe.schedule", [&](bool& ok) {
    bool rejected = false;
    try {
      make_schedule(1.0, std::exp(-1.0), 1.0, 1.0);
    } catch (const PreconditionError&) {
      rejected = true;
    }
    const ScheduleParams p = make_schedule(1.0, std::exp(-4.0), 1.0, 1.0);
    const ScheduleParams p2 = make_schedule(2.0, std::exp(-4.0), 1.0, 1.0);
    ok = rejected && std::abs(p.a - 2.0) < 1e-14 && std::abs(p.rho - 1.3195079107728942) < 1e-12 && p2.a > p.a &&
         p2.rho > p.rho;
    return fmt("a = %.6f, rho = %.6f", p.a, p.rho);
  });
  run("probe.pairing_trivial", [&](bool& ok) {
    const DomainSpec d = build_box_domain(g17, GammaSpec{"all", {0.5, 0.5}, 0});
    const ComplexField u1 = band_limited_field(g17, 2, 1), u2 = band_limited_field(g17, 2, 2);
    const ScalarField q = band_limited_real_field(g17, 2, 3);
    const Complex zero = alessandrini_pairing(q, q, u1, u2, d);
    ScalarField spike(g17, 0.0);
    const std::size_t n = g17.index(8, 7, 9);
    spike[n] = 0.75;
    const Complex v = alessandrini_pairing(spike, ScalarField(g17, 0.0), u1, u2, d);
    const double dx = g17.spacing();
    const Complex want = 0.75 * u1[n] * u2[n] * dx * dx * dx;
    ok = zero == 0.0 && std::abs(v - want) <= 1e-15 * std::abs(want);
    return fmt("spike gap %.1e", std::abs(v - want));
  });
  run("probe.lowpass_oracle", [&](bool& ok) {
    const Setup st = build_setup(cfg);
    const PotentialPair pp = synthetic_pair(st, 1.0);
    const ProbeLattice lat = make_probe_lattice(st.domain.grid, 2, 4.0);
    std::vector<ProbeResult> est(lat.half.size());
    std::vector<Complex> c(lat.half.size());
    for (std::size_t j = 0; j < est.size(); ++j) {
      est[j].xi = lat.xi(lat.half[j]);
      est[j].mode = lat.half[j];
      c[j] = est[j].fourier_estimate = direct_fourier(pp.difference, est[j].xi);
    }
    const ReconstructionResult rr = lowpass_reconstruct(est, lat, st.domain, &pp.difference);
    const double tail = lowpass_h_minus1_error(pp.difference, lat, &c);
    std::vector<ProbeResult> zeros = est;
    for (auto& z : zeros) z.fourier_estimate = 0.0;
    const double zero_field = sup_norm(lowpass_reconstruct(zeros, lat, st.domain).lowpass_field);
    ok = std::abs(rr.h_minus1_error - tail) <= 1e-10 * tail && rr.imaginary_residue <= 1e-8 && zero_field == 0.0 &&
         rr.h_minus1_error < h_minus1_norm(pp.difference, 2);
    return fmt("oracle error %.4e, imaginary residue %.1e", rr.h_minus1_error, rr.imaginary_residue);
  });
  run("probe.h_minus1_bounds", [&](bool& ok) {
    const ScalarField f = band_limited_real_field(g17, 3, 11);
    const double hm = h_minus1_norm(f, 2), l2 = sobolev_norm(f, 0.0, 2);
    ok = h_minus1_norm(ScalarField(g17, 0.0), 2) == 0.0 && hm <= l2;
    return fmt("H-1 %.4e <= L2 %.4e", hm, l2);
  });
  run("probe.interpolation_exponents", [&](bool& ok) {
    const InterpolationReport r = interpolation_check(band_limited_real_field(g17, 2, 4), 2.5, 2);
    const InterpolationReport z = interpolation_check(ScalarField(g17, 0.0), 2.5, 2);
    ok = std::abs(r.exp_minus1 - 1.0 / 7.0) < 1e-15 && std::abs(r.exp_s - 6.0 / 7.0) < 1e-15 && z.trivial;
    return fmt("exponents %.6f, %.6f", r.exp_minus1, r.exp_s);
  });

  // lab plumbing
  run("lab.config_strict", [&](bool& ok) {
    bool rejected = false;
    try {
      parse_config(default_config_text() + "bogus = 1\n");
    } catch (const ConfigError&) {
      rejected = true;
    }
    const LabConfig c = parse_config(default_config_text());
    ok = rejected && c.geometry.points == 17;
    return std::string("unknown key rejected, defaults parse");
  });
  run("lab.cache_roundtrip_and_eviction", [&](bool& ok) {
    const fs::path dir = fs::temp_directory_path() / ("implab-selftest-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    Cache cache(dir);
    const RtdFetch first = cached_rtd(cache, d9, ScalarField(g9, 0.0), sp1, jobs);
    const RtdFetch second = cached_rtd(cache, d9, ScalarField(g9, 0.0), sp1, jobs);
    SolverParams sp2 = sp1;
    sp2.k = 1.5;
    const bool miss_on_k = !cache.get_rtd(rtd_key(d9, ScalarField(g9, 0.0), sp2), d9.gamma).has_value();
    const fs::path file = dir / (rtd_key(d9, ScalarField(g9, 0.0), sp1) + ".rtdm");
    {
      std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(100);
      char c = 0;
      f.read(&c, 1);
      f.seekp(100);
      c = char(c ^ 0x5a);
      f.write(&c, 1);
    }
    bool evicted = false;
    try {
      cached_rtd(cache, d9, ScalarField(g9, 0.0), sp1, jobs);
    } catch (const CacheCorruption&) {
      evicted = !fs::exists(file);
    }
    fs::remove_all(dir);
    ok = !first.hit && second.hit && second.solves == 0 && second.matrix.entries == first.matrix.entries &&
         miss_on_k && evicted;
    return std::string("hit on rerun, miss on k, eviction on corruption");
  });

  return out;
}

}  // namespace implab::lab

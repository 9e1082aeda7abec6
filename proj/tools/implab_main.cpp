#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "implab/errors.hpp"
#include "implab/lab.hpp"
#include "implab/norms.hpp"
#include "implab/random.hpp"

namespace fs = std::filesystem;
using namespace implab;
using namespace implab::lab;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  std::string out, cache;
  bool quiet = false;
  bool noise_free = false;
};

struct Context {
  LabConfig cfg;
  fs::path out;
  std::unique_ptr<Cache> cache;
  std::unique_ptr<Manifest> manifest;
  int jobs = 1;
  bool quiet = false;

  void log(const std::string& s) const {
    if (!quiet) std::fprintf(stderr, "%s\n", s.c_str());
  }
};

Context open_context(const Options& o, const std::string& command, bool need_cache) {
  Context c;
  c.cfg = o.config.empty() ? parse_config(default_config_text()) : load_config(o.config);
  if (o.seed_set) c.cfg.seed = o.seed;
  if (!o.out.empty()) c.cfg.output_dir = o.out;
  if (!o.cache.empty()) c.cfg.cache_dir = o.cache;
  c.cfg.canonical = canonical_dump(c.cfg);
  c.out = c.cfg.output_dir;
  fs::create_directories(c.out);
  c.jobs = std::max(1, o.jobs);
  c.quiet = o.quiet;
  if (need_cache) {
    std::string dir = c.cfg.cache_dir;
    if (dir.empty())
      if (const char* env = std::getenv("IMPLAB_CACHE")) dir = env;
    if (dir.empty()) dir = (c.out / "cache").string();
    c.cache = std::make_unique<Cache>(dir);
  }
  c.manifest = std::make_unique<Manifest>(c.out, command, c.cfg);
  return c;
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

SolverParams solver_for(const LabConfig& cfg, double k) {
  SolverParams sp = cfg.solver;
  sp.k = k;
  return sp;
}

CgoMode cgo_mode(const LabConfig& cfg) { return cfg.cgo.mode == "continuum" ? CgoMode::Continuum : CgoMode::GridExact; }

// Remainder solve through the cache.
CgoSolution cached_cgo(Context& c, const ScalarField& qe, const CubeSpec& cube, const CgoFrame& frame, int which) {
  const CgoMode mode = cgo_mode(c.cfg);
  const std::string key = cgo_key(qe, cube, frame, which, c.cfg.cgo.tolerance, mode);
  CgoSolution s;
  s.frame = frame;
  s.which = which;
  s.mode = mode;
  s.cube = cube;
  s.r.assign(std::size_t(cube.M) * cube.M * cube.M, Complex(0.0));
  s.q_sup = sup_norm(qe);
  if (c.cache->get_cgo(key, s)) return s;
  s = solve_remainder(qe, cube, frame, which, c.cfg.cgo.tolerance, mode);
  c.cache->put_cgo(key, s);
  return s;
}

CgoFrame frame_for(const LabConfig& cfg, const Vec3& xi, double k, double a, double dx) {
  CgoFrame f = build_frame(xi, k, a, cfg.cgo.seed);
  return cfg.cgo.mode == "continuum" ? f : discretize_frame(f, dx);
}

int cmd_solve(Context& c) {
  Stopwatch sw;
  const Setup st = build_setup(c.cfg);
  check_pollution(st.domain.grid, c.cfg.k);
  const PotentialPair pp = synthetic_pair(st, c.cfg.probe.dq_amplitude);
  const GridSpec& g = st.domain.grid;
  const ComplexField F = band_limited_field(g, 3, derive_seed(c.cfg.seed, 1));
  const BoundaryTrace f(st.domain.boundary.size(), Complex(0.0));
  const ImpedanceSolution sol = solve(st.domain, pp.q2, F, f, solver_for(c.cfg, c.cfg.k));
  write_imps((c.out / "solution.imps").string(), sol.u);
  std::ofstream csv(c.out / "solve.csv");
  csv << "k,N,residual,iterations,u_l2,u_h1,F_l2\n"
      << num(c.cfg.k) << "," << g.n() << "," << num(sol.residual) << "," << sol.iterations << ","
      << num(l2_norm(sol.u)) << "," << num(h1_norm(sol.u)) << "," << num(l2_norm(F)) << "\n";
  c.manifest->stage("solve", sw.seconds());
  c.log("solve: residual " + num(sol.residual) + ", wrote solution.imps");
  return 0;
}

int cmd_rtd(Context& c) {
  Stopwatch sw;
  const Setup st = build_setup(c.cfg);
  check_pollution(st.domain.grid, c.cfg.k);
  const PotentialPair pp = synthetic_pair(st, c.cfg.probe.dq_amplitude);
  const RtdFetch r = cached_rtd(*c.cache, st.domain, pp.q2, solver_for(c.cfg, c.cfg.k), c.jobs);
  std::ofstream csv(c.out / "rtd.csv");
  csv << "k,gamma_size,boundary_size,cache_hit,solves,wall_seconds\n"
      << num(c.cfg.k) << "," << r.matrix.target.size() << "," << r.matrix.source_count << "," << (r.hit ? 1 : 0)
      << "," << r.solves << "," << num(sw.seconds()) << "\n";
  c.manifest->stage("rtd", sw.seconds());
  c.manifest->set("rtd_cache", r.hit ? "hit" : "miss");
  std::printf("rtd: cache %s, %zu solves\n", r.hit ? "hit" : "miss", r.solves);
  return 0;
}

int cmd_cgo(Context& c) {
  Stopwatch sw;
  const Setup st = build_setup(c.cfg);
  const PotentialPair pp = synthetic_pair(st, c.cfg.probe.dq_amplitude);
  const CubeSpec cube = make_cube(st.domain.grid, c.cfg.cgo.pad_factor);
  const ScalarField qe = extend_potential(pp.q2, cube);
  const CgoFrame f = frame_for(c.cfg, c.cfg.cgo.xi, c.cfg.k, c.cfg.cgo.a, cube.h);
  std::ofstream csv(c.out / "cgo.csv");
  csv << "xi1,xi2,xi3,a,k,which,remainder_l2,a_times_r,contraction,contraction_bound,residual,iterations,"
         "growth_ratio\n";
  bool certified = true;
  for (int which : {1, 2}) {
    const CgoSolution s = cached_cgo(c, qe, cube, f, which);
    const CgoEvaluation ev = evaluate_cgo(s, st.domain.grid);
    csv << num(f.xi[0]) << "," << num(f.xi[1]) << "," << num(f.xi[2]) << "," << num(f.a) << "," << num(f.k) << ","
        << which << "," << num(s.remainder_l2) << "," << num(s.remainder_l2 * f.a) << "," << num(s.contraction) << ","
        << num(s.contraction_bound) << "," << num(s.residual) << "," << s.iterations << "," << num(ev.growth_ratio)
        << "\n";
    certified = certified && s.contraction < 1 && s.residual <= 10 * c.cfg.cgo.tolerance;
  }
  c.manifest->stage("cgo", sw.seconds());
  c.manifest->set("cgo_certified", certified ? "yes" : "no");
  if (!certified) throw NumericalError("cgo", "remainder not certified (contraction or residual out of bounds)");
  c.log("cgo: certified, wrote cgo.csv");
  return 0;
}

int cmd_calibrate(Context& c) {
  Stopwatch sw;
  const Setup st = build_setup(c.cfg);
  const PotentialPair pp = synthetic_pair(st, c.cfg.probe.dq_amplitude);
  const std::vector<ScalarField> family{pp.q2, pp.q1, pp.difference};
  const CgoConstants cc = calibrate_constants(st.domain, family, {4.0, 8.0, 16.0}, {c.cfg.k}, c.cfg.cgo.seed,
                                              c.cfg.cgo.pad_factor, c.cfg.cgo.tolerance);
  write_constants((c.out / "cgo_constants.txt").string(), cc);
  c.manifest->stage("calibrate", sw.seconds());
  c.log("calibrate: C0 = " + num(cc.C0) + ", C1 = " + num(cc.C1));
  return 0;
}

int cmd_carleman(Context& c) {
  const Setup st = build_setup(c.cfg);
  const CarlemanConfig& cm = c.cfg.carleman;
  CarlemanCheckParams params;
  params.h_sequence = cm.h_sequence;
  params.gamma_grid = cm.gamma_grid;
  params.trial_count = cm.trials;
  params.seed = c.cfg.seed;
  params.jobs = c.jobs;

  Stopwatch sw;
  const RatioTable fi = check_fursikov_imanuvilov(st.domain, build_simple_weight(st.domain, 1.0), params);
  write_ratio_csv((c.out / "fi_ratios.csv").string(), fi);
  c.manifest->stage("carleman.interior", sw.seconds());

  Stopwatch sw2;
  WeightReport report;
  const CarlemanWeight w =
      build_gamma_weight(st.domain, st.family, c.cfg.seed, cm.beta0, cm.g_min, cm.retry_budget, &report, true);
  std::ofstream(c.out / "weight_report.txt") << report.describe() << "\nkappa = " << num(w.kappa) << "\n";
  c.manifest->stage("carleman.weight", sw2.seconds());

  Stopwatch sw3;
  const RatioTable rb = check_robin_carleman(st.domain, st.family, w, params, st.domain.gamma.size() == st.domain.boundary.size());
  write_ratio_csv((c.out / "robin_ratios.csv").string(), rb);
  c.manifest->stage("carleman.robin", sw3.seconds());

  Stopwatch sw4;
  const PotentialPair pp = synthetic_pair(st, c.cfg.probe.dq_amplitude);
  const UcpFit fit = check_ucp_bound(st.domain, st.family, w, pp.q2, c.cfg.k, cm.h_sequence, c.cfg.seed);
  {
    std::ofstream u(c.out / "ucp.csv");
    u << "member,h,w_mid,w_comm,w_gamma\n";
    for (const UcpMemberNorms& m : fit.members)
      for (std::size_t i = 0; i < m.w_mid.size(); ++i)
        u << m.label << "," << num(cm.h_sequence[i]) << "," << num(m.w_mid[i]) << "," << num(m.w_comm[i]) << ","
          << num(m.w_gamma[i]) << "\n";
  }
  c.manifest->stage("carleman.ucp", sw4.seconds());

  std::ofstream s(c.out / "carleman_summary.csv");
  s << "check,parameter,E,slope\n";
  for (double gm : params.gamma_grid)
    for (double E : params.E_values)
      s << "interior," << num(gm) << "," << num(E) << ","
        << num(refinement_slope(params.h_sequence, fi.min_ratios(params.h_sequence, gm, E))) << "\n";
  for (double k : params.k_values)
    for (double E : params.E_values)
      s << "robin," << num(k) << "," << num(E) << ","
        << num(refinement_slope(params.h_sequence, rb.min_ratios(params.h_sequence, k, E))) << "\n";
  s << "ucp,alpha1,," << num(fit.alpha1) << "\nucp,alpha2,," << num(fit.alpha2) << "\n";
  c.manifest->set("weight_verified", report.ok() ? "yes" : "no");
  if (!report.ok())
    throw NumericalError("carleman.weight",
                         "weight checks failed after " + std::to_string(report.attempts) +
                             " attempts; downstream tables use the best unverified candidate: " + report.describe());
  return 0;
}

int cmd_probe(Context& c) {
  Stopwatch sw;
  const Setup st = build_setup(c.cfg);
  check_pollution(st.domain.grid, c.cfg.k);
  const PotentialPair pp = synthetic_pair(st, c.cfg.probe.dq_amplitude);
  const SolverParams sp = solver_for(c.cfg, c.cfg.k);
  RtdMatrix L1 = cached_rtd(*c.cache, st.domain, pp.q1, sp, c.jobs).matrix;
  const RtdMatrix L2 = cached_rtd(*c.cache, st.domain, pp.q2, sp, c.jobs).matrix;
  if (c.cfg.probe.noise_delta > 0) L1 = add_noise(st.domain, L1, c.cfg.probe.noise_delta, derive_seed(c.cfg.seed, 77));
  c.manifest->stage("probe.rtd", sw.seconds());
  Stopwatch sw2;
  const CubeSpec cube = make_cube(st.domain.grid, c.cfg.cgo.pad_factor);
  const CgoFrame f = frame_for(c.cfg, c.cfg.cgo.xi, c.cfg.k, c.cfg.cgo.a, cube.h);
  // q1 enters the CGO for u1 on the oracle side only; the estimator sees it through L1.
  const CgoSolution s1 = cached_cgo(c, extend_potential(pp.q1, cube), cube, f, 1);
  const CgoSolution s2 = cached_cgo(c, extend_potential(pp.q2, cube), cube, f, 2);
  const ProbeResult r = fourier_estimate(L1, L2, s2, s1, c.cfg.cgo.xi, st.domain);
  const Complex dft = direct_fourier(pp.difference, c.cfg.cgo.xi);
  std::ofstream csv(c.out / "probe.csv");
  csv << "xi1,xi2,xi3,k,a,estimate_re,estimate_im,dft_re,dft_im,abs_error,identity_residual,r1_l2,r2_l2\n"
      << num(f.xi[0]) << "," << num(f.xi[1]) << "," << num(f.xi[2]) << "," << num(c.cfg.k) << "," << num(f.a) << ","
      << num(r.fourier_estimate.real()) << "," << num(r.fourier_estimate.imag()) << "," << num(dft.real()) << ","
      << num(dft.imag()) << "," << num(std::abs(r.fourier_estimate - dft)) << "," << num(r.identity_residual) << ","
      << num(s1.remainder_l2) << "," << num(s2.remainder_l2) << "\n";
  c.manifest->stage("probe.estimate", sw2.seconds());
  c.log("probe: |estimate - DFT| = " + num(std::abs(r.fourier_estimate - dft)));
  return 0;
}

int cmd_sweep(Context& c, bool noise_free) {
  Stopwatch sw;
  const Setup st = build_setup(c.cfg);
  const PotentialPair pp = synthetic_pair(st, c.cfg.probe.dq_amplitude);
  for (double k : c.cfg.probe.k_list) check_pollution(st.domain.grid, k);
  StabilityConfig sc;
  sc.h0_gamma = c.cfg.probe.h0_gamma;
  sc.alpha4 = c.cfg.probe.alpha4;
  sc.use_synthetic_delta = c.cfg.probe.use_synthetic_delta;
  sc.noise_free = noise_free;
  sc.lattice_pad = c.cfg.probe.lattice_pad;
  sc.cgo_pad = c.cfg.cgo.pad_factor;
  sc.cgo_tolerance = c.cfg.cgo.tolerance;
  sc.seed = c.cfg.seed;
  sc.jobs = c.jobs;
  sc.solver = c.cfg.solver;
  sc.quiet = c.quiet;
  const RtdProvider provider = [&](const ScalarField& q, double k) {
    return cached_rtd(*c.cache, st.domain, q, solver_for(c.cfg, k), c.jobs).matrix;
  };
  const double delta = noise_free ? 0.0 : c.cfg.probe.noise_delta;
  const auto records = run_stability_experiment(st.domain, pp.q1, pp.q2, c.cfg.probe.k_list, delta, sc, provider);
  write_stability_csv((c.out / "stability.csv").string(), records);
  c.manifest->stage("sweep", sw.seconds());
  c.manifest->set("variant", noise_free ? "noise_free" : "noisy");
  for (const StabilityRecord& r : records)
    if (!r.ok) {
      c.manifest->set("k=" + num(r.k), r.note);
      c.log("sweep: k = " + num(r.k) + " aborted: " + r.note);
    }
  return 0;
}

int cmd_plot(Context& c) {
  const auto scripts = emit_plot_scripts(c.out);
  for (const auto& s : scripts) c.log("plot: wrote " + s);
  return 0;
}

int cmd_selftest(Context& c) {
  Stopwatch sw;
  const auto results = run_selftest(c.cfg, c.jobs, c.quiet);
  std::ofstream csv(c.out / "selftest.csv");
  csv << "check,ok,detail\n";
  int failed = 0;
  for (const auto& r : results) {
    std::string d = r.detail;
    for (char& ch : d)
      if (ch == ',' || ch == '\n') ch = ';';
    csv << r.name << "," << (r.ok ? 1 : 0) << "," << d << "\n";
    failed += r.ok ? 0 : 1;
  }
  c.manifest->stage("selftest", sw.seconds());
  std::printf("selftest: %zu checks, %d failed\n", results.size(), failed);
  if (failed) throw NumericalError("selftest", std::to_string(failed) + " checks failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"implab: impedance inverse-problem laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "INI config file (defaults built in when omitted)");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { o.seed = s, o.seed_set = true; }, "override the global seed");
  app.add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", o.out, "output directory (overrides output_dir)");
  app.add_option("--cache", o.cache, "cache directory (overrides cache_dir and IMPLAB_CACHE)");
  app.add_flag("--quiet", o.quiet, "suppress progress output");

  struct Sub {
    const char* name;
    const char* help;
    bool cache;
  };
  const Sub subs[] = {{"solve", "one impedance solve, dump the field", false},
                      {"rtd", "assemble and cache a Robin-to-Dirichlet map", true},
                      {"cgo", "build and certify one CGO pair", true},
                      {"calibrate", "calibrate CGO constants", false},
                      {"carleman", "Carleman inequality and weight checks", false},
                      {"probe", "single-frequency Fourier estimate", true},
                      {"sweep", "stability experiment over probe.k_list", true},
                      {"plot", "emit gnuplot scripts for CSVs in the output directory", false},
                      {"selftest", "run the built-in example suite", false}};
  for (const Sub& s : subs) {
    CLI::App* sc = app.add_subcommand(s.name, s.help);
    if (std::string(s.name) == "sweep") sc->add_flag("--noise-free", o.noise_free, "delta = 0 variant");
  }
  CLI11_PARSE(app, argc, argv);

  const CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  bool need_cache = false;
  for (const Sub& s : subs)
    if (name == s.name) need_cache = s.cache;

  std::unique_ptr<Context> ctx;
  int code = 0;
  try {
    ctx = std::make_unique<Context>(open_context(o, name, need_cache));
    Context& c = *ctx;
    if (name == "solve") code = cmd_solve(c);
    else if (name == "rtd") code = cmd_rtd(c);
    else if (name == "cgo") code = cmd_cgo(c);
    else if (name == "calibrate") code = cmd_calibrate(c);
    else if (name == "carleman") code = cmd_carleman(c);
    else if (name == "probe") code = cmd_probe(c);
    else if (name == "sweep") code = cmd_sweep(c, o.noise_free);
    else if (name == "plot") code = cmd_plot(c);
    else if (name == "selftest") code = cmd_selftest(c);
  } catch (const CacheCorruption& e) {
    std::fprintf(stderr, "cache corruption: %s\n", e.what());
    code = 3;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure in stage %s\n", e.what());
    code = 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    code = 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure in stage %s: %s\n", name.c_str(), e.what());
    code = 2;
  }
  if (ctx && name != "plot") {
    try {
      ctx->manifest->set("exit_code", std::to_string(code));
      ctx->manifest->write(ctx->cache.get());
    } catch (const std::exception& e) {
      std::fprintf(stderr, "manifest: %s\n", e.what());
    }
  } else if (ctx && code == 0) {
    ctx->manifest->write(nullptr);
  }
  return code;
}

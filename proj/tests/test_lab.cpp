#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "implab/errors.hpp"
#include "implab/lab.hpp"

using namespace implab;
using namespace implab::lab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("implab-test-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(IMPLAB_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

void flip_byte(const fs::path& p, std::streamoff at) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(at);
  char c = 0;
  f.read(&c, 1);
  c = char(c ^ 0x5a);
  f.seekp(at);
  f.write(&c, 1);
}

// dx = 0.1: each annulus gains one node layer
const char* kSmallGrid = "[geometry]\npoints = 11\ngamma_radius = 0.3\nwidths = 0.35, 0.25, 0.15, 0.05\n";

}  // namespace

TEST_SUITE("lab") {
  TEST_CASE("default configuration parses and dumps canonically") {
    const LabConfig c = parse_config(default_config_text());
    const LabConfig d;
    CHECK(c.k == d.k);
    CHECK(c.geometry.points == 17);
    CHECK(c.geometry.gamma_face == "z+");
    CHECK(c.probe.k_list == std::vector<double>{2, 4, 8});
    CHECK(c.carleman.h_sequence == std::vector<double>{0.4, 0.2, 0.1, 0.05});
    CHECK(!c.canonical.empty());
    CHECK(canonical_dump(c) == c.canonical);
    const LabConfig e = parse_config("k = 3\n");
    CHECK(e.k == 3.0);
    CHECK(e.canonical != c.canonical);
    // locations are not part of the experiment identity
    CHECK(parse_config("output_dir = elsewhere\n").canonical == parse_config("").canonical);
  }

  TEST_CASE("strict schema") {
    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nowhere]\nk = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[geometry]\nradius = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("k = two\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[geometry]\npoints = 4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[geometry]\npoints = 9.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[probe]\nuse_synthetic_delta = maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[probe]\nk_list =\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[solver]\nmethod = cg\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/implab.ini"), ConfigError);
    try {
      parse_config("[cgo]\nmagic = 1\n");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("cgo.magic") != std::string::npos);
    }
    const LabConfig lists = parse_config("[carleman]\ngamma_grid = 1, 2.5 ,4\n");
    CHECK(lists.carleman.gamma_grid == std::vector<double>{1, 2.5, 4});
  }

  TEST_CASE("SHA-256 digests") {
    CHECK(sha256_hex("abc", 3) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("", 0) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    TempDir t("sha");
    write_text(t.path / "f.txt", "abc");
    CHECK(sha256_file(t.path / "f.txt") == sha256_hex("abc", 3));
  }

  TEST_CASE("cache keys separate every input") {
    const LabConfig cfg = parse_config(kSmallGrid);
    const Setup st = build_setup(cfg);
    const ScalarField q0(st.domain.grid, 0.0);
    ScalarField q1 = q0;
    q1[100] = 1e-12;
    SolverParams a, b;
    a.k = 1.0;
    b.k = 1.5;
    const std::string base = rtd_key(st.domain, q0, a);
    CHECK(base.size() == 64);
    CHECK(rtd_key(st.domain, q0, a) == base);
    CHECK(rtd_key(st.domain, q0, b) != base);
    CHECK(rtd_key(st.domain, q1, a) != base);
    const Setup other = build_setup(parse_config(std::string(kSmallGrid) + "gamma_face = x-\n"));
    CHECK(rtd_key(other.domain, q0, a) != base);
    CHECK(field_hash(q0) != field_hash(q1));
  }

  TEST_CASE("cache round trip, miss and corruption") {
    TempDir t("cache");
    const Setup st = build_setup(parse_config(kSmallGrid));
    const ScalarField q(st.domain.grid, 0.0);
    SolverParams sp;
    sp.k = 1.0;
    Cache cache(t.path / "c");
    const RtdFetch first = cached_rtd(cache, st.domain, q, sp, 1);
    CHECK(!first.hit);
    CHECK(first.solves == st.domain.boundary.size());
    const RtdFetch second = cached_rtd(cache, st.domain, q, sp, 1);
    CHECK(second.hit);
    CHECK(second.solves == 0);
    CHECK(second.matrix.entries == first.matrix.entries);
    CHECK(cache.hits == 1);
    CHECK(cache.misses == 1);
    CHECK(!cache.get_rtd(std::string(64, '0'), st.domain.gamma).has_value());

    const fs::path file = t.path / "c" / (rtd_key(st.domain, q, sp) + ".rtdm");
    REQUIRE(fs::exists(file));
    CHECK(fs::exists(fs::path(file.string() + ".sha256")));
    flip_byte(file, 64);
    CHECK_THROWS_AS(cached_rtd(cache, st.domain, q, sp, 1), CacheCorruption);
    CHECK(!fs::exists(file));
    CHECK(!fs::exists(fs::path(file.string() + ".sha256")));
    // a fresh miss rebuilds the entry
    CHECK(!cached_rtd(cache, st.domain, q, sp, 1).hit);
  }

  TEST_CASE("CGO cache entries") {
    TempDir t("cgo");
    const GridSpec g = GridSpec::centered(1.0, 9);
    const CubeSpec cube = make_cube(g, 2);
    ScalarField q(g, 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::exp(-dot(g.position(i), g.position(i)) / 0.05);
    const ScalarField qe = extend_potential(q, cube);
    const CgoFrame f = discretize_frame(build_frame({0, 0, 0}, 1.0, 4.0, 1), cube.h);
    const CgoSolution s = solve_remainder(qe, cube, f, 1, 1e-12, CgoMode::GridExact);
    Cache cache(t.path);
    const std::string key = cgo_key(qe, cube, f, 1, 1e-12, CgoMode::GridExact);
    CHECK(key != cgo_key(qe, cube, f, 2, 1e-12, CgoMode::GridExact));
    CgoSolution back;
    CHECK(!cache.get_cgo(key, back));
    cache.put_cgo(key, s);
    back.frame = f;
    back.cube = cube;
    back.which = 1;
    back.mode = CgoMode::GridExact;
    back.r.assign(s.r.size(), 0.0);  // caller sizes the cube buffer
    REQUIRE(cache.get_cgo(key, back));
    CHECK(back.r == s.r);
    CHECK(back.remainder_l2 == s.remainder_l2);
    CHECK(back.iterations == s.iterations);
  }

  TEST_CASE("manifest lists every artifact with its hash") {
    TempDir t("manifest");
    write_text(t.path / "a.csv", "x\n1\n");
    fs::create_directories(t.path / "sub");
    write_text(t.path / "sub" / "b.txt", "hello");
    Manifest m(t.path, "unit", parse_config(""));
    m.stage("work", 0.5);
    m.set("note", "value");
    m.write(nullptr);
    std::ifstream in(t.path / "manifest.json");
    const nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j["command"] == "unit");
    CHECK(j["config_hash"].get<std::string>().size() == 64);
    CHECK(j["notes"]["note"] == "value");
    REQUIRE(j["artifacts"].size() == 2);
    for (const auto& a : j["artifacts"]) {
      const fs::path p = t.path / a["path"].get<std::string>();
      CHECK(fs::exists(p));
      CHECK(a["sha256"] == sha256_file(p));
    }
    CHECK(j["artifacts"][1]["path"] == "sub/b.txt");
  }

  TEST_CASE("plot scripts need CSVs") {
    TempDir t("plot");
    CHECK_THROWS_AS(emit_plot_scripts(t.path), ConfigError);
    write_text(t.path / "stability.csv", "k,delta\n");
    const auto scripts = emit_plot_scripts(t.path);
    REQUIRE(scripts.size() == 1);
    CHECK((fs::exists(t.path / scripts[0]) || fs::exists(scripts[0])));
    CHECK(plottable_csvs().size() == 5);
  }

  TEST_CASE("synthetic potentials") {
    const Setup st = build_setup(parse_config(""));
    const PotentialPair pp = synthetic_pair(st, 0.7);
    CHECK(sup_norm(pp.difference) == doctest::Approx(0.7).epsilon(1e-12));
    double q2max = 0;
    for (std::size_t i = 0; i < pp.q1.size(); ++i) {
      CHECK(pp.difference[i] == doctest::Approx(pp.q1[i] - pp.q2[i]).epsilon(1e-15));
      if (st.family.omega[0][i]) CHECK(pp.difference[i] == 0.0);
      q2max = std::max(q2max, pp.q2[i]);
    }
    CHECK(q2max == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("pollution guard") {
    const GridSpec g = GridSpec::centered(1.0, 17);
    CHECK_NOTHROW(check_pollution(g, 8.0));
    CHECK_THROWS_AS(check_pollution(g, 8.5), PreconditionError);
  }

  TEST_CASE("command-line exit codes and cache reuse") {
    TempDir t("cli");
    const std::string out = (t.path / "out").string();
    write_text(t.path / "small.ini", kSmallGrid);
    const std::string cfg = "--config " + (t.path / "small.ini").string() + " --out " + out;

    const CliRun r1 = run_cli(cfg + " rtd");
    CHECK(r1.code == 0);
    CHECK(r1.output.find("cache miss") != std::string::npos);
    const CliRun r2 = run_cli(cfg + " rtd");
    CHECK(r2.code == 0);
    CHECK(r2.output.find("cache hit, 0 solves") != std::string::npos);

    std::ifstream in(fs::path(out) / "manifest.json");
    const nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j["command"] == "rtd");
    CHECK(j["cache"]["hits"] == 1);
    std::size_t listed = 0;
    for (const auto& e : fs::recursive_directory_iterator(out))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") ++listed;
    CHECK(j["artifacts"].size() == listed);

    fs::path rtdm;
    for (const auto& e : fs::directory_iterator(fs::path(out) / "cache"))
      if (e.path().extension() == ".rtdm") rtdm = e.path();
    REQUIRE(!rtdm.empty());
    flip_byte(rtdm, 80);
    CHECK(run_cli(cfg + " rtd").code == 3);

    write_text(t.path / "bad.ini", "[geometry]\nwhat = 1\n");
    CHECK(run_cli("--config " + (t.path / "bad.ini").string() + " --out " + out + " rtd").code == 1);
    CHECK(run_cli("--out " + (t.path / "empty").string() + " plot").code == 1);

    write_text(t.path / "strict.ini", std::string(kSmallGrid) + "[carleman]\ng_min = 100\nretry_budget = 1\n");
    CHECK(run_cli("--config " + (t.path / "strict.ini").string() + " --out " + out + " --quiet carleman").code == 2);
    CHECK(fs::exists(fs::path(out) / "weight_report.txt"));

    CHECK(run_cli("--out " + out).code != 0);
  }

  TEST_CASE("cache directory precedence") {
    TempDir t("prec");
    write_text(t.path / "small.ini", kSmallGrid);
    const std::string base = "--config " + (t.path / "small.ini").string() + " --out " + (t.path / "o").string();
    CHECK(run_cli(base + " rtd", "IMPLAB_CACHE=" + (t.path / "env").string()).code == 0);
    CHECK(fs::exists(t.path / "env"));
    CHECK(!fs::exists(t.path / "o" / "cache"));
    CHECK(run_cli(base + " --cache " + (t.path / "flag").string() + " rtd",
                  "IMPLAB_CACHE=" + (t.path / "env").string())
              .code == 0);
    CHECK(fs::exists(t.path / "flag"));
  }
}

#include <openssl/evp.h>

#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "implab/errors.hpp"
#include "implab/lab.hpp"

#ifndef IMPLAB_VERSION
#define IMPLAB_VERSION "unknown"
#endif

namespace fs = std::filesystem;

namespace implab::lab {

std::string version_string() { return IMPLAB_VERSION; }

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const void* p, std::size_t n) { EVP_DigestUpdate(ctx_, p, n); }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
      s += digits[md[i] >> 4];
      s += digits[md[i] & 15];
    }
    return s;
  }

 private:
  EVP_MD_CTX* ctx_;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t bytes) {
  Sha256 h;
  h.update(data, bytes);
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    h.update(buf.data(), std::size_t(in.gcount()));
  }
  return h.hex();
}

std::string field_hash(const ScalarField& f) {
  return sha256_hex(f.values().data(), f.values().size() * sizeof(double));
}

std::string rtd_key(const DomainSpec& domain, const ScalarField& q, const SolverParams& params) {
  const GridSpec& g = domain.grid;
  Sha256 h;
  h.update("rtd/2|" + num(g.origin()[0]) + "," + num(g.origin()[1]) + "," + num(g.origin()[2]) + "|" + num(g.side()) +
           "|" + std::to_string(g.n()) + "|k=" + num(params.k) + "|method=" +
           (params.method == SolverMethod::Direct ? "direct" : "iterative") + "|tol=" + num(params.tolerance) +
           "|it=" + std::to_string(params.max_iterations) + "|q=" + field_hash(q) + "|gamma=");
  h.update(domain.gamma.samples.data(), domain.gamma.samples.size() * sizeof(std::size_t));
  return h.hex();
}

std::string cgo_key(const ScalarField& q_extended, const CubeSpec& cube, const CgoFrame& frame, int which,
                    double tolerance, CgoMode mode) {
  Sha256 h;
  h.update("cgo/1|M=" + std::to_string(cube.M) + "|h=" + num(cube.h) + "|which=" + std::to_string(which) +
           "|tol=" + num(tolerance) + "|mode=" + (mode == CgoMode::GridExact ? "grid" : "cont") + "|q=" +
           field_hash(q_extended));
  const CVec3& z = frame_zeta(frame, which);
  for (const Complex& c : z) h.update(num(c.real()) + "," + num(c.imag()) + ";");
  return h.hex();
}

Cache::Cache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) throw ConfigError("cache_dir '" + dir_.string() + "' is not writable");
}

fs::path Cache::path_for(const std::string& key, const std::string& ext) const { return dir_ / (key + "." + ext); }

bool Cache::verify(const fs::path& p) {
  const fs::path side = p.string() + ".sha256";
  if (!fs::exists(p) || !fs::exists(side)) return false;
  const std::string want = read_text(side).substr(0, 64);
  if (sha256_file(p) != want) {
    std::error_code ec;
    fs::remove(p, ec);
    fs::remove(side, ec);
    throw CacheCorruption("cache entry " + p.filename().string() + " failed hash verification and was evicted");
  }
  return true;
}

void Cache::commit(const fs::path& tmp, const fs::path& p) {
  const std::string hash = sha256_file(tmp);
  fs::rename(tmp, p);
  std::ofstream(p.string() + ".sha256") << hash << "\n";
}

std::optional<RtdMatrix> Cache::get_rtd(const std::string& key, const BoundaryPatch& target) {
  const fs::path p = path_for(key, "rtdm");
  if (!verify(p)) {
    ++misses;
    return std::nullopt;
  }
  ++hits;
  return read_rtdm(p.string(), target);
}

void Cache::put_rtd(const std::string& key, const RtdMatrix& A) {
  const fs::path p = path_for(key, "rtdm");
  const fs::path tmp = p.string() + ".tmp";
  write_rtdm(tmp.string(), A, 2);
  commit(tmp, p);
}

bool Cache::get_cgo(const std::string& key, CgoSolution& into) {
  const fs::path p = path_for(key, "cgor");
  if (!verify(p)) {
    ++misses;
    return false;
  }
  std::ifstream in(p, std::ios::binary);
  char magic[4];
  std::uint64_t n = 0;
  double diag[6];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(diag), sizeof diag);
  if (!in || std::memcmp(magic, "CGOR", 4) != 0 || n != into.r.size())
    throw CacheCorruption("cache entry " + p.filename().string() + " is malformed");
  in.read(reinterpret_cast<char*>(into.r.data()), std::streamsize(n * sizeof(Complex)));
  if (!in) throw CacheCorruption("cache entry " + p.filename().string() + " is truncated");
  into.remainder_l2 = diag[0];
  into.residual = diag[1];
  into.contraction = diag[2];
  into.contraction_bound = diag[3];
  into.min_symbol = diag[4];
  into.iterations = int(diag[5]);
  ++hits;
  return true;
}

void Cache::put_cgo(const std::string& key, const CgoSolution& s) {
  const fs::path p = path_for(key, "cgor");
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    const std::uint64_t n = s.r.size();
    const double diag[6] = {s.remainder_l2, s.residual, s.contraction, s.contraction_bound, s.min_symbol,
                            double(s.iterations)};
    out.write("CGOR", 4);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(diag), sizeof diag);
    out.write(reinterpret_cast<const char*>(s.r.data()), std::streamsize(n * sizeof(Complex)));
  }
  commit(tmp, p);
}

RtdFetch cached_rtd(Cache& cache, const DomainSpec& domain, const ScalarField& q, const SolverParams& params, int jobs) {
  const std::string key = rtd_key(domain, q, params);
  RtdFetch out;
  if (auto hit = cache.get_rtd(key, domain.gamma)) {
    out.matrix = std::move(*hit);
    out.hit = true;
    return out;
  }
  out.matrix = assemble_rtd(domain, q, params, jobs);
  out.solves = domain.boundary.size();
  cache.put_rtd(key, out.matrix);
  return out;
}

Manifest::Manifest(fs::path output_dir, std::string command, const LabConfig& cfg)
    : out_(std::move(output_dir)), command_(std::move(command)), started_(utc_timestamp()) {
  config_hash_ = sha256_hex(cfg.canonical.data(), cfg.canonical.size());
}

void Manifest::stage(const std::string& name, double seconds) { stages_.emplace_back(name, seconds); }
void Manifest::set(const std::string& key, const std::string& value) { extra_.emplace_back(key, value); }

void Manifest::write(const Cache* cache) {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["config_hash"] = config_hash_;
  j["code_version"] = version_string();
  j["started"] = started_;
  j["finished"] = utc_timestamp();
  nlohmann::ordered_json st = nlohmann::ordered_json::array();
  for (const auto& [n, s] : stages_) st.push_back({{"stage", n}, {"wall_seconds", s}});
  j["stages"] = st;
  if (cache) j["cache"] = {{"dir", cache->dir().string()}, {"hits", cache->hits}, {"misses", cache->misses}};
  for (const auto& [k, v] : extra_) j["notes"][k] = v;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  std::vector<fs::path> paths;
  if (fs::exists(out_))
    for (const auto& e : fs::recursive_directory_iterator(out_))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  for (const fs::path& p : paths)
    files.push_back({{"path", fs::relative(p, out_).generic_string()},
                     {"sha256", sha256_file(p)},
                     {"bytes", std::uintmax_t(fs::file_size(p))}});
  j["artifacts"] = files;
  j["manifest"] = "manifest.json (this file, not self-hashed)";
  fs::create_directories(out_);
  std::ofstream(out_ / "manifest.json") << j.dump(2) << "\n";
}

Setup build_setup(const LabConfig& cfg) {
  const GeometryConfig& g = cfg.geometry;
  const GridSpec grid = GridSpec::centered(g.side, g.points);
  DomainSpec domain = build_box_domain(grid, GammaSpec{g.gamma_face, g.gamma_center, g.gamma_radius});
  AnnulusFamily family = build_annuli(domain, g.widths);
  return {std::move(domain), std::move(family)};
}

PotentialPair synthetic_pair(const Setup& setup, double amplitude) {
  const GridSpec& g = setup.domain.grid;
  const double L = g.side();
  ScalarField q2(g, 0.0), bumps(g, 0.0);
  // Bump layout in units of the box side; all inside the core of the default annuli.
  const Vec3 c[3] = {{0.1, 0.05, -0.05}, {-0.12, 0.08, 0.1}, {0.0, -0.12, 0.02}};
  const double r[3] = {0.15, 0.12, 0.13}, s[3] = {1.0, -0.7, 0.8};
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const Vec3 x = g.position(i);
    q2[i] = 0.5 * std::exp(-dot(x, x) / (0.1 * L * L));
    double v = 0.0;
    for (int b = 0; b < 3; ++b) {
      const Vec3 d{x[0] - c[b][0] * L, x[1] - c[b][1] * L, x[2] - c[b][2] * L};
      const double t = dot(d, d) / (r[b] * r[b] * L * L);
      if (t < 1) v += s[b] * std::pow(1 - t, 3);
    }
    bumps[i] = v;
  }
  bumps = restrict_potential_support(bumps, setup.family);
  const double m = sup_norm(bumps);
  if (!(m > 0)) throw GeometryError("synthetic bumps vanish entirely on the core; annuli too wide for the grid");
  PotentialPair p{q2, q2, bumps};
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    p.difference[i] *= amplitude / m;
    p.q1[i] += p.difference[i];
  }
  return p;
}

void check_pollution(const GridSpec& grid, double k) {
  if (k * grid.spacing() > 0.5 + 1e-12)
    throw PreconditionError("k = " + num(k) + " gives k dx = " + num(k * grid.spacing()) +
                            " > 0.5; refine geometry.points");
}

const std::vector<std::string>& plottable_csvs() {
  static const std::vector<std::string> names{"stability.csv", "fi_ratios.csv", "robin_ratios.csv", "baskin.csv",
                                              "cgo.csv"};
  return names;
}

std::vector<std::string> emit_plot_scripts(const fs::path& dir) {
  std::vector<std::string> written;
  auto emit = [&](const std::string& csv, const std::string& body) {
    if (!fs::exists(dir / csv)) return;
    const std::string stem = fs::path(csv).stem().string();
    std::ofstream out(dir / (stem + ".gp"));
    out << "# gnuplot " << stem << ".gp  (run inside " << dir.string() << ")\n"
        << "set datafile separator ','\nset key autotitle columnhead\nset grid\n"
        << "set terminal pngcairo size 900,600\nset output '" << stem << ".png'\n"
        << body;
    written.push_back(stem + ".gp");
  };
  emit("stability.csv",
       "set logscale y\nset xlabel 'k'\nset ylabel 'H^{-1} error'\n"
       "plot 'stability.csv' using 1:6 with linespoints title 'H^{-1}', '' using 1:7 with linespoints title 'L^inf'\n");
  emit("fi_ratios.csv",
       "set logscale xy\nset xlabel 'h'\nset ylabel 'LHS/RHS'\n"
       "plot 'fi_ratios.csv' using 1:7 with points title 'interior weight ratios'\n");
  emit("robin_ratios.csv",
       "set logscale xy\nset xlabel 'h'\nset ylabel 'LHS/RHS'\n"
       "plot 'robin_ratios.csv' using 1:7 with points title 'Robin ratios'\n");
  emit("baskin.csv",
       "set logscale x\nset xlabel 'k'\nset ylabel 'max ratio'\n"
       "plot 'baskin.csv' using 1:2 with linespoints title 'a priori ratio'\n");
  emit("cgo.csv",
       "set xlabel 'a'\nset ylabel 'a ||r||'\nplot 'cgo.csv' using 4:8 with linespoints title 'a ||r||'\n");
  if (written.empty()) {
    std::string list;
    for (const auto& n : plottable_csvs()) list += " " + n;
    throw ConfigError("no CSVs to plot in '" + dir.string() + "'; expected one of:" + list);
  }
  return written;
}

}  // namespace implab::lab

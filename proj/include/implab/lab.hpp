#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "implab/carleman.hpp"
#include "implab/cgo.hpp"
#include "implab/probe.hpp"
#include "implab/rtd.hpp"

namespace implab::lab {

struct GeometryConfig {
  double side = 1.0;
  int points = 17;
  std::string gamma_face = "z+";
  std::array<double, 2> gamma_center{0.5, 0.5};
  double gamma_radius = 0.25;
  std::array<double, 4> widths{0.2, 0.15, 0.1, 0.05};
};

struct CgoConfig {
  double a = 8.0, tolerance = 1e-12;
  int pad_factor = 2;
  std::uint64_t seed = 1;
  std::string mode = "grid_exact";
  Vec3 xi{0.0, 0.0, 0.0};
};

struct CarlemanConfig {
  double beta0 = 3.0;
  std::vector<double> gamma_grid{1.0, 2.0};
  std::vector<double> h_sequence{0.4, 0.2, 0.1, 0.05};
  int trials = 4;
  double g_min = 0.05;
  int retry_budget = 8;
};

struct ProbeConfig {
  double h0_gamma = 1.0, alpha4 = 1.0, noise_delta = 1e-6;
  std::vector<double> k_list{2.0, 4.0, 8.0};
  bool use_synthetic_delta = true;
  int lattice_pad = 2;
  double dq_amplitude = 1.0;
};

// Primitives only; grids, spacing, R, a and rho are derived where used.
struct LabConfig {
  double k = 2.0;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::string cache_dir;  // empty: IMPLAB_CACHE, then <output_dir>/cache
  GeometryConfig geometry;
  SolverParams solver;
  CgoConfig cgo;
  CarlemanConfig carleman;
  ProbeConfig probe;
  std::string canonical;  // sorted key=value dump, hashed into the manifest
};

// Strict INI: unknown sections or keys, malformed values and out-of-range
// values raise ConfigError naming the key.
LabConfig load_config(const std::string& path);
LabConfig parse_config(const std::string& text);
std::string default_config_text();
std::string canonical_dump(const LabConfig& cfg);

struct Setup {
  DomainSpec domain;
  AnnulusFamily family;
};
Setup build_setup(const LabConfig& cfg);

// Background q2 (Gaussian, peak 0.5) and q1 = q2 + three bumps vanishing on
// omega0, scaled so that sup |q1 - q2| = amplitude.
struct PotentialPair {
  ScalarField q1, q2, difference;
};
PotentialPair synthetic_pair(const Setup& setup, double amplitude);

// Refuses k with k dx > 0.5.
void check_pollution(const GridSpec& grid, double k);

std::string sha256_hex(const void* data, std::size_t bytes);
std::string sha256_file(const std::filesystem::path& path);

// Content-addressed store: <dir>/<key>.<ext> plus <key>.<ext>.sha256 holding the
// file hash. A mismatch on read evicts both files and throws CacheCorruption.
class Cache {
 public:
  explicit Cache(std::filesystem::path dir);
  const std::filesystem::path& dir() const { return dir_; }

  std::optional<RtdMatrix> get_rtd(const std::string& key, const BoundaryPatch& target);
  void put_rtd(const std::string& key, const RtdMatrix& A);
  // CGO entries hold r and the solver diagnostics; frame and cube come from the caller.
  bool get_cgo(const std::string& key, CgoSolution& into);
  void put_cgo(const std::string& key, const CgoSolution& s);

  int hits = 0, misses = 0;

 private:
  std::filesystem::path path_for(const std::string& key, const std::string& ext) const;
  bool verify(const std::filesystem::path& p);
  void commit(const std::filesystem::path& tmp, const std::filesystem::path& p);
  std::filesystem::path dir_;
};

std::string field_hash(const ScalarField& f);
std::string rtd_key(const DomainSpec& domain, const ScalarField& q, const SolverParams& params);
std::string cgo_key(const ScalarField& q_extended, const CubeSpec& cube, const CgoFrame& frame, int which,
                    double tolerance, CgoMode mode);

// RtD map through the cache; solves counts columns actually solved (0 on hit).
struct RtdFetch {
  RtdMatrix matrix;
  bool hit = false;
  std::size_t solves = 0;
};
RtdFetch cached_rtd(Cache& cache, const DomainSpec& domain, const ScalarField& q, const SolverParams& params, int jobs);

class Manifest {
 public:
  Manifest(std::filesystem::path output_dir, std::string command, const LabConfig& cfg);
  void stage(const std::string& name, double seconds);
  void set(const std::string& key, const std::string& value);
  // Lists every regular file under output_dir (recursively) with its hash.
  void write(const Cache* cache);

 private:
  std::filesystem::path out_;
  std::string command_, config_hash_, started_;
  std::vector<std::pair<std::string, double>> stages_;
  std::vector<std::pair<std::string, std::string>> extra_;
};

std::string utc_timestamp();
std::string version_string();

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

// Gnuplot scripts next to the CSVs found in dir. Returns written scripts;
// throws ConfigError listing the expected CSV names when none exists.
std::vector<std::string> emit_plot_scripts(const std::filesystem::path& dir);
const std::vector<std::string>& plottable_csvs();

struct SelftestResult {
  std::string name;
  bool ok = false;
  std::string detail;
};
std::vector<SelftestResult> run_selftest(const LabConfig& cfg, int jobs, bool quiet);

}  // namespace implab::lab

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdrinv/algorithms.hpp"
#include "cdrinv/pod_reduction.hpp"

namespace cdrinv {

/// Invalid configuration; `path` names the offending field ("algorithm.eps1").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct MeshSpec {
  Interval x{0.0, 8.0};
  Interval y{0.0, 1.0};
  int nx = 81;
  int ny = 21;

  bool operator==(const MeshSpec&) const = default;
};

struct ExperimentConfig {
  std::string experiment;
  MeshSpec mesh;
  // Measurements come from this mesh when set, resampled onto the inversion
  // mesh's outflow nodes.
  std::optional<MeshSpec> data_mesh;
  double mu = 0.1;
  double sigma = 0.1;
  double c_up = 0.1;
  double nu = 50.0;
  double t0 = 0.0;
  double tf = 1.0;
  double dt = 0.005;
  std::vector<SourceSpec> truth;
  double noise_variance = 0.05;
  std::uint64_t seed = 1;
  AlgorithmConfig algorithm;
  Method method = Method::pdgn;
  bool use_pod = false;
  PodSettings pod;
  std::string output_dir = "out";
  nlohmann::json params = nlohmann::json::object();  // experiment-specific

  void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);

/// 64-bit FNV-1a of the canonical (sorted-key) JSON dump.
std::uint64_t fnv1a64(const std::string& bytes);
std::uint64_t config_hash(const ExperimentConfig& c);

PhysicalCoefficients coefficients(const ExperimentConfig& c);
TimeGrid time_grid(const ExperimentConfig& c);
StructuredMesh build_mesh(const MeshSpec& m);

struct Measurements {
  Matrix clean;  // n_y x N on the inversion mesh
  Matrix noisy;
};

/// Forward solve with the truth control, optional resampling, then additive
/// N(0, variance) noise on every entry from a seeded mt19937_64.
Measurements generate_measurements(const ExperimentConfig& c);

/// Linear interpolation in y between two outflow node layouts (rows bottom to top).
Matrix resample_outflow(const Matrix& obs, int ny_from, int ny_to);

/// Magnitude of the most negative value (0 when nonnegative).
double oscillation_indicator(const Matrix& values);

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ResultBundle {
  std::string dir;
  std::vector<Check> checks;
  std::vector<std::string> files;  // relative to dir
  nlohmann::json metrics = nlohmann::json::object();
  bool passed() const;
};

/// Runs the named experiment, writes CSVs, checks.csv, metrics.json,
/// summary.txt and manifest.json under c.output_dir. Errors raised by the
/// numerics are recorded as a failed check.
ResultBundle run_experiment(const ExperimentConfig& c);

/// Writes measurements_clean.csv, measurements_noisy.csv and the manifest.
ResultBundle generate_bundle(const ExperimentConfig& c);

struct ExperimentInfo {
  std::string name;
  std::string description;
};

const std::vector<ExperimentInfo>& list_experiments();
/// Registry names plus the long alias "example1-known-location".
bool is_experiment(const std::string& name);
/// The configuration shipped for a named experiment.
ExperimentConfig default_config(const std::string& name);

/// Sparse source layouts of the nine-test suite, test 1 first.
std::vector<std::vector<SourceSpec>> sparse_test_suite();

/// Reads checks.csv from a bundle directory.
std::vector<Check> read_checks(const std::string& dir);

}  // namespace cdrinv

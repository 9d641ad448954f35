#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/Core>

#include "cdrinv/harness.hpp"
#include "harness_internal.hpp"

#ifndef CDRINV_VERSION
#define CDRINV_VERSION "unknown"
#endif

namespace cdrinv {

using nlohmann::json;
namespace fs = std::filesystem;

PhysicalCoefficients coefficients(const ExperimentConfig& c) {
  PhysicalCoefficients p;
  p.mu = c.mu;
  p.sigma = c.sigma;
  p.velocity = poiseuille(c.nu);
  p.c_up = c.c_up;
  p.nu = c.nu;
  return p;
}

TimeGrid time_grid(const ExperimentConfig& c) { return TimeGrid::uniform(c.t0, c.tf, c.dt); }

StructuredMesh build_mesh(const MeshSpec& m) { return StructuredMesh(m.x, m.y, m.nx, m.ny); }

Matrix resample_outflow(const Matrix& obs, int ny_from, int ny_to) {
  if (obs.rows() != ny_from) throw std::invalid_argument("observation rows do not match the source layout");
  if (ny_from < 2 || ny_to < 2) throw std::invalid_argument("need at least two outflow nodes");
  if (ny_from == ny_to) return obs;
  Matrix out(ny_to, obs.cols());
  for (int j = 0; j < ny_to; ++j) {
    const double y = static_cast<double>(j) * (ny_from - 1) / (ny_to - 1);
    const int i0 = std::min(static_cast<int>(y), ny_from - 2);
    const double w = y - i0;
    out.row(j) = (1.0 - w) * obs.row(i0) + w * obs.row(i0 + 1);
  }
  return out;
}

double oscillation_indicator(const Matrix& values) {
  if (values.size() == 0) return 0.0;
  const double lo = values.minCoeff();
  return lo < 0.0 ? -lo : 0.0;
}

Measurements generate_measurements(const ExperimentConfig& c) {
  const MeshSpec& dm = c.data_mesh.value_or(c.mesh);
  const ForwardModel model(build_mesh(dm), coefficients(c), time_grid(c));
  const ControlVector truth = truth_on_finest(c.truth, c.mesh.x, c.algorithm.finest_step);
  Measurements m;
  m.clean = model.solve_observed(Vector::Zero(model.num_nodes()), to_nodal_control(truth, model.mesh()), c.c_up);
  m.clean = resample_outflow(m.clean, dm.ny, c.mesh.ny);
  m.noisy = m.clean;
  if (c.noise_variance > 0.0) {
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(c.noise_variance));
    for (Eigen::Index k = 0; k < m.noisy.cols(); ++k) {
      for (Eigen::Index r = 0; r < m.noisy.rows(); ++r) m.noisy(r, k) += normal(rng);
    }
  }
  return m;
}

bool ResultBundle::passed() const {
  if (checks.empty()) return false;
  for (const Check& ch : checks) {
    if (!ch.pass) return false;
  }
  return true;
}

namespace detail {

std::string bundle_file(ResultBundle& b, const std::string& name) {
  b.files.push_back(name);
  return (fs::path(b.dir) / name).string();
}

void add_check(ResultBundle& b, const std::string& name, bool pass, const std::string& detail) {
  b.checks.push_back({name, pass, detail});
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

}  // namespace detail

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

// Splits one CSV record; quoted fields may contain commas and doubled quotes.
std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else {
      out.back() += ch;
    }
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

void open_bundle(ResultBundle& b, const ExperimentConfig& c) {
  b.dir = c.output_dir;
  fs::create_directories(b.dir);
  write_text(detail::bundle_file(b, "config.json"), to_json(c).dump(2) + "\n");
}

void close_bundle(ResultBundle& b, const ExperimentConfig& c, const char* verb, double seconds) {
  std::ostringstream checks;
  checks << "name,pass,detail\n";
  for (const Check& ch : b.checks) checks << ch.name << ',' << (ch.pass ? 1 : 0) << ',' << csv_quote(ch.detail) << '\n';
  write_text(detail::bundle_file(b, "checks.csv"), checks.str());
  write_text(detail::bundle_file(b, "metrics.json"), b.metrics.dump(2) + "\n");

  std::ostringstream summary;
  summary << c.experiment << ": " << (b.passed() ? "PASS" : "FAIL") << '\n';
  for (const Check& ch : b.checks) summary << (ch.pass ? "  pass  " : "  FAIL  ") << ch.name << "  " << ch.detail << '\n';
  write_text(detail::bundle_file(b, "summary.txt"), summary.str());

  json manifest;
  manifest["experiment"] = c.experiment;
  manifest["verb"] = verb;
  manifest["config_hash"] = hex64(config_hash(c));
  manifest["seed"] = c.seed;
  manifest["versions"] = {{"cdrinv", CDRINV_VERSION},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"compiler", __VERSION__},
                          {"cxx", static_cast<long>(__cplusplus)}};
  manifest["files"] = b.files;
  manifest["passed"] = b.passed();
  // The two fields below are the only ones that differ between identical runs.
  manifest["created_utc"] = utc_now();
  manifest["runtime_seconds"] = seconds;
  write_text((fs::path(b.dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  b.files.push_back("manifest.json");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ResultBundle generate_bundle(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  ResultBundle b;
  open_bundle(b, c);
  const TimeGrid grid = time_grid(c);
  auto write = [&](const ExperimentConfig& cc, const std::string& tag) {
    const Measurements m = generate_measurements(cc);
    write_series_csv(detail::bundle_file(b, "measurements" + tag + "_clean.csv"), grid, m.clean, "y");
    write_series_csv(detail::bundle_file(b, "measurements" + tag + "_noisy.csv"), grid, m.noisy, "y");
    b.metrics["measurements" + tag] = {{"rows", m.clean.rows()},
                                       {"cols", m.clean.cols()},
                                       {"max_clean", m.clean.maxCoeff()},
                                       {"min_clean", m.clean.minCoeff()}};
  };
  if (c.params.contains("tests")) {
    // Suite experiments carry their truths in the test list.
    const auto suite = sparse_test_suite();
    for (int t : c.params.at("tests").get<std::vector<int>>()) {
      if (t < 1 || t > static_cast<int>(suite.size())) throw ConfigError("params.tests", "tests are numbered 1..9");
      ExperimentConfig cc = c;
      cc.truth = suite[t - 1];
      write(cc, "_test" + std::to_string(t));
    }
  } else {
    write(c, "");
  }
  detail::add_check(b, "measurements_written", true, std::to_string(b.metrics.size()) + " data set(s)");
  close_bundle(b, c, "generate", seconds_since(t0));
  return b;
}

ResultBundle run_experiment(const ExperimentConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ResultBundle b;
  open_bundle(b, c);
  try {
    detail::run_named(c, b);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    detail::add_check(b, "completed", false, e.what());
  }
  close_bundle(b, c, "run", seconds_since(t0));
  return b;
}

std::vector<Check> read_checks(const std::string& dir) {
  const std::string path = (fs::path(dir) / "checks.csv").string();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "name,pass,detail") throw std::runtime_error(path + ": unexpected header");
  std::vector<Check> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != 3 || (f[1] != "0" && f[1] != "1")) throw std::runtime_error(path + ": malformed row '" + line + "'");
    out.push_back({f[0], f[1] == "1", f[2]});
  }
  return out;
}

}  // namespace cdrinv

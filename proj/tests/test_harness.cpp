#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cdrinv/harness.hpp"

using namespace cdrinv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string error_path(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

json base() { return to_json(default_config("example1")); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdrinv_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config errors name the offending field") {
  json j = base();
  j["algorithm"]["eps1"] = -1.0;
  CHECK(error_path(j) == "algorithm.eps1");

  j = base();
  j["algorithm"]["windows"]["bogus"] = 1;
  CHECK(error_path(j) == "algorithm.windows.bogus");

  j = base();
  j["truth"][0]["edge"] = "left";
  CHECK(error_path(j).rfind("truth", 0) == 0);

  j = base();
  j["mesh"]["nx"] = "many";
  CHECK(error_path(j) == "mesh.nx");

  j = base();
  j["experiment"] = "nope";
  CHECK_FALSE(error_path(j).empty());

  j = base();
  j["time"]["dt"] = 0.0;
  CHECK_FALSE(error_path(j).empty());
}

TEST_CASE("configs round-trip through json") {
  for (const ExperimentInfo& e : list_experiments()) {
    CAPTURE(e.name);
    const ExperimentConfig c = default_config(e.name);
    const ExperimentConfig back = parse_config(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(config_hash(back) == config_hash(c));
  }
  ExperimentConfig c = default_config("example1");
  const std::uint64_t h = config_hash(c);
  c.seed += 1;
  CHECK(config_hash(c) != h);
  // FNV-1a test vectors
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("shipped config files match the built-in defaults") {
  for (const ExperimentInfo& e : list_experiments()) {
    CAPTURE(e.name);
    const fs::path file = fs::path(CDRINV_CONFIG_DIR) / (e.name + ".json");
    REQUIRE(fs::exists(file));
    CHECK(to_json(load_config(file.string())) == to_json(default_config(e.name)));
  }
  CHECK(is_experiment("example1-known-location"));
  CHECK_FALSE(is_experiment("example3"));
}

TEST_CASE("measurements") {
  ExperimentConfig c = default_config("example1");
  c.tf = 0.1;
  c.truth.clear();
  c.c_up = 0.0;
  c.noise_variance = 0.0;
  const Measurements zero = generate_measurements(c);
  CHECK(zero.clean.isZero());
  CHECK(zero.noisy.isZero());

  c = default_config("example1");
  c.tf = 0.1;
  const Measurements a = generate_measurements(c);
  const Measurements b = generate_measurements(c);
  CHECK(a.clean.rows() == c.mesh.ny);
  CHECK((a.noisy - b.noisy).cwiseAbs().maxCoeff() == 0.0);
  const Matrix noise = a.noisy - a.clean;
  CHECK(noise.squaredNorm() / static_cast<double>(noise.size()) == doctest::Approx(c.noise_variance).epsilon(0.2));
  c.seed += 1;
  CHECK((generate_measurements(c).noisy - a.noisy).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("outflow resampling") {
  Matrix obs(3, 2);
  obs << 0, 10, 1, 20, 2, 30;
  CHECK(resample_outflow(obs, 3, 3) == obs);
  const Matrix fine = resample_outflow(obs, 3, 5);
  CHECK(fine(1, 0) == doctest::Approx(0.5));
  CHECK(fine(3, 1) == doctest::Approx(25.0));
  CHECK(fine(4, 1) == doctest::Approx(30.0));
  CHECK((resample_outflow(fine, 5, 3) - obs).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK_THROWS(resample_outflow(obs, 4, 5));
}

TEST_CASE("oscillation indicator") {
  CHECK(oscillation_indicator(Matrix::Ones(2, 2)) == 0.0);
  Matrix m = Matrix::Ones(2, 2);
  m(1, 0) = -0.25;
  CHECK(oscillation_indicator(m) == 0.25);
  CHECK(oscillation_indicator(Matrix(0, 0)) == 0.0);
}

TEST_CASE("a bundle records its checks") {
  ExperimentConfig c = default_config("ode1d-flatness");
  c.output_dir = scratch("bundle").string();
  const ResultBundle r = run_experiment(c);
  CHECK_FALSE(r.checks.empty());
  for (const char* f : {"config.json", "checks.csv", "metrics.json", "summary.txt", "manifest.json"}) {
    CHECK(fs::exists(fs::path(c.output_dir) / f));
  }
  const std::vector<Check> back = read_checks(c.output_dir);
  REQUIRE(back.size() == r.checks.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].name == r.checks[i].name);
    CHECK(back[i].pass == r.checks[i].pass);
  }
  std::ifstream in(fs::path(c.output_dir) / "config.json");
  CHECK(to_json(parse_config(json::parse(in))) == to_json(c));
  fs::remove_all(c.output_dir);
}

TEST_CASE("generate writes the measurements") {
  ExperimentConfig c = default_config("example1");
  c.tf = 0.1;
  c.output_dir = scratch("generate").string();
  const ResultBundle r = generate_bundle(c);
  CHECK(fs::exists(fs::path(c.output_dir) / "measurements_clean.csv"));
  CHECK(fs::exists(fs::path(c.output_dir) / "measurements_noisy.csv"));
  CHECK(fs::exists(fs::path(c.output_dir) / "manifest.json"));
  fs::remove_all(c.output_dir);
}

TEST_CASE("the nine-test suite") {
  const auto suite = sparse_test_suite();
  REQUIRE(suite.size() == 9);
  CHECK(suite[0].size() == 1);
  CHECK(suite[0][0].edge == Edge::top);
  CHECK(suite[0][0].value == 100.0);
  CHECK(suite[8].size() == 3);
}

// Command-line front end for the experiment harness.
//   cdrinv list-experiments [--dump-configs DIR]
//   cdrinv generate (--config FILE | --experiment NAME) [--seed N] [--out DIR]
//   cdrinv run (--config FILE... | --experiment NAME...) [--seed N] [--out DIR] [--jobs N]
//   cdrinv report DIR...
// Exit status: 0 all checks pass, 1 some check failed, 2 bad configuration or usage.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "cdrinv/harness.hpp"

namespace fs = std::filesystem;
using cdrinv::ConfigError;
using cdrinv::ExperimentConfig;

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kConfig = 2;

struct Selection {
  std::vector<std::string> configs;
  std::vector<std::string> experiments;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_selection(CLI::App* cmd, Selection& s, bool many) {
  auto* cfg = cmd->add_option("--config,-c", s.configs, "JSON configuration file")->check(CLI::ExistingFile);
  auto* exp = cmd->add_option("--experiment,-e", s.experiments, "named experiment with its shipped configuration");
  if (!many) {
    cfg->expected(1);
    exp->expected(1);
  }
  cmd->add_option("--seed", s.seed, "override the noise seed");
  cmd->add_option("--out,-o", s.out, "bundle directory (parent directory when several experiments run)");
}

std::vector<ExperimentConfig> resolve(const Selection& s) {
  std::vector<ExperimentConfig> out;
  for (const auto& path : s.configs) out.push_back(cdrinv::load_config(path));
  for (const auto& name : s.experiments) {
    if (!cdrinv::is_experiment(name)) throw ConfigError("experiment", "unknown experiment '" + name + "'");
    out.push_back(cdrinv::default_config(name));
  }
  if (out.empty()) throw ConfigError("", "give --config or --experiment");
  for (auto& c : out) {
    if (s.seed) c.seed = *s.seed;
    if (!s.out.empty()) c.output_dir = out.size() == 1 ? s.out : (fs::path(s.out) / c.experiment).string();
  }
  return out;
}

void print_bundle(const cdrinv::ResultBundle& b, const std::string& name) {
  std::cout << name << ": " << (b.passed() ? "PASS" : "FAIL") << "  (" << b.dir << ")\n";
  for (const auto& ch : b.checks) std::cout << (ch.pass ? "  pass  " : "  FAIL  ") << ch.name << "  " << ch.detail << '\n';
}

int cmd_list(const std::string& dump_dir) {
  for (const auto& e : cdrinv::list_experiments()) std::cout << e.name << "\t" << e.description << '\n';
  if (!dump_dir.empty()) {
    fs::create_directories(dump_dir);
    for (const auto& e : cdrinv::list_experiments()) {
      nlohmann::json j = cdrinv::to_json(cdrinv::default_config(e.name));
      j.erase("output_dir");
      std::ofstream((fs::path(dump_dir) / (e.name + ".json")).string()) << j.dump(2) << '\n';
    }
  }
  return kPass;
}

int cmd_generate(const Selection& s) {
  const ExperimentConfig c = resolve(s).front();
  const auto b = cdrinv::generate_bundle(c);
  print_bundle(b, c.experiment);
  return b.passed() ? kPass : kFail;
}

int cmd_run(const Selection& s, int jobs) {
  const std::vector<ExperimentConfig> configs = resolve(s);
  std::vector<cdrinv::ResultBundle> bundles(configs.size());
  std::vector<std::string> errors(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        bundles[i] = cdrinv::run_experiment(configs[i]);
      } catch (const ConfigError& e) {
        errors[i] = e.what();
      }
      std::lock_guard<std::mutex> lock(io);
      if (errors[i].empty()) {
        print_bundle(bundles[i], configs[i].experiment);
      } else {
        std::cerr << configs[i].experiment << ": configuration error: " << errors[i] << '\n';
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int status = kPass;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!errors[i].empty()) return kConfig;
    if (!bundles[i].passed()) status = kFail;
  }
  return status;
}

int cmd_report(const std::vector<std::string>& dirs) {
  int status = kPass;
  for (const auto& dir : dirs) {
    std::vector<cdrinv::Check> checks;
    try {
      checks = cdrinv::read_checks(dir);
    } catch (const std::exception& e) {
      std::cerr << e.what() << '\n';
      return kConfig;
    }
    std::ifstream summary(fs::path(dir) / "summary.txt");
    if (summary) {
      std::cout << summary.rdbuf();
    } else {
      for (const auto& ch : checks) std::cout << (ch.pass ? "  pass  " : "  FAIL  ") << ch.name << "  " << ch.detail << '\n';
    }
    bool ok = !checks.empty();
    for (const auto& ch : checks) ok = ok && ch.pass;
    if (!ok) status = kFail;
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse source identification for convection-diffusion-reaction: experiment harness"};
  app.require_subcommand(1);

  std::string dump_dir;
  auto* list = app.add_subcommand("list-experiments", "list the named experiments");
  list->add_option("--dump-configs", dump_dir, "also write each shipped configuration as DIR/<name>.json");

  Selection gen_sel;
  auto* gen = app.add_subcommand("generate", "write synthetic measurements with and without noise");
  add_selection(gen, gen_sel, false);

  Selection run_sel;
  int jobs = 1;
  auto* run = app.add_subcommand("run", "run experiments and evaluate their checks");
  add_selection(run, run_sel, true);
  run->add_option("--jobs,-j", jobs, "experiments run concurrently")->check(CLI::PositiveNumber);

  std::vector<std::string> report_dirs;
  auto* report = app.add_subcommand("report", "summarize existing result bundles");
  report->add_option("dirs", report_dirs, "bundle directories")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*list) return cmd_list(dump_dir);
    if (*gen) return cmd_generate(gen_sel);
    if (*run) return cmd_run(run_sel, jobs);
    if (*report) return cmd_report(report_dirs);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }
  return kConfig;
}

// ksp-lab: seeded filtering experiments with CSV output.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ksp/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_scenario(const std::string& name, const std::string& config_path,
                 const std::optional<std::uint64_t>& seed, const std::string& out,
                 const std::vector<std::string>& overrides) {
  using namespace ksp::harness;
  ExperimentConfig cfg;
  try {
    cfg = parse_config(config_path.empty() ? "" : read_file(config_path), name);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError({"--set expects key=value, got '" + kv + "'"});
      const std::string key = kv.substr(0, eq);
      nlohmann::json value;
      try {
        value = nlohmann::json::parse(kv.substr(eq + 1));
      } catch (const nlohmann::json::parse_error&) {
        value = kv.substr(eq + 1);
      }
      set_param(cfg, key, value);
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (seed) cfg.seed = *seed;
  if (const char* env = std::getenv("KSP_LAB_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  if (!out.empty()) cfg.output_dir = out;

  ComparisonReport report;
  try {
    report = run(cfg);
    write_report(cfg, report, cfg.output_dir);
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << '\n';
    return 3;
  }
  for (const auto& [metric, value] : report.metrics) std::cout << "  " << metric << " = " << value << '\n';
  for (const auto& [method, ms] : report.runtime_ms)
    std::cout << "  runtime " << method << " = " << ms << " ms\n";
  for (const auto& c : report.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  (" << c.detail << ")\n";
  std::cout << "wrote " << cfg.output_dir << " (config " << cfg.hash() << ")\n";
  if (const auto* f = report.first_failure()) {
    std::cerr << "first failed criterion: " << f->name << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ksp-lab: stochastic filtering experiments"};
  app.require_subcommand(1);
  auto* list = app.add_subcommand("list", "List scenarios and their config keys");
  bool verbose = false;
  list->add_flag("-v,--verbose", verbose, "Show the keys each scenario accepts");

  struct Opts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> overrides;
  };
  std::map<std::string, Opts> opts;
  for (const auto& name : ksp::harness::scenario_names()) {
    auto* sub = app.add_subcommand(name, "Run the " + name + " scenario");
    auto& o = opts[name];
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
    sub->add_option("--out", o.out, "Output directory (overrides config and environment)");
    sub->add_option("--set", o.overrides, "Override a config key, key=value");
  }
  CLI11_PARSE(app, argc, argv);

  if (list->parsed()) {
    for (const auto& name : ksp::harness::scenario_names()) {
      std::cout << name << '\n';
      if (verbose)
        for (const auto& [key, desc] :
             ksp::harness::describe_keys(ksp::harness::scenario_from_string(name)))
          std::cout << "    " << key << " = " << desc << '\n';
    }
    return 0;
  }
  for (auto& [name, o] : opts)
    if (app.got_subcommand(name)) return run_scenario(name, o.config, o.seed, o.out, o.overrides);
  return 2;
}

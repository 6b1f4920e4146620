#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ksp/filter_estimate.hpp"
#include "ksp/particle_filter.hpp"

namespace ksp::harness {

inline constexpr const char* kLibraryVersion = "0.1.0";

enum class Scenario { LinearCompare, HestonDemo, MasterDemo, PricingDemo, NovikovCheck };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);
std::vector<std::string> scenario_names();

/// Thrown by parse_config; carries every violation found.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::LinearCompare;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  /// Scenario parameters with defaults filled in.
  nlohmann::json params = nlohmann::json::object();

  double num(const std::string& key) const { return params.at(key).get<double>(); }
  std::size_t count(const std::string& key) const { return params.at(key).get<std::size_t>(); }
  std::string str(const std::string& key) const { return params.at(key).get<std::string>(); }

  /// Canonical JSON of scenario, seed and parameters (output_dir excluded).
  std::string canonical() const;
  std::string hash() const;
};

/// Parses a JSON config document. `scenario_hint` fills in the scenario when
/// the document omits it and must agree with it otherwise.
ExperimentConfig parse_config(const std::string& text, const std::string& scenario_hint = "");

/// Applies a key override from the command line, revalidating the result.
void set_param(ExperimentConfig& cfg, const std::string& key, const nlohmann::json& value);

/// Documentation of the keys accepted by a scenario: key -> "default [lo, hi]".
std::map<std::string, std::string> describe_keys(Scenario s);

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ComparisonReport {
  Vec times;
  /// Per-method moment series in output column order.
  std::vector<std::pair<std::string, Vec>> series;
  std::vector<std::pair<std::string, double>> metrics;
  std::map<std::string, double> runtime_ms;
  std::vector<Check> checks;
  /// Additional CSV documents (file name, contents).
  std::vector<std::pair<std::string, std::string>> extra_files;

  double metric(const std::string& name) const;
  const Vec& column(const std::string& name) const;
  bool passed() const;
  /// First failing check, or nullptr.
  const Check* first_failure() const;
};

/// Calls `fn(n)`; if the ensemble collapses, reruns once with `10 * n`
/// particles. `used` receives the particle count of the successful run.
template <class Fn>
auto with_collapse_retry(std::size_t n, Fn&& fn, std::size_t* used = nullptr) {
  if (used) *used = n;
  try {
    return fn(n);
  } catch (const EnsembleCollapse&) {
    if (used) *used = 10 * n;
    return fn(10 * n);
  }
}

ComparisonReport run_linear_compare(const ExperimentConfig& cfg);
ComparisonReport run_master_demo(const ExperimentConfig& cfg);
ComparisonReport run_heston_demo(const ExperimentConfig& cfg);
ComparisonReport run_pricing_demo(const ExperimentConfig& cfg);
ComparisonReport run_novikov_check(const ExperimentConfig& cfg);

ComparisonReport run(const ExperimentConfig& cfg);

/// Writes `<scenario>.csv`, `<scenario>_metrics.csv` and `manifest.json`
/// into `dir`. Runtimes are not written so reruns are byte-identical.
std::vector<std::filesystem::path> write_report(const ExperimentConfig& cfg,
                                                const ComparisonReport& report,
                                                const std::filesystem::path& dir);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& data);

}  // namespace ksp::harness

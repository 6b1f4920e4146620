#include "ksp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "ksp/csv.hpp"
#include "ksp/grid_zakai.hpp"
#include "ksp/kalman_bucy.hpp"
#include "ksp/markov.hpp"
#include "ksp/particle_filter.hpp"
#include "ksp/stochvol.hpp"

namespace ksp::harness {

using nlohmann::json;

namespace {

// Fixed labels for streams derived from the master seed.
enum StreamLabel : std::uint64_t {
  kTruth = 1,
  kObservation = 2,
  kParticles = 3,
  kPricing = 4,
  kNovikov = 5,
};

enum class Kind { Number, Integer, String, Triplets };

struct Param {
  std::string key;
  json def;
  Kind kind = Kind::Number;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = false;
  std::vector<std::string> choices;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

Param num(std::string key, double def, double lo = -kInf, double hi = kInf, bool lo_open = false) {
  return {std::move(key), def, Kind::Number, lo, hi, lo_open, {}};
}
Param integer(std::string key, std::size_t def, double lo, double hi = 1e12) {
  return {std::move(key), def, Kind::Integer, lo, hi, false, {}};
}

std::vector<Param> params_for(Scenario s) {
  switch (s) {
    case Scenario::LinearCompare:
      return {num("F", -1.0, -100, 100),
              num("f0", 0.0, -1e3, 1e3),
              num("sigma", 1.0, 0, 100),
              num("H", 1.0, -100, 100),
              num("h0", 0.0, -1e3, 1e3),
              num("x0_mean", 0.0, -1e3, 1e3),
              num("x0_var", 1.0, 0, 100, true),
              num("horizon", 1.0, 0, 1e3, true),
              num("dt", 1e-3, 0, 1, true),
              integer("n_particles", 10000, 2, 1e8),
              integer("n_grid", 801, 3, 1e6),
              num("x_lo", -6.0, -1e3, 1e3),
              num("x_hi", 6.0, -1e3, 1e3),
              num("resample_threshold", 0.5, 0, 1),
              num("max_pf_rmse", 0.05, 0, kInf, true),
              num("grid_tolerance", 0.02, 0, kInf, true)};
    case Scenario::HestonDemo:
      return {num("kappa", 2.0, 0, 100),
              num("m", 0.04, 0, 10),
              num("gamma", 0.3, 0, 10),
              num("mu", 0.05, -10, 10),
              num("x0", 0.04, 0, 10),
              num("s0", 100.0, 0, 1e9, true),
              num("horizon", 1.0, 0, 1e3, true),
              num("dt", 1e-5, 0, 1, true),
              integer("n_particles", 1000, 2, 1e8),
              integer("window", 1000, 2, 1e9),
              integer("inner_paths", 16, 1, 1e7),
              integer("inner_steps", 20, 1, 1e7),
              num("strike", 100.0, 0, 1e9, true),
              num("maturity", 2.0, 0, 1e3, true),
              num("rate", 0.0, 0, 1),
              integer("output_every", 1000, 1, 1e9),
              num("burn_in", 0.1, 0, 1),
              num("max_recovery_gap", 0.15, 0, kInf, true)};
    case Scenario::PricingDemo:
      return {num("kappa", 2.0, 0, 100),
              num("m", 0.04, 0, 10),
              num("gamma", 0.0, 0, 10),
              num("mu", 0.0, -10, 10),
              num("x0", 0.04, 0, 10),
              num("s0", 100.0, 0, 1e9, true),
              num("strike", 100.0, 0, 1e9, true),
              num("maturity", 1.0, 0, 1e3, true),
              num("rate", 0.0, 0, 1),
              integer("n_particles", 2, 2, 1e7),
              integer("inner_paths", 256, 1, 1e7),
              integer("inner_steps", 100, 1, 1e7)};
    case Scenario::MasterDemo:
      return {{"rates", json::array({json::array({0, 1, 1.0}), json::array({1, 0, 3.0})}),
               Kind::Triplets, -kInf, kInf, false, {}},
              integer("n_states", 0, 0, 1e4),
              num("tau", 0.3, 0, 1e6),
              num("tau_prime", 0.7, 0, 1e6),
              num("dtau", 1e-3, 0, 1, true),
              integer("n_steps", 10000, 1, 1e9),
              integer("output_every", 100, 1, 1e9)};
    case Scenario::NovikovCheck:
      return {{"sensor", "one", Kind::String, -kInf, kInf, false, {"zero", "one", "identity"}},
              num("drift_coef", -1.0, -100, 100),
              num("sigma", 1.0, 0, 100),
              num("x0", 0.0, -1e3, 1e3),
              num("horizon", 1.0, 0, 1e3, true),
              num("dt", 1e-2, 0, 1, true),
              integer("n_paths", 10000, 100, 1e9)};
  }
  return {};
}

std::string range_text(const Param& p) {
  std::ostringstream os;
  if (p.kind == Kind::String) {
    os << "one of {";
    for (std::size_t i = 0; i < p.choices.size(); ++i) os << (i ? ", " : "") << p.choices[i];
    os << "}";
  } else if (p.kind == Kind::Triplets) {
    os << "array of [i, j, rate] triplets with rate >= 0";
  } else {
    os << (p.lo_open ? "(" : "[") << p.lo << ", " << p.hi << "]";
    if (p.kind == Kind::Integer) os << " integer";
  }
  return os.str();
}

void validate_param(const Param& p, const json& v, std::vector<std::string>& errors) {
  auto bad = [&](const std::string& why) {
    errors.push_back("key '" + p.key + "': " + why + "; admissible: " + range_text(p));
  };
  switch (p.kind) {
    case Kind::String:
      if (!v.is_string()) return bad("expected a string");
      if (std::find(p.choices.begin(), p.choices.end(), v.get<std::string>()) == p.choices.end())
        bad("unknown value '" + v.get<std::string>() + "'");
      return;
    case Kind::Triplets:
      if (!v.is_array()) return bad("expected an array");
      for (const auto& t : v) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() ||
            !t[1].is_number_integer() || !t[2].is_number())
          return bad("malformed triplet " + t.dump());
        if (t[0].get<long long>() < 0 || t[1].get<long long>() < 0)
          return bad("negative state index in " + t.dump());
        const double r = t[2].get<double>();
        if (!(r >= 0.0) || !std::isfinite(r)) return bad("invalid rate in " + t.dump());
      }
      return;
    case Kind::Integer:
      if (!v.is_number_integer()) return bad("expected an integer, got " + v.dump());
      [[fallthrough]];
    case Kind::Number: {
      if (!v.is_number()) return bad("expected a number, got " + v.dump());
      const double x = v.get<double>();
      const bool lo_ok = p.lo_open ? x > p.lo : x >= p.lo;
      if (!std::isfinite(x) || !lo_ok || x > p.hi) bad("value " + v.dump() + " out of range");
      return;
    }
  }
}

void cross_check(Scenario s, const json& params, std::vector<std::string>& errors) {
  auto val = [&](const char* k) { return params.at(k).get<double>(); };
  if (params.contains("dt") && params.contains("horizon") && params["dt"].is_number() &&
      params["horizon"].is_number() && val("dt") > val("horizon"))
    errors.push_back("key 'dt': must not exceed 'horizon'");
  if (s == Scenario::LinearCompare && params["x_lo"].is_number() && params["x_hi"].is_number() &&
      val("x_lo") >= val("x_hi"))
    errors.push_back("key 'x_lo': must be below 'x_hi'");
  if (s == Scenario::HestonDemo && params["maturity"].is_number() &&
      params["horizon"].is_number() && val("maturity") <= val("horizon"))
    errors.push_back("key 'maturity': must exceed 'horizon'");
  if (s == Scenario::HestonDemo && params["window"].is_number() && params["dt"].is_number() &&
      params["horizon"].is_number() && params["dt"].get<double>() > 0.0 &&
      params["window"].get<double>() > val("horizon") / val("dt"))
    errors.push_back("key 'window': exceeds the number of steps");
  if (s == Scenario::MasterDemo && params["rates"].is_array() && params["n_states"].is_number()) {
    long long max_idx = -1;
    for (const auto& t : params["rates"])
      if (t.is_array() && t.size() == 3 && t[0].is_number_integer() && t[1].is_number_integer())
        max_idx = std::max({max_idx, t[0].get<long long>(), t[1].get<long long>()});
    const auto n = params["n_states"].get<long long>();
    if (n > 0 && max_idx >= n) errors.push_back("key 'n_states': smaller than the largest state index");
    if (n == 0 && max_idx < 0) errors.push_back("key 'rates': no states defined");
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

Check make_check(std::string name, bool ok, double value, double bound, const char* op = "<=") {
  std::ostringstream os;
  os << std::setprecision(6) << value << ' ' << op << ' ' << bound;
  return {std::move(name), ok, os.str()};
}

}  // namespace

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::LinearCompare: return "linear_compare";
    case Scenario::HestonDemo: return "heston_demo";
    case Scenario::MasterDemo: return "master_demo";
    case Scenario::PricingDemo: return "pricing_demo";
    case Scenario::NovikovCheck: return "novikov_check";
  }
  return "unknown";
}

std::vector<std::string> scenario_names() {
  return {"linear_compare", "heston_demo", "master_demo", "pricing_demo", "novikov_check"};
}

Scenario scenario_from_string(const std::string& name) {
  for (auto s : {Scenario::LinearCompare, Scenario::HestonDemo, Scenario::MasterDemo,
                 Scenario::PricingDemo, Scenario::NovikovCheck})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::invalid_argument([&] {
        std::string msg = "invalid config:";
        for (const auto& v : violations) msg += "\n  " + v;
        return msg;
      }()),
      violations_(std::move(violations)) {}

std::string ExperimentConfig::canonical() const {
  json doc = params;
  doc["scenario"] = to_string(scenario);
  doc["seed"] = seed;
  return doc.dump();  // keys are sorted by nlohmann::json's default object type
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(canonical()); }

std::map<std::string, std::string> describe_keys(Scenario s) {
  std::map<std::string, std::string> out;
  for (const auto& p : params_for(s)) out[p.key] = p.def.dump() + " " + range_text(p);
  out["seed"] = "0 [0, 2^64-1] integer";
  out["output_dir"] = "\"out\" path";
  return out;
}

namespace {

ExperimentConfig build(Scenario scenario, const json& doc, std::vector<std::string>& errors) {
  ExperimentConfig cfg;
  cfg.scenario = scenario;
  const auto table = params_for(scenario);
  for (const auto& [key, value] : doc.items()) {
    if (key == "scenario") continue;
    if (key == "seed") {
      if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0))
        errors.push_back("key 'seed': expected a nonnegative 64-bit integer");
      else
        cfg.seed = value.get<std::uint64_t>();
      continue;
    }
    if (key == "output_dir") {
      if (!value.is_string() || value.get<std::string>().empty())
        errors.push_back("key 'output_dir': expected a non-empty path string");
      else
        cfg.output_dir = value.get<std::string>();
      continue;
    }
    const auto it = std::find_if(table.begin(), table.end(), [&](const Param& p) { return p.key == key; });
    if (it == table.end()) {
      errors.push_back("unknown key '" + key + "' for scenario " + to_string(scenario));
      continue;
    }
    validate_param(*it, value, errors);
    cfg.params[key] = value;
  }
  for (const auto& p : table)
    if (!cfg.params.contains(p.key)) cfg.params[p.key] = p.def;
  cross_check(scenario, cfg.params, errors);
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& scenario_hint) {
  json doc;
  try {
    doc = json::parse(text.empty() ? std::string("{}") : text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  if (!doc.is_object()) throw ConfigError({"config document must be a JSON object"});

  std::vector<std::string> errors;
  std::string name = scenario_hint;
  if (doc.contains("scenario")) {
    if (!doc["scenario"].is_string()) {
      errors.push_back("key 'scenario': expected a string");
    } else {
      const auto declared = doc["scenario"].get<std::string>();
      if (!scenario_hint.empty() && declared != scenario_hint)
        errors.push_back("key 'scenario': config declares '" + declared +
                         "' but '" + scenario_hint + "' was requested");
      name = declared;
    }
  }
  if (name.empty()) {
    errors.push_back("missing required key 'scenario'");
    throw ConfigError(errors);
  }
  Scenario scenario;
  try {
    scenario = scenario_from_string(name);
  } catch (const std::invalid_argument&) {
    errors.push_back("key 'scenario': unknown scenario '" + name + "'");
    throw ConfigError(errors);
  }
  auto cfg = build(scenario, doc, errors);
  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

void set_param(ExperimentConfig& cfg, const std::string& key, const json& value) {
  json doc = cfg.params;
  doc["seed"] = cfg.seed;
  doc["output_dir"] = cfg.output_dir;
  doc[key] = value;
  std::vector<std::string> errors;
  auto next = build(cfg.scenario, doc, errors);
  if (!errors.empty()) throw ConfigError(errors);
  cfg = std::move(next);
}

double ComparisonReport::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  throw std::out_of_range("report: no metric '" + name + "'");
}

const Vec& ComparisonReport::column(const std::string& name) const {
  for (const auto& [k, v] : series)
    if (k == name) return v;
  throw std::out_of_range("report: no series '" + name + "'");
}

bool ComparisonReport::passed() const { return first_failure() == nullptr; }

const Check* ComparisonReport::first_failure() const {
  for (const auto& c : checks)
    if (!c.passed) return &c;
  return nullptr;
}

// ---------------------------------------------------------------------------

ComparisonReport run_linear_compare(const ExperimentConfig& cfg) {
  const LinearModel lin = LinearModel::scalar(cfg.num("F"), cfg.num("f0"), cfg.num("sigma"),
                                              cfg.num("H"), cfg.num("h0"));
  const double m0 = cfg.num("x0_mean");
  const double v0 = cfg.num("x0_var");
  const auto law = InitialLaw::gaussian(Vec::Constant(1, m0), Mat::Constant(1, 1, v0));
  const DiffusionModel model = lin.diffusion(law);
  const ObservationModel obs = lin.observation();
  const RngStream master(cfg.seed, 0);

  RngStream truth_rng = master.derive(kTruth);
  RngStream obs_rng = master.derive(kObservation);
  RngStream pf_rng = master.derive(kParticles);
  const SamplePath truth = simulate_path(model, cfg.num("horizon"), cfg.num("dt"), truth_rng);
  const ObservationPath path = simulate_observation(obs, truth, obs_rng);

  ComparisonReport rep;
  rep.times = path.times;
  const Eigen::Index n = path.times.size();

  auto t0 = std::chrono::steady_clock::now();
  const auto beliefs = run_kalman(lin, path, {Vec::Constant(1, m0), Mat::Constant(1, 1, v0)});
  rep.runtime_ms["kalman_bucy"] = elapsed_ms(t0);
  Vec k_mean(n), k_var(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    k_mean[k] = beliefs[static_cast<std::size_t>(k)].mean[0];
    k_var[k] = beliefs[static_cast<std::size_t>(k)].cov(0, 0);
  }

  t0 = std::chrono::steady_clock::now();
  const double H = cfg.num("H"), h0 = cfg.num("h0");
  const std::vector<ScalarFn> pf_fns{
      [](const VecRef& x) { return x[0]; },
      [](const VecRef& x) { return x[0] * x[0]; },
      [H, h0](const VecRef& x) { return x[0] * (H * x[0] + h0); },
      [H, h0](const VecRef& x) { return H * x[0] + h0; },
  };
  std::size_t pf_used = 0;
  const FilterEstimate pf = with_collapse_retry(
      cfg.count("n_particles"),
      [&](std::size_t n_particles) {
        ParticleFilterOptions pf_opts;
        pf_opts.n_particles = n_particles;
        pf_opts.resample_threshold = cfg.num("resample_threshold");
        RngStream rng = pf_rng;
        return run_particle_filter(model, obs, path, pf_fns, pf_opts, rng);
      },
      &pf_used);
  rep.runtime_ms["particle"] = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  const auto initial = GridDensity::from_function(
      cfg.num("x_lo"), cfg.num("x_hi"), cfg.count("n_grid"),
      [m0, v0](double x) { return std::exp(-0.5 * (x - m0) * (x - m0) / v0); });
  const std::vector<ScalarFn> grid_fns{[](const VecRef& x) { return x[0]; },
                                       [](const VecRef& x) { return x[0] * x[0]; }};
  const GridRun grid = run_zakai_grid(model, obs, path, initial, grid_fns);
  rep.runtime_ms["grid_zakai"] = elapsed_ms(t0);

  Vec pf_mean = pf.moments.col(0);
  Vec pf_var = pf.moments.col(1) - pf_mean.cwiseProduct(pf_mean);
  Vec pf_gain = pf.moments.col(2) - pf_mean.cwiseProduct(pf.moments.col(3));
  Vec k_gain = k_var * H;
  Vec g_mean = grid.estimate.moments.col(0);
  Vec g_var = grid.estimate.moments.col(1) - g_mean.cwiseProduct(g_mean);
  Vec x_true = truth.states.row(0).transpose();

  rep.series = {{"x_true", x_true},   {"kalman_mean", k_mean}, {"kalman_var", k_var},
                {"pf_mean", pf_mean}, {"pf_var", pf_var},      {"pf_gain", pf_gain},
                {"kalman_gain", k_gain}, {"grid_mean", g_mean}, {"grid_var", g_var},
                {"pf_ess", pf.ess}};

  const double pf_rmse = std::sqrt((pf_mean - k_mean).squaredNorm() / static_cast<double>(n));
  const double pf_var_rmse = std::sqrt((pf_var - k_var).squaredNorm() / static_cast<double>(n));
  const double grid_mean_err =
      ((g_mean - k_mean).cwiseAbs().array() / k_var.cwiseSqrt().array()).maxCoeff();
  const double grid_var_err = ((g_var - k_var).cwiseAbs().array() / k_var.array()).maxCoeff();
  Eigen::Index gain_rows = 0;
  double gain_err_sum = 0.0, gain_err_max = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::abs(k_gain[k]) == 0.0) continue;
    const double e = std::abs(pf_gain[k] - k_gain[k]) / std::abs(k_gain[k]);
    gain_err_sum += e;
    gain_err_max = std::max(gain_err_max, e);
    ++gain_rows;
  }
  const double tracking =
      (x_true - k_mean).squaredNorm() / static_cast<double>(n) / k_var.mean();

  rep.metrics = {{"pf_mean_rmse", pf_rmse},
                 {"pf_var_rmse", pf_var_rmse},
                 {"grid_mean_max_err_sd", grid_mean_err},
                 {"grid_var_max_rel_err", grid_var_err},
                 {"pf_gain_mean_rel_err", gain_rows ? gain_err_sum / gain_rows : 0.0},
                 {"pf_gain_max_rel_err", gain_err_max},
                 {"kalman_mse_over_mean_R", tracking},
                 {"pf_ess_min", pf.ess.minCoeff()},
                 {"pf_ess_mean", pf.ess.mean()},
                 {"pf_particles_used", static_cast<double>(pf_used)},
                 {"grid_floored_mass", grid.floored_mass}};
  const double tol = cfg.num("grid_tolerance");
  rep.checks.push_back(make_check("pf_mean_rmse", pf_rmse <= cfg.num("max_pf_rmse"), pf_rmse,
                                  cfg.num("max_pf_rmse")));
  rep.checks.push_back(make_check("grid_mean", grid_mean_err <= tol, grid_mean_err, tol));
  rep.checks.push_back(make_check("grid_var", grid_var_err <= tol, grid_var_err, tol));
  return rep;
}

ComparisonReport run_master_demo(const ExperimentConfig& cfg) {
  const auto& triplets = cfg.params.at("rates");
  long long max_idx = -1;
  for (const auto& t : triplets) max_idx = std::max({max_idx, t[0].get<long long>(), t[1].get<long long>()});
  const auto n_cfg = static_cast<long long>(cfg.count("n_states"));
  const Eigen::Index n = n_cfg > 0 ? n_cfg : max_idx + 1;
  Mat r = Mat::Zero(n, n);
  for (const auto& t : triplets) r(t[0].get<Eigen::Index>(), t[1].get<Eigen::Index>()) = t[2].get<double>();
  const RateMatrix W(r);
  const Mat G = generator_from_rates(W);

  ComparisonReport rep;
  const auto t0 = std::chrono::steady_clock::now();
  const double tau = cfg.num("tau"), tau2 = cfg.num("tau_prime");
  const Mat Q1 = evolve_kernel(G, tau).Q;
  const Mat Q2 = evolve_kernel(G, tau2).Q;
  const Mat Q12 = evolve_kernel(G, tau + tau2).Q;
  const double ck = (Q12 - Q2 * Q1).cwiseAbs().maxCoeff();

  const DistributionVector stat = stationary_distribution(W);
  const double stat_res = (stat.p.transpose() * G).cwiseAbs().maxCoeff();
  const double stat_fixed = (stat.p.transpose() * Q12 - stat.p.transpose()).cwiseAbs().maxCoeff();

  // Master-equation Euler route against the kernel route from state 0.
  const double dtau = cfg.num("dtau");
  const auto steps = cfg.count("n_steps");
  const auto every = cfg.count("output_every");
  DistributionVector p{Vec::Unit(n, 0)};
  double drift = 0.0;
  std::vector<double> times;
  std::vector<Vec> euler_rows, kernel_rows;
  for (std::size_t k = 0; k <= steps; ++k) {
    if (k % every == 0 || k == steps) {
      const double t = static_cast<double>(k) * dtau;
      times.push_back(t);
      euler_rows.push_back(p.p);
      kernel_rows.push_back(evolve_kernel(G, t).Q.row(0).transpose());
    }
    if (k == steps) break;
    p = evolve_master(W, p, dtau, 1);
    drift = std::max(drift, std::abs(p.p.sum() - 1.0));
  }
  double route_gap = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i)
    route_gap = std::max(route_gap, (euler_rows[i] - kernel_rows[i]).cwiseAbs().maxCoeff());

  Vec taus(4);
  taus << 1e-1, 1e-2, 1e-3, 1e-4;
  const TaylorReport taylor = taylor_kernel_check(W, taus);
  rep.runtime_ms["master"] = elapsed_ms(t0);

  rep.times = Eigen::Map<const Vec>(times.data(), static_cast<Eigen::Index>(times.size()));
  for (Eigen::Index j = 0; j < n; ++j) {
    Vec e(static_cast<Eigen::Index>(times.size())), q(e.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      e[static_cast<Eigen::Index>(i)] = euler_rows[i][j];
      q[static_cast<Eigen::Index>(i)] = kernel_rows[i][j];
    }
    rep.series.emplace_back("p_master_" + std::to_string(j + 1), e);
    rep.series.emplace_back("p_kernel_" + std::to_string(j + 1), q);
  }
  rep.metrics = {{"chapman_kolmogorov_residual", ck},
                 {"stationary_residual", stat_res},
                 {"stationary_fixed_point_residual", stat_fixed},
                 {"conservation_drift", drift},
                 {"route_gap", route_gap},
                 {"taylor_slope", taylor.slope},
                 {"taylor_exact", taylor.exact ? 1.0 : 0.0}};
  for (Eigen::Index j = 0; j < n; ++j)
    rep.metrics.emplace_back("stationary_p_" + std::to_string(j + 1), stat.p[j]);

  std::ostringstream kernel_csv, stat_csv;
  write_kernel_csv(kernel_csv, {Q1});
  write_distribution_csv(stat_csv, stat);
  rep.extra_files = {{"kernel.csv", kernel_csv.str()}, {"stationary.csv", stat_csv.str()}};

  rep.checks.push_back(make_check("chapman_kolmogorov", ck < 1e-10, ck, 1e-10, "<"));
  rep.checks.push_back(make_check("stationary_residual", stat_res < 1e-12, stat_res, 1e-12, "<"));
  rep.checks.push_back(make_check("conservation", drift < 1e-10, drift, 1e-10, "<"));
  if (!taylor.exact)
    rep.checks.push_back({"taylor_slope", std::abs(taylor.slope - 1.0) <= 0.15,
                          std::to_string(taylor.slope) + " in [0.85, 1.15]"});
  return rep;
}

namespace {

HestonModel heston_from(const ExperimentConfig& cfg) {
  HestonModel h;
  h.kappa = cfg.num("kappa");
  h.m = cfg.num("m");
  h.gamma = cfg.num("gamma");
  h.mu = cfg.num("mu");
  h.x0 = cfg.num("x0");
  h.s0 = cfg.num("s0");
  return h;
}

}  // namespace

ComparisonReport run_heston_demo(const ExperimentConfig& cfg) {
  const HestonModel model = heston_from(cfg);
  const CallSpec spec{cfg.num("strike"), cfg.num("maturity"), cfg.num("rate")};
  const double dt = cfg.num("dt");
  const RngStream master(cfg.seed, 0);
  RngStream truth_rng = master.derive(kTruth);
  RngStream pf_rng = master.derive(kParticles);
  const RngStream price_rng = master.derive(kPricing);

  ComparisonReport rep;
  auto t0 = std::chrono::steady_clock::now();
  const EquityPaths eq = simulate_heston(model, cfg.num("horizon"), dt, truth_rng);
  const Vec qv = realized_qv(eq.log_price);
  const Vec recovered = vol_recovery(qv, cfg.count("window"), dt);
  rep.runtime_ms["simulate"] = elapsed_ms(t0);

  const auto every = cfg.count("output_every");
  std::vector<Eigen::Index> rows;
  std::vector<FilteredPrice> prices;
  InnerPricingOptions inner;
  inner.inner_paths = cfg.count("inner_paths");
  inner.n_steps = cfg.count("inner_steps");

  HestonFilterOptions opts;
  const Eigen::Index n = eq.times.size();
  auto price_at = [&](std::size_t k, const ParticleEnsemble& ens) {
    if (k % every != 0 && static_cast<Eigen::Index>(k) != n - 1) return;
    rows.push_back(static_cast<Eigen::Index>(k));
    inner.t = eq.times[static_cast<Eigen::Index>(k)];
    RngStream r = price_rng.derive(k);
    prices.push_back(filtered_option_price(ens, model, spec, eq.price[static_cast<Eigen::Index>(k)], r, inner));
  };
  opts.on_step = price_at;
  t0 = std::chrono::steady_clock::now();
  std::size_t pf_used = 0;
  const FilterEstimate est = with_collapse_retry(
      cfg.count("n_particles"),
      [&](std::size_t n_particles) {
        rows.clear();
        prices.clear();
        opts.n_particles = n_particles;
        RngStream rng = pf_rng;
        return heston_filter(model, eq.times, eq.log_price, rng, opts);
      },
      &pf_used);
  rep.runtime_ms["filter_and_price"] = elapsed_ms(t0);

  const Vec post_mean = est.moments.col(0);
  const Vec post_var = (est.moments.col(1) - post_mean.cwiseProduct(post_mean)).cwiseMax(0.0);
  const Vec post_z2 = est.moments.col(2);

  const auto burn = static_cast<Eigen::Index>(std::ceil(cfg.num("burn_in") * static_cast<double>(n - 1)));
  double gap = 0.0, ode_err = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index k = std::max<Eigen::Index>(burn, 1); k < n; ++k) {
    gap += std::abs(post_z2[k] - recovered[k]) / recovered[k];
    ode_err += std::abs(post_mean[k] - eq.variance[k]) / eq.variance[k];
    ++count;
  }
  gap /= static_cast<double>(std::max<Eigen::Index>(count, 1));
  ode_err /= static_cast<double>(std::max<Eigen::Index>(count, 1));

  const auto m = static_cast<Eigen::Index>(rows.size());
  rep.times.resize(m);
  Vec x_true(m), x_mean(m), x_var(m), qv_rec(m), opt(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index k = rows[static_cast<std::size_t>(i)];
    rep.times[i] = eq.times[k];
    x_true[i] = eq.variance[k];
    x_mean[i] = post_mean[k];
    x_var[i] = post_var[k];
    qv_rec[i] = recovered[k];
    opt[i] = prices[static_cast<std::size_t>(i)].price;
  }
  rep.series = {{"x_true", x_true},
                {"x_post_mean", x_mean},
                {"x_post_var", x_var},
                {"qv_recovery", qv_rec},
                {"option_price", opt}};
  const double rec_err =
      ((recovered - eq.variance).cwiseAbs().array() / eq.variance.array().max(1e-12)).mean();
  rep.metrics = {{"posterior_vs_recovery_rel_gap", gap},
                 {"posterior_vs_truth_rel_err", ode_err},
                 {"recovery_vs_truth_rel_err", rec_err},
                 {"ess_min", est.ess.minCoeff()},
                 {"ess_mean", est.ess.mean()},
                 {"particles_used", static_cast<double>(pf_used)},
                 {"terminal_option_price", opt[m - 1]}};
  rep.checks.push_back(make_check("posterior_vs_recovery", gap <= cfg.num("max_recovery_gap"), gap,
                                  cfg.num("max_recovery_gap")));
  if (model.gamma == 0.0)
    rep.checks.push_back(make_check("posterior_vs_ode", ode_err <= 0.01, ode_err, 0.01));
  return rep;
}

ComparisonReport run_pricing_demo(const ExperimentConfig& cfg) {
  const HestonModel model = heston_from(cfg);
  const CallSpec spec{cfg.num("strike"), cfg.num("maturity"), cfg.num("rate")};
  const RngStream master(cfg.seed, 0);
  const auto t0 = std::chrono::steady_clock::now();

  ParticleEnsemble point;
  const auto n = static_cast<Eigen::Index>(cfg.count("n_particles"));
  point.positions = Mat::Constant(1, n, model.x0);
  point.log_weights = Vec::Constant(n, -std::log(static_cast<double>(n)));
  point.normalized = true;

  InnerPricingOptions inner;
  inner.inner_paths = cfg.count("inner_paths");
  inner.n_steps = cfg.count("inner_steps");
  RngStream r1 = master.derive(kPricing);
  const FilteredPrice filtered = filtered_option_price(point, model, spec, model.s0, r1, inner);
  const double analytic_z = model.mean_variance(model.x0, spec.maturity);
  const double direct = bs_call_price(model.s0, spec, analytic_z);

  InnerPricingOptions doubled = inner;
  doubled.inner_paths *= 2;
  RngStream r2 = master.derive(kPricing);
  const FilteredPrice refined = filtered_option_price(point, model, spec, model.s0, r2, doubled);

  const double benchmark = bs_call_price(100.0, CallSpec{100.0, 1.0, 0.0}, 0.04);

  ComparisonReport rep;
  rep.runtime_ms["pricing"] = elapsed_ms(t0);
  rep.metrics = {{"filtered_price", filtered.price},
                 {"filtered_std_error", filtered.std_error},
                 {"filtered_price_doubled", refined.price},
                 {"filtered_std_error_doubled", refined.std_error},
                 {"direct_bs_analytic_z", direct},
                 {"analytic_mean_variance", analytic_z},
                 {"reduction_gap", std::abs(filtered.price - direct)},
                 {"benchmark_bs_100_100_004_1", benchmark}};
  if (model.gamma == 0.0) {
    const double gap = std::abs(filtered.price - direct);
    rep.checks.push_back(make_check("point_mass_reduction", gap <= 1e-6, gap, 1e-6));
  } else {
    const double change = std::abs(refined.price - filtered.price);
    const double bound = 2.0 * std::hypot(filtered.std_error, refined.std_error);
    rep.checks.push_back(make_check("inner_path_doubling", change < bound, change, bound, "<"));
  }
  return rep;
}

ComparisonReport run_novikov_check(const ExperimentConfig& cfg) {
  const double c = cfg.num("drift_coef"), s = cfg.num("sigma");
  const DiffusionModel model = DiffusionModel::scalar(
      [c](double x) { return c * x; }, [s](double) { return s; },
      InitialLaw::point_mass(Vec::Constant(1, cfg.num("x0"))));
  const std::string sensor = cfg.str("sensor");
  const ObservationModel obs = ObservationModel::scalar([sensor](double x) {
    if (sensor == "zero") return 0.0;
    if (sensor == "one") return 1.0;
    return x;
  });
  const RngStream master(cfg.seed, 0);
  RngStream rng = master.derive(kNovikov);
  const auto t0 = std::chrono::steady_clock::now();
  const double T = cfg.num("horizon");
  const NovikovReport nov = check_novikov(obs, model, T, cfg.count("n_paths"), rng, cfg.num("dt"));

  ComparisonReport rep;
  rep.runtime_ms["novikov"] = elapsed_ms(t0);
  rep.metrics = {{"estimate", nov.estimate}, {"std_error", nov.std_error}, {"finite", nov.finite ? 1.0 : 0.0}};
  rep.checks.push_back({"finite", nov.finite, nov.finite ? "finite" : "overflow"});
  if (sensor != "identity") {
    const double ref = sensor == "zero" ? 1.0 : std::exp(0.5 * T);
    const double bound = 3.0 * nov.std_error + 1e-12 * ref;
    rep.metrics.emplace_back("reference", ref);
    rep.checks.push_back(make_check("closed_form", std::abs(nov.estimate - ref) <= bound,
                                    std::abs(nov.estimate - ref), bound));
  }
  return rep;
}

ComparisonReport run(const ExperimentConfig& cfg) {
  switch (cfg.scenario) {
    case Scenario::LinearCompare: return run_linear_compare(cfg);
    case Scenario::HestonDemo: return run_heston_demo(cfg);
    case Scenario::MasterDemo: return run_master_demo(cfg);
    case Scenario::PricingDemo: return run_pricing_demo(cfg);
    case Scenario::NovikovCheck: return run_novikov_check(cfg);
  }
  throw std::logic_error("unhandled scenario");
}

std::vector<std::filesystem::path> write_report(const ExperimentConfig& cfg,
                                                const ComparisonReport& report,
                                                const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& contents) {
    const fs::path p = dir / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << contents;
    written.push_back(p);
  };
  const std::string base = to_string(cfg.scenario);

  if (!report.series.empty()) {
    std::vector<std::string> header{"t"};
    Mat rows(report.times.size(), static_cast<Eigen::Index>(report.series.size()) + 1);
    rows.col(0) = report.times;
    Eigen::Index c = 1;
    for (const auto& [name, values] : report.series) {
      header.push_back(name);
      rows.col(c++) = values;
    }
    std::ostringstream os;
    csv::write(os, header, rows);
    emit(base + ".csv", os.str());
  }
  {
    std::ostringstream os;
    os << "metric,value\n";
    for (const auto& [name, value] : report.metrics) os << name << ',' << csv::format(value) << '\n';
    for (const auto& c : report.checks) os << "check_" << c.name << ',' << (c.passed ? 1 : 0) << '\n';
    emit(base + "_metrics.csv", os.str());
  }
  for (const auto& [name, contents] : report.extra_files) emit(name, contents);

  json manifest;
  manifest["scenario"] = base;
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = cfg.hash();
  manifest["config"] = json::parse(cfg.canonical());
  manifest["library_version"] = kLibraryVersion;
  json files = json::array();
  for (const auto& p : written) files.push_back(p.filename().string());
  manifest["files"] = files;
  emit("manifest.json", manifest.dump(2) + "\n");
  return written;
}

}  // namespace ksp::harness

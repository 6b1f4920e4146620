#include "ksp/stochvol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ksp {

void HestonModel::validate() const {
  require(kappa >= 0.0 && m >= 0.0 && gamma >= 0.0, "heston: kappa, m, gamma must be >= 0");
  require(x0 >= 0.0, "heston: x0 must be >= 0");
  require(s0 > 0.0, "heston: s0 must be positive");
  require(std::isfinite(kappa + m + gamma + mu + x0 + s0), "heston: non-finite parameter");
}

DiffusionModel HestonModel::variance_model(InitialLaw law) const {
  validate();
  const double k = kappa, level = m, g = gamma;
  return DiffusionModel::scalar([k, level](double x) { return k * (level - std::max(x, 0.0)); },
                                [g](double x) { return g * std::sqrt(std::max(x, 0.0)); },
                                std::move(law));
}

double HestonModel::mean_variance(double x, double tau) const {
  x = std::max(x, 0.0);
  if (tau <= 0.0) return x;
  const double kt = kappa * tau;
  if (kt < 1e-12) return x;
  return m + (x - m) * (-std::expm1(-kt)) / kt;
}

void CallSpec::validate() const {
  require(strike > 0.0 && std::isfinite(strike), "call: strike must be positive");
  require(std::isfinite(maturity), "call: maturity must be finite");
  require(rate >= 0.0 && std::isfinite(rate), "call: rate must be nonnegative");
}

EquityPaths simulate_heston(const HestonModel& model, double horizon, double dt, RngStream& rng) {
  model.validate();
  const std::size_t n = step_count(horizon, dt);
  RngStream rng_b = rng.derive(1);
  RngStream rng_w = rng.derive(2);
  const double sqrt_dt = std::sqrt(dt);

  EquityPaths out;
  const auto len = static_cast<Eigen::Index>(n + 1);
  out.times.resize(len);
  out.variance.resize(len);
  out.price.resize(len);
  out.log_price.resize(len);
  double x = model.x0;
  double y = std::log(model.s0);
  for (Eigen::Index k = 0; k < len; ++k) {
    out.times[k] = static_cast<double>(k) * dt;
    out.variance[k] = std::max(x, 0.0);
    out.log_price[k] = y;
    out.price[k] = model.s0 * std::exp(y - out.log_price[0]);
    if (k + 1 == len) break;
    const double xp = std::max(x, 0.0);
    const double dB = sqrt_dt * rng_b.normal();
    const double dW = sqrt_dt * rng_w.normal();
    x += model.kappa * (model.m - xp) * dt + model.gamma * std::sqrt(xp) * dB;
    y += (model.mu - 0.5 * xp) * dt + std::sqrt(xp) * dW;
    if (!std::isfinite(x) || !std::isfinite(y))
      throw DivergenceError("simulate_heston: non-finite state", static_cast<std::size_t>(k + 1));
  }
  return out;
}

Vec realized_qv(const Vec& log_price) {
  Vec qv(log_price.size());
  if (qv.size() == 0) return qv;
  qv[0] = 0.0;
  for (Eigen::Index k = 1; k < qv.size(); ++k) {
    const double dy = log_price[k] - log_price[k - 1];
    qv[k] = qv[k - 1] + dy * dy;
  }
  return qv;
}

Vec vol_recovery(const Vec& qv, std::size_t window, double dt) {
  require(window >= 2, "vol_recovery: window must be at least 2");
  require(dt > 0.0, "vol_recovery: dt must be positive");
  const auto n = qv.size();
  require(n >= 2 && static_cast<Eigen::Index>(window) <= n - 1,
          "vol_recovery: window exceeds the series length");
  const auto w = static_cast<Eigen::Index>(window);
  Vec out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index lo = k - w / 2;
    lo = std::clamp<Eigen::Index>(lo, 0, n - 1 - w);
    out[k] = (qv[lo + w] - qv[lo]) / (static_cast<double>(w) * dt);
  }
  return out;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

double bs_call_price(double spot, const CallSpec& spec, double mean_variance, double t) {
  spec.validate();
  require(spot >= 0.0 && std::isfinite(spot), "bs_call_price: spot must be nonnegative");
  require(mean_variance >= 0.0 && std::isfinite(mean_variance),
          "bs_call_price: mean variance must be nonnegative");
  const double tau = spec.maturity - t;
  require(tau > 0.0, "bs_call_price: maturity must be after the current time");
  const double discount = std::exp(-spec.rate * tau);
  const double total_var = mean_variance * tau;
  if (total_var == 0.0 || spot == 0.0) return std::max(spot - spec.strike * discount, 0.0);
  const double sd = std::sqrt(total_var);
  const double d1 = (std::log(spot / spec.strike) + spec.rate * tau + 0.5 * total_var) / sd;
  const double d2 = d1 - sd;
  return spot * normal_cdf(d1) - spec.strike * discount * normal_cdf(d2);
}

namespace {

// Variance path with exact mean reversion over each step and a truncated
// square-root diffusion; returns (1/tau) int X ds. With gamma = 0 the
// result equals mean_variance exactly.
double inner_mean_variance(const HestonModel& model, double x, double tau, std::size_t steps,
                           RngStream* rng, double sign, std::vector<double>& draws) {
  const double h = tau / static_cast<double>(steps);
  const double decay = std::exp(-model.kappa * h);
  const double kh = model.kappa * h;
  const double avg_factor = kh < 1e-12 ? 1.0 : -std::expm1(-kh) / kh;
  const double noise_scale =
      kh < 1e-12 ? std::sqrt(h) : std::sqrt(-std::expm1(-2.0 * kh) / (2.0 * model.kappa));
  double integral = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double xp = std::max(x, 0.0);
    integral += (model.m + (xp - model.m) * avg_factor) * h;
    double z = 0.0;
    if (model.gamma > 0.0) {
      if (rng) draws[s] = rng->normal();
      z = sign * draws[s];
    }
    x = model.m + (xp - model.m) * decay + model.gamma * std::sqrt(xp) * noise_scale * z;
  }
  return integral / tau;
}

double bs_vega_in_variance(double spot, const CallSpec& spec, double z, double t) {
  const double bump = std::max(1e-6, 1e-4 * z);
  const double lo = std::max(0.0, z - bump);
  return (bs_call_price(spot, spec, z + bump, t) - bs_call_price(spot, spec, lo, t)) / (z + bump - lo);
}

}  // namespace

FilteredPrice filtered_option_price(const ParticleEnsemble& ens, const HestonModel& model,
                                    const CallSpec& spec, double spot, RngStream& rng,
                                    const InnerPricingOptions& options) {
  model.validate();
  spec.validate();
  require(ens.normalized, "filtered_option_price: ensemble must be normalized");
  require(ens.dim() == 1, "filtered_option_price: ensemble must be one-dimensional");
  require(options.inner_paths >= 1 && options.n_steps >= 1,
          "filtered_option_price: need at least one inner path and step");
  const double tau = spec.maturity - options.t;
  require(tau > 0.0, "filtered_option_price: maturity must be after the current time");

  const std::size_t pairs = (options.inner_paths + 1) / 2;
  std::vector<double> draws(options.n_steps);
  FilteredPrice out;
  double var_acc = 0.0;
  for (Eigen::Index i = 0; i < ens.positions.cols(); ++i) {
    const double w = std::exp(ens.log_weights[i]);
    const double x = ens.positions(0, i);
    double z_mean = 0.0;
    double pair_sq = 0.0;
    if (model.gamma == 0.0) {
      z_mean = inner_mean_variance(model, x, tau, options.n_steps, nullptr, 1.0, draws);
    } else {
      const RngStream outer = rng.derive(static_cast<std::uint64_t>(i));
      for (std::size_t p = 0; p < pairs; ++p) {
        RngStream inner = outer.derive(p);
        const double plus = inner_mean_variance(model, x, tau, options.n_steps, &inner, 1.0, draws);
        const double minus =
            inner_mean_variance(model, x, tau, options.n_steps, nullptr, -1.0, draws);
        const double pair = 0.5 * (plus + minus);
        z_mean += pair;
        pair_sq += pair * pair;
      }
      z_mean /= static_cast<double>(pairs);
    }
    const double price = bs_call_price(spot, spec, z_mean, options.t);
    out.price += w * price;
    if (pairs > 1 && model.gamma > 0.0) {
      const double np = static_cast<double>(pairs);
      const double var = std::max(0.0, (pair_sq / np - z_mean * z_mean) * np / (np - 1.0)) / np;
      const double vega = bs_vega_in_variance(spot, spec, z_mean, options.t);
      var_acc += w * w * vega * vega * var;
    }
  }
  out.std_error = std::sqrt(var_acc);
  return out;
}

double heston_log_increment(const HestonModel& model, double x, double dY, double dt,
                            double x_floor) {
  const double v = std::max(x, x_floor) * dt;
  const double r = dY - (model.mu - 0.5 * std::max(x, 0.0)) * dt;
  return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
}

FilterEstimate heston_filter(const HestonModel& model, const Vec& times, const Vec& log_price,
                             RngStream& rng, const HestonFilterOptions& options) {
  model.validate();
  require(times.size() == log_price.size() && times.size() >= 2,
          "heston_filter: times and log prices must align");
  SamplePath grid{times, Mat::Zero(1, times.size())};
  grid.validate();
  require(options.x_floor > 0.0, "heston_filter: x_floor must be positive");

  InitialLaw prior = options.prior ? *options.prior
                                   : InitialLaw::gaussian(
                                         Vec::Constant(1, model.x0),
                                         Mat::Constant(1, 1, std::pow(0.5 * std::max(model.x0, model.m), 2)));
  require(prior.dim() == 1, "heston_filter: prior must be one-dimensional");
  const DiffusionModel dyn = model.variance_model(prior);
  const double floor = options.x_floor;
  const LogIncrement inc = [model, floor](const VecRef& x, const VecRef& dY, double dt) {
    return heston_log_increment(model, x[0], dY[0], dt, floor);
  };
  const std::vector<ScalarFn> fns{
      [](const VecRef& x) { return x[0]; },
      [](const VecRef& x) { return x[0] * x[0]; },
      [](const VecRef& x) { return std::max(x[0], 0.0); },
  };

  const Eigen::Index n = times.size();
  FilterEstimate est;
  est.times = times;
  est.moments.resize(n, 3);
  est.ess.resize(n);
  ParticleEnsemble ens = pf_init(prior, options.n_particles, rng);
  auto record = [&](Eigen::Index row) {
    for (std::size_t j = 0; j < fns.size(); ++j)
      est.moments(row, static_cast<Eigen::Index>(j)) = pf_estimate(ens, fns[j]);
  };
  record(0);
  est.ess[0] = static_cast<double>(ens.size());
  if (options.on_step) options.on_step(0, ens);
  Vec dY(1);
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    dY[0] = log_price[k + 1] - log_price[k];
    try {
      est.ess[k + 1] = pf_reweight(dyn, inc, ens, dY, times[k + 1] - times[k], rng);
    } catch (const EnsembleCollapse& e) {
      throw EnsembleCollapse(std::string(e.what()) + " at step " + std::to_string(k + 1));
    }
    record(k + 1);
    if (options.on_step) options.on_step(static_cast<std::size_t>(k + 1), ens);
    pf_resample_if_needed(ens, est.ess[k + 1], options.resample_threshold, rng);
  }
  return est;
}

}  // namespace ksp

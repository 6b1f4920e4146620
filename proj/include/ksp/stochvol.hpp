#pragma once

#include <functional>
#include <optional>

#include "ksp/particle_filter.hpp"

namespace ksp {

/// dX = kappa (m - X) dt + gamma sqrt(X) dB,  dS = mu S dt + sqrt(X) S dW.
struct HestonModel {
  double kappa = 2.0;
  double m = 0.04;
  double gamma = 0.3;
  double mu = 0.0;
  double x0 = 0.04;
  double s0 = 100.0;

  void validate() const;
  /// Full-truncation Euler form of the variance SDE as a diffusion model.
  DiffusionModel variance_model(InitialLaw law) const;
  /// (1/tau) int_0^tau E[X_s | X_0 = x] ds for the mean-reverting drift.
  double mean_variance(double x, double tau) const;
};

struct EquityPaths {
  Vec times;
  Vec variance;   // max(X, 0)
  Vec price;
  Vec log_price;
};

struct CallSpec {
  double strike = 100.0;
  double maturity = 1.0;
  double rate = 0.0;

  void validate() const;
};

/// Full-truncation Euler for X, log-Euler for Y = log S, with independent
/// streams for dB and dW derived from `rng`.
EquityPaths simulate_heston(const HestonModel& model, double horizon, double dt, RngStream& rng);

/// QV_k = sum_{j<k} (Y_{j+1} - Y_j)^2, QV_0 = 0.
Vec realized_qv(const Vec& log_price);

/// Centered difference quotient of QV over `window` increments, shifted
/// to one-sided windows near the ends.
Vec vol_recovery(const Vec& qv, std::size_t window, double dt);

/// Black-Scholes call with total variance mean_variance * (maturity - t).
double bs_call_price(double spot, const CallSpec& spec, double mean_variance, double t = 0.0);

struct FilteredPrice {
  double price = 0.0;
  double std_error = 0.0;
};

struct InnerPricingOptions {
  std::size_t inner_paths = 64;
  std::size_t n_steps = 100;
  double t = 0.0;
};

/// sum_i w_i C_BS(spot; Z_i) where Z_i is the Monte Carlo mean of
/// (1/(T-t)) int_t^T X_s ds over antithetic variance paths started at x_i.
FilteredPrice filtered_option_price(const ParticleEnsemble& ens, const HestonModel& model,
                                    const CallSpec& spec, double spot, RngStream& rng,
                                    const InnerPricingOptions& options = {});

struct HestonFilterOptions {
  std::size_t n_particles = 1000;
  double resample_threshold = 0.5;
  double x_floor = 1e-8;
  /// Prior for X_0; defaults to a Gaussian centred at x0 with standard
  /// deviation max(x0, m) / 2.
  std::optional<InitialLaw> prior;
  /// Called with the step index and the ensemble, once after initialization
  /// (index 0) and after every reweighting, before any resampling.
  std::function<void(std::size_t, const ParticleEnsemble&)> on_step;
};

/// Particle filter for the variance given log-price increments. Columns of
/// the estimate: x, x^2, max(x, 0).
FilterEstimate heston_filter(const HestonModel& model, const Vec& times, const Vec& log_price,
                             RngStream& rng, const HestonFilterOptions& options = {});

/// Log-density of N(dY; (mu - x+/2) dt, max(x, x_floor) dt).
double heston_log_increment(const HestonModel& model, double x, double dY, double dt,
                            double x_floor);

}  // namespace ksp

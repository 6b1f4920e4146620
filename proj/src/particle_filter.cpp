#include "ksp/particle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace ksp {

void ParticleEnsemble::normalize() {
  const double max_lw = log_weights.size() ? log_weights.maxCoeff() : -INFINITY;
  if (!std::isfinite(max_lw) || log_weights.hasNaN())
    throw EnsembleCollapse("particle ensemble: all weights underflowed");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < log_weights.size(); ++i) sum += std::exp(log_weights[i] - max_lw);
  log_weights.array() -= max_lw + std::log(sum);
  normalized = true;
}

void ParticleEnsemble::validate() const {
  require(positions.cols() >= 2, "particle ensemble: at least two particles required");
  require(log_weights.size() == positions.cols(), "particle ensemble: one weight per particle");
  require(positions.allFinite(), "particle ensemble: non-finite position");
  if (normalized)
    require(std::abs(weights().sum() - 1.0) <= 1e-10, "particle ensemble: weights do not sum to 1");
}

ParticleEnsemble pf_init(const InitialLaw& law, std::size_t n_particles, RngStream& rng) {
  require(n_particles >= 2, "pf_init: at least two particles required");
  require(law.dim() > 0, "pf_init: degenerate initial law");
  const auto n = static_cast<Eigen::Index>(n_particles);
  ParticleEnsemble ens;
  ens.positions.resize(static_cast<Eigen::Index>(law.dim()), n);
  for (Eigen::Index i = 0; i < n; ++i) law.sample_into(rng, ens.positions.col(i));
  ens.log_weights = Vec::Constant(n, -std::log(static_cast<double>(n)));
  ens.normalized = true;
  return ens;
}

double pf_estimate(const ParticleEnsemble& ens, const ScalarFn& phi) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ens.positions.cols(); ++i)
    acc += std::exp(ens.log_weights[i]) * phi(ens.positions.col(i));
  return acc;
}

double ess(const ParticleEnsemble& ens) {
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < ens.log_weights.size(); ++i) sum_sq += std::exp(2.0 * ens.log_weights[i]);
  return 1.0 / sum_sq;
}

ParticleEnsemble resample_systematic(const ParticleEnsemble& ens, RngStream& rng) {
  const Eigen::Index n = ens.positions.cols();
  require(n >= 1, "resample_systematic: empty ensemble");
  ParticleEnsemble out;
  out.positions.resize(ens.positions.rows(), n);
  std::vector<double> cumulative(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += std::exp(ens.log_weights[i]);
    cumulative[static_cast<std::size_t>(i)] = acc;
  }
  for (auto& c : cumulative) c /= acc;
  cumulative.back() = 1.0;

  const double step = 1.0 / static_cast<double>(n);
  const double offset = rng.uniform() * step;
  std::size_t src = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double u = offset + static_cast<double>(k) * step;
    while (cumulative[src] <= u && src + 1 < cumulative.size()) ++src;
    out.positions.col(k) = ens.positions.col(static_cast<Eigen::Index>(src));
  }
  out.log_weights = Vec::Constant(n, -std::log(static_cast<double>(n)));
  out.normalized = true;
  return out;
}

LogIncrement zakai_increment(const ObservationModel& obs) {
  auto h = std::make_shared<Vec>(obs.dim_obs());
  return [obs, h](const VecRef& x, const VecRef& dY, double dt) {
    obs.sensor(x, *h);
    return h->dot(dY) - 0.5 * h->squaredNorm() * dt;
  };
}

double pf_reweight(const DiffusionModel& model, const LogIncrement& log_increment,
                   ParticleEnsemble& ens, const VecRef& dY, double dt, RngStream& rng) {
  require(dt > 0.0, "pf_step: dt must be positive");
  require(ens.normalized, "pf_step: ensemble must be normalized");
  require(ens.positions.rows() == static_cast<Eigen::Index>(model.dim_state()),
          "pf_step: ensemble dimension differs from model");
  const auto d = static_cast<Eigen::Index>(model.dim_state());
  const auto q = static_cast<Eigen::Index>(model.dim_noise());
  const double sqrt_dt = std::sqrt(dt);
  Vec a(d);
  Mat sigma(d, q);
  Vec noise(q);
  for (Eigen::Index i = 0; i < ens.positions.cols(); ++i) {
    auto x = ens.positions.col(i);
    model.drift(x, a);
    model.diffusion_factor(x, sigma);
    for (Eigen::Index j = 0; j < q; ++j) noise[j] = sqrt_dt * rng.normal();
    x += a * dt + sigma * noise;
    ens.log_weights[i] += log_increment(x, dY, dt);
  }
  if (!ens.positions.allFinite())
    throw DivergenceError("pf_step: non-finite particle position", 0);
  ens.normalize();
  return ess(ens);
}

bool pf_resample_if_needed(ParticleEnsemble& ens, double n_eff, double resample_threshold,
                           RngStream& rng) {
  if (n_eff >= resample_threshold * static_cast<double>(ens.size())) return false;
  ens = resample_systematic(ens, rng);
  return true;
}

double pf_advance(const DiffusionModel& model, const LogIncrement& log_increment,
                  ParticleEnsemble& ens, const VecRef& dY, double dt, RngStream& rng,
                  double resample_threshold) {
  const double n_eff = pf_reweight(model, log_increment, ens, dY, dt, rng);
  pf_resample_if_needed(ens, n_eff, resample_threshold, rng);
  return n_eff;
}

ParticleEnsemble pf_step(const DiffusionModel& model, const ObservationModel& obs,
                         const ParticleEnsemble& ens, const VecRef& dY, double dt,
                         RngStream& rng, double resample_threshold) {
  require(dY.size() == static_cast<Eigen::Index>(obs.dim_obs()),
          "pf_step: observation increment has wrong dimension");
  ParticleEnsemble next = ens;
  pf_advance(model, zakai_increment(obs), next, dY, dt, rng, resample_threshold);
  return next;
}

namespace {

void record(const ParticleEnsemble& ens, const std::vector<ScalarFn>& fns, Eigen::Index row,
            Mat& moments) {
  for (std::size_t j = 0; j < fns.size(); ++j)
    moments(row, static_cast<Eigen::Index>(j)) = pf_estimate(ens, fns[j]);
}

}  // namespace

FilterEstimate run_particle_filter(const DiffusionModel& model, const LogIncrement& log_increment,
                                   const Vec& times, const Mat& increments,
                                   const std::vector<ScalarFn>& test_functions,
                                   const ParticleFilterOptions& options, RngStream& rng) {
  require(increments.cols() + 1 == times.size(), "particle filter: increments/times mismatch");
  require(options.resample_threshold >= 0.0 && options.resample_threshold <= 1.0,
          "particle filter: resample threshold must lie in [0, 1]");
  const Eigen::Index n = times.size();
  FilterEstimate est;
  est.times = times;
  est.moments.resize(n, static_cast<Eigen::Index>(test_functions.size()));
  est.ess.resize(n);

  ParticleEnsemble ens = pf_init(model.initial_law(), options.n_particles, rng);
  record(ens, test_functions, 0, est.moments);
  est.ess[0] = static_cast<double>(ens.size());
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double dt = times[k + 1] - times[k];
    try {
      est.ess[k + 1] = pf_reweight(model, log_increment, ens, increments.col(k), dt, rng);
    } catch (const EnsembleCollapse& e) {
      throw EnsembleCollapse(std::string(e.what()) + " at step " + std::to_string(k + 1));
    } catch (const DivergenceError& e) {
      throw DivergenceError("particle filter: non-finite particle position",
                            static_cast<std::size_t>(k + 1));
    }
    record(ens, test_functions, k + 1, est.moments);
    pf_resample_if_needed(ens, est.ess[k + 1], options.resample_threshold, rng);
  }
  return est;
}

FilterEstimate run_particle_filter(const DiffusionModel& model, const ObservationModel& obs,
                                   const ObservationPath& path,
                                   const std::vector<ScalarFn>& test_functions,
                                   const ParticleFilterOptions& options, RngStream& rng) {
  path.validate();
  require(path.dim() == obs.dim_obs(), "particle filter: observation dimension mismatch");
  return run_particle_filter(model, zakai_increment(obs), path.times, path.increments,
                             test_functions, options, rng);
}

}  // namespace ksp

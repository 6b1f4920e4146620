#pragma once

#include <stdexcept>
#include <vector>

#include "ksp/filter_estimate.hpp"
#include "ksp/observation.hpp"

namespace ksp {

class EnsembleCollapse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weighted point masses. Column i of `positions` is particle i.
struct ParticleEnsemble {
  Mat positions;
  Vec log_weights;
  bool normalized = false;

  std::size_t size() const noexcept { return static_cast<std::size_t>(positions.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(positions.rows()); }
  Vec weights() const { return log_weights.array().exp().matrix(); }

  /// Shifts log-weights so the weights sum to one. Throws EnsembleCollapse
  /// if every weight is zero or non-finite.
  void normalize();
  void validate() const;
};

/// Log-weight increment for one particle given the observed increment.
using LogIncrement = std::function<double(const VecRef& x, const VecRef& dY, double dt)>;

ParticleEnsemble pf_init(const InitialLaw& law, std::size_t n_particles, RngStream& rng);

/// Mutation by one Euler-Maruyama step, reweighting by
/// exp(h(x) . dY - 1/2 |h(x)|^2 dt), normalization and systematic
/// resampling when ESS < threshold * N.
ParticleEnsemble pf_step(const DiffusionModel& model, const ObservationModel& obs,
                         const ParticleEnsemble& ens, const VecRef& dY, double dt,
                         RngStream& rng, double resample_threshold = 0.5);

/// Mutation, reweighting and normalization in place, without resampling.
/// Returns the ESS of the reweighted ensemble.
double pf_reweight(const DiffusionModel& model, const LogIncrement& log_increment,
                   ParticleEnsemble& ens, const VecRef& dY, double dt, RngStream& rng);

/// Systematic resampling when n_eff < threshold * N. Returns whether it ran.
bool pf_resample_if_needed(ParticleEnsemble& ens, double n_eff, double resample_threshold,
                           RngStream& rng);

/// In-place variant with an arbitrary log-weight increment. Returns the ESS
/// measured after reweighting and before any resampling.
double pf_advance(const DiffusionModel& model, const LogIncrement& log_increment,
                  ParticleEnsemble& ens, const VecRef& dY, double dt, RngStream& rng,
                  double resample_threshold);

/// sum_i w_i phi(x_i).
double pf_estimate(const ParticleEnsemble& ens, const ScalarFn& phi);

/// 1 / sum_i w_i^2.
double ess(const ParticleEnsemble& ens);

ParticleEnsemble resample_systematic(const ParticleEnsemble& ens, RngStream& rng);

/// Zakai log-weight increment h(x) . dY - 1/2 |h(x)|^2 dt for `obs`.
LogIncrement zakai_increment(const ObservationModel& obs);

struct ParticleFilterOptions {
  std::size_t n_particles = 1000;
  double resample_threshold = 0.5;
};

/// Runs the particle filter over the whole observation record, recording
/// every test function at every observation time. Estimates are taken from
/// the weighted ensemble before any resampling at that step.
FilterEstimate run_particle_filter(const DiffusionModel& model, const ObservationModel& obs,
                                   const ObservationPath& path,
                                   const std::vector<ScalarFn>& test_functions,
                                   const ParticleFilterOptions& options, RngStream& rng);

/// Generic driver used by the Zakai filter above and the Heston filter.
FilterEstimate run_particle_filter(const DiffusionModel& model, const LogIncrement& log_increment,
                                   const Vec& times, const Mat& increments,
                                   const std::vector<ScalarFn>& test_functions,
                                   const ParticleFilterOptions& options, RngStream& rng);

}  // namespace ksp

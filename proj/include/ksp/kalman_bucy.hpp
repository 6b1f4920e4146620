#pragma once

#include <iosfwd>
#include <vector>

#include "ksp/observation.hpp"

namespace ksp {

/// dX = (F X + f0) dt + sigma dV,  dY = (H X + h0) dt + dW.
/// Coefficients are held constant over a run.
struct LinearModel {
  Mat F;
  Vec f0;
  Mat sigma;
  Mat H;
  Vec h0;

  std::size_t dim_state() const noexcept { return static_cast<std::size_t>(F.rows()); }
  std::size_t dim_obs() const noexcept { return static_cast<std::size_t>(H.rows()); }
  void validate() const;

  static LinearModel scalar(double F, double f0, double sigma, double H, double h0);

  /// The same dynamics as general diffusion/observation models.
  DiffusionModel diffusion(InitialLaw law) const;
  ObservationModel observation() const;
};

struct GaussianBelief {
  Vec mean;
  Mat cov;

  void validate() const;
};

/// sigma sigma^T + F R + R F^T - R H^T H R, symmetrized.
Mat riccati_rhs(const LinearModel& model, const Mat& R);

/// One explicit Euler step of the Kalman-Bucy mean/Riccati pair.
GaussianBelief kalman_step(const LinearModel& model, const GaussianBelief& belief,
                           const VecRef& dY, double dt);

/// Beliefs at every observation time; element 0 is belief0.
std::vector<GaussianBelief> run_kalman(const LinearModel& model, const ObservationPath& obs,
                                       const GaussianBelief& belief0);

/// Integrates the Riccati ODE to its fixed point.
Mat steady_state_cov(const LinearModel& model, double dt = 1e-3, std::size_t max_steps = 1000000);

/// Symmetrizes and floors negative eigenvalues at zero. Returns the most
/// negative eigenvalue seen before flooring through `min_eig` if non-null.
Mat symmetrize_floor(const Mat& R, double* min_eig = nullptr);

void write_belief_csv(std::ostream& os, const Vec& times, const std::vector<GaussianBelief>& beliefs);

}  // namespace ksp

#pragma once

#include <vector>

#include "ksp/filter_estimate.hpp"
#include "ksp/observation.hpp"

namespace ksp {

/// Test function with analytic derivatives.
struct KspProbe {
  ScalarFn phi;
  GradientFn grad;
  HessianFn hess;
};

/// Columns to register with a filter so that ksp_residual can read them:
/// phi, A phi, phi h_1..h_m, h_1..h_m.
std::vector<ScalarFn> ksp_test_functions(const DiffusionModel& model, const ObservationModel& obs,
                                         const KspProbe& probe);

struct KspResidual {
  /// pi(phi h) - pi(phi) pi(h) as innovation coefficient.
  Vec covariance_form;
  /// pi(phi h) - pi(h)^2 as innovation coefficient.
  Vec printed_form;
};

/// r_k = pi_{k+1}(phi) - pi_k(phi) - pi_k(A phi) dt
///       - (pi_k(phi h) - pi_k(phi) pi_k(h)) . (dY_k - pi_k(h) dt)
/// computed from the columns produced by ksp_test_functions, starting at
/// `first_column` of the estimate.
KspResidual ksp_residual(const FilterEstimate& series, const ObservationPath& obs,
                         const ObservationModel& obs_model, std::size_t first_column = 0);

/// Innovation coefficient pi(phi h) - pi(phi) pi(h) at every time (rows) and
/// observation component (columns).
Mat ksp_gain(const FilterEstimate& series, std::size_t dim_obs, std::size_t first_column = 0);

}  // namespace ksp

#include "ksp/ksp_residual.hpp"

#include <cmath>

namespace ksp {

std::vector<ScalarFn> ksp_test_functions(const DiffusionModel& model, const ObservationModel& obs,
                                         const KspProbe& probe) {
  require(probe.phi && probe.grad && probe.hess, "ksp probe: phi and its derivatives are required");
  std::vector<ScalarFn> fns;
  fns.push_back(probe.phi);
  fns.push_back([model, probe](const VecRef& x) {
    return apply_generator(model, probe.grad, probe.hess, x);
  });
  for (std::size_t j = 0; j < obs.dim_obs(); ++j)
    fns.push_back([obs, probe, j](const VecRef& x) {
      return probe.phi(x) * obs.sensor(x)[static_cast<Eigen::Index>(j)];
    });
  for (std::size_t j = 0; j < obs.dim_obs(); ++j)
    fns.push_back([obs, j](const VecRef& x) { return obs.sensor(x)[static_cast<Eigen::Index>(j)]; });
  return fns;
}

namespace {

void check_layout(const FilterEstimate& series, std::size_t m, std::size_t first) {
  series.validate();
  require(static_cast<std::size_t>(series.moments.cols()) >= first + 2 + 2 * m,
          "ksp_residual: estimate lacks the registered ksp columns");
}

}  // namespace

Mat ksp_gain(const FilterEstimate& series, std::size_t dim_obs, std::size_t first_column) {
  check_layout(series, dim_obs, first_column);
  const auto m = static_cast<Eigen::Index>(dim_obs);
  const auto c = static_cast<Eigen::Index>(first_column);
  const Eigen::Index n = series.moments.rows();
  Mat gain(n, m);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index j = 0; j < m; ++j)
      gain(k, j) = series.moments(k, c + 2 + j) -
                   series.moments(k, c) * series.moments(k, c + 2 + m + j);
  return gain;
}

KspResidual ksp_residual(const FilterEstimate& series, const ObservationPath& obs,
                         const ObservationModel& obs_model, std::size_t first_column) {
  obs.validate();
  const auto m = static_cast<Eigen::Index>(obs_model.dim_obs());
  require(obs.dim() == obs_model.dim_obs(), "ksp_residual: observation dimension mismatch");
  check_layout(series, obs_model.dim_obs(), first_column);
  require(series.times.size() == obs.times.size(), "ksp_residual: grid mismatch");
  for (Eigen::Index k = 0; k < obs.times.size(); ++k)
    require(std::abs(series.times[k] - obs.times[k]) <= 1e-12 * (1.0 + std::abs(obs.times[k])),
            "ksp_residual: grid mismatch");

  const auto c = static_cast<Eigen::Index>(first_column);
  const Eigen::Index steps = obs.increments.cols();
  KspResidual out;
  out.covariance_form.resize(steps);
  out.printed_form.resize(steps);
  const Mat& mo = series.moments;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const double dt = obs.times[k + 1] - obs.times[k];
    const double drift = mo(k + 1, c) - mo(k, c) - mo(k, c + 1) * dt;
    double cov_term = 0.0;
    double printed_term = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double pi_phi_h = mo(k, c + 2 + j);
      const double pi_h = mo(k, c + 2 + m + j);
      const double innovation = obs.increments(j, k) - pi_h * dt;
      cov_term += (pi_phi_h - mo(k, c) * pi_h) * innovation;
      printed_term += (pi_phi_h - pi_h * pi_h) * innovation;
    }
    out.covariance_form[k] = drift - cov_term;
    out.printed_form[k] = drift - printed_term;
  }
  return out;
}

}  // namespace ksp

#pragma once

#include <iosfwd>

#include "ksp/sde.hpp"

namespace ksp {

/// Sensor h(.) of the integrated observation Y_t = int_0^t h(X_s) ds + W_t,
/// with W a unit-intensity Wiener process independent of X.
class ObservationModel {
 public:
  ObservationModel(std::size_t dim_obs, VectorField sensor);
  static ObservationModel scalar(std::function<double(double)> sensor);

  std::size_t dim_obs() const noexcept { return dim_obs_; }
  void sensor(const VecRef& x, Eigen::Ref<Vec> out) const { sensor_(x, out); }
  Vec sensor(const VecRef& x) const;

 private:
  std::size_t dim_obs_;
  VectorField sensor_;
};

/// Column k of `values` is Y at times[k]; column k of `increments` is
/// Y(times[k+1]) - Y(times[k]).
struct ObservationPath {
  Vec times;
  Mat values;
  Mat increments;

  /// Builds values by cumulative summation from Y_0 = 0, then stores the
  /// increments as exact differences of the stored values.
  static ObservationPath from_increments(Vec times, const Mat& increments);

  std::size_t size() const noexcept { return static_cast<std::size_t>(times.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(values.rows()); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  void validate() const;
};

/// dY_k = h(X_k) dt + dW_k with dW drawn from `rng`. With noise_off the
/// Wiener part is dropped (test hook).
ObservationPath simulate_observation(const ObservationModel& obs, const SamplePath& state_path,
                                     RngStream& rng, bool noise_off = false);

/// Same recursion with caller-supplied Wiener increments (rows = steps).
ObservationPath simulate_observation(const ObservationModel& obs, const SamplePath& state_path,
                                     const Mat& wiener_path);

/// log Z_T = -sum_k h(X_k) . dW_k - 1/2 sum_k |h(X_k)|^2 dt.
double girsanov_log_weight(const ObservationModel& obs, const SamplePath& state_path,
                           const Mat& wiener_path);

struct NovikovReport {
  double estimate = 0.0;
  double std_error = 0.0;
  bool finite = true;
};

/// Monte Carlo estimate of E[exp(1/2 int_0^T |h(X_s)|^2 ds)]. Advisory only.
NovikovReport check_novikov(const ObservationModel& obs, const DiffusionModel& model,
                            double horizon, std::size_t n_paths, RngStream& rng,
                            double dt = 1e-2);

void write_observation_csv(std::ostream& os, const ObservationPath& path);
ObservationPath read_observation_csv(std::istream& is);

}  // namespace ksp

#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "ksp/rng.hpp"
#include "ksp/types.hpp"

namespace ksp {

/// Law of X_0: a point mass, a Gaussian, or a weighted set of atoms.
class InitialLaw {
 public:
  enum class Kind { PointMass, Gaussian, Empirical };

  static InitialLaw point_mass(Vec x0);
  /// Throws if the covariance is not positive semidefinite.
  static InitialLaw gaussian(Vec mean, Mat covariance);
  /// Atoms are the columns of `points`; weights must be nonnegative and sum to 1.
  static InitialLaw empirical(Mat points, Vec weights);

  Kind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(location_.size()); }
  const Vec& mean_or_point() const noexcept { return location_; }
  const Mat& covariance() const noexcept { return covariance_; }
  const Mat& points() const noexcept { return points_; }
  const Vec& weights() const noexcept { return weights_; }

  Vec sample(RngStream& rng) const;
  void sample_into(RngStream& rng, Eigen::Ref<Vec> out) const;

 private:
  InitialLaw() = default;

  Kind kind_ = Kind::PointMass;
  Vec location_;
  Mat covariance_;
  Mat chol_;
  Mat points_;
  Vec weights_;
  Vec cumulative_;
};

/// Diffusion dX = a(X) dt + sigma(X) dV with b = sigma sigma^T.
class DiffusionModel {
 public:
  DiffusionModel(std::size_t dim_state, std::size_t dim_noise, VectorField drift,
                 MatrixField diffusion_factor, InitialLaw initial_law);

  /// One-dimensional convenience constructor.
  static DiffusionModel scalar(std::function<double(double)> drift,
                               std::function<double(double)> sigma, InitialLaw initial_law);

  std::size_t dim_state() const noexcept { return dim_state_; }
  std::size_t dim_noise() const noexcept { return dim_noise_; }
  const InitialLaw& initial_law() const noexcept { return initial_law_; }

  void drift(const VecRef& x, Eigen::Ref<Vec> out) const { drift_(x, out); }
  void diffusion_factor(const VecRef& x, Eigen::Ref<Mat> out) const { sigma_(x, out); }
  Vec drift(const VecRef& x) const;
  Mat diffusion_factor(const VecRef& x) const;
  /// b(x) = sigma(x) sigma(x)^T.
  Mat diffusion(const VecRef& x) const;

  /// Verifies b(x) is symmetric PSD and a, sigma finite at each column of `points`.
  void check_at(const Mat& points) const;

 private:
  std::size_t dim_state_;
  std::size_t dim_noise_;
  VectorField drift_;
  MatrixField sigma_;
  InitialLaw initial_law_;
};

/// Discretized path; column k of `states` is the state at times[k].
struct SamplePath {
  Vec times;
  Mat states;

  std::size_t size() const noexcept { return static_cast<std::size_t>(times.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(states.rows()); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  /// Checks times[0] = 0, uniform spacing and matching sizes.
  void validate() const;
};

/// n_steps x dim matrix of i.i.d. N(0, dt) entries.
Mat wiener_increments(double dt, std::size_t n_steps, std::size_t dim, RngStream& rng);

/// Number of Euler steps covering [0, horizon] with step dt.
std::size_t step_count(double horizon, double dt);

/// Euler-Maruyama path started from a draw of the model's initial law.
SamplePath simulate_path(const DiffusionModel& model, double horizon, double dt, RngStream& rng);

/// Euler-Maruyama path from x0 driven by the given increments (rows = steps).
SamplePath simulate_path_from(const DiffusionModel& model, const VecRef& x0, const Mat& dV,
                              double dt);

/// (A f)(x) = a(x) . grad f(x) + 1/2 tr(b(x) hess f(x)).
double apply_generator(const DiffusionModel& model, const GradientFn& f_grad,
                       const HessianFn& f_hess, const VecRef& x);
double apply_generator(const DiffusionModel& model, const Vec& grad, const Mat& hess,
                       const VecRef& x);

/// Central-difference fallbacks, step 1e-5 * (1 + |x_i|).
Vec fd_gradient(const ScalarFn& f, const VecRef& x);
Mat fd_hessian(const ScalarFn& f, const VecRef& x);

/// f(X_T) - f(X_0) - sum_k (A f)(X_k) dt, the discrete martingale M_{f,T}.
double martingale_residual(const DiffusionModel& model, const ScalarFn& f,
                           const GradientFn& f_grad, const HessianFn& f_hess,
                           const SamplePath& path);

void write_path_csv(std::ostream& os, const SamplePath& path);
SamplePath read_path_csv(std::istream& is);

}  // namespace ksp

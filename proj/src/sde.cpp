#include "ksp/sde.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "ksp/csv.hpp"

namespace ksp {

namespace {

bool is_psd(const Mat& m, double tol) {
  if (m.size() == 0) return true;
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * (1.0 + m.cwiseAbs().maxCoeff()))
    return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * (1.0 + m.cwiseAbs().maxCoeff());
}

}  // namespace

InitialLaw InitialLaw::point_mass(Vec x0) {
  require(x0.size() > 0, "initial law: empty point");
  require(x0.allFinite(), "initial law: non-finite point");
  InitialLaw law;
  law.kind_ = Kind::PointMass;
  law.location_ = std::move(x0);
  return law;
}

InitialLaw InitialLaw::gaussian(Vec mean, Mat covariance) {
  const auto d = mean.size();
  require(d > 0, "initial law: empty mean");
  require(covariance.rows() == d && covariance.cols() == d,
          "initial law: covariance must be d x d");
  require(is_psd(covariance, 1e-12), "initial law: covariance is not positive semidefinite");
  InitialLaw law;
  law.kind_ = Kind::Gaussian;
  law.location_ = std::move(mean);
  law.covariance_ = 0.5 * (covariance + covariance.transpose());
  // LDLT tolerates singular PSD covariances.
  Eigen::LDLT<Mat> ldlt(law.covariance_);
  require(ldlt.info() == Eigen::Success, "initial law: covariance factorization failed");
  Vec dvals = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  Mat l = ldlt.matrixL();
  law.chol_ = ldlt.transpositionsP().transpose() * (l * dvals.asDiagonal());
  return law;
}

InitialLaw InitialLaw::empirical(Mat points, Vec weights) {
  require(points.cols() > 0 && points.rows() > 0, "initial law: no atoms");
  require(points.cols() == weights.size(), "initial law: one weight per atom required");
  require(points.allFinite(), "initial law: non-finite atom");
  require((weights.array() >= 0.0).all(), "initial law: negative weight");
  require(std::abs(weights.sum() - 1.0) <= 1e-12, "initial law: weights must sum to 1");
  InitialLaw law;
  law.kind_ = Kind::Empirical;
  law.location_ = points * weights;
  law.points_ = std::move(points);
  law.weights_ = std::move(weights);
  law.cumulative_.resize(law.weights_.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < law.weights_.size(); ++i) {
    acc += law.weights_[i];
    law.cumulative_[i] = acc;
  }
  return law;
}

void InitialLaw::sample_into(RngStream& rng, Eigen::Ref<Vec> out) const {
  switch (kind_) {
    case Kind::PointMass:
      out = location_;
      return;
    case Kind::Gaussian: {
      Vec z(location_.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
      out = location_ + chol_ * z;
      return;
    }
    case Kind::Empirical: {
      const double u = rng.uniform() * cumulative_[cumulative_.size() - 1];
      const auto* begin = cumulative_.data();
      const auto* end = begin + cumulative_.size();
      auto idx = static_cast<Eigen::Index>(std::upper_bound(begin, end, u) - begin);
      idx = std::min<Eigen::Index>(idx, cumulative_.size() - 1);
      // Skip zero-weight atoms that share a cumulative value.
      while (weights_[idx] == 0.0 && idx + 1 < weights_.size()) ++idx;
      out = points_.col(idx);
      return;
    }
  }
}

Vec InitialLaw::sample(RngStream& rng) const {
  Vec out(location_.size());
  sample_into(rng, out);
  return out;
}

DiffusionModel::DiffusionModel(std::size_t dim_state, std::size_t dim_noise, VectorField drift,
                               MatrixField diffusion_factor, InitialLaw initial_law)
    : dim_state_(dim_state),
      dim_noise_(dim_noise),
      drift_(std::move(drift)),
      sigma_(std::move(diffusion_factor)),
      initial_law_(std::move(initial_law)) {
  require(dim_state_ > 0, "diffusion model: dim_state must be positive");
  require(dim_noise_ > 0, "diffusion model: dim_noise must be positive");
  require(static_cast<bool>(drift_) && static_cast<bool>(sigma_),
          "diffusion model: drift and diffusion factor are required");
  require(initial_law_.dim() == dim_state_,
          "diffusion model: initial law dimension differs from dim_state");
}

DiffusionModel DiffusionModel::scalar(std::function<double(double)> drift,
                                      std::function<double(double)> sigma,
                                      InitialLaw initial_law) {
  return DiffusionModel(
      1, 1, [drift](const VecRef& x, Eigen::Ref<Vec> out) { out[0] = drift(x[0]); },
      [sigma](const VecRef& x, Eigen::Ref<Mat> out) { out(0, 0) = sigma(x[0]); },
      std::move(initial_law));
}

Vec DiffusionModel::drift(const VecRef& x) const {
  Vec out(dim_state_);
  drift_(x, out);
  return out;
}

Mat DiffusionModel::diffusion_factor(const VecRef& x) const {
  Mat out(dim_state_, dim_noise_);
  sigma_(x, out);
  return out;
}

Mat DiffusionModel::diffusion(const VecRef& x) const {
  const Mat s = diffusion_factor(x);
  return s * s.transpose();
}

void DiffusionModel::check_at(const Mat& points) const {
  require(points.rows() == static_cast<Eigen::Index>(dim_state_),
          "diffusion model: check points have wrong dimension");
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    const Vec x = points.col(k);
    if (!x.allFinite()) continue;
    require(drift(x).allFinite(), "diffusion model: non-finite drift at a finite point");
    const Mat b = diffusion(x);
    require(b.allFinite(), "diffusion model: non-finite diffusion at a finite point");
    require(is_psd(b, 1e-12), "diffusion model: b(x) is not symmetric PSD");
  }
}

void SamplePath::validate() const {
  require(times.size() >= 1, "path: no time points");
  require(states.cols() == times.size(), "path: state count differs from time count");
  require(times[0] == 0.0, "path: times must start at 0");
  if (times.size() < 2) return;
  const double h = times[1] - times[0];
  require(h > 0.0, "path: times must be strictly increasing");
  for (Eigen::Index k = 1; k < times.size(); ++k) {
    const double step = times[k] - times[k - 1];
    require(std::abs(step - h) <= 1e-12 * std::max(1.0, std::abs(times[k])) + 1e-12 * h,
            "path: non-uniform time grid");
  }
}

Mat wiener_increments(double dt, std::size_t n_steps, std::size_t dim, RngStream& rng) {
  require(dt > 0.0 && std::isfinite(dt), "wiener_increments: dt must be positive");
  require(n_steps >= 1, "wiener_increments: n_steps must be at least 1");
  const double scale = std::sqrt(dt);
  Mat out(n_steps, dim);
  // Row-wise fill so the draw order is step-major.
  for (std::size_t k = 0; k < n_steps; ++k)
    for (std::size_t j = 0; j < dim; ++j) out(k, j) = scale * rng.normal();
  return out;
}

std::size_t step_count(double horizon, double dt) {
  require(horizon > 0.0 && std::isfinite(horizon), "horizon must be positive");
  require(dt > 0.0 && dt <= horizon * (1.0 + 1e-12), "dt must satisfy 0 < dt <= horizon");
  const double ratio = horizon / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio))
    return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(ratio));
}

SamplePath simulate_path_from(const DiffusionModel& model, const VecRef& x0, const Mat& dV,
                              double dt) {
  const auto d = static_cast<Eigen::Index>(model.dim_state());
  require(x0.size() == d, "simulate_path: initial state has wrong dimension");
  require(dV.cols() == static_cast<Eigen::Index>(model.dim_noise()),
          "simulate_path: noise increments have wrong dimension");
  const Eigen::Index n = dV.rows();
  SamplePath path;
  path.times.resize(n + 1);
  path.states.resize(d, n + 1);
  for (Eigen::Index k = 0; k <= n; ++k) path.times[k] = static_cast<double>(k) * dt;
  path.states.col(0) = x0;

  Vec a(d);
  Mat sigma(d, static_cast<Eigen::Index>(model.dim_noise()));
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto x = path.states.col(k);
    model.drift(x, a);
    model.diffusion_factor(x, sigma);
    path.states.col(k + 1) = x + a * dt + sigma * dV.row(k).transpose();
    if (!path.states.col(k + 1).allFinite())
      throw DivergenceError("simulate_path: non-finite state", static_cast<std::size_t>(k + 1));
  }
  return path;
}

SamplePath simulate_path(const DiffusionModel& model, double horizon, double dt, RngStream& rng) {
  const std::size_t n = step_count(horizon, dt);
  const Vec x0 = model.initial_law().sample(rng);
  const Mat dV = wiener_increments(dt, n, model.dim_noise(), rng);
  return simulate_path_from(model, x0, dV, dt);
}

double apply_generator(const DiffusionModel& model, const Vec& grad, const Mat& hess,
                       const VecRef& x) {
  const auto d = static_cast<Eigen::Index>(model.dim_state());
  require(x.size() == d, "apply_generator: state has wrong dimension");
  require(grad.size() == d, "apply_generator: gradient has wrong dimension");
  require(hess.rows() == d && hess.cols() == d, "apply_generator: Hessian has wrong dimension");
  const Vec a = model.drift(x);
  const Mat b = model.diffusion(x);
  return a.dot(grad) + 0.5 * (b.cwiseProduct(hess)).sum();
}

double apply_generator(const DiffusionModel& model, const GradientFn& f_grad,
                       const HessianFn& f_hess, const VecRef& x) {
  return apply_generator(model, f_grad(x), f_hess(x), x);
}

Vec fd_gradient(const ScalarFn& f, const VecRef& x) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Mat fd_hessian(const ScalarFn& f, const VecRef& x) {
  const auto d = x.size();
  Mat hs(d, d);
  Vec xp = x;
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double hi = 1e-5 * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + hi;
    const double fp = f(xp);
    xp[i] = x[i] - hi;
    const double fm = f(xp);
    xp[i] = x[i];
    hs(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = 1e-5 * (1.0 + std::abs(x[j]));
      double acc = 0.0;
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          xp[i] = x[i] + si * hi;
          xp[j] = x[j] + sj * hj;
          acc += si * sj * f(xp);
        }
      xp[i] = x[i];
      xp[j] = x[j];
      hs(i, j) = hs(j, i) = acc / (4.0 * hi * hj);
    }
  }
  return hs;
}

double martingale_residual(const DiffusionModel& model, const ScalarFn& f,
                           const GradientFn& f_grad, const HessianFn& f_hess,
                           const SamplePath& path) {
  path.validate();
  require(path.dim() == model.dim_state(), "martingale_residual: path dimension mismatch");
  const auto n = path.times.size();
  double integral = 0.0;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const auto x = path.states.col(k);
    integral += apply_generator(model, f_grad, f_hess, x) * (path.times[k + 1] - path.times[k]);
  }
  return f(path.states.col(n - 1)) - f(path.states.col(0)) - integral;
}

void write_path_csv(std::ostream& os, const SamplePath& path) {
  auto header = csv::numbered("x_", path.dim());
  header.insert(header.begin(), "t");
  Mat rows(path.size(), path.dim() + 1);
  rows.col(0) = path.times;
  rows.rightCols(path.dim()) = path.states.transpose();
  csv::write(os, header, rows);
}

SamplePath read_path_csv(std::istream& is) {
  const auto table = csv::read(is);
  require(!table.header.empty() && table.header[0] == "t", "path csv: first column must be t");
  const auto d = table.header.size() - 1;
  SamplePath path;
  path.times.resize(table.rows.size());
  path.states.resize(d, table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    path.times[r] = table.rows[r][0];
    for (std::size_t j = 0; j < d; ++j) path.states(j, r) = table.rows[r][j + 1];
  }
  path.validate();
  return path;
}

}  // namespace ksp

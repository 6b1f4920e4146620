#include "ksp/kalman_bucy.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "ksp/csv.hpp"

namespace ksp {

void LinearModel::validate() const {
  const auto d = F.rows();
  require(d > 0 && F.cols() == d, "linear model: F must be square and non-empty");
  require(f0.size() == d, "linear model: f0 must have length d");
  require(sigma.rows() == d && sigma.cols() > 0, "linear model: sigma must be d x q");
  require(H.cols() == d && H.rows() > 0, "linear model: H must be m x d");
  require(h0.size() == H.rows(), "linear model: h0 must have length m");
  require(F.allFinite() && f0.allFinite() && sigma.allFinite() && H.allFinite() &&
              h0.allFinite(),
          "linear model: non-finite coefficient");
}

LinearModel LinearModel::scalar(double F, double f0, double sigma, double H, double h0) {
  LinearModel m{Mat::Constant(1, 1, F), Vec::Constant(1, f0), Mat::Constant(1, 1, sigma),
                Mat::Constant(1, 1, H), Vec::Constant(1, h0)};
  return m;
}

DiffusionModel LinearModel::diffusion(InitialLaw law) const {
  validate();
  Mat Fc = F;
  Vec fc = f0;
  Mat sc = sigma;
  return DiffusionModel(
      dim_state(), static_cast<std::size_t>(sigma.cols()),
      [Fc, fc](const VecRef& x, Eigen::Ref<Vec> out) { out.noalias() = Fc * x + fc; },
      [sc](const VecRef&, Eigen::Ref<Mat> out) { out = sc; }, std::move(law));
}

ObservationModel LinearModel::observation() const {
  validate();
  Mat Hc = H;
  Vec hc = h0;
  return ObservationModel(dim_obs(), [Hc, hc](const VecRef& x, Eigen::Ref<Vec> out) {
    out.noalias() = Hc * x + hc;
  });
}

void GaussianBelief::validate() const {
  const auto d = mean.size();
  require(d > 0 && cov.rows() == d && cov.cols() == d, "belief: covariance must be d x d");
  require(mean.allFinite() && cov.allFinite(), "belief: non-finite entries");
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10, "belief: covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(cov, Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() >= -1e-10, "belief: covariance not PSD");
}

namespace {

void check_dims(const LinearModel& model, const Mat& R) {
  model.validate();
  const auto d = static_cast<Eigen::Index>(model.dim_state());
  require(R.rows() == d && R.cols() == d, "riccati: R must be d x d");
}

}  // namespace

Mat riccati_rhs(const LinearModel& model, const Mat& R) {
  check_dims(model, R);
  const Mat HR = model.H * R;
  Mat out = model.sigma * model.sigma.transpose() + model.F * R + R * model.F.transpose() -
            HR.transpose() * HR;
  return 0.5 * (out + out.transpose());
}

Mat symmetrize_floor(const Mat& R, double* min_eig) {
  const Mat S = 0.5 * (R + R.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  if (min_eig) *min_eig = es.eigenvalues().minCoeff();
  if (es.eigenvalues().minCoeff() >= 0.0) return S;
  const Vec lam = es.eigenvalues().cwiseMax(0.0);
  Mat out = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

GaussianBelief kalman_step(const LinearModel& model, const GaussianBelief& belief,
                           const VecRef& dY, double dt) {
  require(dt > 0.0, "kalman_step: dt must be positive");
  check_dims(model, belief.cov);
  require(belief.mean.size() == belief.cov.rows(), "kalman_step: mean dimension mismatch");
  require(dY.size() == static_cast<Eigen::Index>(model.dim_obs()),
          "kalman_step: observation increment has wrong dimension");
  const Vec& x = belief.mean;
  const Mat& R = belief.cov;
  const Vec innovation = dY - (model.H * x + model.h0) * dt;
  GaussianBelief next;
  next.mean = x + (model.F * x + model.f0) * dt + R * model.H.transpose() * innovation;
  next.cov = symmetrize_floor(R + riccati_rhs(model, R) * dt);
  return next;
}

std::vector<GaussianBelief> run_kalman(const LinearModel& model, const ObservationPath& obs,
                                       const GaussianBelief& belief0) {
  obs.validate();
  belief0.validate();
  require(obs.dim() == model.dim_obs(), "run_kalman: observation dimension mismatch");
  std::vector<GaussianBelief> out;
  out.reserve(obs.size());
  out.push_back(belief0);
  for (Eigen::Index k = 0; k < obs.increments.cols(); ++k) {
    const double dt = obs.times[k + 1] - obs.times[k];
    out.push_back(kalman_step(model, out.back(), obs.increments.col(k), dt));
  }
  return out;
}

Mat steady_state_cov(const LinearModel& model, double dt, std::size_t max_steps) {
  require(dt > 0.0, "steady_state_cov: dt must be positive");
  const auto d = static_cast<Eigen::Index>(model.dim_state());
  Mat R = Mat::Zero(d, d);
  double residual = 0.0;
  // Explicit Euler shares its fixed point with the ODE, so the stopping
  // residual bounds the algebraic Riccati error directly.
  for (std::size_t k = 0; k < max_steps; ++k) {
    const Mat rhs = riccati_rhs(model, R);
    residual = rhs.cwiseAbs().maxCoeff();
    if (!std::isfinite(residual)) break;
    if (residual < 1e-12) return R;
    R = symmetrize_floor(R + rhs * dt);
  }
  std::ostringstream msg;
  msg << "steady_state_cov: no convergence, last residual " << residual;
  throw std::runtime_error(msg.str());
}

void write_belief_csv(std::ostream& os, const Vec& times, const std::vector<GaussianBelief>& beliefs) {
  require(static_cast<std::size_t>(times.size()) == beliefs.size(),
          "belief csv: one belief per time point required");
  require(!beliefs.empty(), "belief csv: empty series");
  const auto d = beliefs.front().mean.size();
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 1; i <= d; ++i) header.push_back("xhat_" + std::to_string(i));
  for (Eigen::Index i = 1; i <= d; ++i)
    for (Eigen::Index j = i; j <= d; ++j)
      header.push_back("R_" + std::to_string(i) + std::to_string(j));
  Mat rows(times.size(), static_cast<Eigen::Index>(header.size()));
  for (Eigen::Index r = 0; r < times.size(); ++r) {
    const auto& b = beliefs[static_cast<std::size_t>(r)];
    Eigen::Index c = 0;
    rows(r, c++) = times[r];
    for (Eigen::Index i = 0; i < d; ++i) rows(r, c++) = b.mean[i];
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i; j < d; ++j) rows(r, c++) = b.cov(i, j);
  }
  csv::write(os, header, rows);
}

}  // namespace ksp

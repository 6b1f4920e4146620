#include "ksp/observation.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "ksp/csv.hpp"

namespace ksp {

ObservationModel::ObservationModel(std::size_t dim_obs, VectorField sensor)
    : dim_obs_(dim_obs), sensor_(std::move(sensor)) {
  require(dim_obs_ > 0, "observation model: dim_obs must be positive");
  require(static_cast<bool>(sensor_), "observation model: sensor is required");
}

ObservationModel ObservationModel::scalar(std::function<double(double)> sensor) {
  return ObservationModel(
      1, [sensor](const VecRef& x, Eigen::Ref<Vec> out) { out[0] = sensor(x[0]); });
}

Vec ObservationModel::sensor(const VecRef& x) const {
  Vec out(dim_obs_);
  sensor_(x, out);
  return out;
}

ObservationPath ObservationPath::from_increments(Vec times, const Mat& increments) {
  require(increments.cols() + 1 == times.size(), "observation path: need one increment per step");
  ObservationPath p;
  p.times = std::move(times);
  p.values.resize(increments.rows(), p.times.size());
  p.values.col(0).setZero();
  for (Eigen::Index k = 0; k < increments.cols(); ++k)
    p.values.col(k + 1) = p.values.col(k) + increments.col(k);
  p.increments.resize(increments.rows(), increments.cols());
  for (Eigen::Index k = 0; k < increments.cols(); ++k)
    p.increments.col(k) = p.values.col(k + 1) - p.values.col(k);
  return p;
}

void ObservationPath::validate() const {
  SamplePath grid{times, Mat::Zero(1, times.size())};
  grid.validate();
  require(values.cols() == times.size(), "observation path: value count differs from times");
  require(increments.cols() + 1 == times.size(), "observation path: increment count mismatch");
  require(increments.rows() == values.rows(), "observation path: increment dimension mismatch");
  require(values.col(0).isZero(0.0), "observation path: Y_0 must be 0");
  for (Eigen::Index k = 0; k < increments.cols(); ++k) {
    const double err = (values.col(k + 1) - values.col(k) - increments.col(k)).cwiseAbs().maxCoeff();
    require(err <= 1e-12 * (1.0 + values.col(k + 1).cwiseAbs().maxCoeff()),
            "observation path: increments inconsistent with values");
  }
}

namespace {

void check_pair(const ObservationModel& obs, const SamplePath& state_path, const Mat& dW) {
  state_path.validate();
  require(obs.dim_obs() <= state_path.dim(), "observation: dim_obs exceeds state dimension");
  require(dW.rows() + 1 == state_path.times.size(),
          "observation: Wiener path grid differs from state path grid");
  require(dW.cols() == static_cast<Eigen::Index>(obs.dim_obs()),
          "observation: Wiener path dimension differs from dim_obs");
}

}  // namespace

ObservationPath simulate_observation(const ObservationModel& obs, const SamplePath& state_path,
                                     const Mat& wiener_path) {
  check_pair(obs, state_path, wiener_path);
  const Eigen::Index n = wiener_path.rows();
  const auto m = static_cast<Eigen::Index>(obs.dim_obs());
  Mat dY(m, n);
  Vec h(m);
  for (Eigen::Index k = 0; k < n; ++k) {
    obs.sensor(state_path.states.col(k), h);
    if (!h.allFinite())
      throw DivergenceError("simulate_observation: non-finite sensor value",
                            static_cast<std::size_t>(k));
    const double dt = state_path.times[k + 1] - state_path.times[k];
    dY.col(k) = h * dt + wiener_path.row(k).transpose();
  }
  return ObservationPath::from_increments(state_path.times, dY);
}

ObservationPath simulate_observation(const ObservationModel& obs, const SamplePath& state_path,
                                     RngStream& rng, bool noise_off) {
  state_path.validate();
  require(state_path.size() >= 2, "simulate_observation: path needs at least one step");
  Mat dW = wiener_increments(state_path.dt(), state_path.size() - 1, obs.dim_obs(), rng);
  if (noise_off) dW.setZero();
  return simulate_observation(obs, state_path, dW);
}

double girsanov_log_weight(const ObservationModel& obs, const SamplePath& state_path,
                           const Mat& wiener_path) {
  check_pair(obs, state_path, wiener_path);
  Vec h(obs.dim_obs());
  double stochastic = 0.0;
  double quadratic = 0.0;
  for (Eigen::Index k = 0; k < wiener_path.rows(); ++k) {
    obs.sensor(state_path.states.col(k), h);
    const double dt = state_path.times[k + 1] - state_path.times[k];
    stochastic += h.dot(wiener_path.row(k).transpose());
    quadratic += h.squaredNorm() * dt;
  }
  return -stochastic - 0.5 * quadratic;
}

NovikovReport check_novikov(const ObservationModel& obs, const DiffusionModel& model,
                            double horizon, std::size_t n_paths, RngStream& rng, double dt) {
  require(n_paths >= 100, "check_novikov: n_paths must be at least 100");
  const std::size_t steps = step_count(horizon, dt);
  Vec h(obs.dim_obs());
  double sum = 0.0;
  double sum_sq = 0.0;
  NovikovReport report;
  for (std::size_t p = 0; p < n_paths; ++p) {
    RngStream path_rng = rng.derive(p);
    const Vec x0 = model.initial_law().sample(path_rng);
    const Mat dV = wiener_increments(dt, steps, model.dim_noise(), path_rng);
    const SamplePath path = simulate_path_from(model, x0, dV, dt);
    double integral = 0.0;
    for (Eigen::Index k = 0; k + 1 < static_cast<Eigen::Index>(path.size()); ++k) {
      obs.sensor(path.states.col(k), h);
      integral += h.squaredNorm() * dt;
    }
    const double v = std::exp(0.5 * integral);
    if (!std::isfinite(v)) report.finite = false;
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_paths);
  report.estimate = sum / n;
  const double var = std::max(0.0, (sum_sq / n - report.estimate * report.estimate) * n / (n - 1));
  report.std_error = std::sqrt(var / n);
  if (!std::isfinite(report.estimate) || !std::isfinite(report.std_error)) report.finite = false;
  return report;
}

void write_observation_csv(std::ostream& os, const ObservationPath& path) {
  auto header = csv::numbered("y_", path.dim());
  header.insert(header.begin(), "t");
  Mat rows(path.size(), path.dim() + 1);
  rows.col(0) = path.times;
  rows.rightCols(path.dim()) = path.values.transpose();
  csv::write(os, header, rows);
}

ObservationPath read_observation_csv(std::istream& is) {
  const auto table = csv::read(is);
  require(!table.header.empty() && table.header[0] == "t",
          "observation csv: first column must be t");
  const auto m = table.header.size() - 1;
  const auto n = table.rows.size();
  require(n >= 1, "observation csv: no rows");
  ObservationPath p;
  p.times.resize(n);
  p.values.resize(m, n);
  for (std::size_t r = 0; r < n; ++r) {
    p.times[r] = table.rows[r][0];
    for (std::size_t j = 0; j < m; ++j) p.values(j, r) = table.rows[r][j + 1];
  }
  p.increments.resize(m, n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) p.increments.col(k) = p.values.col(k + 1) - p.values.col(k);
  p.validate();
  return p;
}

}  // namespace ksp

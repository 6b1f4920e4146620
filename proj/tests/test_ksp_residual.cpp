#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ksp/grid_zakai.hpp"
#include "ksp/kalman_bucy.hpp"
#include "ksp/ksp_residual.hpp"
#include "ksp/particle_filter.hpp"

using namespace ksp;

namespace {

double gauss(double x, double m, double v) {
  return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

KspProbe power_probe(int n) {
  return {[n](const VecRef& x) { return std::pow(x[0], n); },
          [n](const VecRef& x) { return Vec::Constant(1, n * std::pow(x[0], n - 1)); },
          [n](const VecRef& x) { return Mat::Constant(1, 1, n * (n - 1) * std::pow(x[0], std::max(n - 2, 0))); }};
}

KspProbe constant_probe() {
  return {[](const VecRef&) { return 1.0; }, [](const VecRef&) { return Vec::Zero(1); },
          [](const VecRef&) { return Mat::Zero(1, 1); }};
}

ObservationPath coarsen(const ObservationPath& fine, int factor) {
  const Eigen::Index n = (fine.values.cols() - 1) / factor;
  Vec t(n + 1);
  Mat dy(fine.values.rows(), n);
  for (Eigen::Index k = 0; k <= n; ++k) t[k] = fine.times[k * factor];
  for (Eigen::Index k = 0; k < n; ++k) dy.col(k) = fine.values.col((k + 1) * factor) - fine.values.col(k * factor);
  return ObservationPath::from_increments(t, dy);
}

struct Setup {
  LinearModel lin = LinearModel::scalar(-1, 0, 1, 1, 0);
  DiffusionModel dyn = lin.diffusion(InitialLaw::gaussian(Vec::Zero(1), Mat::Identity(1, 1)));
  ObservationModel obs = lin.observation();
  ObservationPath fine;
  GridDensity prior = GridDensity::from_function(-6, 6, 401, [](double x) { return gauss(x, 0, 1); });

  explicit Setup(std::uint64_t seed, double T = 4.0) {
    RngStream root(seed, 0);
    RngStream rx = root.derive(1), ry = root.derive(2);
    fine = simulate_observation(obs, simulate_path(dyn, T, 1e-4, rx), ry);
  }
};

}  // namespace

TEST_CASE("constant test function has zero residual") {
  Setup s(1, 1.0);
  const auto y = coarsen(s.fine, 100);
  const auto fns = ksp_test_functions(s.dyn, s.obs, constant_probe());
  const auto run = run_zakai_grid(s.dyn, s.obs, y, s.prior, fns);
  const auto r = ksp_residual(run.estimate, y, s.obs);
  CHECK(r.covariance_form.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("innovation coefficient reproduces the Kalman gain") {
  Setup s(2, 1.0);
  const auto y = coarsen(s.fine, 10);
  const auto kal = run_kalman(s.lin, y, {Vec::Zero(1), Mat::Identity(1, 1)});
  const auto fns = ksp_test_functions(s.dyn, s.obs, power_probe(1));
  SUBCASE("grid filter") {
    const auto run = run_zakai_grid(s.dyn, s.obs, y, s.prior, fns);
    const Mat gain = ksp_gain(run.estimate, 1);
    for (std::size_t k = 0; k < kal.size(); ++k)
      CHECK(std::abs(gain(static_cast<Eigen::Index>(k), 0) / kal[k].cov(0, 0) - 1.0) < 0.05);
  }
  SUBCASE("particle filter, N = 1e4") {
    RngStream rng(2, 3);
    const auto est = run_particle_filter(s.dyn, s.obs, y, fns, {10000, 0.5}, rng);
    const Mat gain = ksp_gain(est, 1);
    for (std::size_t k = 0; k < kal.size(); ++k)
      CHECK(std::abs(gain(static_cast<Eigen::Index>(k), 0) / kal[k].cov(0, 0) - 1.0) < 0.05);
  }
}

TEST_CASE("residual is first order in dt") {
  Setup s(3);
  const auto fns = ksp_test_functions(s.dyn, s.obs, power_probe(1));
  auto mean_abs = [&](int factor) {
    const auto y = coarsen(s.fine, factor);
    const auto run = run_zakai_grid(s.dyn, s.obs, y, s.prior, fns);
    return ksp_residual(run.estimate, y, s.obs).covariance_form.cwiseAbs().mean();
  };
  const double coarse = mean_abs(200);
  const double half = mean_abs(100);
  CHECK(coarse / half >= 1.8);
}

TEST_CASE("covariance form against the printed form") {
  Setup s(4);
  const auto y = coarsen(s.fine, 50);
  const auto fns = ksp_test_functions(s.dyn, s.obs, power_probe(2));
  const auto run = run_zakai_grid(s.dyn, s.obs, y, s.prior, fns);
  const auto r = ksp_residual(run.estimate, y, s.obs);
  MESSAGE("mean |r| covariance form " << r.covariance_form.cwiseAbs().mean() << ", printed form "
                                      << r.printed_form.cwiseAbs().mean());
  CHECK(r.covariance_form.cwiseAbs().mean() < 0.5 * r.printed_form.cwiseAbs().mean());
}

TEST_CASE("ksp_residual input checks") {
  Setup s(5, 0.5);
  const auto y = coarsen(s.fine, 100);
  const auto fns = ksp_test_functions(s.dyn, s.obs, power_probe(1));
  const auto run = run_zakai_grid(s.dyn, s.obs, y, s.prior, fns);
  CHECK_THROWS_AS(ksp_residual(run.estimate, coarsen(s.fine, 50), s.obs), std::invalid_argument);
  FilterEstimate narrow = run.estimate;
  narrow.moments = narrow.moments.leftCols(2).eval();
  CHECK_THROWS_AS(ksp_residual(narrow, y, s.obs), std::invalid_argument);
}

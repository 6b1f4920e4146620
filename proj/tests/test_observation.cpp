#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ksp/observation.hpp"
#include "oracles.hpp"

using namespace ksp;

namespace {

DiffusionModel constant_model(double c) {
  return DiffusionModel::scalar([](double) { return 0.0; }, [](double) { return 0.0; },
                                InitialLaw::point_mass(Vec::Constant(1, c)));
}

DiffusionModel ou_model() {
  return DiffusionModel::scalar([](double x) { return -x; }, [](double) { return 1.0; },
                                InitialLaw::point_mass(Vec::Zero(1)));
}

}  // namespace

TEST_CASE("simulate_observation") {
  RngStream rng(11, 0);
  SUBCASE("zero sensor gives a Wiener path with unit intensity") {
    const auto obs = ObservationModel::scalar([](double) { return 0.0; });
    const auto m = constant_model(0.0);
    const double T = 1.0;
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      RngStream r = rng.derive(static_cast<std::uint64_t>(i));
      RngStream rx = r.derive(0), ry = r.derive(1);
      const auto y = simulate_observation(obs, simulate_path(m, T, 0.1, rx), ry);
      const double yT = y.values(0, y.size() - 1);
      sum += yT;
      sum_sq += yT * yT;
    }
    const double mean = sum / n;
    const double var = (sum_sq - n * mean * mean) / (n - 1);
    CHECK(std::abs(var / T - 1.0) < 0.02);
  }
  SUBCASE("noise_off integrates the sensor") {
    const auto one = ObservationModel::scalar([](double) { return 1.0; });
    const auto y1 = simulate_observation(one, simulate_path(constant_model(0.0), 1.0, 0.01, rng), rng, true);
    CHECK(y1.values(0, y1.size() - 1) == doctest::Approx(1.0).epsilon(1e-12));
    const auto lin = ObservationModel::scalar([](double x) { return x; });
    const auto y2 = simulate_observation(lin, simulate_path(constant_model(2.0), 3.0, 0.01, rng), rng, true);
    CHECK(y2.values(0, y2.size() - 1) == doctest::Approx(6.0).epsilon(1e-12));
  }
  SUBCASE("zero sensor equals its noise component exactly") {
    const auto obs = ObservationModel::scalar([](double) { return 0.0; });
    const auto path = simulate_path(ou_model(), 1.0, 0.01, rng);
    const Mat dW = wiener_increments(0.01, path.size() - 1, 1, rng);
    const auto y = simulate_observation(obs, path, dW);
    Vec cum(path.size());
    cum[0] = 0.0;
    for (Eigen::Index k = 1; k < cum.size(); ++k) cum[k] = cum[k - 1] + dW(k - 1, 0);
    CHECK((y.values.row(0).transpose() - cum).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("dimension checks") {
    const ObservationModel two(2, [](const VecRef& x, Eigen::Ref<Vec> out) { out << x[0], x[0]; });
    const auto path = simulate_path(constant_model(1.0), 1.0, 0.1, rng);
    CHECK_THROWS_AS(simulate_observation(two, path, rng), std::invalid_argument);
    const auto obs = ObservationModel::scalar([](double x) { return x; });
    CHECK_THROWS_AS(simulate_observation(obs, path, Mat::Zero(3, 1)), std::invalid_argument);
  }
}

TEST_CASE("increments cache stays consistent") {
  RngStream rng(4, 4);
  const auto obs = ObservationModel::scalar([](double x) { return std::tanh(x); });
  const auto y = simulate_observation(obs, simulate_path(ou_model(), 2.0, 1e-3, rng), rng);
  CHECK(y.values(0, 0) == 0.0);
  double run = 0.0;
  for (std::size_t k = 1; k < y.size(); ++k) {
    run += y.increments(0, static_cast<Eigen::Index>(k - 1));
    CHECK(std::abs(run - y.values(0, static_cast<Eigen::Index>(k))) < 1e-12);
  }
  CHECK_NOTHROW(y.validate());
  auto broken = y;
  broken.values(0, 0) = 1e-3;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("girsanov_log_weight") {
  RngStream rng(21, 0);
  const auto zero = ObservationModel::scalar([](double) { return 0.0; });
  const auto one = ObservationModel::scalar([](double) { return 1.0; });
  const auto path = simulate_path(ou_model(), 1.0, 0.01, rng);
  const Mat dW = wiener_increments(0.01, path.size() - 1, 1, rng);
  CHECK(girsanov_log_weight(zero, path, dW) == 0.0);
  CHECK(std::exp(girsanov_log_weight(one, path, Mat::Zero(path.size() - 1, 1))) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(girsanov_log_weight(one, path, Mat::Zero(5, 1)), std::invalid_argument);
}

TEST_CASE("Girsanov weight is a mean-one martingale for bounded sensors") {
  const std::vector<std::function<double(double)>> sensors = {
      [](double) { return 1.0; }, [](double x) { return std::tanh(x); },
      [](double x) { return std::sin(3.0 * x); }};
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const auto obs = ObservationModel::scalar(sensors[s]);
    RngStream rng(300 + s, 0);
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      RngStream r = rng.derive(static_cast<std::uint64_t>(i));
      RngStream rx = r.derive(0), rw = r.derive(1);
      const auto path = simulate_path(ou_model(), 1.0, 0.05, rx);
      const double z = std::exp(girsanov_log_weight(obs, path, wiener_increments(0.05, path.size() - 1, 1, rw)));
      sum += z;
      sum_sq += z * z;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq / n - mean * mean) / n);
    CHECK(std::abs(mean - 1.0) < 3.0 * se);
  }
}

TEST_CASE("check_novikov") {
  RngStream rng(5, 5);
  const auto bm = DiffusionModel::scalar([](double) { return 0.0; }, [](double) { return 1.0; },
                                         InitialLaw::point_mass(Vec::Zero(1)));
  SUBCASE("zero sensor") {
    const auto r = check_novikov(ObservationModel::scalar([](double) { return 0.0; }), bm, 1.0, 200, rng);
    CHECK(r.estimate == 1.0);
    CHECK(r.finite);
  }
  SUBCASE("unit sensor") {
    const auto r = check_novikov(ObservationModel::scalar([](double) { return 1.0; }), bm, 1.0, 200, rng);
    CHECK(std::abs(r.estimate - std::exp(0.5)) <= 3.0 * r.std_error + 1e-12);
  }
  SUBCASE("linear sensor on OU matches the exponential-moment oracle") {
    const auto r = check_novikov(ObservationModel::scalar([](double x) { return x; }), ou_model(), 1.0, 20000, rng, 1e-3);
    CHECK(r.finite);
    const double exact = oracle::ou_square_exponential_moment(0.5, 1.0, 0.0);
    CHECK(exact == doctest::Approx(std::exp(0.5 - 0.5 * std::log(2.0))).epsilon(1e-9));
    CHECK(std::abs(r.estimate - exact) < 3.0 * r.std_error + 2e-3);
  }
  SUBCASE("overflow is reported in-band") {
    const auto r = check_novikov(ObservationModel::scalar([](double) { return 1e3; }), bm, 1.0, 100, rng);
    CHECK_FALSE(r.finite);
  }
  SUBCASE("too few paths") {
    CHECK_THROWS_AS(check_novikov(ObservationModel::scalar([](double) { return 0.0; }), bm, 1.0, 99, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("observation csv round-trip is bit-exact") {
  RngStream rng(6, 1);
  const auto obs = ObservationModel::scalar([](double x) { return x; });
  const auto y = simulate_observation(obs, simulate_path(ou_model(), 1.0, 1e-2, rng), rng);
  std::stringstream ss;
  write_observation_csv(ss, y);
  CHECK(ss.str().rfind("t,y_1\n", 0) == 0);
  const auto z = read_observation_csv(ss);
  CHECK((y.values.array() == z.values.array()).all());
  CHECK((y.increments.array() == z.increments.array()).all());
  CHECK((y.times.array() == z.times.array()).all());
}

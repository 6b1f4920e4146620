#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "ksp/kalman_bucy.hpp"
#include "ksp/particle_filter.hpp"

using namespace ksp;

namespace {

using Index = Eigen::Index;

ParticleEnsemble from_weights(const std::vector<double>& x, const std::vector<double>& w) {
  ParticleEnsemble e;
  e.positions.resize(1, static_cast<Eigen::Index>(x.size()));
  e.log_weights.resize(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    e.positions(0, static_cast<Eigen::Index>(i)) = x[i];
    e.log_weights[static_cast<Eigen::Index>(i)] = std::log(w[i]);
  }
  e.normalized = true;
  return e;
}

const ScalarFn identity = [](const VecRef& x) { return x[0]; };
const ScalarFn square = [](const VecRef& x) { return x[0] * x[0]; };
const ScalarFn one = [](const VecRef&) { return 1.0; };

}  // namespace

TEST_CASE("pf_init") {
  RngStream rng(1, 1);
  SUBCASE("point mass") {
    const auto e = pf_init(InitialLaw::point_mass(Vec::Constant(1, 3.0)), 50, rng);
    CHECK((e.positions.array() == 3.0).all());
    CHECK(e.normalized);
    CHECK((e.log_weights.array() == -std::log(50.0)).all());
  }
  SUBCASE("standard Gaussian sample mean") {
    const auto e = pf_init(InitialLaw::gaussian(Vec::Zero(1), Mat::Identity(1, 1)), 100000, rng);
    CHECK(std::abs(e.positions.mean()) < 3.0 / std::sqrt(1e5));
  }
  SUBCASE("degenerate empirical law") {
    const auto law = InitialLaw::empirical((Mat(1, 2) << -2.0, 9.0).finished(), (Vec(2) << 1.0, 0.0).finished());
    const auto e = pf_init(law, 1000, rng);
    CHECK((e.positions.array() == -2.0).all());
  }
  SUBCASE("too few particles") {
    CHECK_THROWS_AS(pf_init(InitialLaw::point_mass(Vec::Zero(1)), 1, rng), std::invalid_argument);
  }
}

TEST_CASE("pf_estimate and ess") {
  const auto two = from_weights({-1.0, 1.0}, {0.5, 0.5});
  CHECK(pf_estimate(two, one) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pf_estimate(two, square) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pf_estimate(from_weights({4.0, 4.0, 4.0}, {0.2, 0.3, 0.5}), identity) == doctest::Approx(4.0));
  CHECK(ess(from_weights(std::vector<double>(100, 0.0), std::vector<double>(100, 0.01))) ==
        doctest::Approx(100.0));
  CHECK(ess(from_weights({0.0, 1.0, 2.0}, {1.0, 0.0, 0.0})) == doctest::Approx(1.0));
  CHECK(ess(from_weights({0.0, 1.0}, {0.75, 0.25})) == doctest::Approx(1.6));
}

TEST_CASE("exchangeability of estimates") {
  RngStream rng(12, 0);
  const Index n = 500;
  ParticleEnsemble e;
  e.positions.resize(1, n);
  e.log_weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    e.positions(0, i) = rng.normal();
    e.log_weights[i] = rng.normal();
  }
  e.normalize();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(7));
  ParticleEnsemble p = e;
  for (Index i = 0; i < n; ++i) {
    p.positions(0, i) = e.positions(0, perm[static_cast<std::size_t>(i)]);
    p.log_weights[i] = e.log_weights[perm[static_cast<std::size_t>(i)]];
  }
  for (const auto& f : {identity, square})
    CHECK(std::abs(pf_estimate(e, f) - pf_estimate(p, f)) < 1e-13);
}

TEST_CASE("resample_systematic") {
  RngStream rng(3, 3);
  SUBCASE("uniform input reproduces the multiset") {
    const auto e = from_weights({1, 2, 3, 4, 5}, std::vector<double>(5, 0.2));
    auto r = resample_systematic(e, rng);
    std::vector<double> out(r.positions.data(), r.positions.data() + 5);
    std::sort(out.begin(), out.end());
    CHECK(out == std::vector<double>{1, 2, 3, 4, 5});
    CHECK(ess(r) == doctest::Approx(5.0));
  }
  SUBCASE("all weight on the first atom") {
    const auto r = resample_systematic(from_weights({7.0, -7.0}, {1.0, 0.0}), rng);
    CHECK((r.positions.array() == 7.0).all());
  }
  SUBCASE("offspring counts stay within one of N w_i") {
    const auto e = from_weights({0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0},
                                {0.5, 0.3, 0.2, 1e-300, 1e-300, 1e-300, 1e-300, 1e-300, 1e-300, 1e-300});
    for (int trial = 0; trial < 200; ++trial) {
      RngStream r = rng.derive(static_cast<std::uint64_t>(trial));
      const auto out = resample_systematic(e, r);
      int c[3] = {0, 0, 0};
      for (Index i = 0; i < 10; ++i) {
        const double v = out.positions(0, i);
        if (v < 3.0) ++c[static_cast<int>(v)];
      }
      CHECK(std::abs(c[0] - 5) <= 1);
      CHECK(std::abs(c[1] - 3) <= 1);
      CHECK(std::abs(c[2] - 2) <= 1);
    }
  }
  SUBCASE("property: counts differ from N w_i by less than one") {
    for (int trial = 0; trial < 200; ++trial) {
      RngStream r = rng.derive(1000 + static_cast<std::uint64_t>(trial));
      const int n = 2 + static_cast<int>(r.next_u64() % 40);
      std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] = i;
        w[static_cast<std::size_t>(i)] = r.uniform() + 1e-3;
        total += w[static_cast<std::size_t>(i)];
      }
      for (auto& v : w) v /= total;
      const auto out = resample_systematic(from_weights(x, w), r);
      std::vector<int> counts(static_cast<std::size_t>(n), 0);
      for (Index i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(out.positions(0, i))];
      for (int i = 0; i < n; ++i)
        CHECK(std::abs(counts[static_cast<std::size_t>(i)] - n * w[static_cast<std::size_t>(i)]) < 1.0);
    }
  }
}

TEST_CASE("pf_step") {
  RngStream rng(8, 0);
  const auto frozen = DiffusionModel::scalar([](double) { return 0.0; }, [](double) { return 0.0; },
                                             InitialLaw::point_mass(Vec::Zero(1)));
  SUBCASE("two-atom Bayes update") {
    const auto obs = ObservationModel::scalar([](double x) { return x; });
    const auto post = pf_step(frozen, obs, from_weights({0.0, 1.0}, {0.5, 0.5}), Vec::Constant(1, 0.1), 0.1, rng, 0.0);
    const Vec w = post.weights();
    CHECK(w[0] == doctest::Approx(0.4875).epsilon(1e-4));
    CHECK(w[1] == doctest::Approx(0.5125).epsilon(1e-4));
    CHECK(std::abs(w[0] - 1.0 / (1.0 + std::exp(0.05))) < 1e-12);
  }
  SUBCASE("uninformative sensor leaves the weights alone") {
    const auto obs = ObservationModel::scalar([](double) { return 0.0; });
    const auto e = from_weights({0.0, 1.0, 2.0}, {0.2, 0.3, 0.5});
    const auto post = pf_step(frozen, obs, e, Vec::Constant(1, 3.0), 0.1, rng, 0.0);
    CHECK((post.weights() - e.weights()).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("collapse is an error") {
    const auto obs = ObservationModel::scalar([](double x) { return x; });
    const auto e = from_weights({1e200, 2e200}, {0.5, 0.5});
    CHECK_THROWS_AS(pf_step(frozen, obs, e, Vec::Constant(1, 0.1), 0.1, rng), EnsembleCollapse);
  }
  SUBCASE("weights stay normalized and resampling resets them") {
    const auto ou = DiffusionModel::scalar([](double x) { return -x; }, [](double) { return 1.0; },
                                           InitialLaw::gaussian(Vec::Zero(1), Mat::Identity(1, 1)));
    const auto obs = ObservationModel::scalar([](double x) { return 4.0 * x; });
    auto e = pf_init(ou.initial_law(), 200, rng);
    for (int k = 0; k < 200; ++k) {
      e = pf_step(ou, obs, e, Vec::Constant(1, 0.05 * rng.normal() + 0.02), 0.01, rng);
      CHECK(std::abs(e.weights().sum() - 1.0) < 1e-10);
      CHECK(ess(e) >= 1.0);
    }
  }
}

TEST_CASE("particle filter tracks the Kalman-Bucy mean") {
  const auto lin = LinearModel::scalar(-1, 0, 1, 1, 0);
  const auto law = InitialLaw::gaussian(Vec::Zero(1), Mat::Identity(1, 1));
  const auto dyn = lin.diffusion(law);
  const auto obs = lin.observation();
  const double T = 1.0, dt = 1e-3;
  double total = 0.0;
  const int seeds = 3;
  for (int s = 0; s < seeds; ++s) {
    RngStream root(500 + s, 0);
    RngStream rx = root.derive(1), ry = root.derive(2), rp = root.derive(3);
    const auto path = simulate_path(dyn, T, dt, rx);
    const auto y = simulate_observation(obs, path, ry);
    const auto kal = run_kalman(lin, y, {Vec::Zero(1), Mat::Identity(1, 1)});
    const auto est = run_particle_filter(dyn, obs, y, {identity}, {5000, 0.5}, rp);
    CHECK(est.size() == y.size());
    CHECK(est.ess[0] == 5000.0);
    CHECK((est.ess.array() >= 1.0).all());
    CHECK((est.ess.array() <= 5000.0 + 1e-6).all());
    double se = 0.0;
    for (std::size_t k = 0; k < kal.size(); ++k) {
      const double d = est.moments(static_cast<Index>(k), 0) - kal[k].mean[0];
      se += d * d;
    }
    total += std::sqrt(se / static_cast<double>(kal.size()));
  }
  CHECK(total / seeds <= 0.05);
}

TEST_CASE("run_particle_filter is deterministic and writes csv") {
  const auto lin = LinearModel::scalar(-1, 0, 1, 1, 0);
  const auto dyn = lin.diffusion(InitialLaw::gaussian(Vec::Zero(1), Mat::Identity(1, 1)));
  RngStream r0(77, 0);
  const auto y = simulate_observation(lin.observation(), simulate_path(dyn, 0.2, 1e-2, r0), r0);
  RngStream a(1, 3), b(1, 3);
  const auto ea = run_particle_filter(dyn, lin.observation(), y, default_test_functions(6.0), {300, 0.5}, a);
  const auto eb = run_particle_filter(dyn, lin.observation(), y, default_test_functions(6.0), {300, 0.5}, b);
  std::stringstream sa, sb;
  write_estimate_csv(sa, ea);
  write_estimate_csv(sb, eb);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("t,phi_1,phi_2,phi_3,ess\n", 0) == 0);
}

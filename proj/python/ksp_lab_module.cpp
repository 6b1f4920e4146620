// Python bindings. Arrays crossing the boundary are row-per-time-point or
// row-per-particle (n x d), the transpose of the internal layout.
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ksp/harness.hpp"
#include "ksp/kalman_bucy.hpp"
#include "ksp/markov.hpp"
#include "ksp/particle_filter.hpp"
#include "ksp/grid_zakai.hpp"
#include "ksp/stochvol.hpp"

namespace py = pybind11;
using namespace ksp;

namespace {

LinearModel linear_model(const Mat& F, const Vec& f0, const Mat& sigma, const Mat& H, const Vec& h0) {
  LinearModel m{F, f0, sigma, H, h0};
  m.validate();
  return m;
}

HestonModel heston(double kappa, double m, double gamma, double mu, double x0, double s0) {
  HestonModel h{kappa, m, gamma, mu, x0, s0};
  h.validate();
  return h;
}

py::dict report_dict(const harness::ComparisonReport& rep) {
  py::dict series, metrics, checks;
  for (const auto& [name, v] : rep.series) series[py::str(name)] = v;
  for (const auto& [name, v] : rep.metrics) metrics[py::str(name)] = v;
  for (const auto& c : rep.checks) checks[py::str(c.name)] = py::make_tuple(c.passed, c.detail);
  py::dict out;
  out["times"] = rep.times;
  out["series"] = series;
  out["metrics"] = metrics;
  out["checks"] = checks;
  out["passed"] = rep.passed();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stochastic filtering lab: SDE simulation, Kalman-Bucy, particle and grid filters, "
            "Markov master equations and filtered option pricing.";
  m.attr("__version__") = harness::kLibraryVersion;

  py::register_exception<ksp::DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception<ksp::EnsembleCollapse>(m, "EnsembleCollapse", PyExc_RuntimeError);
  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("list_scenarios", &harness::scenario_names);
  m.def(
      "run_scenario",
      [](const std::string& name, const std::string& config, std::uint64_t seed, py::object out_dir) {
        auto cfg = harness::parse_config(config, name);
        cfg.seed = seed;
        harness::ComparisonReport rep;
        {
          py::gil_scoped_release release;
          rep = harness::run(cfg);
        }
        py::dict d = report_dict(rep);
        d["config_hash"] = cfg.hash();
        if (!out_dir.is_none()) harness::write_report(cfg, rep, py::str(out_dir).cast<std::string>());
        return d;
      },
      py::arg("scenario"), py::arg("config") = "{}", py::arg("seed") = 0, py::arg("out_dir") = py::none(),
      "Runs a scenario from a JSON config string; optionally writes its CSV files.");

  m.def(
      "simulate_scalar_path",
      [](std::function<double(double)> drift, std::function<double(double)> sigma, double x0, double horizon,
         double dt, std::uint64_t seed) {
        const auto model = DiffusionModel::scalar(std::move(drift), std::move(sigma),
                                                  InitialLaw::point_mass(Vec::Constant(1, x0)));
        RngStream rng(seed, 0);
        const SamplePath p = simulate_path(model, horizon, dt, rng);
        return py::make_tuple(p.times, Vec(p.states.row(0).transpose()));
      },
      py::arg("drift"), py::arg("sigma"), py::arg("x0"), py::arg("horizon"), py::arg("dt"), py::arg("seed") = 0,
      "Euler-Maruyama path of dX = a(X) dt + sigma(X) dV. Returns (times, states).");

  m.def(
      "simulate_linear",
      [](const Mat& F, const Vec& f0, const Mat& sigma, const Mat& H, const Vec& h0, const Vec& mean0,
         const Mat& cov0, double horizon, double dt, std::uint64_t seed) {
        const auto lin = linear_model(F, f0, sigma, H, h0);
        const auto dyn = lin.diffusion(InitialLaw::gaussian(mean0, cov0));
        const RngStream master(seed, 0);
        RngStream rx = master.derive(1), ry = master.derive(2);
        const SamplePath p = simulate_path(dyn, horizon, dt, rx);
        const ObservationPath y = simulate_observation(lin.observation(), p, ry);
        return py::make_tuple(p.times, Mat(p.states.transpose()), Mat(y.values.transpose()));
      },
      py::arg("F"), py::arg("f0"), py::arg("sigma"), py::arg("H"), py::arg("h0"), py::arg("mean0"),
      py::arg("cov0"), py::arg("horizon"), py::arg("dt"), py::arg("seed") = 0,
      "Linear-Gaussian state and integrated observation. Returns (times, states n x d, Y n x m).");

  m.def(
      "run_kalman",
      [](const Mat& F, const Vec& f0, const Mat& sigma, const Mat& H, const Vec& h0, const Vec& times,
         const Mat& Y, const Vec& mean0, const Mat& cov0) {
        const auto lin = linear_model(F, f0, sigma, H, h0);
        require(Y.rows() == times.size(), "run_kalman: Y must have one row per time");
        Mat dy(Y.cols(), Y.rows() - 1);
        for (Eigen::Index k = 0; k + 1 < Y.rows(); ++k) dy.col(k) = (Y.row(k + 1) - Y.row(k)).transpose();
        const auto beliefs = run_kalman(lin, ObservationPath::from_increments(times, dy), {mean0, cov0});
        const auto d = static_cast<Eigen::Index>(lin.dim_state());
        Mat means(static_cast<Eigen::Index>(beliefs.size()), d);
        std::vector<Mat> covs;
        for (std::size_t k = 0; k < beliefs.size(); ++k) {
          means.row(static_cast<Eigen::Index>(k)) = beliefs[k].mean.transpose();
          covs.push_back(beliefs[k].cov);
        }
        return py::make_tuple(means, covs);
      },
      py::arg("F"), py::arg("f0"), py::arg("sigma"), py::arg("H"), py::arg("h0"), py::arg("times"), py::arg("Y"),
      py::arg("mean0"), py::arg("cov0"), "Kalman-Bucy filter. Returns (means n x d, list of covariances).");

  m.def(
      "steady_state_cov",
      [](const Mat& F, const Vec& f0, const Mat& sigma, const Mat& H, const Vec& h0) {
        return steady_state_cov(linear_model(F, f0, sigma, H, h0));
      },
      py::arg("F"), py::arg("f0"), py::arg("sigma"), py::arg("H"), py::arg("h0"));

  m.def(
      "riccati_rhs",
      [](const Mat& F, const Vec& f0, const Mat& sigma, const Mat& H, const Vec& h0, const Mat& R) {
        return riccati_rhs(linear_model(F, f0, sigma, H, h0), R);
      },
      py::arg("F"), py::arg("f0"), py::arg("sigma"), py::arg("H"), py::arg("h0"), py::arg("R"));

  m.def(
      "particle_filter_linear",
      [](const Mat& F, const Vec& f0, const Mat& sigma, const Mat& H, const Vec& h0, const Vec& mean0,
         const Mat& cov0, const Vec& times, const Mat& Y, std::size_t n_particles, double resample_threshold,
         std::uint64_t seed) {
        const auto lin = linear_model(F, f0, sigma, H, h0);
        const auto dyn = lin.diffusion(InitialLaw::gaussian(mean0, cov0));
        require(Y.rows() == times.size(), "particle_filter_linear: Y must have one row per time");
        Mat dy(Y.cols(), Y.rows() - 1);
        for (Eigen::Index k = 0; k + 1 < Y.rows(); ++k) dy.col(k) = (Y.row(k + 1) - Y.row(k)).transpose();
        std::vector<ScalarFn> fns;
        for (Eigen::Index i = 0; i < F.rows(); ++i) fns.push_back([i](const VecRef& x) { return x[i]; });
        RngStream rng(seed, 3);
        FilterEstimate est;
        {
          py::gil_scoped_release release;
          est = run_particle_filter(dyn, lin.observation(), ObservationPath::from_increments(times, dy), fns,
                                    {n_particles, resample_threshold}, rng);
        }
        return py::make_tuple(est.moments, est.ess);
      },
      py::arg("F"), py::arg("f0"), py::arg("sigma"), py::arg("H"), py::arg("h0"), py::arg("mean0"), py::arg("cov0"),
      py::arg("times"), py::arg("Y"), py::arg("n_particles") = 1000, py::arg("resample_threshold") = 0.5,
      py::arg("seed") = 0, "Particle filter posterior means (n x d) and ESS series.");

  m.def(
      "zakai_grid_linear",
      [](double F, double f0, double sigma, double H, double h0, double mean0, double var0, const Vec& times,
         const Vec& Y, double x_lo, double x_hi, std::size_t n_grid, bool normalize) {
        const auto lin = LinearModel::scalar(F, f0, sigma, H, h0);
        const auto dyn = lin.diffusion(InitialLaw::gaussian(Vec::Constant(1, mean0), Mat::Constant(1, 1, var0)));
        require(Y.size() == times.size(), "zakai_grid_linear: Y must have one entry per time");
        Mat dy(1, Y.size() - 1);
        for (Eigen::Index k = 0; k + 1 < Y.size(); ++k) dy(0, k) = Y[k + 1] - Y[k];
        const auto init = GridDensity::from_function(
            x_lo, x_hi, n_grid, [=](double x) { return std::exp(-0.5 * (x - mean0) * (x - mean0) / var0); });
        const std::vector<ScalarFn> fns{[](const VecRef& x) { return x[0]; },
                                        [](const VecRef& x) { return x[0] * x[0]; }};
        GridRun run;
        {
          py::gil_scoped_release release;
          run = run_zakai_grid(dyn, lin.observation(), ObservationPath::from_increments(times, dy), init, fns,
                               {normalize});
        }
        return py::make_tuple(run.estimate.moments, run.final_density.nodes(), run.final_density.values);
      },
      py::arg("F"), py::arg("f0"), py::arg("sigma"), py::arg("H"), py::arg("h0"), py::arg("mean0"), py::arg("var0"),
      py::arg("times"), py::arg("Y"), py::arg("x_lo") = -6.0, py::arg("x_hi") = 6.0, py::arg("n_grid") = 801,
      py::arg("normalize") = true,
      "Scalar grid Zakai filter. Returns (moments [E x, E x^2] n x 2, nodes, final density).");

  m.def("generator_from_rates", [](const Mat& rates) { return generator_from_rates(RateMatrix(rates)); },
        py::arg("rates"), "Generator with rates[i, j] the jump rate from i to j.");
  m.def("evolve_kernel", [](const Mat& G, double tau) { return evolve_kernel(G, tau).Q; }, py::arg("G"),
        py::arg("tau"));
  m.def("master_rhs", [](const Mat& rates, const Vec& p) { return master_rhs(RateMatrix(rates), {p}); },
        py::arg("rates"), py::arg("p"));
  m.def("stationary_distribution", [](const Mat& rates) { return stationary_distribution(RateMatrix(rates)).p; },
        py::arg("rates"));
  m.def(
      "taylor_kernel_check",
      [](const Mat& rates, const Vec& taus) {
        const auto r = taylor_kernel_check(RateMatrix(rates), taus);
        return py::make_tuple(r.errors, r.slope);
      },
      py::arg("rates"), py::arg("taus"), "Returns (errors, log-log slope).");

  m.def(
      "simulate_heston",
      [](double kappa, double mm, double gamma, double mu, double x0, double s0, double horizon, double dt,
         std::uint64_t seed) {
        RngStream rng(seed, 1);
        EquityPaths p;
        {
          py::gil_scoped_release release;
          p = simulate_heston(heston(kappa, mm, gamma, mu, x0, s0), horizon, dt, rng);
        }
        py::dict d;
        d["times"] = p.times;
        d["variance"] = p.variance;
        d["price"] = p.price;
        d["log_price"] = p.log_price;
        return d;
      },
      py::arg("kappa") = 2.0, py::arg("m") = 0.04, py::arg("gamma") = 0.3, py::arg("mu") = 0.0, py::arg("x0") = 0.04,
      py::arg("s0") = 100.0, py::arg("horizon") = 1.0, py::arg("dt") = 1e-4, py::arg("seed") = 0);
  m.def("realized_qv", &realized_qv, py::arg("log_price"));
  m.def("vol_recovery", &vol_recovery, py::arg("qv"), py::arg("window"), py::arg("dt"));
  m.def(
      "bs_call_price",
      [](double spot, double strike, double maturity, double mean_variance, double rate, double t) {
        return bs_call_price(spot, CallSpec{strike, maturity, rate}, mean_variance, t);
      },
      py::arg("spot"), py::arg("strike"), py::arg("maturity"), py::arg("mean_variance"), py::arg("rate") = 0.0,
      py::arg("t") = 0.0);
  m.def(
      "filtered_option_price",
      [](const Vec& particles, const Vec& weights, double kappa, double mm, double gamma, double spot, double strike,
         double maturity, double rate, std::size_t inner_paths, std::size_t inner_steps, std::uint64_t seed) {
        require(particles.size() == weights.size(), "filtered_option_price: size mismatch");
        ParticleEnsemble ens;
        ens.positions = particles.transpose();
        ens.log_weights = weights.array().log().matrix();
        ens.normalize();
        RngStream rng(seed, 4);
        const auto fp = filtered_option_price(ens, heston(kappa, mm, gamma, 0.0, mm, spot),
                                              CallSpec{strike, maturity, rate}, spot, rng,
                                              {inner_paths, inner_steps, 0.0});
        return py::make_tuple(fp.price, fp.std_error);
      },
      py::arg("particles"), py::arg("weights"), py::arg("kappa"), py::arg("m"), py::arg("gamma"), py::arg("spot"),
      py::arg("strike"), py::arg("maturity"), py::arg("rate") = 0.0, py::arg("inner_paths") = 64,
      py::arg("inner_steps") = 100, py::arg("seed") = 0, "Returns (price, standard error).");
  m.def(
      "heston_filter",
      [](double kappa, double mm, double gamma, double mu, double x0, const Vec& times, const Vec& log_price,
         std::size_t n_particles, std::uint64_t seed) {
        RngStream rng(seed, 3);
        HestonFilterOptions opts;
        opts.n_particles = n_particles;
        FilterEstimate est;
        {
          py::gil_scoped_release release;
          est = heston_filter(heston(kappa, mm, gamma, mu, x0, 1.0), times, log_price, rng, opts);
        }
        return py::make_tuple(Vec(est.moments.col(0)),
                              Vec(est.moments.col(1) - est.moments.col(0).cwiseProduct(est.moments.col(0))), est.ess);
      },
      py::arg("kappa"), py::arg("m"), py::arg("gamma"), py::arg("mu"), py::arg("x0"), py::arg("times"),
      py::arg("log_price"), py::arg("n_particles") = 1000, py::arg("seed") = 0,
      "Returns (posterior mean, posterior variance, ESS) of the latent variance.");
}

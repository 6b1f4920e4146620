#include "ksp/grid_zakai.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ksp {

Vec GridDensity::nodes() const {
  Vec x(values.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = node(i);
  return x;
}

double GridDensity::integrate(const std::function<double(double)>& phi) const {
  const Eigen::Index n = values.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    acc += w * phi(node(i)) * values[i];
  }
  return acc * cell();
}

double GridDensity::mass() const {
  const Eigen::Index n = values.size();
  return (values.sum() - 0.5 * (values[0] + values[n - 1])) * cell();
}

void GridDensity::normalize() {
  const double m = mass();
  if (!(m > 0.0) || !std::isfinite(m)) throw std::runtime_error("grid density: zero or non-finite mass");
  values /= m;
}

void GridDensity::validate() const {
  require(values.size() >= 3, "grid density: at least three nodes required");
  require(x_hi > x_lo, "grid density: empty domain");
  require(values.allFinite(), "grid density: non-finite value");
  require((values.array() >= 0.0).all(), "grid density: negative value");
}

GridDensity GridDensity::from_function(double x_lo, double x_hi, std::size_t n_grid,
                                       const std::function<double(double)>& density) {
  GridDensity g;
  g.x_lo = x_lo;
  g.x_hi = x_hi;
  g.values.resize(static_cast<Eigen::Index>(n_grid));
  for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values[i] = density(g.node(i));
  g.validate();
  g.normalize();
  return g;
}

namespace {

// Coefficients of the 1-D forward operator sampled on the grid.
struct ForwardOperator {
  Vec a;
  Vec b;
  Vec h;
  double cell = 0.0;
  double admissible_dt = INFINITY;

  ForwardOperator(const DiffusionModel& model, const ObservationModel* obs, const GridDensity& g) {
    require(model.dim_state() == 1, "grid solver: model must be one-dimensional");
    const Eigen::Index n = g.values.size();
    a.resize(n);
    b.resize(n);
    cell = g.cell();
    Vec x(1), out(1);
    Mat s(1, static_cast<Eigen::Index>(model.dim_noise()));
    if (obs) {
      require(obs->dim_obs() == 1, "grid solver: observation must be scalar");
      h.resize(n);
    }
    double max_b = 0.0;
    double max_a = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      x[0] = g.node(i);
      model.drift(x, out);
      a[i] = out[0];
      model.diffusion_factor(x, s);
      b[i] = s.row(0).squaredNorm();
      if (obs) {
        obs->sensor(x, out);
        h[i] = out[0];
      }
      max_b = std::max(max_b, b[i]);
      max_a = std::max(max_a, std::abs(a[i]));
    }
    require(a.allFinite() && b.allFinite() && (!obs || h.allFinite()),
            "grid solver: non-finite coefficients on the grid");
    if (max_b > 0.0) admissible_dt = 0.4 * cell * cell / max_b;
    if (max_a > 0.0) admissible_dt = std::min(admissible_dt, cell / max_a);
  }

  // p <- p + dt L* p, conservative form with zero boundary flux.
  // Returns the mass removed by flooring negative values.
  double fokker_planck(Vec& p, double dt, Vec& scratch) const {
    const Eigen::Index n = p.size();
    scratch.resize(n + 1);
    scratch[0] = 0.0;
    scratch[n] = 0.0;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      scratch[i + 1] = 0.5 * (a[i] * p[i] + a[i + 1] * p[i + 1]) -
                       0.5 * (b[i + 1] * p[i + 1] - b[i] * p[i]) / cell;
    }
    double floored = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] -= dt * (scratch[i + 1] - scratch[i]) / cell;
      if (p[i] < 0.0) {
        floored -= p[i];
        p[i] = 0.0;
      }
    }
    return floored * cell;
  }

  void likelihood(Vec& p, double dY, double dt) const {
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] *= std::exp(h[i] * dY - 0.5 * h[i] * h[i] * dt);
  }
};

void check_floor(double floored, double total) {
  if (floored > 1e-8 * total) {
    std::ostringstream msg;
    msg << "grid solver: floored mass " << floored << " exceeds 1e-8 of total " << total;
    throw std::runtime_error(msg.str());
  }
}

double grid_ess(const GridDensity& g) {
  const Eigen::Index n = g.values.size();
  double total = 0.0;
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = ((i == 0 || i == n - 1) ? 0.5 : 1.0) * g.values[i];
    total += w;
    sum_sq += w * w;
  }
  return total * total / sum_sq;
}

void record(const GridDensity& g, const std::vector<ScalarFn>& fns, Eigen::Index row,
            FilterEstimate& est) {
  const double m = g.mass();
  Vec x(1);
  for (std::size_t j = 0; j < fns.size(); ++j) {
    const auto& f = fns[j];
    est.moments(row, static_cast<Eigen::Index>(j)) = g.integrate([&](double v) {
      x[0] = v;
      return f(x);
    }) / m;
  }
  est.ess[row] = grid_ess(g);
}

}  // namespace

double grid_admissible_dt(const DiffusionModel& model, const GridDensity& dens) {
  return ForwardOperator(model, nullptr, dens).admissible_dt;
}

GridDensity zakai_grid_step(const DiffusionModel& model, const ObservationModel& obs,
                            const GridDensity& dens, double dY, double dt,
                            const GridStepOptions& options) {
  require(dt > 0.0, "zakai_grid_step: dt must be positive");
  dens.validate();
  const ForwardOperator op(model, &obs, dens);
  if (dt > op.admissible_dt) {
    std::ostringstream msg;
    msg << "zakai_grid_step: dt " << dt << " violates the stability bound; admissible dt <= "
        << op.admissible_dt;
    throw std::invalid_argument(msg.str());
  }
  GridDensity next = dens;
  Vec scratch;
  const double before = next.values.sum() * next.cell();
  check_floor(op.fokker_planck(next.values, dt, scratch), before);
  op.likelihood(next.values, dY, dt);
  if (options.normalize) next.normalize();
  return next;
}

GridRun run_zakai_grid(const DiffusionModel& model, const ObservationModel& obs,
                       const ObservationPath& path, const GridDensity& initial,
                       const std::vector<ScalarFn>& test_functions,
                       const GridRunOptions& options) {
  path.validate();
  initial.validate();
  require(path.dim() == 1, "grid solver: observation must be scalar");
  const ForwardOperator op(model, &obs, initial);
  const Eigen::Index n = path.times.size();

  GridRun run;
  run.final_density = initial;
  auto& est = run.estimate;
  est.times = path.times;
  est.moments.resize(n, static_cast<Eigen::Index>(test_functions.size()));
  est.ess.resize(n);
  record(run.final_density, test_functions, 0, est);

  Vec& p = run.final_density.values;
  Vec scratch;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double dt = path.times[k + 1] - path.times[k];
    const auto substeps = static_cast<std::size_t>(std::max(1.0, std::ceil(dt / op.admissible_dt)));
    const double sub_dt = dt / static_cast<double>(substeps);
    const double total = p.sum() * op.cell;
    double floored = 0.0;
    for (std::size_t s = 0; s < substeps; ++s) floored += op.fokker_planck(p, sub_dt, scratch);
    check_floor(floored, total);
    run.floored_mass += floored / total;
    op.likelihood(p, path.increments(0, k), dt);
    if (!p.allFinite())
      throw DivergenceError("grid solver: non-finite density", static_cast<std::size_t>(k + 1));
    if (options.normalize) run.final_density.normalize();
    record(run.final_density, test_functions, k + 1, est);
  }
  if (run.floored_mass > 1e-6)
    throw std::runtime_error("grid solver: relative mass loss over the run exceeds 1e-6");
  return run;
}

}  // namespace ksp

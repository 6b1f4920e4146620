#pragma once

#include <vector>

#include "ksp/filter_estimate.hpp"
#include "ksp/observation.hpp"

namespace ksp {

/// Density values on a uniform grid over [x_lo, x_hi].
struct GridDensity {
  double x_lo = 0.0;
  double x_hi = 1.0;
  Vec values;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
  double cell() const { return (x_hi - x_lo) / static_cast<double>(values.size() - 1); }
  double node(Eigen::Index i) const { return x_lo + static_cast<double>(i) * cell(); }
  Vec nodes() const;

  /// Trapezoidal integral of phi * p.
  double integrate(const std::function<double(double)>& phi) const;
  double mass() const;
  void normalize();
  void validate() const;

  /// Samples a density function on the grid and normalizes it.
  static GridDensity from_function(double x_lo, double x_hi, std::size_t n_grid,
                                   const std::function<double(double)>& density);
};

/// Largest step allowed by the explicit scheme for this model and grid.
double grid_admissible_dt(const DiffusionModel& model, const GridDensity& dens);

struct GridStepOptions {
  bool normalize = true;
};

/// Forward-Kolmogorov Euler step in conservative central differences with
/// zero-flux boundaries, then the multiplicative update
/// p <- p exp(h dY - 1/2 h^2 dt), then optional renormalization.
GridDensity zakai_grid_step(const DiffusionModel& model, const ObservationModel& obs,
                            const GridDensity& dens, double dY, double dt,
                            const GridStepOptions& options = {});

struct GridRunOptions {
  bool normalize = true;
};

struct GridRun {
  FilterEstimate estimate;
  GridDensity final_density;
  double floored_mass = 0.0;
};

/// Runs the grid filter over an observation record. Each observation
/// interval is split into the fewest equal Fokker-Planck substeps that
/// satisfy the stability bound before the multiplicative update.
GridRun run_zakai_grid(const DiffusionModel& model, const ObservationModel& obs,
                       const ObservationPath& path, const GridDensity& initial,
                       const std::vector<ScalarFn>& test_functions,
                       const GridRunOptions& options = {});

}  // namespace ksp

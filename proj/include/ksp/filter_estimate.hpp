#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ksp/types.hpp"

namespace ksp {

/// Time series of pi_t(phi) for a set of registered test functions.
struct FilterEstimate {
  Vec times;
  Mat moments;  // n_times x n_functions
  Vec ess;

  std::size_t size() const noexcept { return static_cast<std::size_t>(times.size()); }
  void validate() const;
};

/// Header `t,phi_1,...,phi_p,ess`.
void write_estimate_csv(std::ostream& os, const FilterEstimate& est);

/// x, x^2 and min(max(x, -K), K) on the first coordinate.
std::vector<ScalarFn> default_test_functions(double half_width);

}  // namespace ksp

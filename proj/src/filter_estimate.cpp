#include "ksp/filter_estimate.hpp"

#include <algorithm>
#include <ostream>

#include "ksp/csv.hpp"

namespace ksp {

void FilterEstimate::validate() const {
  require(moments.rows() == times.size(), "filter estimate: one moment row per time required");
  require(ess.size() == times.size(), "filter estimate: one ESS value per time required");
}

void write_estimate_csv(std::ostream& os, const FilterEstimate& est) {
  est.validate();
  auto header = csv::numbered("phi_", static_cast<std::size_t>(est.moments.cols()));
  header.insert(header.begin(), "t");
  header.emplace_back("ess");
  Mat rows(est.times.size(), est.moments.cols() + 2);
  rows.col(0) = est.times;
  rows.middleCols(1, est.moments.cols()) = est.moments;
  rows.col(rows.cols() - 1) = est.ess;
  csv::write(os, header, rows);
}

std::vector<ScalarFn> default_test_functions(double half_width) {
  return {
      [](const VecRef& x) { return x[0]; },
      [](const VecRef& x) { return x[0] * x[0]; },
      [half_width](const VecRef& x) { return std::clamp(x[0], -half_width, half_width); },
  };
}

}  // namespace ksp

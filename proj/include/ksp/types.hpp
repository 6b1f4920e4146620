#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace ksp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Vec>;

// Callbacks write into caller-owned storage so the inner loops of the
// filters never allocate.
using VectorField = std::function<void(const VecRef& x, Eigen::Ref<Vec> out)>;
using MatrixField = std::function<void(const VecRef& x, Eigen::Ref<Mat> out)>;
using ScalarFn = std::function<double(const VecRef& x)>;
using GradientFn = std::function<Vec(const VecRef& x)>;
using HessianFn = std::function<Mat(const VecRef& x)>;

// Raised when a simulation or filter produces non-finite numbers.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace ksp

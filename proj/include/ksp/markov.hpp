#pragma once

#include <iosfwd>
#include <optional>

#include "ksp/types.hpp"

namespace ksp {

/// Transition rates per unit time; rates()(i, j) is the rate of jumping
/// from state i to state j. The diagonal is ignored and stored as zero.
class RateMatrix {
 public:
  explicit RateMatrix(Mat rates);

  std::size_t n_states() const noexcept { return static_cast<std::size_t>(rates_.rows()); }
  const Mat& rates() const noexcept { return rates_; }
  /// Total exit rate of state i.
  double exit_rate(Eigen::Index i) const { return rates_.row(i).sum(); }

  static RateMatrix two_state(double rate_01, double rate_10);

 private:
  Mat rates_;
};

struct DistributionVector {
  Vec p;
  void validate(double tol = 1e-12) const;
};

/// Row-stochastic kernel; Q(i, j) is the probability of being in j after
/// the elapsed time given a start in i.
struct TransitionKernel {
  Mat Q;
  void validate() const;
};

/// Off-diagonal rates with diagonal -exit_rate(i); rows sum to zero.
Mat generator_from_rates(const RateMatrix& W);

/// exp(tau G) by scaling and squaring around a truncated Taylor series.
TransitionKernel evolve_kernel(const Mat& G, double tau);

/// Gain minus loss: (dp/dtau)_j = sum_i W(j|i) p_i - exit_rate(j) p_j.
Vec master_rhs(const RateMatrix& W, const DistributionVector& p);

/// Explicit Euler integration of the master equation with a 1e-14 floor.
DistributionVector evolve_master(const RateMatrix& W, const DistributionVector& p, double dtau,
                                 std::size_t n_steps);

/// Solves p^T G = 0, sum p = 1. Throws if the chain is not irreducible.
DistributionVector stationary_distribution(const RateMatrix& W);

/// Index of a state not mutually reachable with state 0, if any.
std::optional<std::size_t> unreachable_state(const RateMatrix& W);

struct TaylorReport {
  Vec taus;
  Vec errors;  // max-norm of (Q_tau - I)/tau - G
  double slope = 0.0;  // least-squares slope of log error vs log tau
  bool exact = false;  // every error is zero
};

TaylorReport taylor_kernel_check(const RateMatrix& W, const Vec& tau_seq);

/// `i,j,rate` triplets, 0-indexed, optional header line.
RateMatrix read_rates_csv(std::istream& is, std::optional<std::size_t> n_states = std::nullopt);
void write_kernel_csv(std::ostream& os, const TransitionKernel& kernel);
void write_distribution_csv(std::ostream& os, const DistributionVector& p);

}  // namespace ksp

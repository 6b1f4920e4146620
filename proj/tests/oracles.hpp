#pragma once
// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical routines.

#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

// Standard normal CDF by composite Simpson quadrature of the density.
inline double normal_cdf(double x) {
  const int n = 20000;
  const double a = 0.0, b = std::abs(x);
  if (b == 0.0) return 0.5;
  const double h = (b - a) / n;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(a + i * h);
  const double half = s * h / 3.0;
  return x >= 0 ? 0.5 + half : 0.5 - half;
}

inline double black_scholes(double spot, double strike, double variance, double tau, double rate) {
  const double sd = std::sqrt(variance * tau);
  const double d1 = (std::log(spot / strike) + rate * tau + 0.5 * sd * sd) / sd;
  return spot * normal_cdf(d1) - strike * std::exp(-rate * tau) * normal_cdf(d1 - sd);
}

// exp(tau G) for the two-state chain with rates a (0->1) and b (1->0).
inline double two_state_stay0(double a, double b, double tau) {
  return b / (a + b) + a / (a + b) * std::exp(-(a + b) * tau);
}

// Stationary law by power iteration of the uniformized chain P = I + G/q.
inline std::vector<double> stationary_power(const std::vector<std::vector<double>>& rates,
                                            int iterations = 200000) {
  const std::size_t n = rates.size();
  double q = 0.0;
  std::vector<double> exit(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) exit[i] += rates[i][j];
    q = std::max(q, exit[i]);
  }
  q *= 1.5;
  std::vector<double> p(n, 1.0 / static_cast<double>(n)), next(n);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < n; ++j) {
      next[j] = p[j] * (1.0 - exit[j] / q);
      for (std::size_t i = 0; i < n; ++i)
        if (i != j) next[j] += p[i] * rates[i][j] / q;
    }
    p.swap(next);
  }
  return p;
}

// Exact Ornstein-Uhlenbeck transition dX = -theta X dt + s dW over dt.
inline double ou_exact_step(double x, double theta, double s, double dt, double z) {
  const double decay = std::exp(-theta * dt);
  return x * decay + s * std::sqrt((1.0 - decay * decay) / (2.0 * theta)) * z;
}

// E[exp(lambda int_0^T X_s^2 ds)] for dX = -X dt + dB started at x0. Writing
// the conditional moment as exp(A x^2 + C) gives A' = lambda - 2A + 2A^2 and
// C' = A, integrated here with classical RK4.
inline double ou_square_exponential_moment(double lambda, double horizon, double x0,
                                           int steps = 100000) {
  const double h = horizon / steps;
  double A = 0.0, C = 0.0;
  auto fa = [lambda](double a) { return lambda - 2.0 * a + 2.0 * a * a; };
  for (int k = 0; k < steps; ++k) {
    const double k1 = fa(A), k2 = fa(A + 0.5 * h * k1), k3 = fa(A + 0.5 * h * k2), k4 = fa(A + h * k3);
    C += h / 6.0 * (A + 2.0 * (A + 0.5 * h * k1) + 2.0 * (A + 0.5 * h * k2) + (A + h * k3));
    A += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return std::exp(A * x0 * x0 + C);
}

}  // namespace oracle

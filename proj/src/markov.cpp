#include "ksp/markov.hpp"

#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "ksp/csv.hpp"

namespace ksp {

RateMatrix::RateMatrix(Mat rates) : rates_(std::move(rates)) {
  require(rates_.rows() > 0 && rates_.rows() == rates_.cols(), "rate matrix: must be square");
  rates_.diagonal().setZero();
  require(rates_.allFinite(), "rate matrix: non-finite rate");
  for (Eigen::Index i = 0; i < rates_.rows(); ++i)
    for (Eigen::Index j = 0; j < rates_.cols(); ++j)
      if (rates_(i, j) < 0.0)
        throw std::invalid_argument("rate matrix: negative rate from " + std::to_string(i) +
                                    " to " + std::to_string(j));
}

RateMatrix RateMatrix::two_state(double rate_01, double rate_10) {
  Mat r(2, 2);
  r << 0.0, rate_01, rate_10, 0.0;
  return RateMatrix(r);
}

void DistributionVector::validate(double tol) const {
  require(p.size() > 0, "distribution: empty");
  require(p.allFinite(), "distribution: non-finite entry");
  require((p.array() >= 0.0).all(), "distribution: negative entry");
  require(std::abs(p.sum() - 1.0) <= tol, "distribution: entries do not sum to 1");
}

void TransitionKernel::validate() const {
  require(Q.rows() == Q.cols() && Q.rows() > 0, "kernel: must be square");
  for (Eigen::Index i = 0; i < Q.rows(); ++i)
    require(std::abs(Q.row(i).sum() - 1.0) <= 1e-10, "kernel: row does not sum to 1");
  require((Q.array() >= -1e-12).all() && (Q.array() <= 1.0 + 1e-12).all(),
          "kernel: entry outside [0, 1]");
}

Mat generator_from_rates(const RateMatrix& W) {
  Mat G = W.rates();
  for (Eigen::Index i = 0; i < G.rows(); ++i) G(i, i) = -W.exit_rate(i);
  return G;
}

TransitionKernel evolve_kernel(const Mat& G, double tau) {
  require(tau >= 0.0 && std::isfinite(tau), "evolve_kernel: tau must be nonnegative");
  require(G.rows() == G.cols(), "evolve_kernel: generator must be square");
  const Eigen::Index n = G.rows();
  const Mat A = G * tau;
  const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
  if (!std::isfinite(norm)) throw std::runtime_error("evolve_kernel: non-finite generator");

  // Scale to norm <= 1/2; the Taylor tail is then below 1e-16 after at most
  // 18 terms.
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Mat S = A / std::ldexp(1.0, squarings);
  Mat E = Mat::Identity(n, n);
  Mat term = Mat::Identity(n, n);
  bool converged = false;
  for (int k = 1; k <= 30; ++k) {
    term = term * S / static_cast<double>(k);
    E += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18) {
      converged = true;
      break;
    }
  }
  if (!converged) throw std::runtime_error("evolve_kernel: Taylor series did not converge");
  for (int s = 0; s < squarings; ++s) E = E * E;

  for (Eigen::Index i = 0; i < n; ++i) {
    const double drift = std::abs(E.row(i).sum() - 1.0);
    if (drift > 1e-10) {
      std::ostringstream msg;
      msg << "evolve_kernel: row " << i << " sums to 1 + " << drift;
      throw std::runtime_error(msg.str());
    }
  }
  TransitionKernel k{E};
  k.validate();
  k.Q = k.Q.cwiseMax(0.0).cwiseMin(1.0);
  return k;
}

Vec master_rhs(const RateMatrix& W, const DistributionVector& p) {
  require(static_cast<std::size_t>(p.p.size()) == W.n_states(), "master_rhs: size mismatch");
  const Mat& r = W.rates();
  Vec out(p.p.size());
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    double gain = 0.0;
    for (Eigen::Index i = 0; i < out.size(); ++i) gain += r(i, j) * p.p[i];
    out[j] = gain - W.exit_rate(j) * p.p[j];
  }
  return out;
}

DistributionVector evolve_master(const RateMatrix& W, const DistributionVector& p, double dtau,
                                 std::size_t n_steps) {
  require(dtau > 0.0, "evolve_master: dtau must be positive");
  DistributionVector cur = p;
  for (std::size_t k = 0; k < n_steps; ++k) {
    cur.p += dtau * master_rhs(W, cur);
    for (Eigen::Index i = 0; i < cur.p.size(); ++i)
      if (cur.p[i] < 0.0 && cur.p[i] > -1e-14) cur.p[i] = 0.0;
  }
  return cur;
}

std::optional<std::size_t> unreachable_state(const RateMatrix& W) {
  const auto n = static_cast<Eigen::Index>(W.n_states());
  const Mat& r = W.rates();
  auto reach = [&](bool forward) {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::deque<Eigen::Index> queue{0};
    seen[0] = true;
    while (!queue.empty()) {
      const auto i = queue.front();
      queue.pop_front();
      for (Eigen::Index j = 0; j < n; ++j) {
        const double rate = forward ? r(i, j) : r(j, i);
        if (rate > 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = true;
          queue.push_back(j);
        }
      }
    }
    return seen;
  };
  const auto fwd = reach(true);
  const auto bwd = reach(false);
  for (std::size_t i = 0; i < fwd.size(); ++i)
    if (!fwd[i] || !bwd[i]) return i;
  return std::nullopt;
}

DistributionVector stationary_distribution(const RateMatrix& W) {
  if (auto bad = unreachable_state(W))
    throw std::invalid_argument("stationary_distribution: chain is reducible; state " +
                                std::to_string(*bad) + " is not mutually reachable with state 0");
  const Eigen::Index n = static_cast<Eigen::Index>(W.n_states());
  if (n == 1) return {Vec::Ones(1)};
  const Mat G = generator_from_rates(W);
  Mat A = G.transpose();
  A.row(n - 1).setOnes();
  Vec rhs = Vec::Zero(n);
  rhs[n - 1] = 1.0;
  Eigen::FullPivLU<Mat> lu(A);
  Vec p = lu.solve(rhs);
  // One step of iterative refinement.
  p += lu.solve(rhs - A * p);
  p = p.cwiseMax(0.0);
  p /= p.sum();
  return {p};
}

TaylorReport taylor_kernel_check(const RateMatrix& W, const Vec& tau_seq) {
  require(tau_seq.size() >= 2, "taylor_kernel_check: need at least two tau values");
  for (Eigen::Index k = 0; k < tau_seq.size(); ++k) {
    require(tau_seq[k] > 0.0, "taylor_kernel_check: tau must be positive");
    if (k > 0) require(tau_seq[k] < tau_seq[k - 1], "taylor_kernel_check: tau must decrease");
  }
  const Mat G = generator_from_rates(W);
  const Eigen::Index n = G.rows();
  TaylorReport rep;
  rep.taus = tau_seq;
  rep.errors.resize(tau_seq.size());
  for (Eigen::Index k = 0; k < tau_seq.size(); ++k) {
    const double tau = tau_seq[k];
    const Mat Q = evolve_kernel(G, tau).Q;
    rep.errors[k] = ((Q - Mat::Identity(n, n)) / tau - G).cwiseAbs().maxCoeff();
  }
  rep.exact = (rep.errors.array() == 0.0).all();
  if (!rep.exact) {
    const Vec lx = tau_seq.array().log();
    const Vec ly = rep.errors.array().max(1e-300).log();
    const double mx = lx.mean();
    const double my = ly.mean();
    rep.slope = ((lx.array() - mx) * (ly.array() - my)).sum() / (lx.array() - mx).square().sum();
  }
  return rep;
}

RateMatrix read_rates_csv(std::istream& is, std::optional<std::size_t> n_states) {
  struct Triplet {
    long i, j;
    double rate;
  };
  std::vector<Triplet> triplets;
  std::string line;
  std::size_t line_no = 0;
  long max_index = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "i,j,rate") continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
      throw std::invalid_argument("rates csv: line " + std::to_string(line_no) +
                                  " is not an i,j,rate triplet");
    Triplet t{static_cast<long>(csv::parse(a)), static_cast<long>(csv::parse(b)), csv::parse(c)};
    require(t.i >= 0 && t.j >= 0, "rates csv: negative state index");
    max_index = std::max({max_index, t.i, t.j});
    triplets.push_back(t);
  }
  const auto n = n_states ? static_cast<long>(*n_states) : max_index + 1;
  require(n > 0, "rates csv: no states");
  require(max_index < n, "rates csv: state index exceeds n_states");
  Mat r = Mat::Zero(n, n);
  for (const auto& t : triplets) r(t.i, t.j) = t.rate;
  return RateMatrix(r);
}

void write_kernel_csv(std::ostream& os, const TransitionKernel& kernel) {
  const auto n = static_cast<std::size_t>(kernel.Q.cols());
  csv::write(os, csv::numbered("q_", n), kernel.Q);
}

void write_distribution_csv(std::ostream& os, const DistributionVector& p) {
  Mat rows(p.p.size(), 2);
  for (Eigen::Index i = 0; i < p.p.size(); ++i) {
    rows(i, 0) = static_cast<double>(i);
    rows(i, 1) = p.p[i];
  }
  csv::write(os, {"state", "p"}, rows);
}

}  // namespace ksp

#pragma once

// Finite Markov chain of the HS detector state on the lattice
// {0, sigma, ..., m_bar sigma}: steady state, false-positive rate and the
// average detection rate of a misbehaving node.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsd/error.hpp"

namespace hsd {

struct QuantizedShare {
  double sigma = 0.0;
  std::int64_t lattice = 0;  // 1 / sigma
  int L0 = 0;                // quantized share / sigma
  int L1 = 0;                // (1 - quantized share) / sigma
  int m_bar = 0;             // ceil(h / sigma)
  double share_q = 0.0;
  double epsilon = 0.0;      // share - share_q
};

inline QuantizedShare quantize(double share, double sigma, double h) {
  if (!(share > 0.0 && share < 1.0)) throw DomainError("quantize: share must lie in (0,1)");
  if (!(sigma > 0.0 && sigma < 1.0)) throw DomainError("quantize: sigma must lie in (0,1)");
  if (!(h > 0.0)) throw DomainError("quantize: threshold must be > 0");

  const double inv = 1.0 / sigma;
  const double n = std::round(inv);
  if (std::abs(inv - n) > 1e-9 * n) {
    throw DomainError("quantize: 1/sigma must be an integer, got " + std::to_string(inv));
  }
  QuantizedShare q;
  q.lattice = static_cast<std::int64_t>(n);
  q.sigma = 1.0 / n;
  const auto l0 = static_cast<std::int64_t>(std::llround(share * n));
  if (l0 <= 0 || l0 >= q.lattice) {
    throw DomainError("quantize: share " + std::to_string(share) + " rounds to " +
                      (l0 <= 0 ? "0" : "1") + " on a 1/" + std::to_string(q.lattice) + " lattice");
  }
  q.L0 = static_cast<int>(l0);
  q.L1 = static_cast<int>(q.lattice - l0);
  q.share_q = static_cast<double>(q.L0) / n;
  q.epsilon = share - q.share_q;
  const double steps = h * n;
  q.m_bar = static_cast<int>(std::ceil(steps - 1e-9 * std::max(1.0, steps)));
  if (q.m_bar < 1) q.m_bar = 1;
  return q;
}

struct Transition {
  int to = 0;
  double p = 0.0;
};

// Row-stochastic P(s) over states 0..m_bar. Row j < m_bar has at most two
// entries (down by L0 clamped at 0, up by L1 clamped at m_bar); the top row
// returns to 0.
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  TransitionMatrix(int L0, int L1, int m_bar, double s) : L0_(L0), L1_(L1), m_bar_(m_bar), s_(s) {
    if (L0 < 1 || L1 < 1 || m_bar < 1) throw DomainError("transition matrix: L0, L1, m_bar must be >= 1");
    if (!(s >= 0.0 && s <= 1.0)) throw DomainError("transition matrix: s must lie in [0,1]");
    rows_.resize(static_cast<std::size_t>(m_bar) + 1);
    for (int j = 0; j < m_bar; ++j) {
      auto& row = rows_[static_cast<std::size_t>(j)];
      row.push_back({std::max(j - L0, 0), 1.0 - s});
      row.push_back({std::min(j + L1, m_bar), s});
    }
    rows_.back().push_back({0, 1.0});
  }

  int size() const { return m_bar_ + 1; }
  int m_bar() const { return m_bar_; }
  int L0() const { return L0_; }
  int L1() const { return L1_; }
  double s() const { return s_; }
  std::span<const Transition> row(int j) const { return rows_.at(static_cast<std::size_t>(j)); }

  double at(int from, int to) const {
    double v = 0.0;
    for (const auto& t : row(from)) {
      if (t.to == to) v += t.p;
    }
    return v;
  }

  // y = x P
  std::vector<double> step(std::span<const double> x) const {
    std::vector<double> y(x.size(), 0.0);
    step_into(x, y);
    return y;
  }

  void step_into(std::span<const double> x, std::span<double> y) const {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t j = 0; j < rows_.size(); ++j) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      for (const auto& t : rows_[j]) y[static_cast<std::size_t>(t.to)] += xj * t.p;
    }
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size(), size());
    for (int j = 0; j < size(); ++j) {
      for (const auto& t : row(j)) m(j, t.to) += t.p;
    }
    return m;
  }

 private:
  int L0_ = 1;
  int L1_ = 1;
  int m_bar_ = 1;
  double s_ = 0.0;
  std::vector<std::vector<Transition>> rows_;
};

inline TransitionMatrix build_matrix(const QuantizedShare& q, double s) {
  if (!(s > 0.0 && s < 1.0)) throw DomainError("build_matrix: s must lie in (0,1)");
  return TransitionMatrix(q.L0, q.L1, q.m_bar, s);
}

using ChainDistribution = std::vector<double>;

inline double stationary_residual(const TransitionMatrix& P, std::span<const double> pi) {
  const auto next = P.step(pi);
  double r = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) r = std::max(r, std::abs(next[i] - pi[i]));
  return r;
}

namespace detail {

inline void normalize(ChainDistribution& pi) {
  double total = 0.0;
  for (auto& v : pi) {
    v = std::max(v, 0.0);  // unreachable states come back as tiny negatives
    total += v;
  }
  for (auto& v : pi) v /= total;
}

inline ChainDistribution power_steady_state(const TransitionMatrix& P, double tol, std::int64_t max_steps) {
  ChainDistribution x(static_cast<std::size_t>(P.size()), 1.0 / P.size());
  ChainDistribution y(x.size());
  for (std::int64_t k = 0; k < max_steps; ++k) {
    P.step_into(x, y);
    std::swap(x, y);
    if (k % 64 == 63 && stationary_residual(P, x) <= tol) {
      normalize(x);
      return x;
    }
  }
  throw ConvergenceError("steady_state: power iteration did not converge", stationary_residual(P, x));
}

}  // namespace detail

inline constexpr int kDenseSteadyStateLimit = 1000;

// Dense solve of (P^T - I) pi = 0 with the last equation replaced by
// sum(pi) = 1; power iteration beyond kDenseSteadyStateLimit states.
inline ChainDistribution steady_state(const TransitionMatrix& P, double tol = 1e-12) {
  const int n = P.size();
  ChainDistribution pi;
  if (n - 1 <= kDenseSteadyStateLimit) {
    Eigen::MatrixXd a = P.dense().transpose() - Eigen::MatrixXd::Identity(n, n);
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    Eigen::VectorXd x = lu.solve(b);
    if (!x.allFinite()) throw ConvergenceError("steady_state: singular balance system", INFINITY);
    pi.assign(x.data(), x.data() + n);
    detail::normalize(pi);
    // A few plain steps polish the LU round-off.
    for (int k = 0; k < 8 && stationary_residual(P, pi) > tol; ++k) {
      pi = P.step(pi);
      detail::normalize(pi);
    }
  } else {
    pi = detail::power_steady_state(P, tol, 50'000'000);
  }
  const double r = stationary_residual(P, pi);
  if (r > tol) throw ConvergenceError("steady_state: residual " + std::to_string(r) + " above tolerance", r);
  return pi;
}

// Per-reception false-alarm probability, the mass of the top state.
inline double false_positive_rate(const ChainDistribution& pi) {
  if (pi.empty()) throw DomainError("false_positive_rate: empty distribution");
  return pi.back();
}

struct DetectionRate {
  double p_d = 0.0;
  std::int64_t steps = 0;  // floor(D / T*)
  bool no_steps = false;   // D shorter than one mean inter-arrival
};

// Starts from the normal-case steady state and evolves under P*; the
// per-step alarm probabilities are combined as if independent.
inline DetectionRate detection_rate(const ChainDistribution& pi0, const TransitionMatrix& P_star, double D,
                                    double T_star) {
  if (static_cast<int>(pi0.size()) != P_star.size()) {
    throw DomainError("detection_rate: distribution and matrix sizes differ");
  }
  if (!(T_star > 0.0)) throw DomainError("detection_rate: T* must be > 0");
  if (!(D >= 0.0)) throw DomainError("detection_rate: D must be >= 0");
  DetectionRate out;
  out.steps = static_cast<std::int64_t>(std::floor(D / T_star));
  if (out.steps == 0) {
    out.no_steps = true;
    return out;
  }
  ChainDistribution x = pi0;
  ChainDistribution y(x.size());
  double miss = 1.0;
  for (std::int64_t k = 1; k <= out.steps; ++k) {
    P_star.step_into(x, y);
    std::swap(x, y);
    miss *= 1.0 - x.back();
  }
  out.p_d = 1.0 - miss;
  return out;
}

}  // namespace hsd

#pragma once

// Saturated EDCA access model: per-class transmission and blocking
// probabilities, per-node resource shares and the mean number of slots
// between successful receptions at the AP.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsd/error.hpp"

namespace hsd {

struct AccessClass {
  std::string label;
  int cw_min = 15;             // W_i
  int max_backoff_stage = 6;   // m_i, also the retry limit
  int aifsn = 2;
  int node_count = 0;
};

struct TimingParams {
  int payload_slots = 4;     // L, packet incl. MAC/PHY headers
  int sifs_slots = 1;
  int ack_slots = 2;
  int prop_delay_slots = 0;  // delta
};

struct NetworkConfig {
  std::vector<AccessClass> classes;
  TimingParams timing;

  int total_nodes() const {
    int n = 0;
    for (const auto& c : classes) n += c.node_count;
    return n;
  }

  // Over populated classes; an empty class defers to nobody.
  int aifsn_min() const {
    int a = std::numeric_limits<int>::max();
    for (const auto& c : classes) {
      if (c.node_count > 0) a = std::min(a, c.aifsn);
    }
    return a == std::numeric_limits<int>::max() ? 0 : a;
  }
};

struct SlotDurations {
  int success = 0;    // T_s
  int collision = 0;  // T_c
};

struct MacSolution {
  std::vector<double> tau;
  std::vector<double> block_p;
  double busy_p = 0.0;
  std::vector<double> success_p;  // per node of the class, per slot
  std::vector<double> share;      // per node of the class
  double eta = 0.0;               // packets per slot
  double mean_interarrival_T = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

struct MisbehaviorSpec {
  int target_class_index = 0;
  std::optional<int> override_cw_min;
  std::optional<int> override_aifsn;
  std::optional<int> override_max_stage;
};

struct SolverOptions {
  double tol = 1e-10;
  int max_iter = 100000;
  double damping = 0.5;
};

// W_{i,j} = 2^stage (W_i + 1) - 1
inline std::int64_t contention_window(int cw_min, int stage) {
  if (stage < 0) throw DomainError("contention_window: negative backoff stage");
  if (cw_min < 0) throw ConfigError("contention_window: negative cw_min");
  const std::int64_t base = std::int64_t{cw_min} + 1;
  if (stage >= 62 || base > (std::numeric_limits<std::int64_t>::max() >> stage)) {
    throw ConfigError("contention_window: window overflows for cw_min=" + std::to_string(cw_min) +
                      " stage=" + std::to_string(stage));
  }
  return (base << stage) - 1;
}

// Stage count whose top window is log-closest to cw_max. Exact when
// (cw_max + 1) / (cw_min + 1) is a power of two.
inline int max_stage_for(int cw_min, int cw_max) {
  if (cw_min < 1 || cw_max < cw_min) {
    throw ConfigError("max_stage_for: need 1 <= cw_min <= cw_max");
  }
  const double ratio = (static_cast<double>(cw_max) + 1.0) / (static_cast<double>(cw_min) + 1.0);
  return std::max(0, static_cast<int>(std::lround(std::log2(ratio))));
}

// Per-stage form, finite at p = 1/2:
//   tau = (1 - p^{m+1}) / sum_j p^j (1 - p + W_j / 2)
inline double tau_of_p_stage_sum(double p, int cw_min, int max_stage) {
  double denom = 0.0;
  double pj = 1.0;
  for (int j = 0; j <= max_stage; ++j) {
    denom += pj * (1.0 - p + 0.5 * static_cast<double>(contention_window(cw_min, j)));
    pj *= p;
  }
  return (1.0 - pj) / denom;
}

inline double tau_of_p(double p, int cw_min, int max_stage) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw DomainError("tau_of_p: blocking probability must lie in [0,1), got " + std::to_string(p));
  }
  if (cw_min < 1) throw ConfigError("tau_of_p: cw_min must be >= 1");
  if (max_stage < 0) throw ConfigError("tau_of_p: max_backoff_stage must be >= 0");
  if (std::abs(1.0 - 2.0 * p) < 1e-6) return tau_of_p_stage_sum(p, cw_min, max_stage);

  const double w1 = static_cast<double>(cw_min) + 1.0;
  const double q = 1.0 - 2.0 * p;
  const double geo = (1.0 - std::pow(2.0 * p, max_stage + 1)) / (1.0 - std::pow(p, max_stage + 1));
  return 2.0 * (1.0 - p) * q / (q * q + w1 * (1.0 - p) * geo);
}

inline double blocking_p(double tau_i, double busy, int delta_aifsn) {
  if (!(tau_i >= 0.0 && tau_i < 1.0)) throw DomainError("blocking_p: tau must lie in [0,1)");
  if (!(busy >= 0.0 && busy < 1.0)) throw DomainError("blocking_p: busy probability must lie in [0,1)");
  if (delta_aifsn < 0) throw DomainError("blocking_p: negative AIFSN difference");
  double ratio = (1.0 - busy) / (1.0 - tau_i);
  if (ratio > 1.0 + 1e-12) {
    throw DomainError("blocking_p: (1-busy)/(1-tau) > 1, inconsistent inputs");
  }
  ratio = std::min(ratio, 1.0);
  return 1.0 - std::pow(ratio, delta_aifsn + 1);
}

inline double busy_p(std::span<const double> taus, std::span<const int> counts) {
  if (taus.size() != counts.size()) throw ConfigError("busy_p: taus/counts length mismatch");
  double idle = 1.0;
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (!(taus[k] >= 0.0 && taus[k] < 1.0)) throw DomainError("busy_p: tau must lie in [0,1)");
    if (counts[k] < 0) throw ConfigError("busy_p: negative node count");
    idle *= std::pow(1.0 - taus[k], counts[k]);
  }
  return 1.0 - idle;
}

inline SlotDurations slot_durations(const TimingParams& t, int aifsn_min) {
  return {aifsn_min + t.payload_slots + 2 * t.sifs_slots + t.ack_slots + 2 * t.prop_delay_slots,
          aifsn_min + t.payload_slots + t.sifs_slots + t.ack_slots + t.prop_delay_slots};
}

inline SlotDurations slot_durations(const NetworkConfig& config) {
  return slot_durations(config.timing, config.aifsn_min());
}

inline void validate(const NetworkConfig& config) {
  if (config.classes.empty()) throw ConfigError("config: at least one access class is required");
  for (std::size_t i = 0; i < config.classes.size(); ++i) {
    const auto& c = config.classes[i];
    const std::string where = "classes[" + std::to_string(i) + "]";
    if (c.cw_min < 1) throw ConfigError(where + ".cw_min must be >= 1");
    if (c.max_backoff_stage < 0) throw ConfigError(where + ".max_stage must be >= 0");
    if (c.aifsn < 0) throw ConfigError(where + ".aifsn must be >= 0");
    if (c.node_count < 0) throw ConfigError(where + ".nodes must be >= 0");
    (void)contention_window(c.cw_min, c.max_backoff_stage);
  }
  if (config.total_nodes() < 1) throw ConfigError("config: total node count must be >= 1");
  const auto& t = config.timing;
  if (t.payload_slots < 0) throw ConfigError("timing.payload_slots must be >= 0");
  if (t.sifs_slots < 0) throw ConfigError("timing.sifs_slots must be >= 0");
  if (t.ack_slots < 0) throw ConfigError("timing.ack_slots must be >= 0");
  if (t.prop_delay_slots < 0) throw ConfigError("timing.prop_delay_slots must be >= 0");
}

namespace detail {

inline std::vector<int> node_counts(const NetworkConfig& config) {
  std::vector<int> n;
  n.reserve(config.classes.size());
  for (const auto& c : config.classes) n.push_back(c.node_count);
  return n;
}

inline std::vector<double> blocking_for(const NetworkConfig& config, std::span<const double> tau,
                                        double busy) {
  const int amin = config.aifsn_min();
  std::vector<double> p(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const auto& ac = config.classes[i];
    // A class with no members contributes nothing to busy, so its
    // hypothetical node sees every transmitter as "other".
    const double own = ac.node_count > 0 ? tau[i] : 0.0;
    p[i] = blocking_p(own, busy, std::max(0, ac.aifsn - amin));
  }
  return p;
}

}  // namespace detail

// Damped Picard iteration on tau, started from the p = 0 values.
inline MacSolution solve_fixed_point(const NetworkConfig& config, const SolverOptions& opt = {}) {
  validate(config);
  if (!(opt.tol > 0.0)) throw ConfigError("solver: tol must be > 0");
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw ConfigError("solver: damping must be in (0,1]");

  const std::size_t c = config.classes.size();
  const auto counts = detail::node_counts(config);
  std::vector<double> tau(c);
  for (std::size_t i = 0; i < c; ++i) tau[i] = 2.0 / (config.classes[i].cw_min + 2.0);

  std::vector<double> mapped(c);
  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (;; ++iter) {
    const double busy = busy_p(tau, counts);
    const auto p = detail::blocking_for(config, tau, busy);
    residual = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      const auto& ac = config.classes[i];
      mapped[i] = tau_of_p(p[i], ac.cw_min, ac.max_backoff_stage);
      residual = std::max(residual, std::abs(mapped[i] - tau[i]));
    }
    if (residual <= opt.tol) break;
    if (iter >= opt.max_iter) {
      throw ConvergenceError("solver: no convergence after " + std::to_string(opt.max_iter) +
                                 " iterations, residual " + std::to_string(residual),
                             residual);
    }
    for (std::size_t i = 0; i < c; ++i) tau[i] = (1.0 - opt.damping) * tau[i] + opt.damping * mapped[i];
  }

  MacSolution sol;
  sol.tau = tau;
  sol.busy_p = busy_p(tau, counts);
  sol.block_p = detail::blocking_for(config, tau, sol.busy_p);
  sol.residual = residual;
  sol.iterations = iter;

  sol.success_p.resize(c);
  double ps_total = 0.0;
  double odds_total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    sol.success_p[i] = tau[i] / (1.0 - tau[i]) * (1.0 - sol.busy_p);
    ps_total += counts[i] * sol.success_p[i];
    odds_total += counts[i] * tau[i] / (1.0 - tau[i]);
  }
  sol.share.resize(c);
  for (std::size_t i = 0; i < c; ++i) sol.share[i] = (tau[i] / (1.0 - tau[i])) / odds_total;

  const auto d = slot_durations(config);
  const double mean_slot = (1.0 - sol.busy_p) + ps_total * d.success + (sol.busy_p - ps_total) * d.collision;
  sol.eta = ps_total / mean_slot;
  sol.mean_interarrival_T = 1.0 / sol.eta;
  return sol;
}

// Moves one node of the target class into a new single-node class carrying
// the overridden parameters. A new cw_min without an explicit stage keeps
// the class's top window (CWmax) as close as the doubling rule allows.
inline NetworkConfig apply_misbehavior(const NetworkConfig& config, const MisbehaviorSpec& spec) {
  validate(config);
  if (spec.target_class_index < 0 || spec.target_class_index >= static_cast<int>(config.classes.size())) {
    throw ConfigError("misbehavior: target class index " + std::to_string(spec.target_class_index) +
                      " out of range");
  }
  if (!spec.override_cw_min && !spec.override_aifsn && !spec.override_max_stage) {
    throw ConfigError("misbehavior: at least one override is required");
  }
  const auto& target = config.classes[static_cast<std::size_t>(spec.target_class_index)];
  if (target.node_count < 1) throw ConfigError("misbehavior: target class has no nodes");

  AccessClass rogue = target;
  rogue.label = target.label.empty() ? "misbehaving" : target.label + "*";
  rogue.node_count = 1;
  if (spec.override_cw_min) {
    rogue.cw_min = *spec.override_cw_min;
    if (rogue.cw_min < 1) throw ConfigError("misbehavior: cw_min must be >= 1");
    const auto cw_max = contention_window(target.cw_min, target.max_backoff_stage);
    rogue.max_backoff_stage = max_stage_for(rogue.cw_min, static_cast<int>(std::max<std::int64_t>(cw_max, rogue.cw_min)));
  }
  if (spec.override_aifsn) rogue.aifsn = *spec.override_aifsn;
  if (spec.override_max_stage) rogue.max_backoff_stage = *spec.override_max_stage;

  NetworkConfig out = config;
  out.classes[static_cast<std::size_t>(spec.target_class_index)].node_count -= 1;
  out.classes.push_back(rogue);
  validate(out);
  return out;
}

}  // namespace hsd

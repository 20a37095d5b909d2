#pragma once

// Reference scenarios and the sweeps behind the fig1/fig2/fig3 commands.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsd/edca_sim.hpp"
#include "hsd/mac_model.hpp"
#include "hsd/markov.hpp"

namespace hsd {

// Three classes, 15 nodes, CWmax 1023 everywhere.
inline NetworkConfig reference_network() {
  NetworkConfig cfg;
  cfg.classes = {
      {"class1", 15, 6, 7, 6},
      {"class2", 15, 6, 3, 6},
      {"class3", 7, 7, 2, 3},
  };
  return cfg;
}

inline constexpr int kReferenceTargetClass = 1;

inline MisbehaviorSpec reference_misbehavior(int cw_min = 4, int aifsn = 0) {
  MisbehaviorSpec m;
  m.target_class_index = kReferenceTargetClass;
  m.override_cw_min = cw_min;
  m.override_aifsn = aifsn;
  return m;
}

// Eleven identical nodes; one of them is turned into the misbehaving node.
inline NetworkConfig homogeneous_network(int nodes = 11) {
  NetworkConfig cfg;
  cfg.classes = {{"normal", 15, 6, 2, nodes}};
  return cfg;
}

// ---- resource share under misbehavior --------------------------------------

struct ShareRow {
  int cw_min = 0;
  int aifsn = 0;
  double model_misbehaving = 0.0;
  double model_normal = 0.0;
  std::optional<double> sim_misbehaving;
  std::optional<double> sim_normal;  // mean over the rest of the target class
};

inline ShareRow share_point(const NetworkConfig& normal, int target_class, int cw_min, int aifsn,
                            std::int64_t sim_slots, std::uint64_t seed, const SolverOptions& opt = {}) {
  MisbehaviorSpec spec;
  spec.target_class_index = target_class;
  spec.override_cw_min = cw_min;
  spec.override_aifsn = aifsn;
  const auto mis = apply_misbehavior(normal, spec);
  const auto sol = solve_fixed_point(mis, opt);
  ShareRow row{cw_min, aifsn, sol.share.back(), sol.share[static_cast<std::size_t>(target_class)], {}, {}};
  if (sim_slots > 0) {
    auto sc = make_sim_config(normal, spec, sim_slots, seed);
    sc.record_trace = false;
    const auto res = run(sc);
    const NodeId rogue = misbehaving_node_id(normal, spec);
    double acc = 0.0;
    int cnt = 0;
    for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
      if (static_cast<NodeId>(i) == rogue) continue;
      if (sc.nodes[i].class_index == target_class) {
        acc += res.stats.share[i];
        ++cnt;
      }
    }
    row.sim_misbehaving = res.stats.share[static_cast<std::size_t>(rogue)];
    if (cnt > 0) row.sim_normal = acc / cnt;
  }
  return row;
}

// ---- false-positive rate ---------------------------------------------------

struct FalsePositiveRow {
  double sigma = 0.0;
  double epsilon = 0.0;
  double h = 0.0;
  int m_bar = 0;
  double p_f = 0.0;
};

// p_f of the HS detector for a well-behaved node of target_class. The
// chain uses the quantized share for its lattice and the exact model share
// as the probability of a reception from the target.
inline FalsePositiveRow false_positive_point(double share, double sigma, double h) {
  const auto q = quantize(share, sigma, h);
  const auto P = build_matrix(q, share);
  const auto pi = steady_state(P);
  return {q.sigma, q.epsilon, h, q.m_bar, false_positive_rate(pi)};
}

// ---- detection rate --------------------------------------------------------

struct DetectionPoint {
  double share_normal = 0.0;      // s-bar
  double share_misbehaving = 0.0; // s*
  double T_star = 0.0;
  double p_f = 0.0;
  DetectionRate rate;
};

inline DetectionPoint detection_point(const NetworkConfig& normal, const MisbehaviorSpec& spec, double sigma,
                                      double h, double D, const SolverOptions& opt = {}) {
  const auto base = solve_fixed_point(normal, opt);
  const auto mis = solve_fixed_point(apply_misbehavior(normal, spec), opt);
  DetectionPoint out;
  out.share_normal = base.share.at(static_cast<std::size_t>(spec.target_class_index));
  out.share_misbehaving = mis.share.back();
  out.T_star = mis.mean_interarrival_T;
  const auto q = quantize(out.share_normal, sigma, h);
  const auto pi = steady_state(build_matrix(q, out.share_normal));
  out.p_f = false_positive_rate(pi);
  out.rate = detection_rate(pi, build_matrix(q, out.share_misbehaving), D, out.T_star);
  return out;
}

}  // namespace hsd

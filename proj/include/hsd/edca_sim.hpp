#pragma once

// Slot-level simulator of a saturated, single collision domain EDCA WLAN.
//
// Time advances in generic slots: an idle slot lasts 1 slot, a success T_s
// slots and a collision T_c slots (both include the AIFSN_min deferral that
// follows the busy medium). A node with AIFSN_i waits a further
// AIFSN_i - AIFSN_min idle slots after every busy period before it may
// count down or transmit. Backoff counters are drawn uniformly from
// [0, W_{i,j}] and frozen while the node is deferring or the medium is busy.
// After a failure at the top stage the frame is dropped and the stage resets.
//
// Randomness: node i owns a std::mt19937_64 seeded with
// splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15); uniform draws use
// rejection sampling on the raw 64-bit output, so traces are identical on
// every platform.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hsd/detector.hpp"
#include "hsd/error.hpp"
#include "hsd/mac_model.hpp"

namespace hsd {

struct NodeParams {
  int cw_min = 15;
  int max_stage = 6;
  int aifsn = 2;
  int class_index = 0;  // class label written into the trace
};

struct SimConfig {
  std::vector<NodeParams> nodes;
  TimingParams timing;
  std::int64_t duration_slots = 1'000'000;
  std::uint64_t rng_seed = 1;
  bool record_trace = true;

  int aifsn_min() const {
    int a = std::numeric_limits<int>::max();
    for (const auto& n : nodes) a = std::min(a, n.aifsn);
    return nodes.empty() ? 0 : a;
  }
};

struct SimStats {
  std::vector<std::int64_t> successes;    // per node
  std::vector<double> share;              // per node
  std::vector<std::int64_t> attempts;     // per node
  std::vector<std::int64_t> drops;        // per node
  std::int64_t total_successes = 0;
  std::int64_t collisions = 0;
  std::int64_t idle_slots = 0;
  std::int64_t generic_slots = 0;
  std::int64_t elapsed_slots = 0;
  double busy_p = 0.0;
  double mean_gap_slots = 0.0;  // elapsed / successes
  SlotDurations durations;
};

struct SimResult {
  std::vector<TransmissionEvent> trace;
  SimStats stats;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform integer on [0, hi] from a 64-bit engine.
inline std::int64_t uniform_inclusive(std::mt19937_64& eng, std::int64_t hi) {
  const std::uint64_t range = static_cast<std::uint64_t>(hi) + 1;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = eng();
  } while (x >= limit);
  return static_cast<std::int64_t>(x % range);
}

}  // namespace detail

inline std::mt19937_64 node_stream(std::uint64_t seed, int node) {
  return std::mt19937_64(detail::splitmix64(seed + static_cast<std::uint64_t>(node + 1) * 0x9E3779B97F4A7C15ULL));
}

inline void validate(const SimConfig& cfg) {
  if (cfg.nodes.empty()) throw ConfigError("sim: at least one node is required");
  if (cfg.duration_slots <= 0) throw ConfigError("sim: duration_slots must be > 0");
  for (std::size_t i = 0; i < cfg.nodes.size(); ++i) {
    const auto& n = cfg.nodes[i];
    if (n.cw_min < 1 || n.max_stage < 0 || n.aifsn < 0) {
      throw ConfigError("sim: invalid parameters for node " + std::to_string(i));
    }
    (void)contention_window(n.cw_min, n.max_stage);
  }
  const auto d = slot_durations(cfg.timing, cfg.aifsn_min());
  if (d.success < 1 || d.collision < 1) {
    throw ConfigError("sim: success and collision periods must last at least one slot");
  }
}

// Nodes are numbered class by class. With a misbehavior spec the last node
// of the target class takes the overridden parameters and is labelled with
// the index of the class apply_misbehavior() appends.
inline SimConfig make_sim_config(const NetworkConfig& normal, const std::optional<MisbehaviorSpec>& misbehavior,
                                 std::int64_t duration_slots, std::uint64_t seed) {
  validate(normal);
  SimConfig cfg;
  cfg.timing = normal.timing;
  cfg.duration_slots = duration_slots;
  cfg.rng_seed = seed;
  std::optional<AccessClass> rogue;
  if (misbehavior) {
    const auto mis = apply_misbehavior(normal, *misbehavior);
    rogue = mis.classes.back();
  }
  for (std::size_t c = 0; c < normal.classes.size(); ++c) {
    const auto& ac = normal.classes[c];
    for (int k = 0; k < ac.node_count; ++k) {
      NodeParams np{ac.cw_min, ac.max_backoff_stage, ac.aifsn, static_cast<int>(c)};
      const bool is_rogue = rogue && misbehavior->target_class_index == static_cast<int>(c) && k == ac.node_count - 1;
      if (is_rogue) {
        np = {rogue->cw_min, rogue->max_backoff_stage, rogue->aifsn, static_cast<int>(normal.classes.size())};
      }
      cfg.nodes.push_back(np);
    }
  }
  validate(cfg);
  return cfg;
}

// Node id of the misbehaving node produced by make_sim_config.
inline NodeId misbehaving_node_id(const NetworkConfig& normal, const MisbehaviorSpec& spec) {
  NodeId id = 0;
  for (int c = 0; c <= spec.target_class_index; ++c) id += normal.classes.at(static_cast<std::size_t>(c)).node_count;
  return id - 1;
}

// Class index of every node, in node-id order.
inline std::vector<int> node_classes(const NetworkConfig& config) {
  std::vector<int> out;
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    out.insert(out.end(), static_cast<std::size_t>(config.classes[c].node_count), static_cast<int>(c));
  }
  return out;
}

inline SimResult run(const SimConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.nodes.size();
  const int amin = cfg.aifsn_min();
  const SlotDurations dur = slot_durations(cfg.timing, amin);

  struct Runtime {
    std::mt19937_64 rng;
    std::int64_t counter = 0;
    int stage = 0;
    int defer = 0;  // extra idle slots required after a busy period
  };
  std::vector<Runtime> rt;
  rt.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Runtime r{node_stream(cfg.rng_seed, static_cast<int>(i))};
    r.defer = cfg.nodes[i].aifsn - amin;
    r.counter = detail::uniform_inclusive(r.rng, contention_window(cfg.nodes[i].cw_min, 0));
    rt.push_back(std::move(r));
  }

  SimResult out;
  auto& st = out.stats;
  st.durations = dur;
  st.successes.assign(n, 0);
  st.attempts.assign(n, 0);
  st.drops.assign(n, 0);

  std::vector<std::size_t> tx;
  tx.reserve(n);
  std::int64_t time = 0;
  std::int64_t idle_run = 0;  // idle slots since the last busy period
  while (time < cfg.duration_slots) {
    tx.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (idle_run >= rt[i].defer && rt[i].counter == 0) tx.push_back(i);
    }
    ++st.generic_slots;
    if (tx.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        if (idle_run >= rt[i].defer) --rt[i].counter;
      }
      ++idle_run;
      ++st.idle_slots;
      time += 1;
      continue;
    }

    idle_run = 0;
    for (auto i : tx) ++st.attempts[i];
    if (tx.size() == 1) {
      const auto i = tx.front();
      time += dur.success;
      if (cfg.record_trace) {
        out.trace.push_back({st.total_successes, time, static_cast<NodeId>(i), cfg.nodes[i].class_index});
      }
      ++st.successes[i];
      ++st.total_successes;
      rt[i].stage = 0;
      rt[i].counter = detail::uniform_inclusive(rt[i].rng, contention_window(cfg.nodes[i].cw_min, 0));
    } else {
      time += dur.collision;
      ++st.collisions;
      for (auto i : tx) {
        auto& r = rt[i];
        if (r.stage >= cfg.nodes[i].max_stage) {
          ++st.drops[i];
          r.stage = 0;
        } else {
          ++r.stage;
        }
        r.counter = detail::uniform_inclusive(r.rng, contention_window(cfg.nodes[i].cw_min, r.stage));
      }
    }
  }

  st.elapsed_slots = time;
  st.share.assign(n, 0.0);
  if (st.total_successes > 0) {
    for (std::size_t i = 0; i < n; ++i) {
      st.share[i] = static_cast<double>(st.successes[i]) / static_cast<double>(st.total_successes);
    }
    st.mean_gap_slots = static_cast<double>(time) / static_cast<double>(st.total_successes);
  }
  st.busy_p = static_cast<double>(st.total_successes + st.collisions) / static_cast<double>(st.generic_slots);
  return out;
}

inline std::vector<SimResult> replicate(const SimConfig& cfg, std::span<const std::uint64_t> seeds) {
  std::vector<std::uint64_t> sorted(seeds.begin(), seeds.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("replicate: seeds must be distinct");
  }
  std::vector<SimResult> runs;
  runs.reserve(seeds.size());
  for (auto seed : seeds) {
    SimConfig c = cfg;
    c.rng_seed = seed;
    runs.push_back(run(c));
  }
  return runs;
}

}  // namespace hsd

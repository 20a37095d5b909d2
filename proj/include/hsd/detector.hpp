#pragma once

// CUSUM-style misbehavior detectors driven by successful receptions at the
// AP. The hybrid-share (HS) detector compares each node against its own
// model share; the fair-share (FS) detector assumes every one of n nodes
// deserves 1/n.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hsd/error.hpp"

namespace hsd {

using NodeId = int;

struct TransmissionEvent {
  std::int64_t step = 0;  // index of the reception, contiguous from 0
  std::int64_t slot = 0;  // slot at which the reception completed
  NodeId node = 0;
  int class_index = 0;

  friend bool operator==(const TransmissionEvent&, const TransmissionEvent&) = default;
};

struct Alarm {
  std::int64_t step = 0;
  std::int64_t slot = 0;

  friend bool operator==(const Alarm&, const Alarm&) = default;
};

namespace detail {
// Float slack on the threshold and the zero clamp. Lattice states that are
// equal in exact arithmetic must compare equal here too.
inline double threshold_slack(double h) { return 1e-9 * std::max(1.0, h); }
}  // namespace detail

struct HsDetectorState {
  NodeId target_node = 0;
  double reference_share = 0.0;  // s-bar, full solver precision
  double threshold = 0.0;        // h
  double state = 0.0;            // X_k, always in [0, h)
  std::int64_t step_count = 0;
  bool reset_pending = false;
  std::vector<Alarm> alarms;

  HsDetectorState() = default;
  HsDetectorState(NodeId target, double share, double h)
      : target_node(target), reference_share(share), threshold(h) {
    if (!(share > 0.0 && share < 1.0)) {
      throw DomainError("hs detector: reference share must lie in (0,1)");
    }
    if (!(h > 0.0)) throw DomainError("hs detector: threshold must be > 0");
  }

  // X <- [X + I - s]^+, alarm and reset to 0 once X >= h. The reception
  // following an alarm is spent on the reset and leaves X at 0.
  bool update(const TransmissionEvent& ev) {
    ++step_count;
    if (reset_pending) {
      reset_pending = false;
      return false;
    }
    const double indicator = ev.node == target_node ? 1.0 : 0.0;
    const double slack = detail::threshold_slack(threshold);
    double next = state + indicator - reference_share;
    if (next < slack) next = 0.0;
    if (next >= threshold - slack) {
      alarms.push_back({ev.step, ev.slot});
      state = 0.0;
      reset_pending = true;
      return true;
    }
    state = next;
    return false;
  }
};

struct FsDetectorState {
  NodeId target_node = 0;
  int n = 1;
  double threshold = 0.0;
  double state = 0.0;
  std::int64_t step_count = 0;
  bool reset_pending = false;
  std::vector<Alarm> alarms;

  FsDetectorState() = default;
  FsDetectorState(NodeId target, int node_count, double h) : target_node(target), n(node_count), threshold(h) {
    if (node_count < 1) throw DomainError("fs detector: n must be >= 1");
    if (!(h > 0.0)) throw DomainError("fs detector: threshold must be > 0");
  }

  // X <- [X + n I - 1]^+, same reset rule as the HS detector.
  bool update(const TransmissionEvent& ev) {
    ++step_count;
    if (reset_pending) {
      reset_pending = false;
      return false;
    }
    const double indicator = ev.node == target_node ? 1.0 : 0.0;
    const double slack = detail::threshold_slack(threshold);
    double next = state + static_cast<double>(n) * indicator - 1.0;
    if (next < slack) next = 0.0;
    if (next >= threshold - slack) {
      alarms.push_back({ev.step, ev.slot});
      state = 0.0;
      reset_pending = true;
      return true;
    }
    state = next;
    return false;
  }
};

// Pure-function forms of the two updates.
inline std::pair<HsDetectorState, bool> hs_update(HsDetectorState s, const TransmissionEvent& ev) {
  const bool d = s.update(ev);
  return {std::move(s), d};
}

inline std::pair<FsDetectorState, bool> fs_update(FsDetectorState s, const TransmissionEvent& ev) {
  const bool d = s.update(ev);
  return {std::move(s), d};
}

struct DetectorTarget {
  NodeId node = 0;
  double reference_share = 0.0;
};

struct TargetReport {
  NodeId node = 0;
  double reference_share = 0.0;
  std::vector<Alarm> alarms;
  std::optional<std::int64_t> first_alarm_delay_slots;
  std::optional<std::int64_t> first_alarm_delay_steps;  // receptions consumed, alarm step + 1

  friend bool operator==(const TargetReport&, const TargetReport&) = default;
};

struct AlarmReport {
  double threshold = 0.0;
  std::int64_t events = 0;
  std::vector<TargetReport> targets;

  friend bool operator==(const AlarmReport&, const AlarmReport&) = default;
};

// One pass over the trace drives every target's HS machine. Delays are
// measured from the trace origin (slot 0, step 0).
inline AlarmReport run_detector(std::span<const TransmissionEvent> trace, std::span<const DetectorTarget> targets,
                                double h, int node_count) {
  std::set<NodeId> seen;
  std::vector<HsDetectorState> machines;
  machines.reserve(targets.size());
  for (const auto& t : targets) {
    if (t.node < 0 || t.node >= node_count) {
      throw ConfigError("detector: unknown target node " + std::to_string(t.node));
    }
    if (!seen.insert(t.node).second) {
      throw ConfigError("detector: duplicate target node " + std::to_string(t.node));
    }
    machines.emplace_back(t.node, t.reference_share, h);
  }

  for (const auto& ev : trace) {
    for (auto& m : machines) m.update(ev);
  }

  AlarmReport report;
  report.threshold = h;
  report.events = static_cast<std::int64_t>(trace.size());
  for (auto& m : machines) {
    TargetReport tr;
    tr.node = m.target_node;
    tr.reference_share = m.reference_share;
    tr.alarms = std::move(m.alarms);
    if (!tr.alarms.empty()) {
      tr.first_alarm_delay_slots = tr.alarms.front().slot;
      tr.first_alarm_delay_steps = tr.alarms.front().step + 1;
    }
    report.targets.push_back(std::move(tr));
  }
  return report;
}

// Per-class FS detector: only receptions from the target's own class are
// counted, with n the size of that class.
inline FsDetectorState run_class_fs_detector(std::span<const TransmissionEvent> trace, NodeId target,
                                             int class_index, int class_size, double h) {
  FsDetectorState fs(target, class_size, h);
  for (const auto& ev : trace) {
    if (ev.class_index == class_index) fs.update(ev);
  }
  return fs;
}

}  // namespace hsd

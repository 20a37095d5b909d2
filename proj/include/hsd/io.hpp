#pragma once

// JSON network configs, JSONL transmission traces, alarm reports and the
// CSV framing shared by the figure commands.

#include <charconv>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/detector.hpp"
#include "hsd/error.hpp"
#include "hsd/mac_model.hpp"

namespace hsd {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kDefaultCwMax = 1023;  // aCWmax

struct ScenarioFile {
  NetworkConfig network;
  std::optional<MisbehaviorSpec> misbehavior;
};

namespace detail {

using nlohmann::json;

inline int require_int(const json& obj, const std::string& key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(where + "." + key + ": missing");
  if (!it->is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  return it->get<int>();
}

inline std::optional<int> optional_int(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) return std::nullopt;
  return require_int(obj, key, where);
}

struct AcPreset {
  const char* name;
  int cw_min;
  int cw_max;
  int aifsn;
};

// EDCA defaults with aCWmin = 15, aCWmax = 1023.
inline constexpr AcPreset kAcPresets[] = {
    {"BK", 15, 1023, 7},
    {"BE", 15, 1023, 3},
    {"VI", 7, 15, 2},
    {"VO", 3, 7, 2},
};

inline AccessClass parse_class(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  AccessClass ac;
  int cw_max = kDefaultCwMax;
  ac.cw_min = 15;
  ac.aifsn = 2;
  if (j.contains("ac")) {
    if (!j["ac"].is_string()) throw ConfigError(where + ".ac: expected a string");
    const auto name = j["ac"].get<std::string>();
    bool found = false;
    for (const auto& p : kAcPresets) {
      if (name == p.name) {
        ac.cw_min = p.cw_min;
        cw_max = p.cw_max;
        ac.aifsn = p.aifsn;
        ac.label = name;
        found = true;
      }
    }
    if (!found) throw ConfigError(where + ".ac: unknown access category '" + name + "'");
  }
  if (j.contains("label")) {
    if (!j["label"].is_string()) throw ConfigError(where + ".label: expected a string");
    ac.label = j["label"].get<std::string>();
  }
  if (auto v = optional_int(j, "cw_min", where)) ac.cw_min = *v;
  if (auto v = optional_int(j, "aifsn", where)) ac.aifsn = *v;
  if (auto v = optional_int(j, "cw_max", where)) cw_max = *v;
  ac.node_count = require_int(j, "nodes", where);
  if (ac.cw_min < 1) throw ConfigError(where + ".cw_min: must be >= 1");
  if (ac.aifsn < 0) throw ConfigError(where + ".aifsn: must be >= 0");
  if (ac.node_count < 0) throw ConfigError(where + ".nodes: must be >= 0");
  if (auto v = optional_int(j, "max_stage", where)) {
    if (*v < 0) throw ConfigError(where + ".max_stage: must be >= 0");
    ac.max_backoff_stage = *v;
  } else {
    if (cw_max < ac.cw_min) throw ConfigError(where + ".cw_max: must be >= cw_min");
    ac.max_backoff_stage = max_stage_for(ac.cw_min, cw_max);
  }
  return ac;
}

inline TimingParams parse_timing(const json& j) {
  if (!j.is_object()) throw ConfigError("timing: expected an object");
  TimingParams t;
  if (auto v = optional_int(j, "payload_slots", "timing")) t.payload_slots = *v;
  if (auto v = optional_int(j, "sifs_slots", "timing")) t.sifs_slots = *v;
  if (auto v = optional_int(j, "ack_slots", "timing")) t.ack_slots = *v;
  if (auto v = optional_int(j, "prop_delay_slots", "timing")) t.prop_delay_slots = *v;
  return t;
}

inline MisbehaviorSpec parse_misbehavior(const json& j) {
  if (!j.is_object()) throw ConfigError("misbehavior: expected an object");
  MisbehaviorSpec m;
  m.target_class_index = require_int(j, "class", "misbehavior");
  m.override_cw_min = optional_int(j, "cw_min", "misbehavior");
  m.override_aifsn = optional_int(j, "aifsn", "misbehavior");
  m.override_max_stage = optional_int(j, "max_stage", "misbehavior");
  return m;
}

}  // namespace detail

inline ScenarioFile parse_scenario(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  if (!j.contains("classes") || !j["classes"].is_array()) throw ConfigError("classes: missing or not an array");
  ScenarioFile out;
  const auto& classes = j["classes"];
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out.network.classes.push_back(detail::parse_class(classes[i], "classes[" + std::to_string(i) + "]"));
  }
  if (j.contains("timing")) out.network.timing = detail::parse_timing(j["timing"]);
  validate(out.network);
  if (j.contains("misbehavior") && !j["misbehavior"].is_null()) {
    out.misbehavior = detail::parse_misbehavior(j["misbehavior"]);
    (void)apply_misbehavior(out.network, *out.misbehavior);  // validates against the network
  }
  return out;
}

inline ScenarioFile parse_scenario_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_scenario(j);
}

inline ScenarioFile load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

inline nlohmann::json to_json(const NetworkConfig& cfg) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : cfg.classes) {
    classes.push_back({{"label", c.label},
                       {"cw_min", c.cw_min},
                       {"max_stage", c.max_backoff_stage},
                       {"aifsn", c.aifsn},
                       {"nodes", c.node_count}});
  }
  return {{"classes", classes},
          {"timing",
           {{"payload_slots", cfg.timing.payload_slots},
            {"sifs_slots", cfg.timing.sifs_slots},
            {"ack_slots", cfg.timing.ack_slots},
            {"prop_delay_slots", cfg.timing.prop_delay_slots}}}};
}

inline nlohmann::json to_json(const ScenarioFile& s) {
  auto j = to_json(s.network);
  if (s.misbehavior) {
    nlohmann::json m = {{"class", s.misbehavior->target_class_index}};
    if (s.misbehavior->override_cw_min) m["cw_min"] = *s.misbehavior->override_cw_min;
    if (s.misbehavior->override_aifsn) m["aifsn"] = *s.misbehavior->override_aifsn;
    if (s.misbehavior->override_max_stage) m["max_stage"] = *s.misbehavior->override_max_stage;
    j["misbehavior"] = m;
  }
  return j;
}

// FNV-1a over the canonical JSON form, as 16 hex digits.
inline std::string config_hash(const ScenarioFile& s) {
  const std::string text = to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

// ---- traces ----------------------------------------------------------------

struct TraceHeader {
  std::string config_hash;
  std::uint64_t seed = 0;
  int node_count = 0;
  std::int64_t duration_slots = 0;

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct TraceFile {
  TraceHeader header;
  std::vector<TransmissionEvent> events;
};

inline void write_trace(std::ostream& out, const TraceHeader& header, std::span<const TransmissionEvent> events) {
  const nlohmann::json h = {{"type", "header"},
                            {"format", "hsd-trace"},
                            {"version", 1},
                            {"config_hash", header.config_hash},
                            {"seed", header.seed},
                            {"nodes", header.node_count},
                            {"duration_slots", header.duration_slots}};
  out << h.dump() << '\n';
  char line[128];
  for (const auto& e : events) {
    std::snprintf(line, sizeof line, "{\"step\":%" PRId64 ",\"slot\":%" PRId64 ",\"node\":%d,\"class\":%d}\n",
                  e.step, e.slot, e.node, e.class_index);
    out << line;
  }
}

inline TraceFile read_trace(std::istream& in) {
  TraceFile tf;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ConfigError("trace line " + std::to_string(lineno) + ": malformed JSON");
    }
    const std::string where = "trace line " + std::to_string(lineno);
    if (!have_header) {
      if (!j.is_object() || j.value("type", "") != "header") throw ConfigError(where + ": expected header");
      tf.header.config_hash = j.value("config_hash", "");
      tf.header.seed = j.value("seed", std::uint64_t{0});
      tf.header.node_count = detail::require_int(j, "nodes", where);
      tf.header.duration_slots = j.value("duration_slots", std::int64_t{0});
      have_header = true;
      continue;
    }
    TransmissionEvent e;
    for (const char* key : {"step", "slot", "node", "class"}) {
      if (!j.contains(key) || !j[key].is_number_integer()) throw ConfigError(where + "." + key + ": expected integer");
    }
    e.step = j["step"].get<std::int64_t>();
    e.slot = j["slot"].get<std::int64_t>();
    e.node = j["node"].get<int>();
    e.class_index = j["class"].get<int>();
    if (e.step != static_cast<std::int64_t>(tf.events.size())) {
      throw ConfigError(where + ".step: steps must be contiguous from 0");
    }
    if (!tf.events.empty() && e.slot < tf.events.back().slot) {
      throw ConfigError(where + ".slot: slot times must be non-decreasing");
    }
    if (e.node < 0 || e.node >= tf.header.node_count) throw ConfigError(where + ".node: out of range");
    tf.events.push_back(e);
  }
  if (!have_header) throw ConfigError("trace: empty file");
  return tf;
}

// ---- reports ---------------------------------------------------------------

inline nlohmann::json to_json(const AlarmReport& r) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : r.targets) {
    nlohmann::json alarms = nlohmann::json::array();
    for (const auto& a : t.alarms) alarms.push_back({{"step", a.step}, {"slot", a.slot}});
    nlohmann::json jt = {{"node", t.node},
                         {"reference_share", t.reference_share},
                         {"alarm_count", t.alarms.size()},
                         {"alarm_rate", r.events > 0 ? static_cast<double>(t.alarms.size()) / r.events : 0.0},
                         {"first_alarm_delay_slots", nullptr},
                         {"first_alarm_delay_steps", nullptr},
                         {"alarms", alarms}};
    if (t.first_alarm_delay_slots) jt["first_alarm_delay_slots"] = *t.first_alarm_delay_slots;
    if (t.first_alarm_delay_steps) jt["first_alarm_delay_steps"] = *t.first_alarm_delay_steps;
    targets.push_back(jt);
  }
  return {{"threshold", r.threshold}, {"events", r.events}, {"targets", targets}};
}

inline AlarmReport alarm_report_from_json(const nlohmann::json& j) {
  AlarmReport r;
  r.threshold = j.at("threshold").get<double>();
  r.events = j.at("events").get<std::int64_t>();
  for (const auto& jt : j.at("targets")) {
    TargetReport t;
    t.node = jt.at("node").get<int>();
    t.reference_share = jt.at("reference_share").get<double>();
    for (const auto& a : jt.at("alarms")) t.alarms.push_back({a.at("step").get<std::int64_t>(), a.at("slot").get<std::int64_t>()});
    if (!jt.at("first_alarm_delay_slots").is_null()) t.first_alarm_delay_slots = jt["first_alarm_delay_slots"].get<std::int64_t>();
    if (!jt.at("first_alarm_delay_steps").is_null()) t.first_alarm_delay_steps = jt["first_alarm_delay_steps"].get<std::int64_t>();
    r.targets.push_back(std::move(t));
  }
  return r;
}

// ---- CSV -------------------------------------------------------------------

// Shortest round-trip decimal form; identical inputs give identical text.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_csv_preamble(std::ostream& out, const std::string& command, const std::string& hash,
                               std::span<const std::uint64_t> seeds) {
  out << "# hsdetect " << kToolVersion << " " << command << " config_hash=" << hash << " seeds=";
  if (seeds.empty()) out << "none";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? ";" : "") << seeds[i];
  out << '\n';
}

}  // namespace hsd

// hsdetect: model solver, simulator, detectors and figure sweeps for
// misbehavior detection in EDCA WLANs.
//
// Exit codes: 0 success, 1 solver did not converge, 2 usage or input error.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hsd/detector.hpp"
#include "hsd/edca_sim.hpp"
#include "hsd/error.hpp"
#include "hsd/experiments.hpp"
#include "hsd/io.hpp"
#include "hsd/mac_model.hpp"
#include "hsd/markov.hpp"

namespace {

using namespace hsd;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Accepts decimals and fractions such as "1/60".
double parse_real(const std::string& s) {
  const auto slash = s.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(s, &used);
      if (used != s.size()) throw UsageError("bad number '" + s + "'");
      return v;
    }
    const double num = std::stod(s.substr(0, slash));
    const double den = std::stod(s.substr(slash + 1));
    return num / den;
  } catch (const std::logic_error&) {
    throw UsageError("bad number '" + s + "'");
  }
}

// "a:b[:step]" or "x,y,z".
std::vector<double> parse_reals(const std::string& spec) {
  std::vector<double> out;
  for (const auto& part : split(spec, ',')) {
    const auto fields = split(part, ':');
    if (fields.size() == 1) {
      out.push_back(parse_real(fields[0]));
    } else if (fields.size() == 2 || fields.size() == 3) {
      const double lo = parse_real(fields[0]);
      const double hi = parse_real(fields[1]);
      const double step = fields.size() == 3 ? parse_real(fields[2]) : 1.0;
      if (!(step > 0.0) || hi < lo) throw UsageError("bad range '" + part + "'");
      const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
      for (long k = 0; k <= n; ++k) {
        // Trim the accumulated step error so 1:4:0.1 yields 1.7, not 1.7000000000000002.
        out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
      }
    } else {
      throw UsageError("bad range '" + part + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list '" + spec + "'");
  return out;
}

std::vector<int> parse_ints(const std::string& spec) {
  std::vector<int> out;
  for (double v : parse_reals(spec)) {
    if (v != std::floor(v)) throw UsageError("expected integers in '" + spec + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

ScenarioFile scenario_or(const std::string& path, const NetworkConfig& fallback) {
  if (!path.empty()) return load_scenario(path);
  return ScenarioFile{fallback, std::nullopt};
}

// Output stream that is either a file or stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw UsageError("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

void check_class(const NetworkConfig& cfg, int target_class) {
  if (target_class < 0 || target_class >= static_cast<int>(cfg.classes.size())) {
    throw UsageError("target class " + std::to_string(target_class) + " out of range");
  }
}

// ---- solve -----------------------------------------------------------------

struct SolveArgs {
  std::string config;
  double tol = 1e-10;
  int max_iter = 100000;
  bool normal = false;
};

int cmd_solve(const SolveArgs& a) {
  const auto sc = load_scenario(a.config);
  NetworkConfig cfg = sc.network;
  if (sc.misbehavior && !a.normal) cfg = apply_misbehavior(cfg, *sc.misbehavior);
  SolverOptions opt;
  opt.tol = a.tol;
  opt.max_iter = a.max_iter;
  const auto sol = solve_fixed_point(cfg, opt);
  const auto d = slot_durations(cfg);

  std::printf("%-5s %-14s %5s %6s %5s %5s %14s %14s %14s %14s\n", "class", "label", "nodes", "cw_min", "stage",
              "aifsn", "tau", "p", "p_s", "share");
  double total = 0.0;
  for (std::size_t i = 0; i < cfg.classes.size(); ++i) {
    const auto& c = cfg.classes[i];
    std::printf("%-5zu %-14s %5d %6d %5d %5d %14.10f %14.10f %14.10f %14.10f\n", i, c.label.c_str(), c.node_count,
                c.cw_min, c.max_backoff_stage, c.aifsn, sol.tau[i], sol.block_p[i], sol.success_p[i], sol.share[i]);
    total += c.node_count * sol.share[i];
  }
  std::printf("busy_p      %.12f\n", sol.busy_p);
  std::printf("T_s, T_c    %d, %d slots\n", d.success, d.collision);
  std::printf("eta         %.12f packets/slot\n", sol.eta);
  std::printf("T           %.12f slots/packet\n", sol.mean_interarrival_T);
  std::printf("residual    %.3e after %d iterations\n", sol.residual, sol.iterations);
  std::printf("sum n_i s_i %.12f\n", total);
  return 0;
}

// ---- fig1 ------------------------------------------------------------------

struct Fig1Args {
  std::string config;
  int target_class = 0;
  std::string cw_min = "1:32";
  std::string aifsn = "0,1,2";
  std::int64_t sim_slots = 2'000'000;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_fig1(const Fig1Args& a) {
  const auto sc = scenario_or(a.config, homogeneous_network());
  check_class(sc.network, a.target_class);
  const auto cws = parse_ints(a.cw_min);
  const auto aifsns = parse_ints(a.aifsn);
  Output out(a.out);
  auto& os = out.stream();
  const std::vector<std::uint64_t> seeds = a.sim_slots > 0 ? std::vector<std::uint64_t>{a.seed} : std::vector<std::uint64_t>{};
  write_csv_preamble(os, "fig1", config_hash(sc), seeds);
  os << "cwmin,aifsn,model_misbehaving_share,model_normal_share,sim_misbehaving_share,sim_normal_share\n";
  for (int aifsn : aifsns) {
    for (int cw : cws) {
      const auto r = share_point(sc.network, a.target_class, cw, aifsn, a.sim_slots, a.seed);
      os << cw << ',' << aifsn << ',' << fmt_double(r.model_misbehaving) << ',' << fmt_double(r.model_normal) << ','
         << (r.sim_misbehaving ? fmt_double(*r.sim_misbehaving) : "") << ','
         << (r.sim_normal ? fmt_double(*r.sim_normal) : "") << '\n';
    }
  }
  return 0;
}

// ---- fig2 ------------------------------------------------------------------

struct Fig2Args {
  std::string config;
  int target_class = kReferenceTargetClass;
  std::string sigma = "1/10,1/60,1/100";
  std::string h = "1:4:0.1";
  std::string out;
};

int cmd_fig2(const Fig2Args& a) {
  const auto sc = scenario_or(a.config, reference_network());
  check_class(sc.network, a.target_class);
  const auto sol = solve_fixed_point(sc.network);
  const double share = sol.share[static_cast<std::size_t>(a.target_class)];
  const auto sigmas = parse_reals(a.sigma);
  const auto hs = parse_reals(a.h);
  Output out(a.out);
  auto& os = out.stream();
  write_csv_preamble(os, "fig2", config_hash(sc), {});
  os << "# share=" << fmt_double(share) << '\n';
  os << "sigma,epsilon,h,m_bar,p_f\n";
  for (double sigma : sigmas) {
    try {
      (void)quantize(share, sigma, hs.front());
    } catch (const DomainError& e) {
      os << "# skipped sigma=" << fmt_double(sigma) << ": " << e.what() << '\n';
      std::cerr << "warning: sigma " << sigma << " skipped: " << e.what() << '\n';
      continue;
    }
    for (double h : hs) {
      const auto r = false_positive_point(share, sigma, h);
      os << fmt_double(r.sigma) << ',' << fmt_double(r.epsilon) << ',' << fmt_double(h) << ',' << r.m_bar << ','
         << fmt_double(r.p_f) << '\n';
    }
  }
  return 0;
}

// ---- fig3 ------------------------------------------------------------------

struct Fig3Args {
  std::string mode = "intensity";
  std::string config;
  int target_class = kReferenceTargetClass;
  std::string sigma = "1/100";
  std::string cw_min = "1:16";
  std::string aifsn = "0:3";
  std::string D;
  std::string h;
  int mis_cw_min = 4;
  int mis_aifsn = 0;
  std::string out;
};

int cmd_fig3(const Fig3Args& a) {
  const auto sc = scenario_or(a.config, reference_network());
  check_class(sc.network, a.target_class);
  const double sigma = parse_real(a.sigma);
  Output out(a.out);
  auto& os = out.stream();
  write_csv_preamble(os, "fig3-" + a.mode, config_hash(sc), {});
  auto spec_for = [&](int cw, int aifsn) {
    MisbehaviorSpec m;
    m.target_class_index = a.target_class;
    m.override_cw_min = cw;
    m.override_aifsn = aifsn;
    return m;
  };
  if (a.mode == "intensity") {
    const double D = parse_real(a.D.empty() ? "100" : a.D);
    const double h = parse_real(a.h.empty() ? "2.5" : a.h);
    os << "# D=" << fmt_double(D) << " h=" << fmt_double(h) << " sigma=" << fmt_double(sigma) << '\n';
    os << "cwmin,aifsn,s_star,T_star,steps,p_d\n";
    for (int aifsn : parse_ints(a.aifsn)) {
      for (int cw : parse_ints(a.cw_min)) {
        const auto r = detection_point(sc.network, spec_for(cw, aifsn), sigma, h, D);
        os << cw << ',' << aifsn << ',' << fmt_double(r.share_misbehaving) << ',' << fmt_double(r.T_star) << ','
           << r.rate.steps << ',' << fmt_double(r.rate.p_d) << '\n';
      }
    }
  } else if (a.mode == "window") {
    const auto Ds = parse_reals(a.D.empty() ? "0:200:5" : a.D);
    const auto hs = parse_reals(a.h.empty() ? "1.5,2,2.5,3,3.5" : a.h);
    os << "# cwmin=" << a.mis_cw_min << " aifsn=" << a.mis_aifsn << " sigma=" << fmt_double(sigma) << '\n';
    os << "D,h,steps,p_d\n";
    for (double h : hs) {
      for (double D : Ds) {
        const auto r = detection_point(sc.network, spec_for(a.mis_cw_min, a.mis_aifsn), sigma, h, D);
        os << fmt_double(D) << ',' << fmt_double(h) << ',' << r.rate.steps << ',' << fmt_double(r.rate.p_d) << '\n';
      }
    }
  } else {
    throw UsageError("fig3: --mode must be 'intensity' or 'window'");
  }
  return 0;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::int64_t slots = 1'000'000;
  std::uint64_t seed = 1;
  std::string out;
  std::string stats;
};

nlohmann::json stats_json(const SimStats& s) {
  return {{"successes", s.successes},
          {"share", s.share},
          {"attempts", s.attempts},
          {"drops", s.drops},
          {"total_successes", s.total_successes},
          {"collisions", s.collisions},
          {"idle_slots", s.idle_slots},
          {"generic_slots", s.generic_slots},
          {"elapsed_slots", s.elapsed_slots},
          {"busy_p", s.busy_p},
          {"mean_gap_slots", s.mean_gap_slots},
          {"T_s", s.durations.success},
          {"T_c", s.durations.collision}};
}

int cmd_simulate(const SimulateArgs& a) {
  const auto sc = load_scenario(a.config);
  const auto cfg = make_sim_config(sc.network, sc.misbehavior, a.slots, a.seed);
  const auto res = run(cfg);
  Output out(a.out);
  write_trace(out.stream(), {config_hash(sc), a.seed, static_cast<int>(cfg.nodes.size()), a.slots}, res.trace);
  const auto js = stats_json(res.stats).dump(2);
  if (!a.stats.empty()) {
    Output st(a.stats);
    st.stream() << js << '\n';
  } else {
    std::cerr << js << '\n';
  }
  return 0;
}

// ---- detect ----------------------------------------------------------------

struct DetectArgs {
  std::string trace;
  std::string config;
  std::string targets;
  double h = 2.5;
  std::string out;
};

std::vector<DetectorTarget> resolve_targets(const NetworkConfig& normal, const std::vector<int>& ids) {
  const auto sol = solve_fixed_point(normal);
  const auto classes = node_classes(normal);
  std::vector<DetectorTarget> out;
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(classes.size())) {
      throw UsageError("unknown target node " + std::to_string(id));
    }
    out.push_back({id, sol.share[static_cast<std::size_t>(classes[static_cast<std::size_t>(id)])]});
  }
  return out;
}

int cmd_detect(const DetectArgs& a) {
  const auto sc = load_scenario(a.config);
  std::ifstream in(a.trace);
  if (!in) throw UsageError("cannot open trace '" + a.trace + "'");
  const auto tf = read_trace(in);
  std::vector<int> ids;
  if (a.targets.empty()) {
    if (!sc.misbehavior) throw UsageError("detect: --targets is required when the config has no misbehavior");
    ids.push_back(misbehaving_node_id(sc.network, *sc.misbehavior));
  } else {
    ids = parse_ints(a.targets);
  }
  if (!(a.h > 0.0)) throw UsageError("detect: --h must be > 0");
  const auto targets = resolve_targets(sc.network, ids);
  AlarmReport report;
  try {
    report = run_detector(tf.events, targets, a.h, tf.header.node_count);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  Output out(a.out);
  out.stream() << to_json(report).dump(2) << '\n';
  return 0;
}

// ---- replicate -------------------------------------------------------------

struct ReplicateArgs {
  std::string config;
  int runs = 100;
  std::uint64_t seed = 1;
  std::int64_t slots = 10'000;
  double h = 2.5;
  double D = 100.0;
  std::string targets;
  std::string out;
};

int cmd_replicate(const ReplicateArgs& a) {
  const auto sc = load_scenario(a.config);
  if (a.runs < 1) throw UsageError("replicate: --runs must be >= 1");
  std::vector<int> ids;
  if (a.targets.empty()) {
    if (!sc.misbehavior) throw UsageError("replicate: --targets is required when the config has no misbehavior");
    ids.push_back(misbehaving_node_id(sc.network, *sc.misbehavior));
  } else {
    ids = parse_ints(a.targets);
  }
  const auto targets = resolve_targets(sc.network, ids);
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < a.runs; ++k) seeds.push_back(a.seed + static_cast<std::uint64_t>(k));
  const auto cfg = make_sim_config(sc.network, sc.misbehavior, a.slots, a.seed);

  Output out(a.out);
  auto& os = out.stream();
  write_csv_preamble(os, "replicate", config_hash(sc), seeds);
  os << "seed,events,busy_p,mean_gap_slots,node,alarms,alarm_rate,first_alarm_slot\n";
  std::map<int, int> within;
  for (auto seed : seeds) {
    SimConfig c = cfg;
    c.rng_seed = seed;
    const auto res = run(c);
    const auto report = run_detector(res.trace, targets, a.h, static_cast<int>(c.nodes.size()));
    for (const auto& t : report.targets) {
      const double rate = report.events > 0 ? static_cast<double>(t.alarms.size()) / report.events : 0.0;
      os << seed << ',' << report.events << ',' << fmt_double(res.stats.busy_p) << ','
         << fmt_double(res.stats.mean_gap_slots) << ',' << t.node << ',' << t.alarms.size() << ','
         << fmt_double(rate) << ',' << (t.first_alarm_delay_slots ? std::to_string(*t.first_alarm_delay_slots) : "")
         << '\n';
      if (t.first_alarm_delay_slots && static_cast<double>(*t.first_alarm_delay_slots) <= a.D) ++within[t.node];
    }
  }
  for (const auto& t : targets) {
    std::cerr << "node " << t.node << ": first alarm within " << a.D << " slots in " << within[t.node] << "/"
              << a.runs << " runs\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Misbehavior detection for IEEE 802.11e EDCA WLANs"};
  app.set_version_flag("--version", std::string("hsdetect ") + kToolVersion);
  app.require_subcommand(1);
  // "-h" is left free because --h is the detection threshold.
  app.set_help_flag("--help", "Print this help message and exit");

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Solve the saturation model and print per-class results");
  s->add_option("config", solve.config, "Network config (JSON)")->required();
  s->add_option("--tol", solve.tol, "Fixed-point tolerance");
  s->add_option("--max-iter", solve.max_iter, "Iteration limit");
  s->add_flag("--normal", solve.normal, "Ignore the misbehavior section");

  Fig1Args fig1;
  auto* f1 = app.add_subcommand("fig1", "Share of one misbehaving node vs CWmin and AIFSN (CSV)");
  f1->add_option("--config", fig1.config, "Normal network (default: 11 identical nodes)");
  f1->add_option("--target-class", fig1.target_class);
  f1->add_option("--cw-min", fig1.cw_min, "CWmin values, e.g. 1:32");
  f1->add_option("--aifsn", fig1.aifsn, "AIFSN values, e.g. 0,1,2");
  f1->add_option("--sim-slots", fig1.sim_slots, "Simulated slots per point (0 = model only)");
  f1->add_option("--seed", fig1.seed);
  f1->add_option("-o,--out", fig1.out);

  Fig2Args fig2;
  auto* f2 = app.add_subcommand("fig2", "False-positive rate vs threshold for several sigma (CSV)");
  f2->add_option("--config", fig2.config, "Normal network (default: three-class reference)");
  f2->add_option("--target-class", fig2.target_class);
  f2->add_option("--sigma", fig2.sigma, "Lattice steps, e.g. 1/10,1/60,1/100");
  f2->add_option("--h", fig2.h, "Thresholds, e.g. 1:4:0.1");
  f2->add_option("-o,--out", fig2.out);

  Fig3Args fig3;
  auto* f3 = app.add_subcommand("fig3", "Average detection rate (CSV)");
  f3->add_option("--mode", fig3.mode, "intensity | window")->check(CLI::IsMember({"intensity", "window"}));
  f3->add_option("--config", fig3.config, "Normal network (default: three-class reference)");
  f3->add_option("--target-class", fig3.target_class);
  f3->add_option("--sigma", fig3.sigma);
  f3->add_option("--cw-min", fig3.cw_min, "intensity: misbehaving CWmin values");
  f3->add_option("--aifsn", fig3.aifsn, "intensity: misbehaving AIFSN values");
  f3->add_option("--D", fig3.D, "Detection window(s) in slots");
  f3->add_option("--h", fig3.h, "Threshold(s)");
  f3->add_option("--mis-cw-min", fig3.mis_cw_min, "window: misbehaving CWmin");
  f3->add_option("--mis-aifsn", fig3.mis_aifsn, "window: misbehaving AIFSN");
  f3->add_option("-o,--out", fig3.out);

  SimulateArgs sim;
  auto* sm = app.add_subcommand("simulate", "Run the slot-level simulator and write a JSONL trace");
  sm->add_option("config", sim.config, "Network config (JSON, misbehavior honored)")->required();
  sm->add_option("--slots", sim.slots);
  sm->add_option("--seed", sim.seed);
  sm->add_option("-o,--out", sim.out, "Trace path (default stdout)");
  sm->add_option("--stats", sim.stats, "Write simulator statistics JSON here (default stderr)");

  DetectArgs det;
  auto* dt = app.add_subcommand("detect", "Replay a trace through HS detectors and emit an alarm report");
  dt->add_option("--trace", det.trace)->required();
  dt->add_option("--config", det.config, "Network config; shares come from its normal part")->required();
  dt->add_option("--targets", det.targets, "Node ids, e.g. 11 or 0,5 (default: misbehaving node)");
  dt->add_option("--h", det.h);
  dt->add_option("-o,--out", det.out);

  ReplicateArgs rep;
  auto* rp = app.add_subcommand("replicate", "Independent simulator runs with detection statistics (CSV)");
  rp->add_option("config", rep.config)->required();
  rp->add_option("--runs", rep.runs);
  rp->add_option("--seed", rep.seed, "First seed; runs use seed, seed+1, ...");
  rp->add_option("--slots", rep.slots);
  rp->add_option("--h", rep.h);
  rp->add_option("--D", rep.D, "Window for the first-alarm summary");
  rp->add_option("--targets", rep.targets);
  rp->add_option("-o,--out", rep.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*s) return cmd_solve(solve);
    if (*f1) return cmd_fig1(fig1);
    if (*f2) return cmd_fig2(fig2);
    if (*f3) return cmd_fig3(fig3);
    if (*sm) return cmd_simulate(sim);
    if (*dt) return cmd_detect(det);
    if (*rp) return cmd_replicate(rep);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

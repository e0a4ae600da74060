// cyclequil: command-line harness around the resort equilibrium toolkit.
//
//   cyclequil cycles       --network PATH [--limit N]
//   cyclequil steady-state --network PATH --distribution V [--tol F]
//   cyclequil equilibrium  --network PATH [--gamma F] [--n-starts N] ...
//   cyclequil simulate     --network PATH --distribution V --agents N ...
//   cyclequil replay       --manifest PATH
//
// Every command writes its artifacts plus a manifest.json into --output
// (default "."); re-running with the recorded parameters reproduces the
// artifacts bit-for-bit, only the manifest's duration field differs.
// Exit codes: 0 success, 2 input/validation error, 3 non-convergence.

#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cyclequil/cyclequil.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cyclequil;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNoConvergence = 3;

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };
LogLevel g_log_level = LogLevel::Warn;

void init_logging() {
  const char* env = std::getenv("CYCLEQUIL_LOG");
  if (!env) return;
  const std::string v(env);
  if (v == "error") g_log_level = LogLevel::Error;
  else if (v == "warn") g_log_level = LogLevel::Warn;
  else if (v == "info") g_log_level = LogLevel::Info;
  else if (v == "debug") g_log_level = LogLevel::Debug;
  else std::cerr << "cyclequil: unknown CYCLEQUIL_LOG level '" << v << "'\n";
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_log_level)
    std::cerr << "cyclequil " << names[static_cast<int>(level)] << ": " << msg << "\n";
}

// Shortest round-trip decimal form, locale-independent.
std::string fmt(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  fs::rename(tmp, path);
}

Vec parse_distribution(const std::string& spec, std::size_t expected) {
  std::string text = spec;
  if (!spec.empty() && spec[0] == '@') {
    std::ifstream in(spec.substr(1));
    if (!in) throw ValidationError("cannot open distribution file '" + spec.substr(1) + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  for (char& c : text)
    if (c == ',' || c == '\n' || c == '\t') c = ' ';
  Vec out;
  std::istringstream in(text);
  double x;
  while (in >> x) out.push_back(x);
  if (out.size() != expected)
    throw ValidationError("distribution has " + std::to_string(out.size()) +
                          " components, network has " + std::to_string(expected) + " cycles");
  double sum = 0.0;
  for (double v : out) {
    if (v < 0.0) throw ValidationError("distribution components must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("distribution must sum to 1 (got " + fmt(sum) + ")");
  return out;
}

json kkt_to_json(const KktReport& r) {
  return json{{"cycle_time", r.cycle_time},
              {"flow_balance", r.flow_balance},
              {"complementarity", r.complementarity},
              {"capacity", r.capacity},
              {"nonnegativity", r.nonnegativity},
              {"max", r.max_residual()}};
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void write_manifest(const fs::path& dir, RunManifest m, double seconds) {
  m.duration_seconds = seconds;
  atomic_write(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------- cycles ---

struct CyclesOptions {
  std::string network;
  std::size_t limit = 10000;
  std::string output = ".";
};

int run_cycles(const CyclesOptions& o) {
  Timer timer;
  const ResortNetwork net = load_network(o.network);
  const CycleSet cs = enumerate_cycles(net, o.limit);
  log(LogLevel::Info, "enumerated " + std::to_string(cs.cycles.size()) + " cycles");

  std::ostringstream out;
  for (std::size_t c = 0; c < cs.cycles.size(); ++c) {
    out << c << "\tv=" << fmt(cs.cycles[c].value) << "\tt_hat=" << fmt(cs.cycles[c].free_time)
        << "\t";
    const auto ids = cs.cycles[c].edge_ids(net);
    for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? ">" : "") << ids[i];
    out << "\n";
  }
  std::cout << out.str();

  atomic_write(fs::path(o.output) / "cycles.txt", out.str());
  RunManifest m;
  m.command = "cycles";
  m.network = o.network;
  m.parameters = {{"limit", o.limit}, {"output", o.output}};
  write_manifest(o.output, m, timer.seconds());
  return kExitOk;
}

// ---------------------------------------------------------- steady-state ---

struct SteadyStateOptions {
  std::string network;
  std::string distribution;
  double tol = 1e-8;
  std::size_t max_iter = 500;
  std::size_t limit = 10000;
  std::string output = ".";
};

int run_steady_state(const SteadyStateOptions& o) {
  Timer timer;
  const ResortNetwork net = load_network(o.network);
  const CycleSet cs = enumerate_cycles(net, o.limit);
  const Vec n = parse_distribution(o.distribution, cs.cycles.size());
  const auto model = EquilibriumProblem::from_network(net, cs);

  QueueSolveOptions opt;
  opt.tol = o.tol;
  opt.max_iter = o.max_iter;
  const QueueSolution s = solve_queue(model.queue_problem(n), opt);
  const Vec tau = utilities_from_waits(model, s.t_wait);

  json doc{{"converged", s.converged},
           {"iterations", s.iterations},
           {"f_cycle", s.f_cycle},
           {"f_lift", s.f_lift},
           {"t_wait", s.t_wait},
           {"utility", tau},
           {"residuals", kkt_to_json(s.kkt)}};
  const std::string text = doc.dump(2) + "\n";
  std::cout << text;

  atomic_write(fs::path(o.output) / "steady_state.json", text);
  RunManifest m;
  m.command = "steady-state";
  m.network = o.network;
  m.parameters = {{"distribution", n},
                  {"tol", o.tol},
                  {"max_iter", o.max_iter},
                  {"limit", o.limit},
                  {"output", o.output}};
  write_manifest(o.output, m, timer.seconds());
  if (!s.converged) {
    log(LogLevel::Error,
        "queue solver did not reach tolerance; max residual " + fmt(s.kkt.max_residual()));
    return kExitNoConvergence;
  }
  return kExitOk;
}

// ----------------------------------------------------------- equilibrium ---

struct EquilibriumCliOptions {
  std::string network;
  double gamma = 0.1;
  std::size_t max_iter = 5000;
  double gap_tol = 1e-6;
  std::size_t n_starts = 1;
  std::uint64_t seed = 0;
  double value_scale = 1.0;
  std::size_t jobs = 1;
  bool adaptive = false;
  std::size_t limit = 10000;
  std::string output = ".";
};

int run_equilibrium(const EquilibriumCliOptions& o) {
  Timer timer;
  const ResortNetwork net = load_network(o.network);
  const CycleSet cs = enumerate_cycles(net, o.limit);
  const auto model = EquilibriumProblem::from_network(net, cs, o.value_scale);
  const std::size_t k = cs.cycles.size();

  EquilibriumOptions opt;
  opt.gamma = o.gamma;
  opt.max_iter = o.max_iter;
  opt.gap_tol = o.gap_tol;
  opt.adaptive_patience = o.adaptive ? 20 : 0;

  std::vector<EquilibriumRun> runs(o.n_starts);
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::max<std::size_t>(1, std::min(o.jobs, o.n_starts));
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= o.n_starts) return;
      std::mt19937_64 rng(o.seed + i);
      runs[i] = solve_equilibrium(model, Distribution::random(k, rng), opt);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  // CSV history: one row per recorded iterate of every run.
  std::ostringstream csv;
  csv << "run_id,iteration,gap";
  for (std::size_t c = 1; c <= k; ++c) csv << ",n_" << c;
  csv << "\n";
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (std::size_t it = 0; it < runs[i].gaps.size(); ++it) {
      csv << i << "," << it << "," << fmt(runs[i].gaps[it]);
      for (double x : runs[i].iterates[it]) csv << "," << fmt(x);
      csv << "\n";
    }
  atomic_write(fs::path(o.output) / "equilibrium_runs.csv", csv.str());

  double spread = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (std::size_t j = i + 1; j < runs.size(); ++j)
      for (std::size_t c = 0; c < k; ++c)
        spread = std::max(spread,
                          std::abs(runs[i].final_distribution[c] - runs[j].final_distribution[c]));

  bool all_converged = true;
  json run_list = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    all_converged = all_converged && runs[i].converged;
    run_list.push_back(json{{"run_id", i},
                            {"converged", runs[i].converged},
                            {"iterations", runs[i].iterations},
                            {"final_gap", runs[i].final_gap},
                            {"gamma", runs[i].gamma},
                            {"final", runs[i].final_distribution}});
  }
  json doc{{"runs", run_list},
           {"max_pairwise_linf", spread},
           {"all_converged", all_converged},
           {"value_scale", o.value_scale},
           {"gap_tol", o.gap_tol}};
  atomic_write(fs::path(o.output) / "equilibrium_final.json", doc.dump(2) + "\n");

  for (std::size_t i = 0; i < runs.size(); ++i)
    std::cout << "run " << i << ": " << (runs[i].converged ? "converged" : "NOT converged")
              << " after " << runs[i].iterations << " iterations, gap " << fmt(runs[i].final_gap)
              << "\n";
  std::cout << "max pairwise l_inf spread: " << fmt(spread) << "\n";

  RunManifest m;
  m.command = "equilibrium";
  m.network = o.network;
  m.seed = o.seed;
  m.parameters = {{"gamma", o.gamma},       {"max_iter", o.max_iter},
                  {"gap_tol", o.gap_tol},   {"n_starts", o.n_starts},
                  {"value_scale", o.value_scale}, {"jobs", o.jobs},
                  {"adaptive", o.adaptive}, {"limit", o.limit},
                  {"output", o.output}};
  write_manifest(o.output, m, timer.seconds());
  return all_converged ? kExitOk : kExitNoConvergence;
}

// -------------------------------------------------------------- simulate ---

struct SimulateOptions {
  std::string network;
  std::string distribution;
  std::size_t agents = 1000;
  double horizon = 50.0;
  double warmup = -1.0;
  std::uint64_t seed = 0;
  std::size_t limit = 10000;
  std::string output = ".";
};

int run_simulate(const SimulateOptions& o) {
  Timer timer;
  const ResortNetwork net = load_network(o.network);
  const CycleSet cs = enumerate_cycles(net, o.limit);
  const Vec n = parse_distribution(o.distribution, cs.cycles.size());

  SimConfig cfg;
  cfg.agents = o.agents;
  cfg.distribution = n;
  cfg.horizon = o.horizon;
  cfg.warmup = o.warmup;
  const SimStats st = simulate(net, cs, cfg, o.seed);

  const auto model = EquilibriumProblem::from_network(net, cs);
  const QueueSolution sol = solve_queue(model.queue_problem(n));

  Vec rel_err(net.lifts.size(), 0.0);
  std::ostringstream table;
  table << "lift\tsim_wait\tfluid_wait\trel_err\tsim_flow\tfluid_flow\n";
  for (std::size_t u = 0; u < net.lifts.size(); ++u) {
    const double denom = std::max(std::abs(sol.t_wait[u]), 1e-12);
    rel_err[u] = std::abs(st.mean_wait[u] - sol.t_wait[u]) / denom;
    table << net.lifts[u].id << "\t" << fmt(st.mean_wait[u]) << "\t" << fmt(sol.t_wait[u]) << "\t"
          << fmt(rel_err[u]) << "\t" << fmt(st.throughput[u]) << "\t" << fmt(sol.f_lift[u])
          << "\n";
  }
  std::cout << table.str();

  json doc{{"mean_wait", st.mean_wait},
           {"throughput", st.throughput},
           {"boardings", st.boardings},
           {"entries", st.entries},
           {"cycles_completed", st.cycles_completed},
           {"window", {st.window_start, st.window_end}},
           {"fluid_wait", sol.t_wait},
           {"fluid_flow", sol.f_lift},
           {"rel_err_wait", rel_err}};
  atomic_write(fs::path(o.output) / "simulate.json", doc.dump(2) + "\n");

  RunManifest m;
  m.command = "simulate";
  m.network = o.network;
  m.seed = o.seed;
  m.parameters = {{"distribution", n}, {"agents", o.agents}, {"horizon", o.horizon},
                  {"warmup", o.warmup}, {"limit", o.limit},  {"output", o.output}};
  write_manifest(o.output, m, timer.seconds());
  return kExitOk;
}

// ---------------------------------------------------------------- replay ---

int run_replay(const std::string& manifest_path) {
  const RunManifest m = RunManifest::load(manifest_path);
  const json& p = m.parameters;
  log(LogLevel::Info, "replaying " + m.command + " from " + manifest_path);
  if (m.command == "cycles") {
    CyclesOptions o;
    o.network = m.network;
    o.limit = p.at("limit").get<std::size_t>();
    o.output = p.at("output").get<std::string>();
    return run_cycles(o);
  }
  if (m.command == "steady-state") {
    SteadyStateOptions o;
    o.network = m.network;
    const Vec n = p.at("distribution").get<Vec>();
    std::string csv;
    for (std::size_t i = 0; i < n.size(); ++i) csv += (i ? "," : "") + fmt(n[i]);
    o.distribution = csv;
    o.tol = p.at("tol").get<double>();
    o.max_iter = p.at("max_iter").get<std::size_t>();
    o.limit = p.at("limit").get<std::size_t>();
    o.output = p.at("output").get<std::string>();
    return run_steady_state(o);
  }
  if (m.command == "equilibrium") {
    EquilibriumCliOptions o;
    o.network = m.network;
    o.seed = m.seed;
    o.gamma = p.at("gamma").get<double>();
    o.max_iter = p.at("max_iter").get<std::size_t>();
    o.gap_tol = p.at("gap_tol").get<double>();
    o.n_starts = p.at("n_starts").get<std::size_t>();
    o.value_scale = p.at("value_scale").get<double>();
    o.jobs = p.at("jobs").get<std::size_t>();
    o.adaptive = p.at("adaptive").get<bool>();
    o.limit = p.at("limit").get<std::size_t>();
    o.output = p.at("output").get<std::string>();
    return run_equilibrium(o);
  }
  if (m.command == "simulate") {
    SimulateOptions o;
    o.network = m.network;
    o.seed = m.seed;
    const Vec n = p.at("distribution").get<Vec>();
    std::string csv;
    for (std::size_t i = 0; i < n.size(); ++i) csv += (i ? "," : "") + fmt(n[i]);
    o.distribution = csv;
    o.agents = p.at("agents").get<std::size_t>();
    o.horizon = p.at("horizon").get<double>();
    o.warmup = p.at("warmup").get<double>();
    o.limit = p.at("limit").get<std::size_t>();
    o.output = p.at("output").get<std::string>();
    return run_simulate(o);
  }
  throw ParseError("manifest: unknown command '" + m.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Competitive equilibrium solver for closed capacitated lift/slope networks"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CyclesOptions cyc;
  auto* c1 = app.add_subcommand("cycles", "Enumerate the cycle strategy set");
  c1->add_option("--network", cyc.network, "network JSON file")->required();
  c1->add_option("--limit", cyc.limit, "max cycles before aborting");
  c1->add_option("--output", cyc.output, "output directory");

  SteadyStateOptions ss;
  auto* c2 = app.add_subcommand("steady-state", "Queue steady state for a fixed distribution");
  c2->add_option("--network", ss.network, "network JSON file")->required();
  c2->add_option("--distribution", ss.distribution, "per-cycle mass: v1,v2,... or @file")
      ->required();
  c2->add_option("--tol", ss.tol, "max KKT residual");
  c2->add_option("--max-iter", ss.max_iter, "solver iteration budget");
  c2->add_option("--limit", ss.limit, "max cycles before aborting");
  c2->add_option("--output", ss.output, "output directory");

  EquilibriumCliOptions eq;
  auto* c3 = app.add_subcommand("equilibrium", "Extragradient search for the equilibrium");
  c3->add_option("--network", eq.network, "network JSON file")->required();
  c3->add_option("--gamma", eq.gamma, "extragradient step size");
  c3->add_option("--max-iter", eq.max_iter, "iteration budget per start");
  c3->add_option("--gap-tol", eq.gap_tol, "stop when the VI gap falls below this");
  c3->add_option("--n-starts", eq.n_starts, "number of random starts");
  c3->add_option("--seed", eq.seed, "base seed for random starts");
  c3->add_option("--value-scale", eq.value_scale, "multiply all slope values");
  c3->add_option("--jobs", eq.jobs, "concurrent starts");
  c3->add_flag("--adaptive", eq.adaptive, "halve gamma after 20 consecutive gap increases");
  c3->add_option("--limit", eq.limit, "max cycles before aborting");
  c3->add_option("--output", eq.output, "output directory");

  SimulateOptions sim;
  auto* c4 = app.add_subcommand("simulate", "Agent-based validation of the queue model");
  c4->add_option("--network", sim.network, "network JSON file")->required();
  c4->add_option("--distribution", sim.distribution, "per-cycle mass: v1,v2,... or @file")
      ->required();
  c4->add_option("--agents", sim.agents, "number of discrete skiers");
  c4->add_option("--horizon", sim.horizon, "simulated time");
  c4->add_option("--warmup", sim.warmup, "time discarded before measuring (<0: auto)");
  c4->add_option("--seed", sim.seed, "placement jitter seed");
  c4->add_option("--limit", sim.limit, "max cycles before aborting");
  c4->add_option("--output", sim.output, "output directory");

  std::string manifest_path;
  auto* c5 = app.add_subcommand("replay", "Re-run a command from its manifest");
  c5->add_option("--manifest", manifest_path, "manifest.json from a previous run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (c1->parsed()) return run_cycles(cyc);
    if (c2->parsed()) return run_steady_state(ss);
    if (c3->parsed()) return run_equilibrium(eq);
    if (c4->parsed()) return run_simulate(sim);
    if (c5->parsed()) return run_replay(manifest_path);
  } catch (const ConvergenceError& e) {
    log(LogLevel::Error, e.what());
    return kExitNoConvergence;
  } catch (const CycleLimitError& e) {
    log(LogLevel::Error, e.what());
    return kExitInput;
  } catch (const ParseError& e) {
    log(LogLevel::Error, e.what());
    return kExitInput;
  } catch (const ValidationError& e) {
    log(LogLevel::Error, e.what());
    return kExitInput;
  }
  return kExitOk;
}

#pragma once

// Event-driven simulation of N discrete skiers riding fixed cycle
// assignments through deterministic point queues. Each lift is a FIFO
// server that boards one agent every 1/(b_u * N) time units (capacities are
// normalized by total mass, so b_u * N is the absolute service rate).
// Waits and throughputs are reported in the same normalized units as the
// steady-state solver, which makes the two directly comparable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cyclequil/errors.hpp"
#include "cyclequil/linalg.hpp"
#include "cyclequil/network.hpp"

namespace cyclequil {

struct SimConfig {
  std::size_t agents = 1000;  // N
  Vec distribution;           // per-cycle mass fractions, length |C|
  double horizon = 50.0;      // simulated time, normalized units
  double warmup = -1.0;       // time discarded before measuring; < 0 means 5 * max t_hat_c
};

struct SimStats {
  Vec mean_wait;    // per lift, over boardings inside the window
  Vec throughput;   // per lift: boardings / (window length * N), comparable to f^U
  std::vector<std::uint64_t> boardings;        // per lift, inside the window
  std::vector<std::uint64_t> entries;          // per lift, inside the window
  std::vector<std::uint64_t> queue_at_warmup;  // waiting agents at window start
  std::vector<std::uint64_t> queue_at_horizon; // waiting agents at window end
  std::vector<std::uint64_t> cycles_completed; // per cycle class, inside the window
  double window_start = 0.0;
  double window_end = 0.0;
};

/// Largest-remainder rounding of n * N to integer per-cycle counts that sum
/// exactly to N. Ties go to the lower cycle index.
inline std::vector<std::size_t> apportion_counts(const Vec& n, std::size_t total) {
  std::vector<std::size_t> counts(n.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < n.size(); ++c) {
    const double exact = n[c] * static_cast<double>(total);
    const double base = std::floor(exact);
    counts[c] = static_cast<std::size_t>(base);
    assigned += counts[c];
    remainders.emplace_back(exact - base, c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i, ++assigned)
    ++counts[remainders[i].second];
  return counts;
}

namespace detail {

struct SimEvent {
  double time;
  std::uint64_t seq;   // tie-break: earlier-scheduled events run first
  enum Kind { AgentArrive, LiftBoard } kind;
  std::uint32_t agent;
  std::uint32_t pos;   // edge position for AgentArrive, lift index for LiftBoard

  friend bool operator>(const SimEvent& a, const SimEvent& b) {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

inline double uniform01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Run the simulation; deterministic given the seed (the seed only jitters
/// the stratified initial placement of agents along their cycles).
inline SimStats simulate(const ResortNetwork& net, const CycleSet& cycles,
                         const SimConfig& cfg, std::uint64_t seed) {
  if (cfg.distribution.size() != cycles.cycles.size())
    throw ValidationError("simulate: distribution length does not match cycle count");
  double mass = 0.0;
  for (double x : cfg.distribution) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw ValidationError("simulate: distribution components must be finite and >= 0");
    mass += x;
  }
  if (std::abs(mass - 1.0) > 1e-9)
    throw ValidationError("simulate: distribution must sum to 1");
  if (cfg.agents == 0) throw ValidationError("simulate: need at least one agent");
  if (!(cfg.horizon > 0.0)) throw ValidationError("simulate: horizon must be > 0");

  double warmup = cfg.warmup;
  if (warmup < 0.0) {
    double max_free = 0.0;
    for (const Cycle& c : cycles.cycles) max_free = std::max(max_free, c.free_time);
    warmup = 5.0 * max_free;
  }
  if (warmup >= cfg.horizon)
    throw ValidationError("simulate: warmup must be smaller than horizon");

  const std::size_t n_lifts = net.lifts.size();
  const double n_agents = static_cast<double>(cfg.agents);

  struct Agent {
    std::uint32_t cycle;
    bool spawned = false;
  };
  std::vector<Agent> agents;
  agents.reserve(cfg.agents);

  struct LiftState {
    double interval;            // 1 / (b_u * N)
    double next_allowed = 0.0;  // earliest next boarding time
    bool board_scheduled = false;
    std::deque<std::pair<std::uint32_t, double>> queue;  // (agent, arrival time)
    std::uint64_t entries_pre = 0, entries_win = 0;
    std::uint64_t boardings_pre = 0, boardings_win = 0;
    double wait_sum = 0.0;
  };
  std::vector<LiftState> lift(n_lifts);
  for (std::size_t u = 0; u < n_lifts; ++u)
    lift[u].interval = 1.0 / (net.lifts[u].capacity * n_agents);

  std::priority_queue<detail::SimEvent, std::vector<detail::SimEvent>, std::greater<>> events;
  std::uint64_t seq = 0;
  auto push_event = [&](double time, detail::SimEvent::Kind kind, std::uint32_t agent,
                        std::uint32_t pos) {
    events.push(detail::SimEvent{time, seq++, kind, agent, pos});
  };

  // Stratified placement: agent j of a cycle with m agents starts at fraction
  // (j + U_j)/m of the queue-free lap, mid-edge, and first appears when it
  // finishes that edge. Lifts are treated as "riding" at spawn.
  std::mt19937_64 rng(seed);
  const std::vector<std::size_t> counts = apportion_counts(cfg.distribution, cfg.agents);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const Cycle& cyc = cycles.cycles[c];
    for (std::size_t j = 0; j < counts[c]; ++j) {
      const std::uint32_t id = static_cast<std::uint32_t>(agents.size());
      agents.push_back({static_cast<std::uint32_t>(c), false});
      const double frac = (static_cast<double>(j) + detail::uniform01(rng)) /
                          static_cast<double>(counts[c]);
      const double offset = frac * cyc.free_time;
      double acc = 0.0;
      std::size_t edge = cyc.edges.size() - 1;
      double remaining = 0.0;
      for (std::size_t i = 0; i < cyc.edges.size(); ++i) {
        const double len = net.edge_time(cyc.edges[i]);
        if (offset < acc + len) {
          edge = i;
          remaining = acc + len - offset;
          break;
        }
        acc += len;
      }
      push_event(remaining, detail::SimEvent::AgentArrive, id,
                 static_cast<std::uint32_t>((edge + 1) % cyc.edges.size()));
    }
  }

  std::vector<std::uint64_t> completed(cycles.cycles.size(), 0);

  while (!events.empty()) {
    const detail::SimEvent ev = events.top();
    if (ev.time > cfg.horizon) break;
    events.pop();

    if (ev.kind == detail::SimEvent::AgentArrive) {
      Agent& ag = agents[ev.agent];
      const Cycle& cyc = cycles.cycles[ag.cycle];
      if (!ag.spawned)
        ag.spawned = true;
      else if (ev.pos == 0 && ev.time > warmup)
        ++completed[ag.cycle];
      const EdgeRef e = cyc.edges[ev.pos];
      if (e.kind == EdgeKind::Slope) {
        push_event(ev.time + net.slopes[e.index].traverse_time, detail::SimEvent::AgentArrive,
                   ev.agent, static_cast<std::uint32_t>((ev.pos + 1) % cyc.edges.size()));
      } else {
        LiftState& ls = lift[e.index];
        if (ev.time > warmup)
          ++ls.entries_win;
        else
          ++ls.entries_pre;
        ls.queue.emplace_back(ev.agent, ev.time);
        if (!ls.board_scheduled) {
          push_event(std::max(ev.time, ls.next_allowed), detail::SimEvent::LiftBoard,
                     ev.agent, static_cast<std::uint32_t>(e.index));
          ls.board_scheduled = true;
        }
      }
    } else {  // LiftBoard
      const std::size_t u = ev.pos;
      LiftState& ls = lift[u];
      const auto [agent_id, arrived] = ls.queue.front();
      ls.queue.pop_front();
      if (ev.time > warmup) {
        ++ls.boardings_win;
        ls.wait_sum += ev.time - arrived;
      } else {
        ++ls.boardings_pre;
      }
      ls.next_allowed = ev.time + ls.interval;
      const Agent& ag = agents[agent_id];
      const Cycle& cyc = cycles.cycles[ag.cycle];
      // Find the lift's position on the agent's cycle: it is the position the
      // arrival event recorded; recover it by scanning (cycles are short).
      std::uint32_t pos = 0;
      for (std::uint32_t i = 0; i < cyc.edges.size(); ++i)
        if (cyc.edges[i].kind == EdgeKind::Lift && cyc.edges[i].index == u) pos = i;
      push_event(ev.time + net.lifts[u].ride_time, detail::SimEvent::AgentArrive, agent_id,
                 static_cast<std::uint32_t>((pos + 1) % cyc.edges.size()));
      if (!ls.queue.empty())
        push_event(ls.next_allowed, detail::SimEvent::LiftBoard, ls.queue.front().first,
                   static_cast<std::uint32_t>(u));
      else
        ls.board_scheduled = false;
    }
  }

  SimStats st;
  st.window_start = warmup;
  st.window_end = cfg.horizon;
  st.mean_wait.assign(n_lifts, 0.0);
  st.throughput.assign(n_lifts, 0.0);
  st.boardings.resize(n_lifts);
  st.entries.resize(n_lifts);
  st.queue_at_warmup.resize(n_lifts);
  st.queue_at_horizon.resize(n_lifts);
  st.cycles_completed = completed;
  const double window = cfg.horizon - warmup;
  for (std::size_t u = 0; u < n_lifts; ++u) {
    const LiftState& ls = lift[u];
    st.boardings[u] = ls.boardings_win;
    st.entries[u] = ls.entries_win;
    st.queue_at_warmup[u] = ls.entries_pre - ls.boardings_pre;
    st.queue_at_horizon[u] =
        ls.entries_pre + ls.entries_win - ls.boardings_pre - ls.boardings_win;
    if (ls.boardings_win > 0) st.mean_wait[u] = ls.wait_sum / static_cast<double>(ls.boardings_win);
    st.throughput[u] = static_cast<double>(ls.boardings_win) / (window * n_agents);
  }
  return st;
}

}  // namespace cyclequil

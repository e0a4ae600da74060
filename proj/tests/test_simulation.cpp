#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>

#include "cyclequil/queue_solver.hpp"
#include "cyclequil/simulation.hpp"

using namespace cyclequil;

namespace {

const std::string kFixtures = CYCLEQUIL_FIXTURE_DIR;

ResortNetwork single_lift_network(double capacity, double ride, double traverse) {
  ResortNetwork net;
  net.nodes = {{"valley"}, {"summit"}};
  Lift l;
  l.id = "lift";
  l.tail = "valley";
  l.head = "summit";
  l.capacity = capacity;
  l.ride_time = ride;
  net.lifts.push_back(l);
  Slope s;
  s.id = "run";
  s.tail = "summit";
  s.head = "valley";
  s.traverse_time = traverse;
  s.value = 1.0;
  net.slopes.push_back(s);
  validate(net);
  return net;
}

}  // namespace

TEST_CASE("largest-remainder apportionment") {
  CHECK(apportion_counts({0.6, 0.4}, 5) == std::vector<std::size_t>{3, 2});
  CHECK(apportion_counts({1.0 / 3, 1.0 / 3, 1.0 / 3}, 10) == std::vector<std::size_t>{4, 3, 3});
  CHECK(apportion_counts({1.0, 0.0}, 7) == std::vector<std::size_t>{7, 0});
  // always sums to N
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Vec n(1 + rng() % 6);
    double total = 0.0;
    for (double& x : n) {
      x = static_cast<double>(rng() % 1000) + 1.0;
      total += x;
    }
    for (double& x : n) x /= total;
    const std::size_t agents = 1 + rng() % 5000;
    const auto counts = apportion_counts(n, agents);
    std::size_t sum = 0;
    for (std::size_t c : counts) sum += c;
    CHECK(sum == agents);
  }
}

TEST_CASE("simulation is deterministic per seed") {
  const ResortNetwork net = load_network(kFixtures + "/two_lift.json");
  const CycleSet cs = enumerate_cycles(net);
  SimConfig cfg;
  cfg.agents = 500;
  cfg.distribution = {0.6, 0.4};
  cfg.horizon = 20.0;
  const SimStats a = simulate(net, cs, cfg, 42);
  const SimStats b = simulate(net, cs, cfg, 42);
  CHECK(a.mean_wait == b.mean_wait);
  CHECK(a.throughput == b.throughput);
  CHECK(a.boardings == b.boardings);
  CHECK(a.entries == b.entries);
  CHECK(a.cycles_completed == b.cycles_completed);
  const SimStats c = simulate(net, cs, cfg, 43);
  CHECK(a.mean_wait != c.mean_wait);  // placement jitter differs
}

TEST_CASE("saturated single lift approaches the fluid waiting time") {
  // n/b = 2 > t_hat = 1, so the fluid wait is n/b - t_hat = 1.
  const ResortNetwork net = single_lift_network(0.5, 0.3, 0.7);
  const CycleSet cs = enumerate_cycles(net);
  SimConfig cfg;
  cfg.agents = 1000;
  cfg.distribution = {1.0};
  cfg.horizon = 40.0;
  const SimStats st = simulate(net, cs, cfg, 7);
  CHECK(st.mean_wait[0] == Catch::Approx(1.0).epsilon(0.05));
  CHECK(st.throughput[0] == Catch::Approx(0.5).epsilon(0.02));
}

TEST_CASE("uncongested lifts have waits within one service interval") {
  const ResortNetwork net = single_lift_network(2.0, 0.3, 0.7);  // capacity 2 > flow 1
  const CycleSet cs = enumerate_cycles(net);
  SimConfig cfg;
  cfg.agents = 1000;
  cfg.distribution = {1.0};
  cfg.horizon = 30.0;
  const SimStats st = simulate(net, cs, cfg, 11);
  const double interval = 1.0 / (2.0 * 1000.0);
  CHECK(st.mean_wait[0] <= interval);
}

TEST_CASE("integer flow conservation over the measurement window") {
  const ResortNetwork net = load_network(kFixtures + "/two_lift.json");
  const CycleSet cs = enumerate_cycles(net);
  SimConfig cfg;
  cfg.agents = 777;
  cfg.distribution = {0.6, 0.4};
  cfg.horizon = 25.0;
  cfg.warmup = 4.0;
  const SimStats st = simulate(net, cs, cfg, 3);
  for (std::size_t u = 0; u < st.boardings.size(); ++u) {
    const auto boarded = static_cast<std::int64_t>(st.boardings[u]);
    const auto entered = static_cast<std::int64_t>(st.entries[u]);
    const auto dq = static_cast<std::int64_t>(st.queue_at_horizon[u]) -
                    static_cast<std::int64_t>(st.queue_at_warmup[u]);
    CHECK(boarded == entered - dq);
  }
}

TEST_CASE("throughput never exceeds capacity plus discretization slack") {
  const ResortNetwork net = load_network(kFixtures + "/two_lift.json");
  const CycleSet cs = enumerate_cycles(net);
  SimConfig cfg;
  cfg.agents = 2000;
  cfg.distribution = {0.6, 0.4};
  cfg.horizon = 25.0;
  const SimStats st = simulate(net, cs, cfg, 21);
  const double window = st.window_end - st.window_start;
  for (std::size_t u = 0; u < st.throughput.size(); ++u) {
    const double b = net.lifts[u].capacity;
    CHECK(st.throughput[u] <= b * (1.0 + 1.0 / (b * window)) + 1e-12);
  }
}

TEST_CASE("saturated two-lift waits match the closed form at large N") {
  const ResortNetwork net = load_network(kFixtures + "/two_lift.json");
  const CycleSet cs = enumerate_cycles(net);
  SimConfig cfg;
  cfg.agents = 10000;
  cfg.distribution = {0.6, 0.4};
  cfg.horizon = 40.0;
  const SimStats st = simulate(net, cs, cfg, 1);
  CHECK(st.mean_wait[0] == Catch::Approx(5.0 / 3.0).epsilon(0.05));
  CHECK(st.mean_wait[1] == Catch::Approx(1.0 / 3.0).epsilon(0.05));
}

TEST_CASE("relative error shrinks toward the fluid limit as N grows") {
  const ResortNetwork net = load_network(kFixtures + "/two_lift.json");
  const CycleSet cs = enumerate_cycles(net);
  const Vec expected{5.0 / 3.0, 1.0 / 3.0};
  Vec errs;
  for (std::size_t agents : {100u, 1000u, 10000u}) {
    SimConfig cfg;
    cfg.agents = agents;
    cfg.distribution = {0.6, 0.4};
    cfg.horizon = 40.0;
    const SimStats st = simulate(net, cs, cfg, 5);
    double err = 0.0;
    for (std::size_t u = 0; u < 2; ++u)
      err = std::max(err, std::abs(st.mean_wait[u] - expected[u]) / expected[u]);
    errs.push_back(err);
  }
  INFO("errors: " << errs[0] << " " << errs[1] << " " << errs[2]);
  CHECK(errs[1] <= errs[0] * 1.05);  // small slack for discreteness
  CHECK(errs[2] <= errs[1] * 1.05);
  CHECK(errs[2] <= 0.05);
}

TEST_CASE("simulation input validation") {
  const ResortNetwork net = load_network(kFixtures + "/two_lift.json");
  const CycleSet cs = enumerate_cycles(net);
  SimConfig cfg;
  cfg.agents = 10;
  cfg.distribution = {0.6, 0.4};
  SECTION("warmup must precede horizon") {
    cfg.horizon = 5.0;
    cfg.warmup = 5.0;
    CHECK_THROWS_AS(simulate(net, cs, cfg, 0), ValidationError);
  }
  SECTION("distribution length") {
    cfg.distribution = {1.0};
    CHECK_THROWS_AS(simulate(net, cs, cfg, 0), ValidationError);
  }
  SECTION("distribution mass") {
    cfg.distribution = {0.6, 0.6};
    CHECK_THROWS_AS(simulate(net, cs, cfg, 0), ValidationError);
  }
}

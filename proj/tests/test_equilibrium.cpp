#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cyclequil/equilibrium.hpp"
#include "oracles.hpp"

using namespace cyclequil;

namespace {

const std::string kFixtures = CYCLEQUIL_FIXTURE_DIR;

EquilibriumProblem two_lift_model(Vec value, Vec t_hat, Vec b) {
  EquilibriumProblem m;
  m.theta = Matrix(2, 2, 0.0);
  m.theta(0, 0) = 1.0;
  m.theta(0, 1) = 1.0;
  m.theta(1, 1) = 1.0;
  m.value = std::move(value);
  m.free_time = std::move(t_hat);
  m.capacity = std::move(b);
  return m;
}

}  // namespace

TEST_CASE("simplex projection") {
  SECTION("feasible points are returned bit-for-bit") {
    const Vec x{0.3, 0.7};
    const Distribution z = project_simplex(x);
    CHECK(z.weights() == x);
  }
  SECTION("interior threshold") {
    const Distribution z = project_simplex({0.5, 0.5, 1.0});
    CHECK(z[0] == Catch::Approx(1.0 / 6.0).margin(1e-14));
    CHECK(z[1] == Catch::Approx(1.0 / 6.0).margin(1e-14));
    CHECK(z[2] == Catch::Approx(2.0 / 3.0).margin(1e-14));
  }
  SECTION("clipping at zero") {
    const Distribution z = project_simplex({2.0, 0.0});
    CHECK(z[0] == 1.0);
    CHECK(z[1] == 0.0);
  }
  SECTION("projection KKT certificate, optimality and idempotence on random input") {
    std::mt19937_64 rng(112233);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t k = 1 + rng() % 12;
      Vec x(k);
      for (double& v : x) v = oracles::uniform(rng, -3.0, 3.0);
      const Distribution z = project_simplex(x);

      double sum = 0.0;
      for (double v : z.weights()) sum += v;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      // z has the form max(0, x - theta): recover theta from any positive
      // coordinate and check all of them.
      double theta = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        if (z[i] > 0.0) theta = x[i] - z[i];
      for (std::size_t i = 0; i < k; ++i) {
        if (z[i] > 0.0)
          CHECK(std::abs((x[i] - z[i]) - theta) <= 1e-12);
        else
          CHECK(x[i] - theta <= 1e-12);
      }
      // no feasible point is closer
      auto dist2 = [&](const Vec& w) {
        double d = 0.0;
        for (std::size_t i = 0; i < k; ++i) d += (w[i] - x[i]) * (w[i] - x[i]);
        return d;
      };
      const double dz = dist2(z.weights());
      for (int probe = 0; probe < 40; ++probe) {
        const Distribution w = Distribution::random(k, rng);
        CHECK(dz <= dist2(w.weights()) + 1e-12);
      }
      // projecting the projection changes nothing
      const Distribution z2 = project_simplex(z.weights());
      CHECK(z2.weights() == z.weights());
    }
  }
}

TEST_CASE("gap function") {
  CHECK(gap(Distribution(Vec{1.0, 0.0, 0.0}), {3.0, 1.0, 2.0}) == 0.0);
  CHECK(gap(Distribution(Vec{1.0, 0.0}), {1.0, 2.0}) == 1.0);
  CHECK(gap(Distribution(Vec{0.4, 0.6}), {2.5, 2.5}) == 0.0);
}

TEST_CASE("extragradient step") {
  SECTION("constant operator pushes to the favored vertex") {
    int evals = 0;
    auto oracle = [&](const Distribution&) {
      ++evals;
      return Vec{1.0, 0.0};
    };
    const auto [y, next] = extragradient_step(Distribution(Vec{0.5, 0.5}), 1.0, oracle);
    CHECK(evals == 2);
    CHECK(y[0] == Catch::Approx(1.0).margin(1e-15));
    CHECK(y[1] == Catch::Approx(0.0).margin(1e-15));
    CHECK(next[0] == Catch::Approx(1.0).margin(1e-15));
  }
  SECTION("uniform utilities leave the point fixed") {
    auto oracle = [](const Distribution& d) { return Vec(d.size(), 3.7); };
    const Distribution n(Vec{0.2, 0.3, 0.5, 0.0});
    const auto [y, next] = extragradient_step(n, 0.7, oracle);
    for (std::size_t i = 0; i < n.size(); ++i) {
      CHECK(y[i] == Catch::Approx(n[i]).margin(1e-13));
      CHECK(next[i] == Catch::Approx(n[i]).margin(1e-13));
    }
  }
  SECTION("zero step is the identity") {
    auto oracle = [](const Distribution& d) { return Vec(d.size(), 1.0); };
    const Distribution n(Vec{0.25, 0.75});
    const auto [y, next] = extragradient_step(n, 0.0, oracle);
    CHECK(y.weights() == n.weights());
    CHECK(next.weights() == n.weights());
  }
}

TEST_CASE("cycle utilities") {
  SECTION("no saturation: tau = v / t_hat") {
    const auto m = two_lift_model({2.0, 1.0}, {2.0, 1.0}, {10.0, 10.0});
    const Vec tau = evaluate_utilities(m, Distribution(Vec{0.5, 0.5}));
    CHECK(tau[0] == Catch::Approx(1.0).margin(1e-10));
    CHECK(tau[1] == Catch::Approx(1.0).margin(1e-10));
  }
  SECTION("saturated two-lift case composes waits into utilities") {
    const auto m = two_lift_model({2.0, 1.0}, {1.0, 1.0}, {0.2, 0.5});
    const Vec tau = evaluate_utilities(m, Distribution(Vec{0.6, 0.4}));
    CHECK(tau[0] == Catch::Approx(2.0 / 3.0).margin(1e-8));
    CHECK(tau[1] == Catch::Approx(3.0 / 4.0).margin(1e-8));
  }
  SECTION("utilities are reported for zero-mass cycles too") {
    const auto m = two_lift_model({2.0, 1.0}, {1.0, 1.0}, {0.4, 10.0});
    const Vec tau = evaluate_utilities(m, Distribution(Vec{1.0, 0.0}));
    // lower lift saturates at t1 = 1/0.4 - 1 = 1.5; cycle 2 avoids it
    CHECK(tau[0] == Catch::Approx(2.0 / (1.0 + 1.5)).margin(1e-8));
    CHECK(tau[1] == Catch::Approx(1.0).margin(1e-8));
  }
  SECTION("scaling slope values scales utilities linearly") {
    const ResortNetwork net = load_network(kFixtures + "/five_cycle.json");
    const CycleSet cs = enumerate_cycles(net);
    const Distribution n = Distribution::uniform(cs.cycles.size());
    const Vec tau1 = evaluate_utilities(EquilibriumProblem::from_network(net, cs, 1.0), n);
    const Vec tau2 = evaluate_utilities(EquilibriumProblem::from_network(net, cs, 2.0), n);
    const Vec tau3 = evaluate_utilities(EquilibriumProblem::from_network(net, cs, 3.0), n);
    for (std::size_t c = 0; c < tau1.size(); ++c) {
      CHECK(tau2[c] == 2.0 * tau1[c]);  // power-of-two scale is exact
      CHECK(tau3[c] == Catch::Approx(3.0 * tau1[c]).epsilon(1e-14));
    }
  }
}

TEST_CASE("single-cycle network is immediately at equilibrium") {
  EquilibriumProblem m;
  m.theta = Matrix(1, 1, 1.0);
  m.value = {1.0};
  m.free_time = {1.0};
  m.capacity = {0.5};
  const auto run = solve_equilibrium(m, Distribution(Vec{1.0}));
  CHECK(run.converged);
  CHECK(run.iterations == 0);
  CHECK(run.final_gap == 0.0);
}

TEST_CASE("uncongested network concentrates on the best value-per-time cycle") {
  // Capacities so large that t = 0 everywhere: the operator is the constant
  // v / t_hat and the equilibrium is the best vertex.
  const auto m = two_lift_model({2.0, 1.0}, {1.0, 1.0}, {50.0, 50.0});
  EquilibriumOptions opt;
  opt.gamma = 0.2;
  opt.gap_tol = 1e-10;
  const auto run = solve_equilibrium(m, Distribution(Vec{0.5, 0.5}), opt);
  REQUIRE(run.converged);
  CHECK(run.final_distribution[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(run.final_distribution[1] == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("five-cycle fixture equilibrium") {
  const ResortNetwork net = load_network(kFixtures + "/five_cycle.json");
  const CycleSet cs = enumerate_cycles(net);
  const auto m = EquilibriumProblem::from_network(net, cs);

  SECTION("gap decays below tolerance and iterates stay feasible") {
    EquilibriumOptions opt;
    opt.gap_tol = 1e-8;
    const auto run = solve_equilibrium(m, Distribution::uniform(5), opt);
    REQUIRE(run.converged);
    CHECK(run.final_gap <= 1e-8);
    for (const Vec& w : run.iterates) {
      double sum = 0.0;
      for (double x : w) {
        CHECK(x >= 0.0);
        sum += x;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    for (double g : run.gaps) CHECK(g >= 0.0);
  }

  SECTION("random starts agree and satisfy the support condition") {
    std::mt19937_64 rng(5150);
    EquilibriumOptions opt;
    opt.gap_tol = 1e-8;
    opt.max_iter = 20000;
    opt.record_iterates = false;
    std::vector<Vec> finals;
    for (int s = 0; s < 3; ++s) {
      const auto run = solve_equilibrium(m, Distribution::random(5, rng), opt);
      REQUIRE(run.converged);
      finals.push_back(run.final_distribution);

      const Vec tau = evaluate_utilities(m, Distribution(run.final_distribution));
      const double best = *std::max_element(tau.begin(), tau.end());
      for (std::size_t c = 0; c < 5; ++c)
        if (run.final_distribution[c] > 1e-6)
          CHECK(tau[c] >= best - 10.0 * opt.gap_tol);  // Wardrop: used cycles are maximal
    }
    for (std::size_t i = 1; i < finals.size(); ++i)
      for (std::size_t c = 0; c < 5; ++c)
        CHECK(std::abs(finals[i][c] - finals[0][c]) < 1e-3);
  }

  SECTION("scaling all values leaves the equilibrium unchanged") {
    EquilibriumOptions opt;
    opt.gap_tol = 1e-10;
    opt.max_iter = 20000;
    opt.record_iterates = false;
    const auto base = solve_equilibrium(m, Distribution::uniform(5), opt);
    const auto scaled = solve_equilibrium(EquilibriumProblem::from_network(net, cs, 3.0),
                                          Distribution::uniform(5), opt);
    REQUIRE(base.converged);
    REQUIRE(scaled.converged);
    for (std::size_t c = 0; c < 5; ++c)
      CHECK(std::abs(base.final_distribution[c] - scaled.final_distribution[c]) < 1e-6);
  }

  SECTION("operator monotonicity is an empirical question; report the rate") {
    // The concave-utility convention would want <tau(n)-tau(m), n-m> <= 0.
    // Measure how often random pairs violate it instead of assuming it.
    std::mt19937_64 rng(77007);
    int violations = 0;
    const int pairs = 100;
    for (int i = 0; i < pairs; ++i) {
      const Distribution a = Distribution::random(5, rng);
      const Distribution b = Distribution::random(5, rng);
      const Vec ta = evaluate_utilities(m, a);
      const Vec tb = evaluate_utilities(m, b);
      double inner = 0.0;
      for (std::size_t c = 0; c < 5; ++c) inner += (ta[c] - tb[c]) * (a[c] - b[c]);
      if (inner > 1e-12) ++violations;
    }
    WARN("monotonicity violations on random pairs: " << violations << "/" << pairs);
    CHECK(violations >= 0);
  }
}

TEST_CASE("non-convergence is reported with history, not thrown") {
  const ResortNetwork net = load_network(kFixtures + "/five_cycle.json");
  const CycleSet cs = enumerate_cycles(net);
  const auto m = EquilibriumProblem::from_network(net, cs);
  EquilibriumOptions opt;
  opt.max_iter = 3;
  opt.gap_tol = 1e-12;
  const auto run = solve_equilibrium(m, Distribution::uniform(5), opt);
  CHECK_FALSE(run.converged);
  CHECK(run.iterations == 3);
  CHECK(run.gaps.size() == 4);  // gap recorded at n_0..n_3
  CHECK(run.final_gap > 0.0);
}

TEST_CASE("adaptive step halving engages on a hostile step size") {
  const ResortNetwork net = load_network(kFixtures + "/five_cycle.json");
  const CycleSet cs = enumerate_cycles(net);
  const auto m = EquilibriumProblem::from_network(net, cs, 40.0);  // strong operator
  EquilibriumOptions opt;
  opt.gamma = 0.5;  // oscillates at this scale
  opt.adaptive_patience = 20;
  opt.max_iter = 4000;
  opt.gap_tol = 1e-6;
  opt.record_iterates = false;
  const auto run = solve_equilibrium(m, Distribution::uniform(5), opt);
  CHECK(run.gamma < opt.gamma);  // halving kicked in
  CHECK(run.converged);
}

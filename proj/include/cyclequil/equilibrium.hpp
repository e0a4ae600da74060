#pragma once

// Competitive (Wardrop-style) equilibrium over the cycle strategy set.
// A distribution n on the unit simplex is an equilibrium iff
//   <tau(n), z - n> <= 0   for every feasible z,
// where tau_c(n) = v_c / (t_hat_c + sum of waits on c) is the cycle utility.
// The extragradient method iterates
//   y   = P(n + gamma * tau(n))
//   n'  = P(n + gamma * tau(y))
// with P the Euclidean projection onto the simplex, and the gap
//   Gap(n) = max_z <tau(n), z - n> = max_c tau_c - <tau, n>
// certifies convergence (zero exactly at equilibria).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "cyclequil/errors.hpp"
#include "cyclequil/linalg.hpp"
#include "cyclequil/network.hpp"
#include "cyclequil/queue_solver.hpp"

namespace cyclequil {

// Point on the unit simplex: componentwise >= 0, sums to one within 1e-12.
class Distribution {
 public:
  explicit Distribution(Vec w) : w_(std::move(w)) {
    if (w_.empty()) throw ValidationError("distribution: empty vector");
    double sum = 0.0;
    for (double x : w_) {
      if (!(x >= 0.0) || !std::isfinite(x))
        throw ValidationError("distribution: components must be finite and >= 0");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ValidationError("distribution: components must sum to 1 (got " +
                            std::to_string(sum) + ")");
  }

  static Distribution uniform(std::size_t k) {
    return Distribution(Vec(k, 1.0 / static_cast<double>(k)));
  }

  // Uniform sample from the simplex (normalized unit exponentials). Uses raw
  // generator output so results are identical across platforms.
  template <class Rng>
  static Distribution random(std::size_t k, Rng& rng) {
    Vec w(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
      w[i] = -std::log(u);
      sum += w[i];
    }
    for (double& x : w) x /= sum;
    return Distribution(std::move(w));
  }

  const Vec& weights() const { return w_; }
  double operator[](std::size_t i) const { return w_[i]; }
  std::size_t size() const { return w_.size(); }

 private:
  Vec w_;
};

/// Euclidean projection onto the unit simplex by sort-and-threshold.
/// Projecting an already feasible point returns it bit-for-bit.
inline Distribution project_simplex(const Vec& x) {
  if (x.empty()) throw ValidationError("project_simplex: empty vector");
  double sum = 0.0;
  bool nonneg = true;
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError("project_simplex: non-finite component");
    if (v < 0.0) nonneg = false;
    sum += v;
  }
  if (nonneg && std::abs(sum - 1.0) <= 1e-12) return Distribution(x);

  Vec u = x;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  std::size_t support = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double cand = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - cand > 0.0) {
      theta = cand;
      support = j + 1;
    }
  }
  Vec z(x.size());
  // One polish pass keeps the max(0, x - theta) form while pinning the sum
  // to 1 at machine precision.
  for (int pass = 0; pass < 2; ++pass) {
    double zsum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      z[i] = std::max(0.0, x[i] - theta);
      zsum += z[i];
    }
    if (std::abs(zsum - 1.0) <= 1e-15 || support == 0) break;
    theta += (zsum - 1.0) / static_cast<double>(support);
  }
  return Distribution(std::move(z));
}

/// Gap(n) = max_z in simplex <tau, z - n> = max_c tau_c - <tau, n>.
/// Clamped at zero against rounding; zero exactly at equilibria.
inline double gap(const Distribution& n, const Vec& tau) {
  if (tau.size() != n.size()) throw ValidationError("gap: dimension mismatch");
  const double best = *std::max_element(tau.begin(), tau.end());
  return std::max(0.0, best - dot(tau, n.weights()));
}

// Static data of the equilibrium problem: incidence, per-cycle value and
// free time, per-lift capacity.
struct EquilibriumProblem {
  Matrix theta;
  Vec value;      // v_c
  Vec free_time;  // t_hat_c
  Vec capacity;   // b_u

  static EquilibriumProblem from_network(const ResortNetwork& net, const CycleSet& cycles,
                                         double value_scale = 1.0) {
    if (!(value_scale > 0.0))
      throw ValidationError("value_scale must be > 0");
    EquilibriumProblem m;
    m.theta = cycles.theta;
    m.value = cycles.values();
    for (double& v : m.value) v *= value_scale;
    m.free_time = cycles.free_times();
    m.capacity = net.capacities();
    for (std::size_t c = 0; c < m.free_time.size(); ++c)
      if (!(m.free_time[c] > 0.0))
        throw ValidationError("cycle #" + std::to_string(c) +
                              " has zero free time; utilities are undefined");
    return m;
  }

  std::size_t cycle_count() const { return free_time.size(); }

  QueueProblem queue_problem(const Vec& n) const {
    return QueueProblem{theta, n, free_time, capacity};
  }
};

/// tau_c = v_c / (t_hat_c + sum of waits on c), for every cycle including
/// zero-mass ones (waits are per lift, so they stay defined).
inline Vec utilities_from_waits(const EquilibriumProblem& m, const Vec& t_wait) {
  const Vec queue_time = mat_vec(m.theta, t_wait);
  Vec tau(m.cycle_count());
  for (std::size_t c = 0; c < tau.size(); ++c)
    tau[c] = m.value[c] / (m.free_time[c] + queue_time[c]);
  return tau;
}

/// Solve the queue subproblem at n, then evaluate all cycle utilities.
/// Throws ConvergenceError if the queue solver fails to reach queue_tol.
inline Vec evaluate_utilities(const EquilibriumProblem& m, const Distribution& n,
                              double queue_tol = 1e-10, std::size_t queue_max_iter = 500) {
  QueueSolveOptions opt;
  opt.tol = queue_tol;
  opt.max_iter = queue_max_iter;
  const QueueSolution q = solve_queue(m.queue_problem(n.weights()), opt);
  if (!q.converged)
    throw ConvergenceError("queue solver did not converge (max KKT residual " +
                           std::to_string(q.kkt.max_residual()) + ")");
  return utilities_from_waits(m, q.t_wait);
}

/// One extragradient update; exactly two oracle evaluations.
template <class Oracle>
std::pair<Distribution, Distribution> extragradient_step(const Distribution& n, double gamma,
                                                         Oracle&& tau_of) {
  if (!(gamma >= 0.0)) throw ValidationError("extragradient_step: gamma must be >= 0");
  const Vec tau_n = tau_of(n);
  Vec shifted = n.weights();
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += gamma * tau_n[i];
  Distribution y = project_simplex(shifted);
  const Vec tau_y = tau_of(y);
  Vec shifted2 = n.weights();
  for (std::size_t i = 0; i < shifted2.size(); ++i) shifted2[i] += gamma * tau_y[i];
  Distribution n_next = project_simplex(shifted2);
  return {std::move(y), std::move(n_next)};
}

struct EquilibriumOptions {
  double gamma = 0.1;
  std::size_t max_iter = 5000;
  double gap_tol = 1e-6;
  // Halve gamma after this many consecutive iterations without a new best
  // gap; 0 disables. An oscillating gap alternates up/down, so the streak is
  // measured against the best seen, not the previous iterate.
  std::size_t adaptive_patience = 0;
  double queue_tol = 1e-10;
  std::size_t queue_max_iter = 500;
  bool record_iterates = true;
};

struct EquilibriumRun {
  std::vector<Vec> iterates;  // n_0 .. n_K when recording is on
  std::vector<double> gaps;   // gap at each recorded iterate
  Vec final_distribution;
  double final_gap = std::numeric_limits<double>::infinity();
  bool converged = false;
  double gamma = 0.0;  // step size in effect at termination
  std::size_t iterations = 0;
};

/// Extragradient iteration from n0 until gap <= gap_tol or max_iter updates.
/// The gap is evaluated every iteration from the already-computed tau(n_k),
/// so it costs no extra queue solve. Non-convergence is not an error: the
/// run is returned with converged = false and the full history.
inline EquilibriumRun solve_equilibrium(const EquilibriumProblem& m, const Distribution& n0,
                                        const EquilibriumOptions& opt = {}) {
  if (!(opt.gamma > 0.0)) throw ValidationError("solve_equilibrium: gamma must be > 0");
  if (!(opt.gap_tol > 0.0)) throw ValidationError("solve_equilibrium: gap_tol must be > 0");
  if (n0.size() != m.cycle_count())
    throw ValidationError("solve_equilibrium: distribution length does not match cycle count");

  EquilibriumRun run;
  run.gamma = opt.gamma;
  Distribution n = n0;
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t stall_streak = 0;

  while (true) {
    const Vec tau_n = evaluate_utilities(m, n, opt.queue_tol, opt.queue_max_iter);
    const double g = gap(n, tau_n);
    if (opt.record_iterates) run.iterates.push_back(n.weights());
    run.gaps.push_back(g);
    if (g <= opt.gap_tol) {
      run.converged = true;
      break;
    }
    if (run.iterations >= opt.max_iter) break;

    if (opt.adaptive_patience > 0) {
      if (g < best_gap) {
        best_gap = g;
        stall_streak = 0;
      } else if (++stall_streak >= opt.adaptive_patience) {
        run.gamma *= 0.5;
        stall_streak = 0;
      }
    }

    Vec shifted = n.weights();
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += run.gamma * tau_n[i];
    const Distribution y = project_simplex(shifted);
    const Vec tau_y = evaluate_utilities(m, y, opt.queue_tol, opt.queue_max_iter);
    Vec shifted2 = n.weights();
    for (std::size_t i = 0; i < shifted2.size(); ++i) shifted2[i] += run.gamma * tau_y[i];
    n = project_simplex(shifted2);
    ++run.iterations;
  }

  run.final_distribution = n.weights();
  run.final_gap = run.gaps.back();
  return run;
}

}  // namespace cyclequil

#pragma once

// Steady state of the lift queues for a fixed distribution of skiers over
// cycles. The cycle flows f^C and per-lift waiting times t are the unique
// primal-dual pair of
//
//   min_{f >= 0}  <t_hat, f> - <n, ln f>   s.t.  theta^T f <= b
//
// whose KKT system is exactly the physical steady-state description:
//   (2a)  t_hat + theta t = n / f        mass = flow * passage time
//   (2b)  theta^T f = f_lift             lift flow sums cycle flows
//   (2c)  t * (f_lift - b) = 0           queue only on saturated lifts
//   (2d)  f_lift <= b
//   (2e)  f >= 0, t >= 0
//
// The solver runs projected gradient ascent with Armijo backtracking on the
// smooth concave dual  g(t) = <n, ln(t_hat + theta t)> - <b, t>,  t >= 0,
// with a projected-Newton refinement on the free set, then recovers
// f = n / (t_hat + theta t).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cyclequil/errors.hpp"
#include "cyclequil/linalg.hpp"

namespace cyclequil {

struct QueueProblem {
  Matrix theta;  // |C| x |U|
  Vec n;         // per-cycle mass, >= 0; zero-mass cycles are dropped at solve time
  Vec t_hat;     // per-cycle queue-free passage time, > 0
  Vec b;         // per-lift capacity, > 0

  void validate() const {
    if (theta.rows != n.size() || theta.rows != t_hat.size() || theta.cols != b.size())
      throw ValidationError("queue problem: inconsistent dimensions");
    for (std::size_t c = 0; c < n.size(); ++c) {
      if (!(n[c] >= 0.0) || !std::isfinite(n[c]))
        throw ValidationError("queue problem: cycle mass n[" + std::to_string(c) +
                              "] must be finite and >= 0");
      if (!(t_hat[c] > 0.0) || !std::isfinite(t_hat[c]))
        throw ValidationError("queue problem: free time t_hat[" + std::to_string(c) +
                              "] must be > 0");
    }
    for (std::size_t u = 0; u < b.size(); ++u)
      if (!(b[u] > 0.0) || !std::isfinite(b[u]))
        throw ValidationError("queue problem: capacity b[" + std::to_string(u) +
                              "] must be > 0 (infeasible)");
  }
};

// Max-norm residuals of the steady-state system, one per equation.
struct KktReport {
  double cycle_time = 0.0;      // 2a
  double flow_balance = 0.0;    // 2b
  double complementarity = 0.0; // 2c
  double capacity = 0.0;        // 2d
  double nonnegativity = 0.0;   // 2e
  // False if some cycle with positive mass carries non-positive flow; its 2a
  // entry is skipped (division by zero) and the report as a whole is invalid.
  bool flow_positive = true;

  double max_residual() const {
    if (!flow_positive) return std::numeric_limits<double>::infinity();
    return std::max({cycle_time, flow_balance, complementarity, capacity, nonnegativity});
  }
};

struct QueueSolution {
  Vec f_cycle;  // f^C, zero on dropped cycles
  Vec f_lift;   // f^U = theta^T f^C
  Vec t_wait;   // t, defined for every lift
  KktReport kkt;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::size_t> retained;  // cycles that entered the reduced problem
};

struct QueueSolveOptions {
  double tol = 1e-10;        // bound on the max KKT residual, not the dual gradient
  std::size_t max_iter = 500;
  double mass_eps = 1e-12;   // cycles with n_c below this are excluded
  bool newton_refine = true;
  Vec t_start;               // optional dual warm start, clamped to t >= 0
};

/// Residuals of (2a)-(2e) for a candidate solution. Cycles with mass below
/// mass_eps are excluded from the system, so their 2a equation is checked in
/// the division-free form |f_c * (t_hat_c + (theta t)_c) - n_c|.
inline KktReport verify_kkt(const QueueProblem& p, const QueueSolution& s,
                            double mass_eps = 1e-12) {
  if (s.f_cycle.size() != p.n.size() || s.f_lift.size() != p.b.size() ||
      s.t_wait.size() != p.b.size())
    throw ValidationError("verify_kkt: solution dimensions do not match problem");
  KktReport r;
  const Vec lift_flow = mat_tvec(p.theta, s.f_cycle);
  for (std::size_t u = 0; u < p.b.size(); ++u) {
    r.flow_balance = std::max(r.flow_balance, std::abs(lift_flow[u] - s.f_lift[u]));
    r.complementarity =
        std::max(r.complementarity, std::abs(s.t_wait[u] * (s.f_lift[u] - p.b[u])));
    r.capacity = std::max(r.capacity, s.f_lift[u] - p.b[u]);
    r.nonnegativity = std::max(r.nonnegativity, -s.t_wait[u]);
  }
  const Vec queue_time = mat_vec(p.theta, s.t_wait);  // per-cycle sum of waits
  for (std::size_t c = 0; c < p.n.size(); ++c) {
    r.nonnegativity = std::max(r.nonnegativity, -s.f_cycle[c]);
    const double passage = p.t_hat[c] + queue_time[c];
    if (p.n[c] > mass_eps) {
      if (s.f_cycle[c] > 0.0)
        r.cycle_time = std::max(r.cycle_time, std::abs(passage - p.n[c] / s.f_cycle[c]));
      else
        r.flow_positive = false;
    } else {
      r.cycle_time = std::max(r.cycle_time, std::abs(s.f_cycle[c] * passage - p.n[c]));
    }
  }
  r.capacity = std::max(r.capacity, 0.0);
  r.nonnegativity = std::max(r.nonnegativity, 0.0);
  return r;
}

namespace detail {

struct DualState {
  const QueueProblem& p;
  const std::vector<std::size_t>& retained;

  Vec passage(const Vec& t) const {  // s_c = t_hat_c + (theta t)_c over retained cycles
    Vec s(retained.size());
    for (std::size_t i = 0; i < retained.size(); ++i) {
      const std::size_t c = retained[i];
      double acc = p.t_hat[c];
      for (std::size_t u = 0; u < p.b.size(); ++u) acc += p.theta(c, u) * t[u];
      s[i] = acc;
    }
    return s;
  }

  double objective(const Vec& s, const Vec& t) const {
    double g = 0.0;
    for (std::size_t i = 0; i < retained.size(); ++i)
      g += p.n[retained[i]] * std::log(s[i]);
    return g - dot(t, p.b);
  }

  Vec gradient(const Vec& s) const {  // theta^T (n / s) - b
    Vec grad(p.b.size());
    for (std::size_t u = 0; u < p.b.size(); ++u) grad[u] = -p.b[u];
    for (std::size_t i = 0; i < retained.size(); ++i) {
      const std::size_t c = retained[i];
      const double f = p.n[c] / s[i];
      for (std::size_t u = 0; u < p.b.size(); ++u) grad[u] += p.theta(c, u) * f;
    }
    return grad;
  }
};

inline Vec clamped_step(const Vec& t, const Vec& dir, double step) {
  Vec out(t.size());
  for (std::size_t u = 0; u < t.size(); ++u) out[u] = std::max(0.0, t[u] + step * dir[u]);
  return out;
}

}  // namespace detail

/// Unique steady state for the given distribution of mass over cycles.
/// Non-convergence is reported through `converged = false` with the final
/// residuals attached; structurally bad input throws ValidationError.
inline QueueSolution solve_queue(const QueueProblem& p, const QueueSolveOptions& opt = {}) {
  p.validate();
  const std::size_t n_cycles = p.n.size();
  const std::size_t n_lifts = p.b.size();

  QueueSolution sol;
  for (std::size_t c = 0; c < n_cycles; ++c)
    if (p.n[c] > opt.mass_eps) sol.retained.push_back(c);

  Vec t(n_lifts, 0.0);
  if (!opt.t_start.empty()) {
    if (opt.t_start.size() != n_lifts)
      throw ValidationError("solve_queue: t_start dimension mismatch");
    for (std::size_t u = 0; u < n_lifts; ++u) t[u] = std::max(0.0, opt.t_start[u]);
  }

  detail::DualState dual{p, sol.retained};

  struct Point {
    Vec t, s, grad;
    double g = 0.0;
    double resid = 0.0;  // max of the 2c and 2d residuals, what `tol` bounds
  };
  auto make_point = [&](Vec tv) {
    Point pt;
    pt.t = std::move(tv);
    pt.s = dual.passage(pt.t);
    pt.g = dual.objective(pt.s, pt.t);
    pt.grad = dual.gradient(pt.s);
    for (std::size_t u = 0; u < n_lifts; ++u) {
      pt.resid = std::max(pt.resid, pt.grad[u]);                      // 2d
      pt.resid = std::max(pt.resid, std::abs(pt.t[u] * pt.grad[u]));  // 2c
    }
    return pt;
  };

  Point cur = make_point(std::move(t));
  double grow_step = 1.0;
  constexpr double kArmijo = 1e-4;

  // Globalization is monotone Armijo ascent on the dual. Near the optimum the
  // attainable gain sinks below rounding noise in g while the residual is still
  // informative, so steps whose predicted gain is unresolvable may instead be
  // accepted on a clear residual contraction (they cannot lose more than noise).
  auto acceptable = [&](const Point& trial) {
    double dg = 0.0;
    for (std::size_t u = 0; u < n_lifts; ++u) dg += cur.grad[u] * (trial.t[u] - cur.t[u]);
    if (trial.g >= cur.g + kArmijo * dg) return true;
    const double noise = 1e-14 * (1.0 + std::abs(cur.g));
    return kArmijo * dg <= noise && trial.g >= cur.g - noise && trial.resid <= 0.9 * cur.resid;
  };

  // Target half the tolerance: the final certificate re-derives the residuals
  // from the assembled solution, and the ulp-level differences between the two
  // computations must not flip a borderline verdict.
  while (sol.iterations < opt.max_iter) {
    if (cur.resid <= 0.5 * opt.tol) break;
    ++sol.iterations;
    bool accepted = false;

    if (opt.newton_refine) {
      // Free set: coordinates that are either interior or pushed inward.
      std::vector<std::size_t> free;
      for (std::size_t u = 0; u < n_lifts; ++u)
        if (cur.t[u] > 0.0 || cur.grad[u] > 0.0) free.push_back(u);
      if (!free.empty()) {
        Matrix h(free.size(), free.size(), 0.0);
        for (std::size_t i = 0; i < sol.retained.size(); ++i) {
          const std::size_t c = sol.retained[i];
          const double d = p.n[c] / (cur.s[i] * cur.s[i]);
          for (std::size_t a = 0; a < free.size(); ++a) {
            const double ta = p.theta(c, free[a]);
            if (ta == 0.0) continue;
            for (std::size_t bx = a; bx < free.size(); ++bx)
              h(a, bx) += d * ta * p.theta(c, free[bx]);
          }
        }
        for (std::size_t a = 0; a < free.size(); ++a)
          for (std::size_t bx = 0; bx < a; ++bx) h(a, bx) = h(bx, a);
        Vec gf(free.size());
        for (std::size_t a = 0; a < free.size(); ++a) gf[a] = cur.grad[free[a]];
        Vec d_free;
        if (solve_spd(h, gf, d_free)) {
          Vec dir(n_lifts, 0.0);
          for (std::size_t a = 0; a < free.size(); ++a) dir[free[a]] = d_free[a];
          double beta = 1.0;
          for (int ls = 0; ls < 30 && !accepted; ++ls) {
            Point trial = make_point(detail::clamped_step(cur.t, dir, beta));
            if (acceptable(trial)) {
              cur = std::move(trial);
              accepted = true;
            }
            beta *= 0.5;
          }
        }
      }
    }

    if (!accepted) {
      double alpha = grow_step;
      for (int ls = 0; ls < 60 && !accepted; ++ls) {
        Point trial = make_point(detail::clamped_step(cur.t, cur.grad, alpha));
        if (acceptable(trial)) {
          cur = std::move(trial);
          grow_step = 2.0 * alpha;
          accepted = true;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;  // step collapsed below float resolution; stop with current t
    }
  }
  sol.f_cycle.assign(n_cycles, 0.0);
  for (std::size_t i = 0; i < sol.retained.size(); ++i)
    sol.f_cycle[sol.retained[i]] = p.n[sol.retained[i]] / cur.s[i];
  sol.f_lift = mat_tvec(p.theta, sol.f_cycle);
  sol.t_wait = cur.t;
  sol.kkt = verify_kkt(p, sol, opt.mass_eps);
  sol.converged = sol.kkt.max_residual() <= opt.tol;
  return sol;
}

inline QueueSolution solve_queue(const QueueProblem& p, double tol, std::size_t max_iter) {
  QueueSolveOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return solve_queue(p, opt);
}

namespace detail {

inline void require_positive_params(const Vec& n, const Vec& t_hat, const char* who) {
  for (double x : n)
    if (!(x > 0.0)) throw ValidationError(std::string(who) + ": requires n > 0 componentwise");
  for (double x : t_hat)
    if (!(x > 0.0)) throw ValidationError(std::string(who) + ": requires t_hat > 0 componentwise");
}

}  // namespace detail

/// Closed-form steady state of the two-lift toy network (cycle 1 rides both
/// lifts, cycle 2 only the upper one). Evaluates the four sign patterns of
/// (t1, t2) and returns the feasible one; throws NoFeasibleCaseError when
/// none fits, which only happens for degenerate capacity layouts.
inline QueueSolution solve_two_lift_analytic(const Vec& n, const Vec& t_hat, const Vec& b) {
  if (n.size() != 2 || t_hat.size() != 2 || b.size() != 2)
    throw ValidationError("solve_two_lift_analytic: expects 2-vectors");
  detail::require_positive_params(n, t_hat, "solve_two_lift_analytic");
  if (!(b[0] > 0.0) || !(b[1] > 0.0))
    throw ValidationError("solve_two_lift_analytic: requires b > 0");

  QueueProblem p;
  p.theta = Matrix(2, 2, 0.0);
  p.theta(0, 0) = 1.0;
  p.theta(0, 1) = 1.0;
  p.theta(1, 1) = 1.0;
  p.n = n;
  p.t_hat = t_hat;
  p.b = b;

  struct Candidate {
    Vec f, t;
    double violation;
  };
  std::vector<Candidate> cands;
  const double inf = std::numeric_limits<double>::infinity();

  // t1 = 0, t2 = 0: f = n / t_hat.
  {
    const Vec f{n[0] / t_hat[0], n[1] / t_hat[1]};
    const double viol = std::max({0.0, f[0] - b[0], f[0] + f[1] - b[1]});
    cands.push_back({f, Vec{0.0, 0.0}, viol});
  }
  // t1 > 0, t2 = 0: lower lift saturated.
  {
    const double t1 = n[0] / b[0] - t_hat[0];
    const Vec f{b[0], n[1] / t_hat[1]};
    const double viol = std::max({0.0, -t1, f[0] + f[1] - b[1]});
    cands.push_back({f, Vec{std::max(t1, 0.0), 0.0}, viol});
  }
  // t1 > 0, t2 > 0: both saturated, needs b2 > b1.
  if (b[1] > b[0]) {
    const double t2 = n[1] / (b[1] - b[0]) - t_hat[1];
    const double t1 = n[0] / b[0] - n[1] / (b[1] - b[0]) - t_hat[0] + t_hat[1];
    const Vec f{b[0], b[1] - b[0]};
    const double viol = std::max({0.0, -t1, -t2});
    cands.push_back({f, Vec{std::max(t1, 0.0), std::max(t2, 0.0)}, viol});
  } else {
    cands.push_back({Vec{0.0, 0.0}, Vec{0.0, 0.0}, inf});
  }
  // t1 = 0, t2 > 0: upper lift saturated; b2 = n1/(t2+t_hat1) + n2/(t2+t_hat2)
  // multiplies out to a quadratic with exactly one positive root when the
  // unconstrained flows exceed b2.
  {
    const double qa = b[1];
    const double qb = b[1] * (t_hat[0] + t_hat[1]) - (n[0] + n[1]);
    const double qc = b[1] * t_hat[0] * t_hat[1] - n[0] * t_hat[1] - n[1] * t_hat[0];
    if (qc < 0.0) {
      const double disc = qb * qb - 4.0 * qa * qc;
      const double q = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
      const double t2 = std::max(q / qa, qc / q);
      const Vec f{n[0] / (t_hat[0] + t2), n[1] / (t_hat[1] + t2)};
      const double viol = std::max({0.0, -t2, f[0] - b[0]});
      cands.push_back({f, Vec{0.0, std::max(t2, 0.0)}, viol});
    } else {
      cands.push_back({Vec{0.0, 0.0}, Vec{0.0, 0.0}, inf});
    }
  }

  const double scale = 1.0 + std::max(b[0], b[1]) + n[0] / t_hat[0] + n[1] / t_hat[1];
  const double feas_tol = 1e-9 * scale;
  int best = -1;
  double best_resid = inf;
  std::vector<QueueSolution> sols(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (cands[i].violation > feas_tol) continue;
    QueueSolution& s = sols[i];
    s.f_cycle = cands[i].f;
    s.t_wait = cands[i].t;
    s.f_lift = mat_tvec(p.theta, s.f_cycle);
    s.retained = {0, 1};
    s.kkt = verify_kkt(p, s);
    const double r = s.kkt.max_residual();
    if (r < best_resid) {
      best_resid = r;
      best = static_cast<int>(i);
    }
  }
  if (best < 0)
    throw NoFeasibleCaseError(
        "solve_two_lift_analytic: no sign pattern is feasible (degenerate capacities, "
        "e.g. b2 <= b1 with demand requiring both queues)");
  sols[best].converged = true;
  return sols[best];
}

/// Steady state of the single-lift, k-parallel-slopes network. Unsaturated
/// case is queue-free; otherwise the shared waiting time is the unique root
/// of sum_c n_c / (t_hat_c + t) = b, found by bisection (the left side is
/// strictly decreasing in t).
inline QueueSolution solve_parallel_slopes_analytic(const Vec& n, const Vec& t_hat, double b) {
  if (n.size() != t_hat.size() || n.empty())
    throw ValidationError("solve_parallel_slopes_analytic: n and t_hat must match and be non-empty");
  detail::require_positive_params(n, t_hat, "solve_parallel_slopes_analytic");
  if (!(b > 0.0)) throw ValidationError("solve_parallel_slopes_analytic: requires b > 0");

  const std::size_t k = n.size();
  QueueProblem p;
  p.theta = Matrix(k, 1, 1.0);
  p.n = n;
  p.t_hat = t_hat;
  p.b = Vec{b};

  double total_free_flow = 0.0;
  for (std::size_t c = 0; c < k; ++c) total_free_flow += n[c] / t_hat[c];

  QueueSolution s;
  s.retained.resize(k);
  for (std::size_t c = 0; c < k; ++c) s.retained[c] = c;

  double t = 0.0;
  if (total_free_flow > b) {
    auto excess = [&](double tw) {
      double acc = -b;
      for (std::size_t c = 0; c < k; ++c) acc += n[c] / (t_hat[c] + tw);
      return acc;
    };
    double lo = 0.0;
    double total_mass = 0.0, min_free = t_hat[0];
    for (std::size_t c = 0; c < k; ++c) {
      total_mass += n[c];
      min_free = std::min(min_free, t_hat[c]);
    }
    double hi = std::max(1.0, total_mass / b - min_free + 1.0);
    while (excess(hi) > 0.0) hi *= 2.0;
    while (hi - lo > 1e-12 && s.iterations < 200) {
      const double mid = 0.5 * (lo + hi);
      if (excess(mid) > 0.0)
        lo = mid;
      else
        hi = mid;
      ++s.iterations;
    }
    t = 0.5 * (lo + hi);
  }

  s.f_cycle.resize(k);
  for (std::size_t c = 0; c < k; ++c) s.f_cycle[c] = n[c] / (t_hat[c] + t);
  s.f_lift = mat_tvec(p.theta, s.f_cycle);
  s.t_wait = Vec{t};
  s.kkt = verify_kkt(p, s);
  s.converged = true;
  return s;
}

}  // namespace cyclequil

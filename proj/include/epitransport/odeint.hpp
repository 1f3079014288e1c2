#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epitransport/common.hpp"

namespace epitransport::odeint {

enum class Method { euler, bosh3, rk4, dopri5 };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::euler: return "euler";
    case Method::bosh3: return "bosh3";
    case Method::rk4: return "rk4";
    case Method::dopri5: return "dopri5";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "euler") return Method::euler;
  if (s == "bosh3") return Method::bosh3;
  if (s == "rk4") return Method::rk4;
  if (s == "dopri5") return Method::dopri5;
  throw_config("unknown solver method '" + s + "' (expected euler|bosh3|rk4|dopri5)");
}

struct SolverConfig {
  Method method = Method::dopri5;
  double fixed_dt = 1.0;  // euler / rk4
  double rtol = 1e-5;     // bosh3 / dopri5
  double atol = 1e-5;
  int max_steps = 100000;
  double safety = 0.9;

  void validate() const {
    if (!(fixed_dt > 0.0)) throw_config("solver fixed_dt must be > 0");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw_config("solver rtol and atol must be > 0");
    if (max_steps < 1) throw_config("solver max_steps must be >= 1");
    if (!(safety > 0.0 && safety < 1.0)) throw_config("solver safety must lie in (0, 1)");
  }
};

/// Explicit Runge-Kutta tableau, optionally with an embedded error estimate
/// (b_err = b - b_hat) and the FSAL property (last stage == next first stage).
struct ButcherTableau {
  int stages;
  int order;           // order of the propagated solution
  int control_order;   // order of the embedded estimate (step controller exponent)
  bool fsal;
  std::vector<double> c;
  std::vector<std::vector<double>> a;  // a[i] has i entries (row i+1 of the tableau)
  std::vector<double> b;
  std::vector<double> b_err;  // empty for methods without an embedded pair
};

inline const ButcherTableau& tableau(Method m) {
  static const ButcherTableau euler{1, 1, 0, false, {0.0}, {}, {1.0}, {}};
  static const ButcherTableau rk4{
      4, 4, 0, false,
      {0.0, 0.5, 0.5, 1.0},
      {{0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}},
      {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6},
      {}};
  // Bogacki-Shampine 3(2)
  static const ButcherTableau bosh3 = [] {
    ButcherTableau t{4, 3, 2, true,
                     {0.0, 0.5, 0.75, 1.0},
                     {{0.5}, {0.0, 0.75}, {2.0 / 9, 1.0 / 3, 4.0 / 9}},
                     {2.0 / 9, 1.0 / 3, 4.0 / 9, 0.0},
                     {}};
    const double bh[] = {7.0 / 24, 0.25, 1.0 / 3, 0.125};
    t.b_err.resize(4);
    for (int i = 0; i < 4; ++i) t.b_err[i] = t.b[i] - bh[i];
    return t;
  }();
  // Dormand-Prince 5(4)
  static const ButcherTableau dopri5 = [] {
    ButcherTableau t;
    t.stages = 7;
    t.order = 5;
    t.control_order = 4;
    t.fsal = true;
    t.c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    t.a = {{1.0 / 5},
           {3.0 / 40, 9.0 / 40},
           {44.0 / 45, -56.0 / 15, 32.0 / 9},
           {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
           {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
           {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
    t.b = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
    const double bh[] = {5179.0 / 57600, 0.0,           7571.0 / 16695, 393.0 / 640,
                         -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
    t.b_err.resize(7);
    for (int i = 0; i < 7; ++i) t.b_err[i] = t.b[i] - bh[i];
    return t;
  }();
  switch (m) {
    case Method::euler: return euler;
    case Method::bosh3: return bosh3;
    case Method::rk4: return rk4;
    case Method::dopri5: return dopri5;
  }
  return euler;
}

inline bool method_is_adaptive(Method m) { return !tableau(m).b_err.empty(); }

/// State-type hooks for the integrator. Specialize for types that should be
/// integrable: a linear combination, the mixed atol/rtol max-norm error
/// ratio, and a finiteness check. The tape::Value specialization lives with
/// the tape so gradients flow through every accepted-step combination.
template <class State>
struct OdeAlgebra;

template <>
struct OdeAlgebra<Eigen::MatrixXd> {
  static Eigen::MatrixXd lincomb(std::span<const double> coef, std::span<const Eigen::MatrixXd* const> xs) {
    Eigen::MatrixXd out = coef[0] * (*xs[0]);
    for (size_t i = 1; i < coef.size(); ++i) out.noalias() += coef[i] * (*xs[i]);
    return out;
  }
  static double error_ratio(const Eigen::MatrixXd& err, const Eigen::MatrixXd& y0,
                            const Eigen::MatrixXd& y1, double atol, double rtol) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
      const double scale = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
      worst = std::max(worst, std::abs(err(i)) / scale);
    }
    return worst;
  }
  static bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }
};

namespace detail {

template <class State, class Algebra, class Field>
State rk_step(Field&& f, const State& y, double t, double dt, const ButcherTableau& tab,
              std::vector<State>& k, const std::optional<State>& fsal_first) {
  k.clear();
  k.reserve(tab.stages);
  k.push_back(fsal_first ? *fsal_first : f(t, y));
  std::vector<double> coef;
  std::vector<const State*> terms;
  for (int s = 1; s < tab.stages; ++s) {
    coef.clear();
    terms.clear();
    coef.push_back(1.0);
    terms.push_back(&y);
    for (int j = 0; j < s; ++j) {
      if (tab.a[s - 1][j] == 0.0) continue;
      coef.push_back(dt * tab.a[s - 1][j]);
      terms.push_back(&k[j]);
    }
    State ys = Algebra::lincomb(coef, terms);
    k.push_back(f(t + tab.c[s] * dt, ys));
  }
  coef.clear();
  terms.clear();
  coef.push_back(1.0);
  terms.push_back(&y);
  for (int s = 0; s < tab.stages; ++s) {
    if (tab.b[s] == 0.0) continue;
    coef.push_back(dt * tab.b[s]);
    terms.push_back(&k[s]);
  }
  return Algebra::lincomb(coef, terms);
}

template <class State, class Algebra>
State rk_error(double dt, const ButcherTableau& tab, const std::vector<State>& k) {
  std::vector<double> coef;
  std::vector<const State*> terms;
  for (int s = 0; s < tab.stages; ++s) {
    if (tab.b_err[s] == 0.0) continue;
    coef.push_back(dt * tab.b_err[s]);
    terms.push_back(&k[s]);
  }
  return Algebra::lincomb(coef, terms);
}

}  // namespace detail

/// Integrates dy/dt = f(t, y) through every point of a strictly increasing
/// time grid; trajectory[0] == y0 at t_eval[0]. Steps are clipped so output
/// times are hit exactly (no dense output / interpolation).
template <class State, class Field>
std::vector<State> integrate(Field&& f, const State& y0, std::span<const double> t_eval,
                             const SolverConfig& cfg) {
  using Algebra = OdeAlgebra<State>;
  cfg.validate();
  if (t_eval.size() < 1) throw_config("t_eval must contain at least the initial time");
  for (size_t i = 1; i < t_eval.size(); ++i)
    if (!(t_eval[i] > t_eval[i - 1])) throw_config("t_eval must be strictly increasing");

  const ButcherTableau& tab = tableau(cfg.method);
  const bool adaptive = !tab.b_err.empty();
  const double t_begin = t_eval.front(), t_final = t_eval.back();
  const double span = t_final - t_begin;
  const double time_eps = 1e-12 * std::max(1.0, std::abs(t_final));

  std::vector<State> trajectory;
  trajectory.reserve(t_eval.size());
  trajectory.push_back(y0);
  if (t_eval.size() == 1) return trajectory;

  State y = y0;
  double t = t_begin;
  double dt = adaptive ? span / 10.0 : cfg.fixed_dt;
  int steps = 0;
  std::vector<State> k;
  std::optional<State> fsal;

  for (size_t target_idx = 1; target_idx < t_eval.size(); ++target_idx) {
    const double target = t_eval[target_idx];
    while (t < target - time_eps) {
      if (++steps > cfg.max_steps)
        throw NonConvergenceError("solver exceeded max_steps=" + std::to_string(cfg.max_steps) +
                                      " at t=" + std::to_string(t),
                                  t);
      double h = std::min(dt, target - t);  // never overshoot the next output time
      State y_new = detail::rk_step<State, Algebra>(f, y, t, h, tab, k, fsal);
      if (adaptive) {
        State err = detail::rk_error<State, Algebra>(h, tab, k);
        const double ratio = Algebra::error_ratio(err, y, y_new, cfg.atol, cfg.rtol);
        if (!std::isfinite(ratio) || !Algebra::all_finite(y_new))
          throw_divergence("non-finite state during adaptive integration at t=" + std::to_string(t));
        const double order_exp = 1.0 / (tab.control_order + 1.0);
        double factor = ratio > 0.0 ? cfg.safety * std::pow(1.0 / ratio, order_exp) : 5.0;
        factor = std::clamp(factor, 0.2, 5.0);
        if (ratio <= 1.0) {
          t += h;
          if (std::abs(t - target) <= time_eps) t = target;
          y = y_new;
          if (tab.fsal) fsal = k.back();
          dt = h * factor;
        } else {
          dt = h * factor;  // rejected; retry from the same point
          if (!(dt > span * 1e-14))
            throw NonConvergenceError("adaptive step size underflow at t=" + std::to_string(t), t);
        }
      } else {
        if (!Algebra::all_finite(y_new))
          throw_divergence("non-finite state during fixed-step integration at t=" + std::to_string(t));
        t += h;
        if (std::abs(t - target) <= time_eps) t = target;
        y = y_new;
        if (tab.fsal) fsal = k.back();
      }
    }
    t = target;
    trajectory.push_back(y);
  }
  return trajectory;
}

/// Fixed-step run of any method (adaptive tableaus use only their b row).
/// Used by the convergence-order diagnostic.
template <class State, class Field>
std::vector<State> integrate_fixed(Field&& f, const State& y0, std::span<const double> t_eval,
                                   Method method, double dt, int max_steps = 10000000) {
  using Algebra = OdeAlgebra<State>;
  if (!(dt > 0.0)) throw_config("fixed dt must be > 0");
  const ButcherTableau& tab = tableau(method);
  const double time_eps = 1e-12 * std::max(1.0, std::abs(t_eval.back()));

  std::vector<State> trajectory;
  trajectory.push_back(y0);
  State y = y0;
  double t = t_eval.front();
  int steps = 0;
  std::vector<State> k;
  std::optional<State> fsal;
  for (size_t target_idx = 1; target_idx < t_eval.size(); ++target_idx) {
    const double target = t_eval[target_idx];
    while (t < target - time_eps) {
      if (++steps > max_steps) throw NonConvergenceError("fixed-step cap exceeded", t);
      double h = std::min(dt, target - t);
      State y_new = detail::rk_step<State, Algebra>(f, y, t, h, tab, k, fsal);
      if (!Algebra::all_finite(y_new)) throw_divergence("non-finite state at t=" + std::to_string(t));
      t += h;
      if (std::abs(t - target) <= time_eps) t = target;
      y = y_new;
      if (tab.fsal) fsal = k.back();
    }
    t = target;
    trajectory.push_back(y);
  }
  return trajectory;
}

/// Richardson estimate of a method's convergence order on a scalar problem
/// with known solution: log2 of the global-error ratio under dt halving.
template <class Field>
double convergence_order(Method method, Field&& f, double y0, double t_end, double exact_at_end,
                         double dt) {
  auto run = [&](double step) {
    Eigen::MatrixXd state(1, 1);
    state(0, 0) = y0;
    const double grid[] = {0.0, t_end};
    auto traj = integrate_fixed(
        [&](double t, const Eigen::MatrixXd& y) {
          Eigen::MatrixXd r(1, 1);
          r(0, 0) = f(t, y(0, 0));
          return r;
        },
        state, grid, method, step);
    return std::abs(traj.back()(0, 0) - exact_at_end);
  };
  const double e1 = run(dt);
  const double e2 = run(dt / 2.0);
  return std::log2(e1 / e2);
}

}  // namespace epitransport::odeint

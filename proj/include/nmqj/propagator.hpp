#pragma once

// Deterministic (no-jump) evolution under the non-Hermitian effective
// Hamiltonian: d|phi>/dt = -i H(t) |phi>. Norm is not conserved; the lost
// or gained norm is exactly what the jump engine converts into jump
// probabilities, so renormalization happens once per step, after the step.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "model.hpp"

namespace nmqj {

enum class IntegratorOrder { first, fourth };

struct StepControl {
  double dt = 1e-3;
  // Largest tolerated per-state total jump probability in one step.
  double max_jump_prob = 0.1;
  IntegratorOrder order = IntegratorOrder::fourth;
};

inline void validate(const StepControl& c) {
  if (!(c.dt > 0.0) || !std::isfinite(c.dt))
    throw std::invalid_argument("step control: dt must be positive and finite");
  if (!(c.max_jump_prob > 0.0) || c.max_jump_prob > 0.5)
    throw std::invalid_argument("step control: max_jump_prob must lie in (0, 0.5]");
}

// Result of pushing a state through one step before renormalization.
class UnnormalizedState {
 public:
  explicit UnnormalizedState(std::vector<complexd> amps)
      : amps_(std::move(amps)), norm_sq_(nmqj::norm_sq(amps_)) {
    if (amps_.empty()) throw std::invalid_argument("unnormalized state: empty");
  }

  std::size_t dim() const { return amps_.size(); }
  std::span<const complexd> amplitudes() const { return amps_; }
  double norm_sq() const { return norm_sq_; }

 private:
  std::vector<complexd> amps_;
  double norm_sq_;
};

inline StateVector renormalize(const UnnormalizedState& phi) {
  if (!(phi.norm_sq() > 1e-30))
    throw StateAnnihilated("state annihilated: norm^2 <= 1e-30 after step");
  std::vector<complexd> amps(phi.amplitudes().begin(), phi.amplitudes().end());
  double inv = 1.0 / std::sqrt(phi.norm_sq());
  for (complexd& a : amps) a *= inv;
  return StateVector::normalized(std::move(amps));
}

// One-step propagator for [t, t+dt]. Construction evaluates the rates, so
// a single StepOperator can advance every distinct state in an ensemble
// without re-evaluating H(t).
//
// first:  |phi> = (1 - i dt H(t)) |psi>, the literal lowest-order rule.
// fourth: classical Runge-Kutta with H frozen at the stage times
//         t, t+dt/2, t+dt (rates are scalars, so the stage matrices are
//         exact; the O(dt^4) error is purely from the time stepping).
class StepOperator {
 public:
  StepOperator(const ModelSpec& m, double t, double dt, IntegratorOrder order)
      : t_(t), dt_(dt), order_(order), h_start_(effective_hamiltonian(m, t)) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step operator: bad dt");
    if (order == IntegratorOrder::first) {
      euler_ = Operator::identity(h_start_.dim());
      *euler_ += complexd(0.0, -dt) * h_start_;
    } else {
      h_mid_ = effective_hamiltonian(m, t + 0.5 * dt);
      h_end_ = effective_hamiltonian(m, t + dt);
    }
  }

  double t() const { return t_; }
  double dt() const { return dt_; }

  std::vector<complexd> apply_raw(std::span<const complexd> y) const {
    if (order_ == IntegratorOrder::first) return nmqj::apply(*euler_, y);

    const std::size_t d = y.size();
    std::vector<complexd> k1 = derivative(h_start_, y);
    std::vector<complexd> tmp(d);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = y[i] + 0.5 * dt_ * k1[i];
    std::vector<complexd> k2 = derivative(*h_mid_, tmp);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = y[i] + 0.5 * dt_ * k2[i];
    std::vector<complexd> k3 = derivative(*h_mid_, tmp);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = y[i] + dt_ * k3[i];
    std::vector<complexd> k4 = derivative(*h_end_, tmp);

    std::vector<complexd> out(d);
    const double w = dt_ / 6.0;
    for (std::size_t i = 0; i < d; ++i)
      out[i] = y[i] + w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
  }

  UnnormalizedState apply(const StateVector& psi) const {
    return UnnormalizedState(apply_raw(psi.amplitudes()));
  }

 private:
  static std::vector<complexd> derivative(const Operator& h, std::span<const complexd> y) {
    std::vector<complexd> hy = nmqj::apply(h, y);
    for (complexd& a : hy) a *= complexd(0.0, -1.0);
    return hy;
  }

  double t_;
  double dt_;
  IntegratorOrder order_;
  Operator h_start_;
  std::optional<Operator> h_mid_;
  std::optional<Operator> h_end_;
  std::optional<Operator> euler_;
};

inline UnnormalizedState deterministic_step(const StateVector& psi, const ModelSpec& m,
                                            double t, const StepControl& ctrl) {
  validate(ctrl);
  return StepOperator(m, t, ctrl.dt, ctrl.order).apply(psi);
}

// Evolve the model's initial state along `grid` with no jumps, renormalizing
// at every grid point. grid must be ascending and start at 0.
inline std::vector<StateVector> no_jump_trajectory(const ModelSpec& m,
                                                   std::span<const double> grid,
                                                   IntegratorOrder order = IntegratorOrder::fourth) {
  if (grid.empty()) throw std::invalid_argument("no_jump_trajectory: empty grid");
  if (std::abs(grid[0]) > 1e-12)
    throw std::invalid_argument("no_jump_trajectory: grid must start at t = 0");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i] < grid[i + 1]))
      throw std::invalid_argument("no_jump_trajectory: grid not ascending");

  std::vector<StateVector> out;
  out.reserve(grid.size());
  out.push_back(m.initial_state);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    StepOperator u(m, grid[i], grid[i + 1] - grid[i], order);
    out.push_back(renormalize(u.apply(out.back())));
  }
  return out;
}

}  // namespace nmqj

#pragma once

// Open-system model: system Hamiltonian, decay channels with time-dependent
// (possibly negative) rates, optional time-dependent level shift. Together
// these define the time-local master equation
//
//   d(rho)/dt = -i [H_s + (S(t)/2) L, rho]
//               + sum_j Delta_j(t) (C_j rho C_j+ - 1/2 {C_j+ C_j, rho})
//
// with hbar = 1. Channel operators C_j are constant; all time dependence
// lives in the scalar rates.

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "rates.hpp"

namespace nmqj {

struct DecayChannel {
  Operator op;         // C_j
  RateFunction rate;   // Delta_j(t)
  std::string label;   // used in event logs and diagnostics
};

struct ModelSpec {
  std::size_t dim = 0;
  Operator hamiltonian{1};
  std::optional<RateFunction> lamb_shift;       // S(t); absent means zero
  std::optional<Operator> lamb_shift_operator;  // L; defaults to |e><e| when dim == 2
  std::vector<DecayChannel> channels;
  StateVector initial_state = StateVector::basis_state(1, 0);
};

// Two-level helpers. Basis convention: index 0 = |g>, index 1 = |e>.
inline Operator sigma_minus() {
  Operator m(2);
  m.at(0, 1) = 1.0;
  return m;
}
inline Operator sigma_plus() {
  Operator m(2);
  m.at(1, 0) = 1.0;
  return m;
}
inline Operator excited_projector() {
  Operator m(2);
  m.at(1, 1) = 1.0;
  return m;
}
inline Operator ground_projector() {
  Operator m(2);
  m.at(0, 0) = 1.0;
  return m;
}
inline StateVector ground_state() { return StateVector::basis_state(2, 0); }
inline StateVector excited_state() { return StateVector::basis_state(2, 1); }
// (|g> + |e>) / sqrt(2)
inline StateVector equal_superposition() {
  double r = 1.0 / std::sqrt(2.0);
  return StateVector::from_amplitudes({complexd(r, 0.0), complexd(r, 0.0)});
}

inline double evaluate_rate(const DecayChannel& ch, double t) { return ch.rate(t); }

inline const Operator& lamb_operator(const ModelSpec& m) {
  if (m.lamb_shift_operator) return *m.lamb_shift_operator;
  static const Operator two_level_default = excited_projector();
  if (m.dim != 2)
    throw DimensionMismatch("lamb shift operator required for dim != 2");
  return two_level_default;
}

// Non-Hermitian generator driving deterministic evolution between jumps:
//
//   H(t) = H_s + (S(t)/2) L - (i/2) sum_j Delta_j(t) C_j+ C_j
//
// The anti-Hermitian part shrinks the norm when rates are positive and
// grows it when rates are negative.
inline Operator effective_hamiltonian(const ModelSpec& m, double t) {
  Operator h = m.hamiltonian;
  if (m.lamb_shift) {
    double s = (*m.lamb_shift)(t);
    if (s != 0.0) h += complexd(0.5 * s, 0.0) * lamb_operator(m);
  }
  for (const DecayChannel& ch : m.channels) {
    double rate = ch.rate(t);
    if (rate == 0.0) continue;
    h += complexd(0.0, -0.5 * rate) * (adjoint(ch.op) * ch.op);
  }
  return h;
}

// Decaying two-level atom: H_s = 0, single sigma_minus channel.
inline ModelSpec build_two_level_model(RateFunction delta,
                                       std::optional<RateFunction> lamb,
                                       StateVector initial) {
  ModelSpec m;
  m.dim = 2;
  m.hamiltonian = Operator(2);
  m.lamb_shift = std::move(lamb);
  m.channels.push_back(DecayChannel{sigma_minus(), std::move(delta), "decay"});
  m.initial_state = std::move(initial);
  return m;
}

// Returns human-readable diagnostics; empty means the model is usable.
inline std::vector<std::string> validate(const ModelSpec& m) {
  std::vector<std::string> out;
  if (m.dim == 0) {
    out.push_back("model dimension is zero");
    return out;
  }
  if (m.hamiltonian.dim() != m.dim) out.push_back("hamiltonian dimension mismatch");
  else if (m.hamiltonian.hermiticity_error() > 1e-12) out.push_back("hamiltonian not Hermitian");
  if (m.lamb_shift) {
    if (!m.lamb_shift_operator && m.dim != 2)
      out.push_back("lamb shift operator required for dim != 2");
    if (m.lamb_shift_operator) {
      if (m.lamb_shift_operator->dim() != m.dim)
        out.push_back("lamb shift operator dimension mismatch");
      else if (m.lamb_shift_operator->hermiticity_error() > 1e-12)
        out.push_back("lamb shift operator not Hermitian");
    }
  }
  if (m.channels.empty()) out.push_back("model has no decay channels");
  for (std::size_t j = 0; j < m.channels.size(); ++j) {
    if (m.channels[j].op.dim() != m.dim)
      out.push_back("channel '" + m.channels[j].label + "' operator dimension mismatch");
  }
  if (m.initial_state.dim() != m.dim) out.push_back("initial state dimension mismatch");
  return out;
}

}  // namespace nmqj

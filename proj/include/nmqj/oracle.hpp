#pragma once

// Deterministic references the stochastic engine is checked against:
//  - a direct RK4 integrator for the time-local master equation,
//  - closed forms for the decaying two-level atom,
//  - a comparator with a statistical error bound.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "rates.hpp"

namespace nmqj {

// d(rho)/dt = -i [H_s + (S/2) L, rho]
//             + sum_j Delta_j (C_j rho C_j+ - 1/2 {C_j+ C_j, rho})
inline Operator master_equation_rhs(const ModelSpec& m, double t, const Operator& rho) {
  const complexd mi(0.0, -1.0);
  Operator h = m.hamiltonian;
  if (m.lamb_shift) {
    double s = (*m.lamb_shift)(t);
    if (s != 0.0) h += complexd(0.5 * s, 0.0) * lamb_operator(m);
  }
  Operator out = mi * (h * rho - rho * h);
  for (const DecayChannel& ch : m.channels) {
    double rate = ch.rate(t);
    if (rate == 0.0) continue;
    Operator cdc = adjoint(ch.op) * ch.op;
    Operator gain = ch.op * rho * adjoint(ch.op);
    Operator loss = complexd(0.5, 0.0) * (cdc * rho + rho * cdc);
    out += complexd(rate, 0.0) * (gain - loss);
  }
  return out;
}

struct OracleSolution {
  std::vector<double> grid;
  std::vector<DensityMatrix> densities;

  double observable(std::size_t grid_index, const Operator& obs) const {
    return trace_product(densities[grid_index].matrix(), obs).real();
  }
};

namespace detail {

// Union of all rate kinks strictly inside (t0, t1), sorted.
inline std::vector<double> model_kinks(const ModelSpec& m, double t0, double t1) {
  std::vector<double> ks;
  for (const DecayChannel& ch : m.channels) {
    std::vector<double> k = ch.rate.kinks_in(t0, t1);
    ks.insert(ks.end(), k.begin(), k.end());
  }
  if (m.lamb_shift) {
    std::vector<double> k = m.lamb_shift->kinks_in(t0, t1);
    ks.insert(ks.end(), k.begin(), k.end());
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

// rate_t_cap: latest time at which stage rates may be sampled. Substeps are
// split at rate kinks, and a right-continuous rate evaluated exactly at the
// segment's right edge would read the next segment's value; capping the final
// stage just inside the segment keeps the coefficients smooth across the step.
inline void rk4_density_step(const ModelSpec& m, double t, double h, double rate_t_cap,
                             Operator& rho) {
  double t_mid = std::min(t + 0.5 * h, rate_t_cap);
  double t_end = std::min(t + h, rate_t_cap);
  Operator k1 = master_equation_rhs(m, t, rho);
  Operator k2 = master_equation_rhs(m, t_mid, rho + complexd(0.5 * h, 0.0) * k1);
  Operator k3 = master_equation_rhs(m, t_mid, rho + complexd(0.5 * h, 0.0) * k2);
  Operator k4 = master_equation_rhs(m, t_end, rho + complexd(h, 0.0) * k3);
  rho += complexd(h / 6.0, 0.0) * (k1 + k2 * complexd(2.0, 0.0) + k3 * complexd(2.0, 0.0) + k4);
  // Re-Hermitize: the exact flow preserves rho = rho+, keep the numerics on
  // that manifold so eigenvalue checks see integration error, not drift.
  for (std::size_t r = 0; r < rho.dim(); ++r) {
    rho.at(r, r) = complexd(rho.at(r, r).real(), 0.0);
    for (std::size_t c = r + 1; c < rho.dim(); ++c) {
      complexd avg = 0.5 * (rho.at(r, c) + std::conj(rho.at(c, r)));
      rho.at(r, c) = avg;
      rho.at(c, r) = std::conj(avg);
    }
  }
}

inline std::vector<Operator> integrate_density_once(const ModelSpec& m,
                                                    std::span<const double> grid,
                                                    double max_h) {
  Operator rho = DensityMatrix::pure(m.initial_state).matrix();
  std::vector<Operator> out;
  out.reserve(grid.size());
  out.push_back(rho);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    double a = grid[i];
    double b = grid[i + 1];
    std::vector<double> cuts = model_kinks(m, a, b);
    cuts.push_back(b);
    double left = a;
    for (double right : cuts) {
      double len = right - left;
      if (len <= 0.0) { left = right; continue; }
      auto n = static_cast<std::size_t>(std::ceil(len / max_h));
      double h = len / static_cast<double>(n);
      double rate_t_cap = right - 1e-12 * len;
      for (std::size_t k = 0; k < n; ++k) rk4_density_step(m, left + k * h, h, rate_t_cap, rho);
      left = right;
    }
    out.push_back(rho);
  }
  return out;
}

}  // namespace detail

// Integrate the master equation across `grid` (ascending, grid[0] is the
// initial time). Substeps split at rate kinks and are refined by halving
// until another halving changes no matrix entry at any grid point by
// 1e-8 or more.
inline OracleSolution integrate_master_equation(const ModelSpec& m,
                                                std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("integrate_master_equation: empty grid");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i] < grid[i + 1]))
      throw std::invalid_argument("integrate_master_equation: grid not ascending");
  std::vector<std::string> diags = validate(m);
  if (!diags.empty()) throw Error("integrate_master_equation: " + diags.front());

  double span_t = grid.back() - grid.front();
  double max_h = std::min(0.05, span_t > 0.0 ? span_t : 0.05);
  std::vector<Operator> sol = detail::integrate_density_once(m, grid, max_h);
  for (int iter = 0; iter < 24; ++iter) {
    std::vector<Operator> fine = detail::integrate_density_once(m, grid, 0.5 * max_h);
    double diff = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      for (std::size_t idx = 0; idx < sol[g].entries().size(); ++idx)
        diff = std::max(diff, std::abs(sol[g].entries()[idx] - fine[g].entries()[idx]));
    }
    sol = std::move(fine);
    max_h *= 0.5;
    if (diff < 1e-8) break;
  }

  OracleSolution out;
  out.grid.assign(grid.begin(), grid.end());
  out.densities.reserve(sol.size());
  for (Operator& rho : sol) out.densities.push_back(DensityMatrix(std::move(rho)));
  return out;
}

// Definite integral of a rate over [t0, t1]: composite Gauss quadrature on
// each smooth piece, panels doubled until the piece stabilizes to 1e-12 or
// better. Exact (up to rounding) for constant and piecewise-linear rates.
inline double integrate_rate(const RateFunction& r, double t0, double t1) {
  if (!(t0 <= t1)) throw std::invalid_argument("integrate_rate: t0 > t1");
  if (t0 == t1) return 0.0;
  std::vector<double> cuts = r.kinks_in(t0, t1);
  cuts.push_back(t1);
  double total = 0.0;
  double left = t0;
  for (double right : cuts) {
    double len = right - left;
    if (len <= 0.0) { left = right; continue; }
    // Two-point Gauss per panel: same order as Simpson but never samples the
    // segment endpoints, which for a right-continuous rate would read the
    // neighbouring segment's value at an interior kink.
    auto gauss = [&](std::size_t panels) {
      double h = len / static_cast<double>(panels);
      double off = 0.5 * h / std::sqrt(3.0);
      double s = 0.0;
      for (std::size_t k = 0; k < panels; ++k) {
        double mid = left + (static_cast<double>(k) + 0.5) * h;
        s += r(mid - off) + r(mid + off);
      }
      return s * h / 2.0;
    };
    std::size_t n = 4;
    double prev = gauss(n);
    for (int iter = 0; iter < 16; ++iter) {
      n *= 2;
      double cur = gauss(n);
      double change = std::abs(cur - prev);
      prev = cur;
      if (change < 1e-12 * std::max(1.0, std::abs(cur))) break;
    }
    total += prev;
    left = right;
  }
  return total;
}

// Closed form for the two-level atom with H_s = 0 and a single sigma_minus
// channel. With G(t) = int_0^t Delta and Phi(t) = int_0^t S:
//   rho_ee(t) = rho_ee(0) exp(-G)
//   rho_eg(t) = rho_eg(0) exp(-G/2) exp(-i Phi/2)
// and the trace is carried by rho_gg. Basis: index 0 = |g>, 1 = |e>.
inline DensityMatrix analytic_two_level(const RateFunction& delta,
                                        const std::optional<RateFunction>& lamb,
                                        const DensityMatrix& rho0, double t) {
  if (rho0.dim() != 2) throw DimensionMismatch("analytic_two_level: need a 2x2 density");
  double big_gamma = integrate_rate(delta, 0.0, t);
  double phi = lamb ? integrate_rate(*lamb, 0.0, t) : 0.0;
  double decay = std::exp(-big_gamma);
  complexd coh = std::polar(std::exp(-0.5 * big_gamma), -0.5 * phi);
  Operator rho(2);
  complexd ee0 = rho0.at(1, 1);
  rho.at(1, 1) = ee0 * decay;
  rho.at(0, 0) = rho0.at(0, 0) + ee0 * (1.0 - decay);
  rho.at(1, 0) = rho0.at(1, 0) * coh;
  rho.at(0, 1) = std::conj(rho.at(1, 0));
  return DensityMatrix(std::move(rho));
}

struct CompareRow {
  double t;
  double mc_value;
  double oracle_value;
  double abs_error;
  double bound;  // 5 sigma statistical allowance for the MC mean
};

struct CompareReport {
  std::vector<CompareRow> rows;
  double max_error = 0.0;
  std::size_t n_exceedances = 0;  // rows with abs_error > bound

  bool passed() const { return n_exceedances == 0; }
};

// Check a Monte Carlo observable series against the oracle. The allowance
// per point is 5 sqrt(v(t) / N) where v(t) is the population variance of
// the per-member observable; a correct engine stays inside it for all but
// ~3e-7 of points. Grids must match exactly.
inline CompareReport compare_to_oracle(std::span<const double> grid,
                                       std::span<const double> mc_values,
                                       std::span<const double> mc_member_variance,
                                       std::int64_t n_members,
                                       const OracleSolution& oracle, const Operator& obs) {
  if (grid.size() != mc_values.size() || grid.size() != mc_member_variance.size())
    throw std::invalid_argument("compare_to_oracle: series length mismatch");
  if (oracle.grid.size() != grid.size())
    throw std::invalid_argument("compare_to_oracle: grid mismatch against oracle");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(grid[i] - oracle.grid[i]) > 1e-12)
      throw std::invalid_argument("compare_to_oracle: grid mismatch against oracle");
  if (n_members < 1) throw std::invalid_argument("compare_to_oracle: n_members < 1");

  CompareReport rep;
  rep.rows.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double ov = oracle.observable(i, obs);
    double err = std::abs(mc_values[i] - ov);
    // The oracle itself is only integrated to ~1e-8, so the statistical
    // allowance gets that floor; without it a zero-variance point (e.g.
    // t = 0) would flag pure rounding noise.
    double bound = 5.0 * std::sqrt(std::max(0.0, mc_member_variance[i]) /
                                   static_cast<double>(n_members)) +
                   1e-8;
    rep.rows.push_back(CompareRow{grid[i], mc_values[i], ov, err, bound});
    rep.max_error = std::max(rep.max_error, err);
    if (err > bound) ++rep.n_exceedances;
  }
  return rep;
}

}  // namespace nmqj

#include "nmqj/linalg.hpp"

#include <random>

#include "gtest/gtest.h"

using namespace nmqj;

namespace {

StateVector random_state(std::mt19937_64 &rng, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<complexd> amps(dim);
  for (auto &a : amps) a = complexd(g(rng), g(rng));
  return StateVector::normalized(std::move(amps));
}

Operator random_hermitian(std::mt19937_64 &rng, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  Operator m(dim);
  for (std::size_t r = 0; r < dim; ++r) {
    m.at(r, r) = g(rng);
    for (std::size_t c = r + 1; c < dim; ++c) {
      m.at(r, c) = complexd(g(rng), g(rng));
      m.at(c, r) = std::conj(m.at(r, c));
    }
  }
  return m;
}

}  // namespace

TEST(state_vector, construction_and_validation) {
  StateVector g = StateVector::basis_state(2, 0);
  EXPECT_EQ(g.dim(), 2u);
  EXPECT_EQ(g[0], complexd(1.0, 0.0));
  EXPECT_EQ(g[1], complexd(0.0, 0.0));

  EXPECT_THROW(StateVector::basis_state(2, 2), std::invalid_argument);
  EXPECT_THROW(StateVector::from_amplitudes({}), std::invalid_argument);
  EXPECT_THROW(StateVector::from_amplitudes({complexd(0.7, 0.0), complexd(0.3, 0.0)}),
               std::invalid_argument);
  EXPECT_THROW(StateVector::normalized({complexd(0.0, 0.0), complexd(0.0, 0.0)}),
               StateAnnihilated);

  StateVector s = StateVector::normalized({complexd(3.0, 0.0), complexd(4.0, 0.0)});
  EXPECT_NEAR(s[0].real(), 0.6, 1e-15);
  EXPECT_NEAR(s[1].real(), 0.8, 1e-15);
  EXPECT_NEAR(norm_sq(s.amplitudes()), 1.0, 1e-15);
}

TEST(apply, identity_and_lowering) {
  Operator id = Operator::identity(2);
  StateVector e = StateVector::basis_state(2, 1);
  auto out = apply(id, e);
  EXPECT_EQ(out[0], complexd(0.0, 0.0));
  EXPECT_EQ(out[1], complexd(1.0, 0.0));

  Operator low(2);
  low.at(0, 1) = 1.0;  // |g><e|
  out = apply(low, e);
  EXPECT_EQ(out[0], complexd(1.0, 0.0));
  EXPECT_EQ(out[1], complexd(0.0, 0.0));

  // Lowering the ground state annihilates it outright.
  out = apply(low, StateVector::basis_state(2, 0));
  EXPECT_EQ(norm_sq(out), 0.0);

  EXPECT_THROW(nmqj::apply(Operator::identity(3), e.amplitudes()), DimensionMismatch);
}

TEST(apply, linearity_on_random_input) {
  std::mt19937_64 rng(12345);
  for (int trial = 0; trial < 20; ++trial) {
    Operator m = random_hermitian(rng, 4);
    StateVector u = random_state(rng, 4);
    StateVector v = random_state(rng, 4);
    complexd a(0.3, -0.8), b(-1.1, 0.2);

    std::vector<complexd> combo(4);
    for (std::size_t i = 0; i < 4; ++i) combo[i] = a * u[i] + b * v[i];
    auto lhs = nmqj::apply(m, combo);
    auto mu = apply(m, u);
    auto mv = apply(m, v);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(std::abs(lhs[i] - (a * mu[i] + b * mv[i])), 0.0, 1e-12);
    }
  }
}

TEST(adjoint, involution_and_product_rule) {
  std::mt19937_64 rng(777);
  std::normal_distribution<double> g(0.0, 1.0);
  Operator m(3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) m.at(r, c) = complexd(g(rng), g(rng));

  Operator mdd = adjoint(adjoint(m));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(mdd.at(r, c), m.at(r, c));

  Operator n(3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) n.at(r, c) = complexd(g(rng), g(rng));
  Operator lhs = adjoint(m * n);
  Operator rhs = adjoint(n) * adjoint(m);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_NEAR(std::abs(lhs.at(r, c) - rhs.at(r, c)), 0.0, 1e-12);
}

TEST(expectation, projector_values) {
  Operator pe(2);
  pe.at(1, 1) = 1.0;
  EXPECT_NEAR(expectation(StateVector::basis_state(2, 1), pe).real(), 1.0, 1e-15);
  EXPECT_NEAR(expectation(StateVector::basis_state(2, 0), pe).real(), 0.0, 1e-15);

  double r = 1.0 / std::sqrt(2.0);
  StateVector plus = StateVector::from_amplitudes({complexd(r, 0.0), complexd(r, 0.0)});
  EXPECT_NEAR(expectation(plus, pe).real(), 0.5, 1e-15);
}

TEST(expectation, real_for_hermitian_observables) {
  std::mt19937_64 rng(999);
  for (int trial = 0; trial < 25; ++trial) {
    Operator m = random_hermitian(rng, 5);
    StateVector psi = random_state(rng, 5);
    EXPECT_LE(std::abs(expectation(psi, m).imag()), 1e-12);
  }
}

TEST(overlap_fidelity, endpoints_and_phase_invariance) {
  StateVector g = StateVector::basis_state(2, 0);
  StateVector e = StateVector::basis_state(2, 1);
  EXPECT_NEAR(overlap_fidelity(g, g), 1.0, 1e-15);
  EXPECT_NEAR(overlap_fidelity(g, e), 0.0, 1e-15);

  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> ph(0.0, 6.283);
  for (int trial = 0; trial < 20; ++trial) {
    StateVector u = random_state(rng, 3);
    StateVector v = random_state(rng, 3);
    EXPECT_NEAR(overlap_fidelity(u, v), overlap_fidelity(v, u), 1e-14);

    complexd z = std::polar(1.0, ph(rng));
    std::vector<complexd> rotated(u.amplitudes().begin(), u.amplitudes().end());
    for (auto &a : rotated) a *= z;
    StateVector u2 = StateVector::from_amplitudes(std::move(rotated));
    EXPECT_NEAR(overlap_fidelity(u2, v), overlap_fidelity(u, v), 1e-13);
  }
}

TEST(trace_product, matches_explicit_product) {
  std::mt19937_64 rng(31);
  Operator a = random_hermitian(rng, 4);
  Operator b = random_hermitian(rng, 4);
  EXPECT_NEAR(std::abs(trace_product(a, b) - (a * b).trace()), 0.0, 1e-12);
}

TEST(hermitian_eigenvalues, pauli_x_spectrum) {
  Operator sx(2);
  sx.at(0, 1) = 1.0;
  sx.at(1, 0) = 1.0;
  auto eig = hermitian_eigenvalues(sx);
  ASSERT_EQ(eig.size(), 2u);
  EXPECT_NEAR(eig[0], -1.0, 1e-12);
  EXPECT_NEAR(eig[1], 1.0, 1e-12);
}

TEST(hermitian_eigenvalues, trace_invariants_on_random_matrices) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 15; ++trial) {
    std::size_t d = 2 + static_cast<std::size_t>(trial % 5);
    Operator m = random_hermitian(rng, d);
    auto eig = hermitian_eigenvalues(m);
    ASSERT_EQ(eig.size(), d);
    for (std::size_t i = 1; i < d; ++i) EXPECT_LE(eig[i - 1], eig[i]);

    double tr1 = 0.0, tr2 = 0.0;
    for (double v : eig) {
      tr1 += v;
      tr2 += v * v;
    }
    EXPECT_NEAR(tr1, m.trace().real(), 1e-10);
    EXPECT_NEAR(tr2, trace_product(m, m).real(), 1e-9);
  }
}

TEST(density_matrix, pure_states_pass_checks) {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    DensityMatrix rho = DensityMatrix::pure(random_state(rng, 4));
    EXPECT_NEAR(rho.trace().real(), 1.0, 1e-14);
    EXPECT_LE(rho.hermiticity_error(), 1e-14);
    EXPECT_GE(rho.min_eigenvalue(), -1e-12);
    EXPECT_TRUE(rho.check().empty());
  }
}

TEST(density_matrix, check_reports_defects) {
  Operator bad(2);
  bad.at(0, 0) = 0.6;
  bad.at(1, 1) = 0.6;  // trace 1.2
  bad.at(0, 1) = complexd(0.0, 0.3);
  bad.at(1, 0) = complexd(0.0, 0.3);  // not Hermitian
  auto problems = DensityMatrix(bad).check();
  EXPECT_EQ(problems.size(), 2u);

  Operator neg(2);
  neg.at(0, 0) = 1.5;
  neg.at(1, 1) = -0.5;  // trace 1 but indefinite
  auto p2 = DensityMatrix(neg).check();
  ASSERT_EQ(p2.size(), 1u);
  EXPECT_EQ(p2[0], "density matrix not positive semidefinite");
}

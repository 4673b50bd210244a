#include "nmqj/ensemble.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "nmqj/model.hpp"

using namespace nmqj;

TEST(ensemble, pure_initial_state) {
  Ensemble e = Ensemble::pure(equal_superposition(), 1000);
  EXPECT_EQ(e.total(), 1000);
  EXPECT_EQ(e.time(), 0.0);
  ASSERT_EQ(e.entries().size(), 1u);
  EXPECT_EQ(e.entries()[0].id, 0);
  EXPECT_EQ(e.entries()[0].count, 1000);
  EXPECT_EQ(e.n_eff(), 1);
  e.check_conservation();

  EXPECT_THROW(Ensemble::pure(ground_state(), 0), std::invalid_argument);
}

TEST(ensemble, mixture_density_and_expectations) {
  // 3/8 of the members in |e>, 5/8 in |g>:
  //   rho = diag(5/8, 3/8), <P_e> = 3/8.
  Ensemble e = Ensemble::pure(excited_state(), 8000);
  int gid = e.find_or_insert(ground_state());
  e.transfer_count(0, gid, 5000);

  EXPECT_EQ(e.n_eff(), 2);
  EXPECT_NEAR(e.expectation_value(excited_projector()).real(), 3.0 / 8.0, 1e-15);
  EXPECT_NEAR(e.expectation_value(Operator::identity(2)).real(), 1.0, 1e-15);

  DensityMatrix rho = e.assemble_density();
  EXPECT_NEAR(rho.at(0, 0).real(), 5.0 / 8.0, 1e-15);
  EXPECT_NEAR(rho.at(1, 1).real(), 3.0 / 8.0, 1e-15);
  EXPECT_NEAR(std::abs(rho.at(0, 1)), 0.0, 1e-15);
  EXPECT_TRUE(rho.check().empty());

  // Variance of a two-point distribution: p(1-p) for P_e.
  double p = 3.0 / 8.0;
  EXPECT_NEAR(e.member_variance(excited_projector()), p * (1.0 - p), 1e-14);
}

TEST(ensemble, expectation_matches_density_trace) {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g(0.0, 1.0);
  Ensemble e = Ensemble::pure(StateVector::basis_state(3, 0), 100);
  auto insert_random = [&] {
    std::vector<complexd> amps(3);
    for (auto &a : amps) a = complexd(g(rng), g(rng));
    return e.find_or_insert(StateVector::normalized(std::move(amps)));
  };
  e.transfer_count(0, insert_random(), 30);
  e.transfer_count(0, insert_random(), 25);

  Operator obs(3);
  for (std::size_t r = 0; r < 3; ++r) {
    obs.at(r, r) = g(rng);
    for (std::size_t c = r + 1; c < 3; ++c) {
      obs.at(r, c) = complexd(g(rng), g(rng));
      obs.at(c, r) = std::conj(obs.at(r, c));
    }
  }
  complexd via_entries = e.expectation_value(obs);
  complexd via_rho = trace_product(e.assemble_density().matrix(), obs);
  EXPECT_NEAR(std::abs(via_entries - via_rho), 0.0, 1e-12);
}

TEST(ensemble, dedup_ignores_global_phase) {
  Ensemble e = Ensemble::pure(equal_superposition(), 10);
  double r = 1.0 / std::sqrt(2.0);
  complexd z = std::polar(1.0, 1.234);
  StateVector rotated = StateVector::from_amplitudes({z * r, z * r});
  EXPECT_EQ(e.find(rotated), 0);
  EXPECT_EQ(e.find_or_insert(rotated), 0);
  EXPECT_EQ(e.entries().size(), 1u);
}

TEST(ensemble, distinct_states_get_fresh_ids) {
  Ensemble e = Ensemble::pure(equal_superposition(), 10);
  EXPECT_EQ(e.find(ground_state()), -1);
  int gid = e.find_or_insert(ground_state());
  EXPECT_EQ(gid, 1);
  EXPECT_EQ(e.entry(gid).count, 0);
  EXPECT_EQ(e.n_eff(), 1);  // count-0 entries are not populated

  int eid = e.find_or_insert(excited_state());
  EXPECT_EQ(eid, 2);
  ASSERT_EQ(e.entries().size(), 3u);
  EXPECT_EQ(e.entries()[1].id, 1);
  EXPECT_EQ(e.entries()[2].id, 2);
}

TEST(ensemble, merge_threshold_is_strict) {
  // A state whose fidelity against the resident entry is just BELOW the
  // threshold must not merge; nudge the superposition until that happens.
  Ensemble e = Ensemble::pure(equal_superposition(), 10);
  double eps = 2e-5;  // fidelity deficit ~ eps^2 / something near 1e-10
  for (;; eps *= 1.5) {
    StateVector nudged = StateVector::normalized(
        {complexd(1.0 / std::sqrt(2.0) + eps, 0.0), complexd(1.0 / std::sqrt(2.0) - eps, 0.0)});
    double fid = overlap_fidelity(e.entries()[0].vector, nudged);
    if (fid > 1.0 - Ensemble::kMergeTol) continue;
    EXPECT_EQ(e.find(nudged), -1);
    break;
  }
}

TEST(ensemble, transfer_count_moves_members) {
  Ensemble e = Ensemble::pure(excited_state(), 10);
  int gid = e.find_or_insert(ground_state());
  e.transfer_count(0, gid, 3);
  EXPECT_EQ(e.entry(0).count, 7);
  EXPECT_EQ(e.entry(gid).count, 3);
  e.check_conservation();

  e.transfer_count(0, gid, 7);
  EXPECT_EQ(e.entry(0).count, 0);
  EXPECT_EQ(e.n_eff(), 1);
  e.purge_zero_counts();
  ASSERT_EQ(e.entries().size(), 1u);
  EXPECT_EQ(e.entries()[0].id, gid);
  e.check_conservation();

  EXPECT_THROW(e.transfer_count(gid, gid, 1), std::invalid_argument);
  EXPECT_THROW(e.transfer_count(gid, 0, 1), std::invalid_argument);  // 0 purged
}

TEST(ensemble, transfer_count_bounds) {
  Ensemble e = Ensemble::pure(excited_state(), 10);
  int gid = e.find_or_insert(ground_state());
  EXPECT_THROW(e.transfer_count(0, gid, 0), std::invalid_argument);
  EXPECT_THROW(e.transfer_count(0, gid, 11), std::invalid_argument);
  EXPECT_THROW(e.transfer_count(gid, 0, 1), std::invalid_argument);  // empty source
}

TEST(ensemble, replace_vector_advances_without_touching_counts) {
  Ensemble e = Ensemble::pure(excited_state(), 10);
  e.replace_vector(0, ground_state());
  EXPECT_EQ(e.entry(0).count, 10);
  EXPECT_NEAR(e.expectation_value(excited_projector()).real(), 0.0, 1e-15);
}

TEST(ensemble, conservation_check_catches_bad_totals) {
  Ensemble e = Ensemble::pure(excited_state(), 10);
  int gid = e.find_or_insert(ground_state());
  e.transfer_count(0, gid, 4);
  e.check_conservation();
  // There is no public way to corrupt counts; just confirm the check stays
  // quiet across a few more legal moves.
  e.transfer_count(gid, 0, 4);
  e.check_conservation();
  EXPECT_EQ(e.entry(0).count, 10);
}

TEST(ensemble, snapshot_captures_ids_counts_amplitudes) {
  Ensemble e = Ensemble::pure(equal_superposition(), 6);
  int gid = e.find_or_insert(ground_state());
  e.transfer_count(0, gid, 2);
  auto snap = e.snapshot();
  ASSERT_EQ(snap.size(), 2u);
  EXPECT_EQ(snap[0].id, 0);
  EXPECT_EQ(snap[0].count, 4);
  EXPECT_EQ(snap[1].id, gid);
  EXPECT_EQ(snap[1].count, 2);
  EXPECT_EQ(snap[1].amplitudes[0], complexd(1.0, 0.0));
}

#include "nmqj/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gtest/gtest.h"
#include "nmqj/config.hpp"
#include "nmqj/run.hpp"

using namespace nmqj;

namespace {

std::filesystem::path tmp_path(const std::string &name) {
  return std::filesystem::path(testing::TempDir()) / name;
}

std::string slurp(const std::filesystem::path &p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char *kMinimalConfig = R"({
  "model": {"type": "two_level", "delta": 1.0, "initial_state": "plus"},
  "n_members": 100,
  "seed": 5,
  "t_max": 0.5
})";

}  // namespace

TEST(doubles, shortest_round_trip_is_exact) {
  for (double v : {0.1, 1.0 / 3.0, 6.02e23, 1e-300, 3.141592653589793,
                   0.9500000000000001, -2.5e-7, 0.0, -17.25}) {
    std::string s = format_double(v);
    EXPECT_EQ(parse_double(s, "test"), v) << s;
  }
  EXPECT_THROW(parse_double("1.2.3", "ctx"), Error);
  EXPECT_THROW(parse_double("", "ctx"), Error);
  EXPECT_THROW(parse_double("12abc", "ctx"), Error);
}

TEST(timeseries_csv, round_trip_preserves_everything) {
  std::vector<std::string> names = {"P_e", "P_g"};
  std::vector<TimeSeriesRecord> records = {
      TimeSeriesRecord{0.0, {0.5, 0.5}, 1},
      TimeSeriesRecord{0.9500000000000001, {1.0 / 3.0, 2.0 / 3.0}, 2},
      TimeSeriesRecord{2.0, {1e-17, 1.0 - 1e-17}, 2},
  };
  auto path = tmp_path("ts_roundtrip.csv");
  write_timeseries_csv(path, names, records);
  auto [names2, records2] = read_timeseries_csv(path);
  EXPECT_EQ(names2, names);
  EXPECT_EQ(records2, records);

  auto first_line = slurp(path).substr(0, slurp(path).find('\n'));
  EXPECT_EQ(first_line, "t,P_e,P_g,n_eff");
}

TEST(timeseries_csv, rejects_malformed_input) {
  auto path = tmp_path("ts_bad.csv");
  {
    std::ofstream f(path, std::ios::binary);
    f << "time,P_e,n_eff\n0,0.5,1\n";
  }
  EXPECT_THROW(read_timeseries_csv(path), Error);
  {
    std::ofstream f(path, std::ios::binary);
    f << "t,P_e,n_eff\n0,0.5\n";
  }
  EXPECT_THROW(read_timeseries_csv(path), Error);
  EXPECT_THROW(read_timeseries_csv(tmp_path("does_not_exist.csv")), Error);
}

TEST(events_jsonl, round_trip_preserves_events) {
  std::vector<JumpEvent> events = {
      JumpEvent{0.25, "decay", JumpSign::positive, 0, 1, 37},
      JumpEvent{1.5, "decay", JumpSign::negative, 1, 0, 2},
  };
  auto path = tmp_path("events_roundtrip.jsonl");
  write_events_jsonl(path, events);
  EXPECT_EQ(read_events_jsonl(path), events);

  {
    std::ofstream f(path, std::ios::binary);
    f << "{not json\n";
  }
  EXPECT_THROW(read_events_jsonl(path), Error);
}

TEST(rate_table, loads_with_header_and_crlf) {
  auto path = tmp_path("rates.csv");
  {
    std::ofstream f(path, std::ios::binary);
    f << "t,delta\r\n0,1.5\r\n1,0.5\r\n2,-0.25\r\n";
  }
  RateFunction r = load_rate_table(path);
  EXPECT_NEAR(r(0.0), 1.5, 1e-15);
  EXPECT_NEAR(r(0.5), 1.0, 1e-15);
  EXPECT_NEAR(r(2.0), -0.25, 1e-15);

  {
    std::ofstream f(path, std::ios::binary);
    f << "0,1.0\n0,2.0\n";  // duplicate times
  }
  EXPECT_THROW(load_rate_table(path), Error);
  {
    std::ofstream f(path, std::ios::binary);
    f << "0,1.0,9\n1,2.0,9\n";
  }
  EXPECT_THROW(load_rate_table(path), Error);
}

TEST(config, minimal_two_level_defaults) {
  RunConfig cfg = parse_config(std::string(kMinimalConfig), ".");
  EXPECT_EQ(cfg.model.dim, 2u);
  EXPECT_EQ(cfg.n_members, 100);
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.t_max, 0.5);
  EXPECT_EQ(cfg.step.dt, 1e-3);
  EXPECT_EQ(cfg.step.order, IntegratorOrder::fourth);
  EXPECT_TRUE(cfg.policy.adaptive_dt);
  EXPECT_EQ(cfg.policy.orphans, OrphanPolicy::strict);
  ASSERT_EQ(cfg.observables.size(), 1u);
  EXPECT_EQ(cfg.observables[0].name, "P_e");
  EXPECT_FALSE(cfg.record_counts);
  EXPECT_FALSE(cfg.output.spacing.has_value());
  EXPECT_FALSE(cfg.output.times.has_value());
}

TEST(config, error_paths_name_the_field) {
  auto expect_config_error = [](const std::string &text, const std::string &needle) {
    try {
      parse_config(text, ".");
      FAIL() << "expected ConfigError containing '" << needle << "'";
    } catch (const ConfigError &e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };

  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "plus"}, "n_members": 100, "t_max": 1.0})",
                      "seed required");
  expect_config_error(R"({"n_members": 1, "seed": 1, "t_max": 1.0})", "config.model");
  expect_config_error(R"({"model": {"type": "warp"}, "n_members": 1, "seed": 1,
    "t_max": 1.0})",
                      "model.type");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "x"}, "n_members": 1, "seed": 1, "t_max": 1.0})",
                      "initial_state");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 0, "seed": 1, "t_max": 1.0})",
                      "n_members");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 2.5, "seed": 1, "t_max": 1.0})",
                      "n_members");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 1, "seed": 1, "t_max": -2.0})",
                      "t_max");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 1, "seed": 1, "t_max": 1.0,
    "step": {"dt": 2.0}})",
                      "step.dt");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 1, "seed": 1, "t_max": 1.0,
    "step": {"order": "second"}})",
                      "step.order");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 1, "seed": 1, "t_max": 1.0,
    "output": {"spacing": 0.1, "times": [0.5]}})",
                      "output");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 1, "seed": 1, "t_max": 1.0,
    "output": {"times": [0.5, 0.2]}})",
                      "output.times");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 1, "seed": 1, "t_max": 1.0,
    "output": {"times": [0.5, 3.0]}})",
                      "output.times");
  expect_config_error(R"({"model": {"type": "two_level",
    "delta": {"type": "warp"}, "initial_state": "e"},
    "n_members": 1, "seed": 1, "t_max": 1.0})",
                      "model.delta");
  expect_config_error(R"({"model": {"type": "two_level",
    "delta": {"type": "tabulated", "times": [0, 0], "values": [1, 2]},
    "initial_state": "e"}, "n_members": 1, "seed": 1, "t_max": 1.0})",
                      "model.delta");
  expect_config_error(R"({"model": {"type": "custom", "dim": 3,
    "hamiltonian": [[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]]],
    "channels": [{"matrix": [[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]]],
                  "rate": 1.0}],
    "initial_state": [[1,0],[0,0],[0,0]],
    "n_members": 1}, "n_members": 1, "seed": 1, "t_max": 1.0})",
                      "observables");
  expect_config_error(R"({"model": {"type": "custom", "dim": 2,
    "hamiltonian": [[[0,0],[0,1]],[[0,0],[0,0]]],
    "channels": [{"matrix": [[[0,0],[1,0]],[[0,0],[0,0]]], "rate": 1.0}],
    "initial_state": [[1,0],[0,0]]},
    "n_members": 1, "seed": 1, "t_max": 1.0})",
                      "hamiltonian not Hermitian");
  expect_config_error(R"({"model": {"type": "two_level", "delta": 1.0,
    "initial_state": "e"}, "n_members": 1, "seed": 1, "t_max": 1.0,
    "engine": {"max_subdivisions": 17}})",
                      "max_subdivisions");
  expect_config_error("not json at all", "invalid JSON");
}

TEST(config, seed_override_and_custom_model) {
  RunConfig cfg = parse_config(std::string(kMinimalConfig), ".", 777);
  EXPECT_EQ(cfg.seed, 777u);

  std::string qutrit = R"({
    "model": {"type": "custom", "dim": 3,
      "hamiltonian": [[[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0]],[[0,0],[0,0],[2,0]]],
      "channels": [
        {"label": "upper", "matrix":
          [[[0,0],[0,0],[0,0]],[[0,0],[0,0],[1,0]],[[0,0],[0,0],[0,0]]], "rate": 1.0},
        {"matrix":
          [[[0,0],[1,0],[0,0]],[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]]], "rate": 0.5}
      ],
      "initial_state": [[0,0],[0,0],[1,0]]},
    "n_members": 50,
    "seed": 9,
    "t_max": 1.0,
    "observables": [{"name": "P_top",
      "matrix": [[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]],[[0,0],[0,0],[1,0]]]}],
    "engine": {"orphans": "permissive", "adaptive_dt": false, "max_subdivisions": 4},
    "record_counts": true
  })";
  RunConfig q = parse_config(qutrit, ".");
  EXPECT_EQ(q.model.dim, 3u);
  ASSERT_EQ(q.model.channels.size(), 2u);
  EXPECT_EQ(q.model.channels[0].label, "upper");
  EXPECT_EQ(q.model.channels[1].label, "channel1");
  EXPECT_EQ(q.policy.orphans, OrphanPolicy::permissive);
  EXPECT_FALSE(q.policy.adaptive_dt);
  EXPECT_EQ(q.policy.max_subdivisions, 4);
  EXPECT_TRUE(q.record_counts);
  ASSERT_EQ(q.observables.size(), 1u);
  EXPECT_EQ(q.observables[0].name, "P_top");
}

TEST(config, tabulated_rate_from_file_resolves_relative_paths) {
  auto dir = tmp_path("cfg_dir");
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "r.csv", std::ios::binary);
    f << "0,1\n5,1\n";
  }
  std::string text = R"({
    "model": {"type": "two_level",
      "delta": {"type": "tabulated", "file": "r.csv"},
      "initial_state": "e"},
    "n_members": 10, "seed": 1, "t_max": 1.0
  })";
  RunConfig cfg = parse_config(text, dir);
  EXPECT_NEAR(cfg.model.channels[0].rate(0.5), 1.0, 1e-15);

  auto file = dir / "full.json";
  {
    std::ofstream f(file, std::ios::binary);
    f << text;
  }
  RunConfig cfg2 = load_config(file);
  EXPECT_NEAR(cfg2.model.channels[0].rate(3.0), 1.0, 1e-15);
}

TEST(step_plan, lattice_and_output_snapping) {
  RunConfig cfg = parse_config(std::string(kMinimalConfig), ".");
  StepPlan plan = build_step_plan(cfg);  // t_max 0.5, dt 1e-3
  ASSERT_EQ(plan.lattice.size(), 501u);
  EXPECT_EQ(plan.lattice.front(), 0.0);
  EXPECT_EQ(plan.lattice.back(), 0.5);
  EXPECT_EQ(plan.output_indices.size(), 501u);  // default: every step

  RunConfig spaced = cfg;
  spaced.output.spacing = 0.05;
  StepPlan p2 = build_step_plan(spaced);
  ASSERT_EQ(p2.output_indices.size(), 11u);
  EXPECT_EQ(p2.output_indices.front(), 0u);
  EXPECT_EQ(p2.output_indices.back(), 500u);

  RunConfig timed = cfg;
  timed.output.times = std::vector<double>{0.0, 0.0503, 0.5};
  StepPlan p3 = build_step_plan(timed);
  ASSERT_EQ(p3.output_indices.size(), 3u);
  EXPECT_EQ(p3.output_indices[1], 50u);  // 0.0503 snaps to the nearest step

  // Non-divisible horizon: the last step is shortened to land on t_max.
  RunConfig odd = cfg;
  odd.t_max = 0.25;
  odd.step.dt = 0.1;
  StepPlan p4 = build_step_plan(odd);
  ASSERT_EQ(p4.lattice.size(), 4u);
  EXPECT_EQ(p4.lattice[2], 0.2);
  EXPECT_EQ(p4.lattice[3], 0.25);
}

TEST(run_ensemble, zero_rate_run_is_eventless_and_flat) {
  std::string text = R"({
    "model": {"type": "two_level", "delta": 0.0, "initial_state": "plus"},
    "n_members": 500, "seed": 3, "t_max": 0.1
  })";
  RunConfig cfg = parse_config(text, ".");
  EnsembleRunResult res = run_ensemble(cfg);
  EXPECT_TRUE(res.events.empty());
  EXPECT_EQ(res.summary.events_positive, 0);
  EXPECT_EQ(res.summary.peak_n_eff, 1);
  for (const TimeSeriesRecord &r : res.series) {
    EXPECT_NEAR(r.values[0], 0.5, 1e-12);
    EXPECT_EQ(r.n_eff, 1);
  }
}

TEST(run_ensemble, identical_seeds_write_identical_bytes) {
  std::string text = R"({
    "model": {"type": "two_level",
      "delta": {"type": "damped_oscillation", "amplitude": 1.0, "decay": 0.25,
                "frequency": 2.0},
      "initial_state": "plus"},
    "n_members": 2000, "seed": 21, "t_max": 0.2, "record_counts": true
  })";
  RunConfig cfg = parse_config(text, ".");
  auto write_all = [&](const std::string &tag) {
    EnsembleRunResult res = run_ensemble(cfg);
    write_timeseries_csv(tmp_path(tag + "_ts.csv"), res.observable_names, res.series);
    write_events_jsonl(tmp_path(tag + "_ev.jsonl"), res.events);
    write_counts_jsonl(tmp_path(tag + "_counts.jsonl"), res.counts);
    nlohmann::json sj = summary_to_json(res.summary);
    sj.erase("wall_ms");  // the only field allowed to differ between runs
    write_json(tmp_path(tag + "_summary.json"), sj);
  };
  write_all("detA");
  write_all("detB");
  EXPECT_EQ(slurp(tmp_path("detA_ts.csv")), slurp(tmp_path("detB_ts.csv")));
  EXPECT_EQ(slurp(tmp_path("detA_ev.jsonl")), slurp(tmp_path("detB_ev.jsonl")));
  EXPECT_EQ(slurp(tmp_path("detA_counts.jsonl")), slurp(tmp_path("detB_counts.jsonl")));
  EXPECT_EQ(slurp(tmp_path("detA_summary.json")), slurp(tmp_path("detB_summary.json")));
  EXPECT_GT(slurp(tmp_path("detA_ev.jsonl")).size(), 0u);
}

TEST(run_trajectory, tracked_member_statistics_recover_the_ensemble_mean) {
  // Averaging the tracked member's excited probability over many seeds must
  // reproduce rho_ee; here at t = 0.5 with unit rate from the superposition,
  // rho_ee = 0.5 e^{-0.5}.
  std::string text = R"({
    "model": {"type": "two_level", "delta": 1.0, "initial_state": "plus"},
    "n_members": 200, "seed": 1, "t_max": 0.5,
    "step": {"dt": 0.005},
    "output": {"times": [0.0, 0.5]}
  })";
  const int n_seeds = 100;
  double sum = 0.0;
  int jumped = 0;
  StepPlan plan = build_step_plan(parse_config(text, ".", 0));
  std::vector<StateVector> quiet;  // deterministic reference for jump-free members
  for (int s = 0; s < n_seeds; ++s) {
    RunConfig cfg = parse_config(text, ".", static_cast<std::uint64_t>(s));
    TrajectoryResult res = run_trajectory(cfg);
    ASSERT_EQ(res.basis_probabilities.size(), 2u);
    sum += res.basis_probabilities.back()[1];
    if (!res.tracked_events.empty()) {
      ++jumped;
    } else {
      if (quiet.empty()) quiet = no_jump_trajectory(cfg.model, plan.lattice, cfg.step.order);
      StateVector final_state = StateVector::from_amplitudes(res.tracked_amplitudes.back());
      EXPECT_GE(overlap_fidelity(final_state, quiet.back()), 1.0 - 1e-9);
    }
    for (const JumpEvent &ev : res.tracked_events) EXPECT_EQ(ev.members_moved, 1);
  }
  double mean = sum / n_seeds;
  EXPECT_NEAR(mean, 0.5 * std::exp(-0.5), 0.12);  // ~5 sigma for 100 seeds
  EXPECT_GT(jumped, 2);              // jump fraction ~20%, all-quiet is wildly unlikely
  EXPECT_LT(jumped, n_seeds);        // and some member must have stayed on the quiet curve
}

TEST(run_naive, agrees_with_compressed_engine_statistically) {
  std::string text = R"({
    "model": {"type": "two_level",
      "delta": {"type": "damped_oscillation", "amplitude": 1.0, "decay": 0.25,
                "frequency": 2.0},
      "initial_state": "plus"},
    "n_members": 20000, "seed": 31, "t_max": 0.5,
    "output": {"spacing": 0.1}
  })";
  RunConfig cfg = parse_config(text, ".");
  EnsembleRunResult fast = run_ensemble(cfg);
  NaiveRunResult slow = run_naive(cfg);
  ASSERT_EQ(fast.grid.size(), slow.grid.size());
  for (std::size_t i = 0; i < fast.grid.size(); ++i) {
    EXPECT_EQ(fast.grid[i], slow.grid[i]);
    // Two independent unbiased estimators of the same curve; 5 sigma of
    // their difference at N = 2e4 is under 0.018 for a [0,1] observable.
    EXPECT_NEAR(fast.series[i].values[0], slow.series[i].values[0], 0.02);
  }
  EXPECT_EQ(slow.peak_distinct, 2);

  RunConfig huge = cfg;
  huge.n_members = 2'000'000;
  EXPECT_THROW(run_naive(huge), std::invalid_argument);
}

TEST(run_bench_case, single_member_degenerate_case_works_in_both_engines) {
  std::string text = R"({
    "model": {"type": "two_level", "delta": 1.0, "initial_state": "plus"},
    "n_members": 1, "seed": 8, "t_max": 0.5,
    "output": {"spacing": 0.25}
  })";
  RunConfig cfg = parse_config(text, ".");
  BenchRow row = run_bench_case(cfg, "single");
  EXPECT_EQ(row.n_members, 1);
  EXPECT_GE(row.peak_n_eff, 1);
  EXPECT_GE(row.peak_distinct_naive, 1);
  // Same work on both sides; only asserting the ratio is not wildly off,
  // sub-millisecond timings are too noisy for anything tighter.
  EXPECT_GT(row.ratio, 0.0);
  EXPECT_LT(row.ratio, 100.0);
}

// nmqj command line: run | trajectory | oracle | compare | bench
//
// Every subcommand reads a JSON config (see README for the schema) and
// writes its results under --out. All randomness comes from the config
// seed (or --seed).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nmqj/nmqj.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> adaptive;  // "on" / "off"
  bool strict = false;
  bool permissive = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_seedable = true) {
  cmd->add_option("--config", opts.config, "JSON run configuration")->required();
  cmd->add_option("--out", opts.out, "output directory (default: out)");
  if (needs_seedable) {
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--adaptive-dt", opts.adaptive, "on|off: override adaptive step halving")
        ->check(CLI::IsMember({"on", "off"}));
    auto* s = cmd->add_flag("--strict", opts.strict,
                            "fail when a negative channel has no reverse-jump source");
    cmd->add_flag("--permissive", opts.permissive,
                  "warn instead of failing on orphaned negative channels")
        ->excludes(s);
  }
}

nmqj::RunConfig load(const CommonOpts& opts) {
  nmqj::RunConfig cfg = nmqj::load_config(opts.config, opts.seed);
  if (opts.strict) cfg.policy.orphans = nmqj::OrphanPolicy::strict;
  if (opts.permissive) cfg.policy.orphans = nmqj::OrphanPolicy::permissive;
  if (opts.adaptive) cfg.policy.adaptive_dt = (*opts.adaptive == "on");
  return cfg;
}

void write_run_outputs(const fs::path& dir, const nmqj::RunConfig& cfg,
                       const nmqj::EnsembleRunResult& res) {
  nmqj::write_timeseries_csv(dir / "timeseries.csv", res.observable_names, res.series);
  nmqj::write_events_jsonl(dir / "events.jsonl", res.events);
  nmqj::write_json(dir / "summary.json", nmqj::summary_to_json(res.summary));
  if (cfg.record_counts) nmqj::write_counts_jsonl(dir / "counts.jsonl", res.counts);
}

void print_summary(const nmqj::RunSummary& s) {
  std::cout << "N=" << s.n_members << " seed=" << s.seed << " t_max=" << s.t_max
            << " dt=" << s.dt << "\n"
            << "events: +" << s.events_positive << " / -" << s.events_negative
            << "  members moved: +" << s.members_moved_positive << " / -"
            << s.members_moved_negative << "\n"
            << "peak N_eff=" << s.peak_n_eff << "  final N_eff=" << s.final_n_eff
            << "  wall=" << s.wall_ms << " ms\n";
  for (const std::string& w : s.warnings) std::cout << "warning: " << w << "\n";
}

int cmd_run(const CommonOpts& opts) {
  nmqj::RunConfig cfg = load(opts);
  nmqj::EnsembleRunResult res = nmqj::run_ensemble(cfg);
  write_run_outputs(opts.out, cfg, res);
  print_summary(res.summary);
  std::cout << "wrote " << (fs::path(opts.out) / "timeseries.csv").string() << "\n";
  return 0;
}

int cmd_trajectory(const CommonOpts& opts) {
  nmqj::RunConfig cfg = load(opts);
  nmqj::TrajectoryResult res = nmqj::run_trajectory(cfg);
  fs::path dir = opts.out;
  write_run_outputs(dir, cfg, res.ensemble);

  // trajectory.csv: tracked member's per-basis probabilities + entry id
  std::ofstream f = nmqj::detail::open_out(dir / "trajectory.csv");
  std::size_t d = cfg.model.dim;
  f << "t";
  for (std::size_t b = 0; b < d; ++b) f << ",p_" << b;
  f << ",entry_id\n";
  for (std::size_t g = 0; g < res.grid.size(); ++g) {
    f << nmqj::format_double(res.grid[g]);
    for (std::size_t b = 0; b < d; ++b)
      f << ',' << nmqj::format_double(res.basis_probabilities[g][b]);
    f << ',' << res.tracked_entry_ids[g] << '\n';
  }
  nmqj::write_events_jsonl(dir / "tracked_events.jsonl", res.tracked_events);

  print_summary(res.ensemble.summary);
  std::cout << "tracked member: " << res.tracked_events.size() << " personal jump(s)\n";
  for (const nmqj::JumpEvent& ev : res.tracked_events)
    std::cout << "  t=" << ev.t << " " << nmqj::to_string(ev.sign) << " via '"
              << ev.channel_label << "' " << ev.source_id << " -> " << ev.target_id << "\n";
  return 0;
}

int cmd_oracle(const CommonOpts& opts) {
  nmqj::RunConfig cfg = nmqj::load_config(opts.config, std::uint64_t{0});
  nmqj::StepPlan plan = nmqj::build_step_plan(cfg);
  std::vector<double> grid;
  for (std::size_t idx : plan.output_indices) grid.push_back(plan.lattice[idx]);
  nmqj::OracleSolution sol = nmqj::integrate_master_equation(cfg.model, grid);

  std::vector<nmqj::TimeSeriesRecord> records;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    nmqj::TimeSeriesRecord r;
    r.t = grid[g];
    for (const nmqj::NamedObservable& o : cfg.observables)
      r.values.push_back(sol.observable(g, o.op));
    r.n_eff = 0;  // deterministic solution, no ensemble behind it
    records.push_back(std::move(r));
  }
  std::vector<std::string> names;
  for (const nmqj::NamedObservable& o : cfg.observables) names.push_back(o.name);
  nmqj::write_timeseries_csv(fs::path(opts.out) / "oracle.csv", names, records);
  std::cout << "wrote " << (fs::path(opts.out) / "oracle.csv").string() << " (" << records.size()
            << " rows)\n";
  return 0;
}

int cmd_compare(const CommonOpts& opts) {
  nmqj::RunConfig cfg = load(opts);
  nmqj::CompareRunResult res = nmqj::run_compare(cfg);
  fs::path dir = opts.out;
  write_run_outputs(dir, cfg, res.mc);

  std::vector<nmqj::TimeSeriesRecord> orecords;
  for (std::size_t g = 0; g < res.mc.grid.size(); ++g) {
    nmqj::TimeSeriesRecord r;
    r.t = res.mc.grid[g];
    for (const nmqj::NamedObservable& o : cfg.observables)
      r.values.push_back(res.oracle.observable(g, o.op));
    r.n_eff = 0;
    orecords.push_back(std::move(r));
  }
  nmqj::write_timeseries_csv(dir / "oracle.csv", res.mc.observable_names, orecords);

  nlohmann::json jreports = nlohmann::json::array();
  bool all_ok = true;
  for (std::size_t o = 0; o < res.reports.size(); ++o) {
    const nmqj::CompareReport& rep = res.reports[o];
    nlohmann::json rows = nlohmann::json::array();
    for (const nmqj::CompareRow& row : rep.rows)
      rows.push_back({{"t", row.t},
                      {"mc", row.mc_value},
                      {"oracle", row.oracle_value},
                      {"abs_error", row.abs_error},
                      {"bound", row.bound}});
    jreports.push_back({{"observable", res.mc.observable_names[o]},
                        {"max_error", rep.max_error},
                        {"n_exceedances", rep.n_exceedances},
                        {"passed", rep.passed()},
                        {"rows", rows}});
    std::cout << res.mc.observable_names[o] << ": max |MC - oracle| = " << rep.max_error
              << (rep.passed() ? " (within bound)" : " (EXCEEDS bound)") << "\n";
    all_ok = all_ok && rep.passed();
  }
  nmqj::write_json(dir / "compare.json", jreports);
  return all_ok ? 0 : 1;
}

int cmd_bench(const std::vector<std::string>& configs, const std::vector<std::int64_t>& ns,
              const std::string& out) {
  std::vector<nmqj::BenchRow> rows;
  for (const std::string& path : configs) {
    nmqj::RunConfig base = nmqj::load_config(path);
    std::vector<std::int64_t> sweep = ns.empty() ? std::vector<std::int64_t>{base.n_members} : ns;
    for (std::int64_t n : sweep) {
      nmqj::RunConfig cfg = base;
      cfg.n_members = n;
      std::string label = fs::path(path).stem().string() + "/N=" + std::to_string(n);
      rows.push_back(nmqj::run_bench_case(cfg, label));
      const nmqj::BenchRow& r = rows.back();
      std::cout << r.label << ": peak N_eff=" << r.peak_n_eff << " compressed=" << r.compressed_ms
                << " ms, naive=" << r.naive_ms << " ms, ratio=" << r.ratio << "\n";
    }
  }
  nmqj::write_json(fs::path(out) / "bench.json", nmqj::bench_to_json(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-Markovian quantum jump simulator"};
  app.require_subcommand(1);

  CommonOpts run_opts, traj_opts, oracle_opts, compare_opts;
  std::vector<std::string> bench_configs;
  std::vector<std::int64_t> bench_ns;
  std::string bench_out = "out";

  CLI::App* run = app.add_subcommand("run", "stochastic ensemble run");
  add_common(run, run_opts);
  CLI::App* traj = app.add_subcommand("trajectory", "ensemble run with one tracked member");
  add_common(traj, traj_opts);
  CLI::App* oracle = app.add_subcommand("oracle", "direct master-equation integration");
  add_common(oracle, oracle_opts, false);
  CLI::App* compare = app.add_subcommand("compare", "run both and report the error");
  add_common(compare, compare_opts);
  CLI::App* bench = app.add_subcommand("bench", "compressed vs naive per-member timing");
  bench->add_option("--config", bench_configs, "configs to benchmark")->required();
  bench->add_option("--n", bench_ns, "member counts to sweep (default: config value)");
  bench->add_option("--out", bench_out, "output directory (default: out)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_opts);
    if (traj->parsed()) return cmd_trajectory(traj_opts);
    if (oracle->parsed()) return cmd_oracle(oracle_opts);
    if (compare->parsed()) return cmd_compare(compare_opts);
    if (bench->parsed()) return cmd_bench(bench_configs, bench_ns, bench_out);
  } catch (const nmqj::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

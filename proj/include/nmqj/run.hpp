#pragma once

// Run orchestration: step lattice construction, observable recording,
// summaries, the tracked-member trajectory mode, oracle comparison, and
// the naive per-member benchmark engine.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "ensemble.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "jump_engine.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "oracle.hpp"
#include "propagator.hpp"
#include "rng.hpp"

namespace nmqj {

struct StepPlan {
  std::vector<double> lattice;              // t_0 = 0 ... t_M = t_max, spacing dt
  std::vector<std::size_t> output_indices;  // ascending indices into lattice
};

// Steps land on k*dt with the final step shortened to hit t_max exactly.
// Requested output times snap to the nearest lattice point.
inline StepPlan build_step_plan(const RunConfig& cfg) {
  StepPlan plan;
  const double dt = cfg.step.dt;
  const double eps = 1e-9 * std::max(1.0, cfg.t_max);
  auto steps = static_cast<std::size_t>(std::ceil(cfg.t_max / dt - 1e-9));
  plan.lattice.reserve(steps + 1);
  for (std::size_t k = 0; k < steps; ++k) plan.lattice.push_back(static_cast<double>(k) * dt);
  plan.lattice.push_back(cfg.t_max);

  auto snap = [&](double t) {
    auto idx = static_cast<std::size_t>(std::llround(t / dt));
    return std::min(idx, plan.lattice.size() - 1);
  };
  std::vector<std::size_t> idx;
  if (cfg.output.times) {
    for (double t : *cfg.output.times) idx.push_back(snap(t));
  } else if (cfg.output.spacing) {
    for (double t = 0.0; t <= cfg.t_max + eps; t += *cfg.output.spacing) idx.push_back(snap(t));
  } else {
    for (std::size_t k = 0; k < plan.lattice.size(); ++k) idx.push_back(k);
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  plan.output_indices = std::move(idx);
  return plan;
}

struct RunSummary {
  std::int64_t n_members = 0;
  std::uint64_t seed = 0;
  double t_max = 0.0;
  double dt = 0.0;
  std::string order;
  bool adaptive_dt = true;
  std::string orphans;
  std::int64_t events_positive = 0;
  std::int64_t events_negative = 0;
  std::int64_t members_moved_positive = 0;
  std::int64_t members_moved_negative = 0;
  int peak_n_eff = 0;
  int final_n_eff = 0;
  std::int64_t flagged_steps = 0;
  double min_dt_used = 0.0;
  double max_prob_seen = 0.0;
  std::vector<std::string> warnings;
  double wall_ms = 0.0;
};

inline nlohmann::json summary_to_json(const RunSummary& s) {
  return nlohmann::json{{"n_members", s.n_members},
                        {"seed", s.seed},
                        {"t_max", s.t_max},
                        {"dt", s.dt},
                        {"order", s.order},
                        {"adaptive_dt", s.adaptive_dt},
                        {"orphans", s.orphans},
                        {"events", {{"positive", s.events_positive}, {"negative", s.events_negative}}},
                        {"members_moved",
                         {{"positive", s.members_moved_positive},
                          {"negative", s.members_moved_negative}}},
                        {"peak_n_eff", s.peak_n_eff},
                        {"final_n_eff", s.final_n_eff},
                        {"flagged_steps", s.flagged_steps},
                        {"min_dt_used", s.min_dt_used},
                        {"max_prob_seen", s.max_prob_seen},
                        {"warnings", s.warnings},
                        {"wall_ms", s.wall_ms}};
}

struct CountsRecord {
  double t = 0.0;
  std::vector<std::pair<int, std::int64_t>> counts;  // (entry id, members)
};

inline void write_counts_jsonl(const std::filesystem::path& path,
                               const std::vector<CountsRecord>& records) {
  std::ofstream f = detail::open_out(path);
  for (const CountsRecord& r : records) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [id, count] : r.counts) entries.push_back({{"id", id}, {"count", count}});
    f << nlohmann::json{{"t", r.t}, {"entries", entries}}.dump() << '\n';
  }
}

struct EnsembleRunResult {
  std::vector<std::string> observable_names;
  std::vector<double> grid;
  std::vector<TimeSeriesRecord> series;
  std::vector<std::vector<double>> member_variance;  // [grid point][observable]
  std::vector<CountsRecord> counts;                  // populated when record_counts
  std::vector<JumpEvent> events;
  RunSummary summary;
};

inline EnsembleRunResult run_ensemble(const RunConfig& cfg, MemberTracker* tracker = nullptr,
                                      std::vector<std::vector<complexd>>* tracked_states = nullptr,
                                      std::vector<int>* tracked_ids = nullptr) {
  std::vector<std::string> diags = validate(cfg.model);
  if (!diags.empty()) throw ConfigError("model: " + diags.front());
  validate(cfg.step);

  StepPlan plan = build_step_plan(cfg);
  EnsembleRunResult res;
  for (const NamedObservable& o : cfg.observables) res.observable_names.push_back(o.name);

  Ensemble e = Ensemble::pure(cfg.model.initial_state, cfg.n_members);
  RngStreams streams(cfg.seed);

  RunSummary& s = res.summary;
  s.n_members = cfg.n_members;
  s.seed = cfg.seed;
  s.t_max = cfg.t_max;
  s.dt = cfg.step.dt;
  s.order = cfg.step.order == IntegratorOrder::fourth ? "fourth" : "first";
  s.adaptive_dt = cfg.policy.adaptive_dt;
  s.orphans = cfg.policy.orphans == OrphanPolicy::strict ? "strict" : "permissive";
  s.min_dt_used = cfg.step.dt;
  s.peak_n_eff = e.n_eff();

  auto record = [&](std::size_t lattice_index) {
    TimeSeriesRecord r;
    r.t = plan.lattice[lattice_index];
    std::vector<double> var;
    for (const NamedObservable& o : cfg.observables) {
      r.values.push_back(e.expectation_value(o.op).real());
      var.push_back(e.member_variance(o.op));
    }
    r.n_eff = e.n_eff();
    res.grid.push_back(r.t);
    res.series.push_back(std::move(r));
    res.member_variance.push_back(std::move(var));
    if (cfg.record_counts) {
      CountsRecord cr;
      cr.t = plan.lattice[lattice_index];
      for (const DistinctState& en : e.entries())
        if (en.count > 0) cr.counts.emplace_back(en.id, en.count);
      res.counts.push_back(std::move(cr));
    }
    if (tracker != nullptr && tracked_states != nullptr) {
      std::span<const complexd> amps = e.entry(tracker->current_id()).vector.amplitudes();
      tracked_states->emplace_back(amps.begin(), amps.end());
    }
    if (tracker != nullptr && tracked_ids != nullptr)
      tracked_ids->push_back(tracker->current_id());
  };

  std::size_t next_output = 0;
  auto maybe_record = [&](std::size_t lattice_index) {
    if (next_output < plan.output_indices.size() &&
        plan.output_indices[next_output] == lattice_index) {
      record(lattice_index);
      ++next_output;
    }
  };

  auto start = std::chrono::steady_clock::now();
  maybe_record(0);
  StepControl ctrl = cfg.step;
  for (std::size_t k = 0; k + 1 < plan.lattice.size(); ++k) {
    ctrl.dt = plan.lattice[k + 1] - plan.lattice[k];
    StepOutcome outcome = step_ensemble(e, cfg.model, ctrl, cfg.policy, streams,
                                        static_cast<std::uint64_t>(k), tracker);
    e.set_time(plan.lattice[k + 1]);
    for (const JumpEvent& ev : outcome.events) {
      if (ev.sign == JumpSign::positive) {
        ++s.events_positive;
        s.members_moved_positive += ev.members_moved;
      } else {
        ++s.events_negative;
        s.members_moved_negative += ev.members_moved;
      }
    }
    res.events.insert(res.events.end(), outcome.events.begin(), outcome.events.end());
    s.peak_n_eff = std::max(s.peak_n_eff, e.n_eff());
    s.min_dt_used = std::min(s.min_dt_used, outcome.dt_used);
    s.max_prob_seen = std::max(s.max_prob_seen, outcome.max_prob_seen);
    if (outcome.flagged) ++s.flagged_steps;
    for (const std::string& w : outcome.warnings)
      if (std::find(s.warnings.begin(), s.warnings.end(), w) == s.warnings.end())
        s.warnings.push_back(w);
    maybe_record(k + 1);
  }
  auto stop = std::chrono::steady_clock::now();
  s.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  s.final_n_eff = e.n_eff();
  return res;
}

struct TrajectoryResult {
  EnsembleRunResult ensemble;
  std::vector<double> grid;
  std::vector<std::vector<double>> basis_probabilities;  // [grid point][basis index]
  std::vector<std::vector<complexd>> tracked_amplitudes;
  std::vector<int> tracked_entry_ids;
  std::vector<JumpEvent> tracked_events;  // members_moved == 1 throughout
};

// One tracked member riding inside the full N-member compressed ensemble;
// reverse-jump probabilities need the whole ensemble's counts, so a lone
// trajectory would not be well defined.
inline TrajectoryResult run_trajectory(const RunConfig& cfg) {
  TrajectoryResult res;
  MemberTracker tracker(0);  // the initial ensemble has exactly one entry, id 0
  res.ensemble =
      run_ensemble(cfg, &tracker, &res.tracked_amplitudes, &res.tracked_entry_ids);
  res.grid = res.ensemble.grid;
  res.basis_probabilities.reserve(res.tracked_amplitudes.size());
  for (const std::vector<complexd>& amps : res.tracked_amplitudes) {
    std::vector<double> probs;
    probs.reserve(amps.size());
    for (const complexd& a : amps) probs.push_back(std::norm(a));
    res.basis_probabilities.push_back(std::move(probs));
  }
  res.tracked_events = tracker.events();
  return res;
}

struct CompareRunResult {
  EnsembleRunResult mc;
  OracleSolution oracle;
  std::vector<CompareReport> reports;  // one per observable
};

inline CompareRunResult run_compare(const RunConfig& cfg) {
  CompareRunResult res;
  res.mc = run_ensemble(cfg);
  res.oracle = integrate_master_equation(cfg.model, res.mc.grid);
  for (std::size_t o = 0; o < cfg.observables.size(); ++o) {
    std::vector<double> vals, var;
    vals.reserve(res.mc.series.size());
    var.reserve(res.mc.series.size());
    for (std::size_t g = 0; g < res.mc.series.size(); ++g) {
      vals.push_back(res.mc.series[g].values[o]);
      var.push_back(res.mc.member_variance[g][o]);
    }
    res.reports.push_back(compare_to_oracle(res.mc.grid, vals, var, cfg.n_members, res.oracle,
                                            cfg.observables[o].op));
  }
  return res;
}

// Naive baseline: every member stored and stepped individually, each making
// its own uniform draw against the same branch probabilities the compressed
// engine uses. Exists to measure what the count compression buys.
struct NaiveRunResult {
  std::vector<double> grid;
  std::vector<TimeSeriesRecord> series;
  int peak_distinct = 0;
  double wall_ms = 0.0;
};

inline NaiveRunResult run_naive(const RunConfig& cfg) {
  if (cfg.n_members > 1'000'000)
    throw std::invalid_argument("naive mode refuses N > 10^6; use the compressed engine");
  std::vector<std::string> diags = validate(cfg.model);
  if (!diags.empty()) throw ConfigError("model: " + diags.front());
  validate(cfg.step);

  StepPlan plan = build_step_plan(cfg);
  RngStreams streams(cfg.seed);
  NaiveRunResult res;

  // Classes carry the shared vectors; every member stores which class it is
  // in and is advanced/decided one by one.
  struct NaiveClass {
    StateVector vec;
    std::int64_t count = 0;
  };
  std::vector<NaiveClass> classes{NaiveClass{cfg.model.initial_state, cfg.n_members}};
  std::vector<std::int32_t> member_class(static_cast<std::size_t>(cfg.n_members), 0);
  res.peak_distinct = 1;

  auto record = [&](double t) {
    TimeSeriesRecord r;
    r.t = t;
    for (const NamedObservable& o : cfg.observables) {
      double sum = 0.0;
      for (const NaiveClass& c : classes)
        if (c.count > 0)
          sum += static_cast<double>(c.count) * expectation(c.vec, o.op).real();
      r.values.push_back(sum / static_cast<double>(cfg.n_members));
    }
    int live = 0;
    for (const NaiveClass& c : classes)
      if (c.count > 0) ++live;
    r.n_eff = live;
    res.grid.push_back(t);
    res.series.push_back(std::move(r));
  };

  std::size_t next_output = 0;
  auto maybe_record = [&](std::size_t lattice_index) {
    if (next_output < plan.output_indices.size() &&
        plan.output_indices[next_output] == lattice_index) {
      record(plan.lattice[lattice_index]);
      ++next_output;
    }
  };

  auto start = std::chrono::steady_clock::now();
  maybe_record(0);
  for (std::size_t k = 0; k + 1 < plan.lattice.size(); ++k) {
    const double t = plan.lattice[k];
    const double dt = plan.lattice[k + 1] - plan.lattice[k];

    // Branch probabilities per class, from the same formulas the engine
    // uses (positive: rate * dt * norm, negative: count-weighted reverse pairs).
    struct NaiveBranch {
      JumpSign sign;
      std::size_t channel;
      std::int32_t target;  // class index; -1 until first member resolves a positive target
      double p;
    };
    std::vector<std::vector<NaiveBranch>> branches(classes.size());
    std::vector<double> rates(cfg.model.channels.size());
    for (std::size_t j = 0; j < cfg.model.channels.size(); ++j)
      rates[j] = cfg.model.channels[j].rate(t);

    for (std::size_t j = 0; j < cfg.model.channels.size(); ++j) {
      if (std::abs(rates[j]) < kZeroRateTol) continue;
      const Operator& c = cfg.model.channels[j].op;
      if (rates[j] > 0.0) {
        for (std::size_t a = 0; a < classes.size(); ++a) {
          if (classes[a].count <= 0) continue;
          double q = norm_sq(apply(c, classes[a].vec.amplitudes()));
          if (!(q > kFireNormSqTol)) continue;
          branches[a].push_back(NaiveBranch{JumpSign::positive, j, -1, rates[j] * dt * q});
        }
      } else {
        for (std::size_t b = 0; b < classes.size(); ++b) {
          if (classes[b].count <= 0) continue;
          std::vector<complexd> img = apply(c, classes[b].vec.amplitudes());
          double q = norm_sq(img);
          if (!(q > kFireNormSqTol)) continue;
          StateVector image = StateVector::normalized(std::move(img));
          if (overlap_fidelity(image, classes[b].vec) > 1.0 - Ensemble::kMergeTol) continue;
          std::size_t src = classes.size();
          for (std::size_t a = 0; a < classes.size(); ++a) {
            if (a == b || classes[a].count <= 0) continue;
            if (overlap_fidelity(image, classes[a].vec) > 1.0 - Ensemble::kMergeTol) {
              src = a;
              break;
            }
          }
          if (src == classes.size()) {
            if (cfg.policy.orphans == OrphanPolicy::strict)
              throw UnravelingBreakdown("negative channel '" + cfg.model.channels[j].label +
                                        "': no populated source for reverse jumps");
            continue;
          }
          double p = (static_cast<double>(classes[b].count) /
                      static_cast<double>(classes[src].count)) *
                     std::abs(rates[j]) * dt * q;
          branches[src].push_back(
              NaiveBranch{JumpSign::negative, j, static_cast<std::int32_t>(b), p});
        }
      }
    }
    for (std::size_t a = 0; a < classes.size(); ++a) {
      double total = 0.0;
      for (const NaiveBranch& br : branches[a]) total += br.p;
      if (total > 1.0)
        throw StepTooLarge("naive mode: per-member jump probability " + std::to_string(total));
    }

    // Every member decides for itself: one uniform draw against its
    // class's cumulative branch probabilities.
    std::mt19937_64 engine = streams.stream(kStreamNaive, static_cast<std::uint64_t>(k), 0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t i = 0; i < member_class.size(); ++i) {
      std::int32_t a = member_class[i];
      if (branches[static_cast<std::size_t>(a)].empty()) continue;
      double u = uniform(engine);
      double cum = 0.0;
      for (NaiveBranch& br : branches[static_cast<std::size_t>(a)]) {
        cum += br.p;
        if (u >= cum) continue;
        if (br.target < 0) {
          StateVector target_state =
              apply_positive_jump(classes[static_cast<std::size_t>(a)].vec,
                                  cfg.model.channels[br.channel]);
          std::int32_t tid = -1;
          for (std::size_t cidx = 0; cidx < classes.size(); ++cidx) {
            if (overlap_fidelity(classes[cidx].vec, target_state) > 1.0 - Ensemble::kMergeTol) {
              tid = static_cast<std::int32_t>(cidx);
              break;
            }
          }
          if (tid < 0) {
            classes.push_back(NaiveClass{target_state, 0});
            tid = static_cast<std::int32_t>(classes.size() - 1);
          }
          br.target = tid;
        }
        if (br.target != a) {
          --classes[static_cast<std::size_t>(a)].count;
          ++classes[static_cast<std::size_t>(br.target)].count;
          member_class[i] = br.target;
        }
        break;
      }
    }

    // Advance class vectors (members share them).
    StepOperator u(cfg.model, t, dt, cfg.step.order);
    for (NaiveClass& c : classes) c.vec = renormalize(u.apply(c.vec));

    int live = 0;
    for (const NaiveClass& c : classes)
      if (c.count > 0) ++live;
    res.peak_distinct = std::max(res.peak_distinct, live);
    maybe_record(k + 1);
  }
  auto stop = std::chrono::steady_clock::now();
  res.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  return res;
}

struct BenchRow {
  std::string label;
  std::int64_t n_members = 0;
  int peak_n_eff = 0;
  int peak_distinct_naive = 0;
  double compressed_ms = 0.0;
  double naive_ms = 0.0;
  double ratio = 0.0;
};

inline BenchRow run_bench_case(const RunConfig& cfg, const std::string& label) {
  BenchRow row;
  row.label = label;
  row.n_members = cfg.n_members;
  EnsembleRunResult mc = run_ensemble(cfg);
  row.peak_n_eff = mc.summary.peak_n_eff;
  row.compressed_ms = mc.summary.wall_ms;
  NaiveRunResult naive = run_naive(cfg);
  row.peak_distinct_naive = naive.peak_distinct;
  row.naive_ms = naive.wall_ms;
  row.ratio = naive.wall_ms / std::max(mc.summary.wall_ms, 1e-3);
  return row;
}

inline nlohmann::json bench_to_json(const std::vector<BenchRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const BenchRow& r : rows)
    out.push_back({{"label", r.label},
                   {"n_members", r.n_members},
                   {"peak_n_eff", r.peak_n_eff},
                   {"peak_distinct_naive", r.peak_distinct_naive},
                   {"compressed_ms", r.compressed_ms},
                   {"naive_ms", r.naive_ms},
                   {"ratio", r.ratio}});
  return out;
}

}  // namespace nmqj

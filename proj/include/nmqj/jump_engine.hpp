#pragma once

// Stochastic jump engine on the count-compressed ensemble.
//
// Positive-rate channels act like ordinary Monte Carlo wave function jumps:
// a member of state psi jumps to C psi / |C psi| with probability
//
//   p+ = Delta(t) dt <psi|C+C|psi>.
//
// Negative-rate channels run the process backwards. The pair (alpha, beta)
// with psi_alpha = C psi_beta / |C psi_beta| exchanges population from
// alpha back to beta with probability
//
//   p- = (N_beta / N_alpha) |Delta(t)| dt <psi_beta|C+C|psi_beta>,
//
// which cancels the channel's forward contribution in the ensemble average
// and restores the pre-jump state exactly (the target vector is taken from
// the ensemble, not reconstructed). This requires the source state alpha to
// be populated; when it is not, the reverse process cannot be represented
// and the unraveling has broken down for that channel (see OrphanPolicy).
// A state whose image under C is itself (C psi parallel to psi) needs no
// partner: its norm growth under the effective Hamiltonian already
// reproduces the master equation term.
//
// All jump counts are drawn as binomials over the members of a distinct
// state, so one step costs O(distinct states), never O(N).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ensemble.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "propagator.hpp"
#include "rng.hpp"

namespace nmqj {

enum class JumpSign { positive, negative };

inline std::string_view to_string(JumpSign s) {
  return s == JumpSign::positive ? "positive" : "negative";
}

struct JumpEvent {
  double t = 0.0;
  std::string channel_label;
  JumpSign sign = JumpSign::positive;
  int source_id = -1;
  int target_id = -1;
  std::int64_t members_moved = 0;

  friend bool operator==(const JumpEvent&, const JumpEvent&) = default;
};

struct StepOutcome {
  std::vector<JumpEvent> events;
  // Largest per-state total jump probability among executed substeps.
  double max_prob_seen = 0.0;
  // Smallest substep actually executed (== ctrl.dt when no subdivision).
  double dt_used = 0.0;
  // True when the probability target was still exceeded at the subdivision
  // limit and the step proceeded anyway.
  bool flagged = false;
  std::vector<std::string> warnings;
};

enum class OrphanPolicy { strict, permissive };

struct EnginePolicy {
  bool adaptive_dt = true;
  OrphanPolicy orphans = OrphanPolicy::strict;
  int max_subdivisions = 16;
};

// Rates with |Delta(t)| below this are treated as exactly zero.
inline constexpr double kZeroRateTol = 1e-14;
// <psi|C+C|psi> below this means the channel cannot fire from psi.
inline constexpr double kFireNormSqTol = 1e-30;

struct ChannelClassification {
  std::vector<std::size_t> positive, negative, zero;
};

inline ChannelClassification classify_channels(const ModelSpec& m, double t) {
  ChannelClassification out;
  for (std::size_t j = 0; j < m.channels.size(); ++j) {
    double r = m.channels[j].rate(t);
    if (std::abs(r) < kZeroRateTol) out.zero.push_back(j);
    else if (r > 0.0) out.positive.push_back(j);
    else out.negative.push_back(j);
  }
  return out;
}

inline double positive_jump_probability(const StateVector& psi, const DecayChannel& ch,
                                        double t, double dt) {
  double rate = ch.rate(t);
  if (rate < 0.0)
    throw std::invalid_argument("positive_jump_probability: channel rate is negative at t");
  double p = rate * dt * norm_sq(apply(ch.op, psi));
  if (p > 1.0)
    throw StepTooLarge("time step too large: jump probability " + std::to_string(p) +
                       " for channel '" + ch.label + "'");
  return p;
}

inline StateVector apply_positive_jump(const StateVector& psi, const DecayChannel& ch) {
  std::vector<complexd> phi = apply(ch.op, psi);
  if (!(norm_sq(phi) > kFireNormSqTol))
    throw Error("channel '" + ch.label + "' cannot fire from this state");
  return StateVector::normalized(std::move(phi));
}

// Populated entries beta != source whose forward jump through ch lands on
// the source state, i.e. C psi_beta / |C psi_beta| matches psi_source.
// These are the legal destinations of reverse jumps out of source_id.
inline std::vector<int> find_reverse_targets(const Ensemble& e, int source_id,
                                             const DecayChannel& ch) {
  const StateVector& src = e.entry(source_id).vector;
  std::vector<int> out;
  for (const DistinctState& cand : e.entries()) {
    if (cand.id == source_id || cand.count <= 0) continue;
    std::vector<complexd> img = apply(ch.op, cand.vector);
    if (!(norm_sq(img) > kFireNormSqTol)) continue;
    StateVector image = StateVector::normalized(std::move(img));
    if (overlap_fidelity(image, src) > 1.0 - Ensemble::kMergeTol) out.push_back(cand.id);
  }
  return out;
}

// Probability that one member of source_id reverses to target_id through
// ch in [t, t+dt]. Pre: ch has negative rate at t, source is populated and
// target came from find_reverse_targets.
inline double negative_jump_probability(const Ensemble& e, int source_id, int target_id,
                                        const DecayChannel& ch, double t, double dt) {
  double rate = ch.rate(t);
  if (rate > 0.0)
    throw std::invalid_argument("negative_jump_probability: channel rate is positive at t");
  const DistinctState& src = e.entry(source_id);
  const DistinctState& tgt = e.entry(target_id);
  if (src.count <= 0)
    throw std::invalid_argument("negative_jump_probability: source not populated");
  double p = (static_cast<double>(tgt.count) / static_cast<double>(src.count)) *
             std::abs(rate) * dt * norm_sq(apply(ch.op, tgt.vector));
  if (p > 1.0)
    throw StepTooLarge("time step too large for negative channel '" + ch.label + "': " +
                       std::to_string(p));
  return p;
}

inline std::int64_t sample_jump_count(std::int64_t n_members, double p, std::mt19937_64& rng) {
  if (n_members < 0) throw std::invalid_argument("sample_jump_count: negative member count");
  if (!(p >= 0.0) || p > 1.0)
    throw std::invalid_argument("sample_jump_count: probability outside [0, 1]");
  if (n_members == 0 || p == 0.0) return 0;
  if (p == 1.0) return n_members;
  std::binomial_distribution<std::int64_t> dist(n_members, p);
  return dist(rng);
}

// Follows a single ensemble member across steps: which distinct state it
// occupies and every jump it personally made. Feed the entry id the member
// starts in, then hand the tracker to step_ensemble.
class MemberTracker {
 public:
  explicit MemberTracker(int initial_entry_id) : current_id_(initial_entry_id) {}

  int current_id() const { return current_id_; }
  const std::vector<JumpEvent>& events() const { return events_; }

  // Engine hook, not for callers.
  void record(const JumpEvent& ev) {
    current_id_ = ev.target_id;
    events_.push_back(ev);
  }

 private:
  int current_id_;
  std::vector<JumpEvent> events_;
};

// Advance the ensemble by one step of ctrl.dt: sample and apply jumps at
// the step start, then push every distinct state through the deterministic
// propagator. If any state's total jump probability exceeds
// ctrl.max_jump_prob, the step is recursively halved (policy.adaptive_dt)
// or rejected with StepTooLarge. Zero-count entries are purged only at the
// end of the full step, so states emptied early in a subdivided step can
// still act as reverse-jump partners in later substeps.
//
// step_index keys the random streams; pass consecutive integers for
// consecutive steps. On throw the ensemble may be left mid-step.
inline StepOutcome step_ensemble(Ensemble& e, const ModelSpec& m, const StepControl& ctrl,
                                 const EnginePolicy& policy, const RngStreams& streams,
                                 std::uint64_t step_index, MemberTracker* tracker = nullptr) {
  validate(ctrl);
  if (policy.max_subdivisions < 0 || policy.max_subdivisions > 16)
    throw std::invalid_argument("engine policy: max_subdivisions must lie in [0, 16]");

  StepOutcome out;
  out.dt_used = ctrl.dt;
  const double t0 = e.time();
  // Leaf counter over executed substeps; with depth <= 16 it stays below
  // 2^16, so (step_index, leaf) packs into one 64-bit stream key.
  std::uint64_t leaf = 0;
  std::set<std::string> seen_warnings;

  struct Branch {
    JumpSign sign;
    std::size_t channel;
    int target_id;  // negative jumps only; resolved at apply time for positive
    double p;
  };
  struct SourcePlan {
    int id = -1;
    std::int64_t count = 0;
    std::size_t snap_index = 0;
    std::vector<Branch> branches;
    double total = 0.0;
  };

  auto run = [&](auto&& self, double t, double dt, int depth) -> void {
    // Snapshot of the populated entries; all probabilities below refer to
    // counts and vectors frozen at the substep start.
    struct Snap {
      int id;
      std::int64_t count;
      StateVector vec;
    };
    std::vector<Snap> snap;
    for (const DistinctState& entry : e.entries())
      if (entry.count > 0) snap.push_back(Snap{entry.id, entry.count, entry.vector});

    std::vector<double> rates(m.channels.size());
    for (std::size_t j = 0; j < m.channels.size(); ++j) rates[j] = m.channels[j].rate(t);

    // ---- plan: one SourcePlan per populated entry, branches in sampling order
    std::vector<SourcePlan> plans(snap.size());
    for (std::size_t i = 0; i < snap.size(); ++i) {
      plans[i].id = snap[i].id;
      plans[i].count = snap[i].count;
      plans[i].snap_index = i;
    }

    bool any_p_over_one = false;
    for (std::size_t j = 0; j < m.channels.size(); ++j) {
      if (std::abs(rates[j]) < kZeroRateTol) continue;
      if (rates[j] > 0.0) {
        for (std::size_t i = 0; i < snap.size(); ++i) {
          double q = norm_sq(apply(m.channels[j].op, snap[i].vec.amplitudes()));
          if (!(q > kFireNormSqTol)) continue;
          double p = rates[j] * dt * q;
          if (p > 1.0) any_p_over_one = true;
          plans[i].branches.push_back(Branch{JumpSign::positive, j, -1, p});
          plans[i].total += p;
        }
      }
    }
    // Negative channels: each populated beta maps to its forward image
    // through C_j; population flows image -> beta. A beta may pair with at
    // most one populated source so the channel's total reverse flow equals
    // the master equation term even if near-duplicate entries exist.
    for (std::size_t j = 0; j < m.channels.size(); ++j) {
      if (std::abs(rates[j]) < kZeroRateTol || rates[j] > 0.0) continue;
      for (std::size_t b = 0; b < snap.size(); ++b) {
        std::vector<complexd> img = apply(m.channels[j].op, snap[b].vec.amplitudes());
        double q = norm_sq(img);
        if (!(q > kFireNormSqTol)) continue;  // channel dark from beta, no flow needed
        StateVector image = StateVector::normalized(std::move(img));
        if (overlap_fidelity(image, snap[b].vec) > 1.0 - Ensemble::kMergeTol)
          continue;  // self-image, handled exactly by norm growth
        std::size_t src = snap.size();
        for (std::size_t a = 0; a < snap.size(); ++a) {
          if (a == b) continue;
          if (overlap_fidelity(image, snap[a].vec) > 1.0 - Ensemble::kMergeTol) {
            src = a;
            break;
          }
        }
        if (src == snap.size()) {
          std::string msg = "negative channel '" + m.channels[j].label + "': state " +
                            std::to_string(snap[b].id) +
                            " has no populated source for reverse jumps";
          if (policy.orphans == OrphanPolicy::strict) throw UnravelingBreakdown(msg);
          if (seen_warnings.insert(msg).second) out.warnings.push_back(msg);
          continue;
        }
        double p = (static_cast<double>(snap[b].count) / static_cast<double>(snap[src].count)) *
                   std::abs(rates[j]) * dt * q;
        if (p > 1.0) any_p_over_one = true;
        plans[src].branches.push_back(Branch{JumpSign::negative, j, snap[b].id, p});
        plans[src].total += p;
      }
    }

    double max_total = 0.0;
    for (const SourcePlan& pl : plans) max_total = std::max(max_total, pl.total);

    if (max_total > ctrl.max_jump_prob) {
      if (!policy.adaptive_dt)
        throw StepTooLarge("time step too large: per-state jump probability " +
                           std::to_string(max_total) + " exceeds limit " +
                           std::to_string(ctrl.max_jump_prob));
      if (depth < policy.max_subdivisions) {
        self(self, t, 0.5 * dt, depth + 1);
        self(self, t + 0.5 * dt, 0.5 * dt, depth + 1);
        return;
      }
      if (any_p_over_one || max_total > 1.0)
        throw StepTooLarge("time step too large even after " +
                           std::to_string(policy.max_subdivisions) + " subdivisions (" +
                           std::to_string(max_total) + ")");
      out.flagged = true;
    }

    // ---- sample all jump counts against the snapshot
    struct Move {
      std::size_t plan_index;
      Branch branch;
      std::int64_t k;
    };
    std::vector<Move> moves;
    const std::uint64_t step_key = step_index * 65536 + leaf;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      SourcePlan& pl = plans[i];
      if (pl.branches.empty()) continue;
      std::mt19937_64 engine =
          streams.stream(kStreamJumps, static_cast<std::uint64_t>(pl.id), step_key);
      std::int64_t remaining = pl.count;
      double cum = 0.0;
      // Sequential conditional binomials: marginally each branch count is
      // Binomial(N_alpha, p_i) and the branch counts never oversubscribe
      // the source.
      for (const Branch& br : pl.branches) {
        double denom = 1.0 - cum;
        double q = denom > 0.0 ? std::clamp(br.p / denom, 0.0, 1.0) : 1.0;
        std::int64_t k = sample_jump_count(remaining, q, engine);
        remaining -= k;
        cum += br.p;
        if (k > 0) moves.push_back(Move{i, br, k});
      }
    }

    // ---- apply moves; targets of positive jumps dedup against the live
    // ensemble so revisited states merge instead of proliferating
    std::vector<JumpEvent> applied;
    for (const Move& mv : moves) {
      const SourcePlan& pl = plans[mv.plan_index];
      const DecayChannel& ch = m.channels[mv.branch.channel];
      int target;
      if (mv.branch.sign == JumpSign::positive) {
        StateVector target_state = apply_positive_jump(snap[pl.snap_index].vec, ch);
        target = e.find_or_insert(target_state);
        if (target == pl.id) continue;  // self-image jump, state unchanged
      } else {
        target = mv.branch.target_id;
      }
      e.transfer_count(pl.id, target, mv.k);
      applied.push_back(JumpEvent{t, ch.label, mv.branch.sign, pl.id, target, mv.k});
    }
    out.events.insert(out.events.end(), applied.begin(), applied.end());

    // ---- tracked member: it was one of N_alpha members, so it takes each
    // applied move out of its entry with probability k / N_alpha
    if (tracker != nullptr) {
      const int tid = tracker->current_id();
      std::int64_t count_at_snap = 0;
      for (const Snap& s : snap)
        if (s.id == tid) count_at_snap = s.count;
      bool has_move = false;
      for (const JumpEvent& ev : applied)
        if (ev.source_id == tid) has_move = true;
      if (has_move) {
        std::mt19937_64 engine = streams.stream(kStreamTracked, step_key, 0);
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(engine);
        double cum = 0.0;
        std::int64_t moved_total = 0;
        const JumpEvent* taken = nullptr;
        const JumpEvent* last_from_tid = nullptr;
        for (const JumpEvent& ev : applied) {
          if (ev.source_id != tid) continue;
          moved_total += ev.members_moved;
          last_from_tid = &ev;
          cum += static_cast<double>(ev.members_moved) / static_cast<double>(count_at_snap);
          if (taken == nullptr && u < cum) taken = &ev;
        }
        // If the entry emptied completely the member cannot stay behind,
        // whatever rounding did to the cumulative sum.
        if (taken == nullptr && moved_total == count_at_snap) taken = last_from_tid;
        if (taken != nullptr) {
          JumpEvent personal = *taken;
          personal.members_moved = 1;
          tracker->record(personal);
        }
      }
    }

    // ---- deterministic advance of every entry, populated or not
    StepOperator u(m, t, dt, ctrl.order);
    for (const DistinctState& entry : e.entries()) {
      // ids are stable under replace_vector, so iterating while replacing
      // is fine; no entries are added or removed here.
      e.replace_vector(entry.id, renormalize(u.apply(entry.vector)));
    }
    e.set_time(t + dt);

    out.max_prob_seen = std::max(out.max_prob_seen, max_total);
    out.dt_used = std::min(out.dt_used, dt);
    ++leaf;
  };

  run(run, t0, ctrl.dt, 0);

  e.purge_zero_counts();
  e.set_time(t0 + ctrl.dt);
  e.check_conservation();
  return out;
}

}  // namespace nmqj

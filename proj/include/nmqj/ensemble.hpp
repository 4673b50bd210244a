#pragma once

// Count-compressed ensemble: N stochastic members shared between a handful
// of distinct state vectors,
//
//   rho(t) = sum_alpha (N_alpha / N) |psi_alpha><psi_alpha|.
//
// Jumps move integer counts between entries instead of touching members
// one by one, so the cost per step scales with the number of distinct
// states (often 2), not with N.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace nmqj {

struct DistinctState {
  StateVector vector;
  std::int64_t count = 0;  // N_alpha, members currently in this state
  int id = -1;             // stable handle; never reused within a run
};

struct EnsembleEntryRecord {
  int id;
  std::int64_t count;
  std::vector<complexd> amplitudes;
};

class Ensemble {
 public:
  // Two vectors are "the same state" iff their overlap fidelity exceeds
  // 1 - kMergeTol (strict). Fidelity ignores global phase, so a state
  // re-entered via a jump merges with its earlier copy.
  static constexpr double kMergeTol = 1e-10;

  static Ensemble pure(StateVector initial, std::int64_t total, double time = 0.0) {
    if (total < 1) throw std::invalid_argument("ensemble: total member count must be >= 1");
    Ensemble e;
    e.total_ = total;
    e.time_ = time;
    e.entries_.push_back(DistinctState{std::move(initial), total, e.next_id_++});
    return e;
  }

  std::int64_t total() const { return total_; }
  double time() const { return time_; }
  void set_time(double t) { time_ = t; }

  std::span<const DistinctState> entries() const { return entries_; }

  const DistinctState& entry(int id) const { return entries_[index_of(id)]; }

  // Id of the entry matching v, or -1.
  int find(const StateVector& v) const {
    for (const DistinctState& e : entries_) {
      if (e.vector.dim() != v.dim())
        throw DimensionMismatch("ensemble: state dimension mismatch");
      if (overlap_fidelity(e.vector, v) > 1.0 - kMergeTol) return e.id;
    }
    return -1;
  }

  // Existing matching entry wins (even at count 0); otherwise v is inserted
  // with count 0 and a fresh id. Entries are kept in id order, which is
  // also insertion order.
  int find_or_insert(const StateVector& v) {
    int id = find(v);
    if (id >= 0) return id;
    entries_.push_back(DistinctState{v, 0, next_id_});
    return next_id_++;
  }

  void transfer_count(int from, int to, std::int64_t k) {
    if (from == to) throw std::invalid_argument("transfer_count: from == to");
    DistinctState& src = entries_[index_of(from)];
    DistinctState& dst = entries_[index_of(to)];
    if (k < 1 || k > src.count)
      throw std::invalid_argument("transfer_count: k outside [1, source count]");
    src.count -= k;
    dst.count += k;
  }

  // Swap in the deterministically advanced vector for an entry. Counts and
  // id are untouched; this is how the whole ensemble moves forward in time.
  void replace_vector(int id, StateVector v) {
    DistinctState& e = entries_[index_of(id)];
    if (e.vector.dim() != v.dim())
      throw DimensionMismatch("replace_vector: state dimension mismatch");
    e.vector = std::move(v);
  }

  void purge_zero_counts() {
    std::erase_if(entries_, [](const DistinctState& e) { return e.count == 0; });
  }

  // Number of populated distinct states (N_eff).
  int n_eff() const {
    int n = 0;
    for (const DistinctState& e : entries_)
      if (e.count > 0) ++n;
    return n;
  }

  // sum_alpha (N_alpha/N) <psi_alpha|A|psi_alpha>
  complexd expectation_value(const Operator& obs) const {
    complexd s = 0.0;
    for (const DistinctState& e : entries_) {
      if (e.count == 0) continue;
      if (e.vector.dim() != obs.dim())
        throw DimensionMismatch("expectation_value: observable dimension mismatch");
      s += (static_cast<double>(e.count) / static_cast<double>(total_)) *
           expectation(e.vector, obs);
    }
    return s;
  }

  // Population variance of the per-member expectation <A>_alpha (for a
  // Hermitian observable), used for the Monte Carlo error bound: the
  // ensemble mean is an average of N draws whose spread this measures.
  double member_variance(const Operator& obs) const {
    double mean = 0.0, mean_sq = 0.0;
    for (const DistinctState& e : entries_) {
      if (e.count == 0) continue;
      double w = static_cast<double>(e.count) / static_cast<double>(total_);
      double a = expectation(e.vector, obs).real();
      mean += w * a;
      mean_sq += w * a * a;
    }
    double v = mean_sq - mean * mean;
    return v > 0.0 ? v : 0.0;
  }

  // rho = sum_alpha (N_alpha/N) |psi_alpha><psi_alpha| ; positive
  // semidefinite and unit trace by construction.
  DensityMatrix assemble_density() const {
    std::size_t d = entries_.empty() ? 1 : entries_.front().vector.dim();
    Operator rho(d);
    for (const DistinctState& e : entries_) {
      if (e.count == 0) continue;
      double w = static_cast<double>(e.count) / static_cast<double>(total_);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c)
          rho.at(r, c) += w * e.vector[r] * std::conj(e.vector[c]);
    }
    return DensityMatrix(std::move(rho));
  }

  std::vector<EnsembleEntryRecord> snapshot() const {
    std::vector<EnsembleEntryRecord> out;
    out.reserve(entries_.size());
    for (const DistinctState& e : entries_) {
      out.push_back(EnsembleEntryRecord{
          e.id, e.count,
          std::vector<complexd>(e.vector.amplitudes().begin(), e.vector.amplitudes().end())});
    }
    return out;
  }

  // Invariant check: counts are nonnegative and sum to N.
  void check_conservation() const {
    std::int64_t sum = 0;
    for (const DistinctState& e : entries_) {
      if (e.count < 0) throw Error("ensemble: negative count on entry " + std::to_string(e.id));
      sum += e.count;
    }
    if (sum != total_)
      throw Error("ensemble: counts sum to " + std::to_string(sum) + ", expected " +
                  std::to_string(total_));
  }

 private:
  Ensemble() = default;

  std::size_t index_of(int id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].id == id) return i;
    throw std::invalid_argument("ensemble: unknown entry id " + std::to_string(id));
  }

  std::int64_t total_ = 0;
  double time_ = 0.0;
  std::vector<DistinctState> entries_;
  int next_id_ = 0;
};

}  // namespace nmqj

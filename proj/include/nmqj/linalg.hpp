#pragma once

// Dense complex linear algebra for small Hilbert spaces (d up to ~64).
// Everything is row-major std::vector<std::complex<double>>; no BLAS, the
// matrices here are far too small for that to matter.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace nmqj {

using complexd = std::complex<double>;

inline double norm_sq(std::span<const complexd> amps) {
  double s = 0.0;
  for (const complexd& a : amps) s += std::norm(a);
  return s;
}

// <u|v> with the physics convention: conjugate-linear in the first slot.
inline complexd inner(std::span<const complexd> u, std::span<const complexd> v) {
  if (u.size() != v.size()) throw DimensionMismatch("inner: length mismatch");
  complexd s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += std::conj(u[i]) * v[i];
  return s;
}

inline bool all_finite(std::span<const complexd> amps) {
  for (const complexd& a : amps) {
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) return false;
  }
  return true;
}

// Unit-norm state vector. The constructor path enforces normalization, so
// code holding a StateVector may rely on <psi|psi> = 1 to ~1e-12.
class StateVector {
 public:
  static constexpr double kNormTol = 1e-12;

  static StateVector from_amplitudes(std::vector<complexd> amps) {
    if (amps.empty()) throw std::invalid_argument("state vector: empty");
    if (!all_finite(amps)) throw std::invalid_argument("state vector: non-finite amplitude");
    double n2 = norm_sq(amps);
    if (std::abs(n2 - 1.0) > 32 * kNormTol) {
      throw std::invalid_argument("state vector: not unit norm (|psi|^2 = " +
                                  std::to_string(n2) + ")");
    }
    // Polish the norm so downstream == 1 assumptions hold to full precision.
    double inv = 1.0 / std::sqrt(n2);
    for (complexd& a : amps) a *= inv;
    return StateVector(std::move(amps));
  }

  // Scale an arbitrary nonzero vector to unit norm.
  static StateVector normalized(std::vector<complexd> amps) {
    if (amps.empty()) throw std::invalid_argument("state vector: empty");
    if (!all_finite(amps)) throw std::invalid_argument("state vector: non-finite amplitude");
    double n2 = norm_sq(amps);
    if (n2 <= 1e-30) throw StateAnnihilated("state annihilated: norm^2 <= 1e-30");
    double inv = 1.0 / std::sqrt(n2);
    for (complexd& a : amps) a *= inv;
    return StateVector(std::move(amps));
  }

  static StateVector basis_state(std::size_t dim, std::size_t index) {
    if (dim == 0) throw std::invalid_argument("basis_state: dim 0");
    if (index >= dim) throw std::invalid_argument("basis_state: index out of range");
    std::vector<complexd> amps(dim, complexd(0.0, 0.0));
    amps[index] = 1.0;
    return StateVector(std::move(amps));
  }

  std::size_t dim() const { return amps_.size(); }
  const complexd& operator[](std::size_t i) const { return amps_[i]; }
  std::span<const complexd> amplitudes() const { return amps_; }

 private:
  explicit StateVector(std::vector<complexd> amps) : amps_(std::move(amps)) {}
  std::vector<complexd> amps_;
};

// General dense d x d complex matrix, row-major.
class Operator {
 public:
  explicit Operator(std::size_t dim)
      : dim_(dim), entries_(dim * dim, complexd(0.0, 0.0)) {
    if (dim == 0) throw std::invalid_argument("operator: dim 0");
  }

  static Operator identity(std::size_t dim) {
    Operator m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.at(i, i) = 1.0;
    return m;
  }

  static Operator from_entries(std::size_t dim, std::vector<complexd> row_major) {
    Operator m(dim);
    if (row_major.size() != dim * dim) {
      throw DimensionMismatch("operator: expected " + std::to_string(dim * dim) +
                              " entries, got " + std::to_string(row_major.size()));
    }
    if (!all_finite(row_major)) throw std::invalid_argument("operator: non-finite entry");
    m.entries_ = std::move(row_major);
    return m;
  }

  std::size_t dim() const { return dim_; }
  complexd& at(std::size_t r, std::size_t c) { return entries_[r * dim_ + c]; }
  const complexd& at(std::size_t r, std::size_t c) const { return entries_[r * dim_ + c]; }
  std::span<const complexd> entries() const { return entries_; }

  Operator& operator+=(const Operator& o) {
    check_same_dim(o);
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i] += o.entries_[i];
    return *this;
  }
  Operator& operator-=(const Operator& o) {
    check_same_dim(o);
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i] -= o.entries_[i];
    return *this;
  }
  Operator& operator*=(complexd z) {
    for (complexd& e : entries_) e *= z;
    return *this;
  }

  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(complexd z, Operator a) { return a *= z; }
  friend Operator operator*(Operator a, complexd z) { return a *= z; }

  friend Operator operator*(const Operator& a, const Operator& b) {
    a.check_same_dim(b);
    Operator out(a.dim_);
    for (std::size_t r = 0; r < a.dim_; ++r) {
      for (std::size_t k = 0; k < a.dim_; ++k) {
        complexd ark = a.at(r, k);
        if (ark == complexd(0.0, 0.0)) continue;
        for (std::size_t c = 0; c < a.dim_; ++c) out.at(r, c) += ark * b.at(k, c);
      }
    }
    return out;
  }

  complexd trace() const {
    complexd s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += at(i, i);
    return s;
  }

  // max_{r,c} |A_rc - conj(A_cr)|
  double hermiticity_error() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::size_t c = r; c < dim_; ++c)
        worst = std::max(worst, std::abs(at(r, c) - std::conj(at(c, r))));
    return worst;
  }

 private:
  void check_same_dim(const Operator& o) const {
    if (dim_ != o.dim_) throw DimensionMismatch("operator: dimension mismatch");
  }
  std::size_t dim_;
  std::vector<complexd> entries_;
};

// Matrix-vector product. Accumulates over columns in ascending index order;
// tests that pin bit-for-bit reproducibility rely on that order being fixed.
inline std::vector<complexd> apply(const Operator& op, std::span<const complexd> v) {
  if (op.dim() != v.size()) throw DimensionMismatch("apply: operator/vector dimension mismatch");
  std::vector<complexd> out(v.size(), complexd(0.0, 0.0));
  for (std::size_t r = 0; r < op.dim(); ++r) {
    complexd s = 0.0;
    for (std::size_t c = 0; c < op.dim(); ++c) s += op.at(r, c) * v[c];
    out[r] = s;
  }
  return out;
}

inline std::vector<complexd> apply(const Operator& op, const StateVector& v) {
  return apply(op, v.amplitudes());
}

inline Operator adjoint(const Operator& op) {
  Operator out(op.dim());
  for (std::size_t r = 0; r < op.dim(); ++r)
    for (std::size_t c = 0; c < op.dim(); ++c) out.at(r, c) = std::conj(op.at(c, r));
  return out;
}

// <psi|A|psi>
inline complexd expectation(const StateVector& psi, const Operator& op) {
  return inner(psi.amplitudes(), apply(op, psi.amplitudes()));
}

// |<u|v>|^2, invariant under global phase of either argument.
inline double overlap_fidelity(const StateVector& u, const StateVector& v) {
  return std::norm(inner(u.amplitudes(), v.amplitudes()));
}

// tr(A B) without forming the product.
inline complexd trace_product(const Operator& a, const Operator& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("trace_product: dimension mismatch");
  complexd s = 0.0;
  for (std::size_t r = 0; r < a.dim(); ++r)
    for (std::size_t c = 0; c < a.dim(); ++c) s += a.at(r, c) * b.at(c, r);
  return s;
}

// Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations,
// returned ascending. The input is symmetrized first, so mild Hermiticity
// drift from time stepping does not break the iteration. Adequate for the
// d <= 64 matrices this library works with.
inline std::vector<double> hermitian_eigenvalues(const Operator& in) {
  const std::size_t d = in.dim();
  Operator a(d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c)
      a.at(r, c) = 0.5 * (in.at(r, c) + std::conj(in.at(c, r)));

  double scale = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) scale = std::max(scale, std::abs(a.at(r, c)));
  if (scale == 0.0) return std::vector<double>(d, 0.0);

  const double stop = 1e-15 * scale;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off = std::max(off, std::abs(a.at(p, q)));
    if (off <= stop) break;

    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double r = std::abs(a.at(p, q));
        if (r <= stop) continue;
        const complexd w = a.at(p, q) / r;  // phase of the pivot entry
        const double app = a.at(p, p).real();
        const double aqq = a.at(q, q).real();
        // 2x2 real Jacobi angle for [[app, r], [r, aqq]].
        double t;
        const double diff = app - aqq;
        if (std::abs(diff) < 1e-300 * r) {
          t = 1.0;
        } else {
          const double tau = diff / (2.0 * r);
          t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        const double new_pp = app * c * c + 2.0 * r * s * c + aqq * s * s;
        const double new_qq = app * s * s - 2.0 * r * s * c + aqq * c * c;
        a.at(p, p) = new_pp;
        a.at(q, q) = new_qq;
        a.at(p, q) = 0.0;
        a.at(q, p) = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          if (k == p || k == q) continue;
          const complexd akp = a.at(k, p);
          const complexd akq = a.at(k, q);
          a.at(k, p) = c * akp + s * std::conj(w) * akq;
          a.at(k, q) = -s * w * akp + c * akq;
          a.at(p, k) = std::conj(a.at(k, p));
          a.at(q, k) = std::conj(a.at(k, q));
        }
      }
    }
  }

  std::vector<double> eig(d);
  for (std::size_t i = 0; i < d; ++i) eig[i] = a.at(i, i).real();
  std::sort(eig.begin(), eig.end());
  return eig;
}

// Density matrix: an Operator plus the checks that make it a valid state.
class DensityMatrix {
 public:
  explicit DensityMatrix(Operator m) : m_(std::move(m)) {}

  static DensityMatrix pure(const StateVector& psi) {
    Operator m(psi.dim());
    for (std::size_t r = 0; r < psi.dim(); ++r)
      for (std::size_t c = 0; c < psi.dim(); ++c) m.at(r, c) = psi[r] * std::conj(psi[c]);
    return DensityMatrix(std::move(m));
  }

  std::size_t dim() const { return m_.dim(); }
  const Operator& matrix() const { return m_; }
  const complexd& at(std::size_t r, std::size_t c) const { return m_.at(r, c); }

  complexd trace() const { return m_.trace(); }
  double hermiticity_error() const { return m_.hermiticity_error(); }
  double min_eigenvalue() const {
    std::vector<double> eig = hermitian_eigenvalues(m_);
    return eig.front();
  }

  // Diagnostics for tests and the oracle; empty result means the matrix
  // passes as a physical state at the given tolerances.
  std::vector<std::string> check(double herm_tol = 1e-10, double trace_tol = 1e-8,
                                 double psd_tol = 1e-8) const {
    std::vector<std::string> out;
    if (hermiticity_error() > herm_tol) out.push_back("density matrix not Hermitian");
    if (std::abs(trace() - complexd(1.0, 0.0)) > trace_tol)
      out.push_back("density matrix trace != 1");
    if (min_eigenvalue() < -psd_tol) out.push_back("density matrix not positive semidefinite");
    return out;
  }

 private:
  Operator m_;
};

}  // namespace nmqj

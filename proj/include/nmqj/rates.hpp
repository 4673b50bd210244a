#pragma once

// Time-dependent decay rates Delta_j(t) and the Lamb-like shift S(t).
// Rates may go negative; that is the whole point of this library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"

namespace nmqj {

class RateFunction {
 public:
  static RateFunction constant(double value) {
    require_finite(value, "constant rate");
    return RateFunction(Constant{value});
  }

  // value[i] applies on [breakpoints[i], breakpoints[i+1]); the last value
  // extends to +infinity. Evaluation below breakpoints[0] is a domain error.
  static RateFunction piecewise_constant(std::vector<double> breakpoints,
                                         std::vector<double> values) {
    if (breakpoints.empty() || breakpoints.size() != values.size())
      throw std::invalid_argument("piecewise rate: need equal, nonzero point/value counts");
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
      if (!(breakpoints[i] < breakpoints[i + 1]))
        throw std::invalid_argument("piecewise rate: breakpoints not strictly ascending");
    for (double v : values) require_finite(v, "piecewise rate value");
    for (double b : breakpoints) require_finite(b, "piecewise rate breakpoint");
    return RateFunction(PiecewiseConstant{std::move(breakpoints), std::move(values)});
  }

  // amplitude * exp(-decay t) * sin(frequency t + phase)
  static RateFunction damped_oscillation(double amplitude, double decay, double frequency,
                                         double phase) {
    require_finite(amplitude, "oscillation amplitude");
    require_finite(decay, "oscillation decay");
    require_finite(frequency, "oscillation frequency");
    require_finite(phase, "oscillation phase");
    if (decay < 0.0) throw std::invalid_argument("oscillation decay must be >= 0");
    return RateFunction(DampedOscillation{amplitude, decay, frequency, phase});
  }

  // Linear interpolation between samples; no extrapolation. A slack of
  // 1e-9 * span is tolerated at both ends so that a grid point landing on
  // the final sample by floating arithmetic does not throw.
  static RateFunction tabulated(std::vector<double> times, std::vector<double> values) {
    if (times.size() < 2 || times.size() != values.size())
      throw std::invalid_argument("tabulated rate: need >= 2 samples with equal point/value counts");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
      if (!(times[i] < times[i + 1]))
        throw std::invalid_argument("tabulated rate: sample times not strictly ascending");
    for (double v : values) require_finite(v, "tabulated rate value");
    for (double t : times) require_finite(t, "tabulated rate time");
    return RateFunction(Tabulated{std::move(times), std::move(values)});
  }

  double operator()(double t) const {
    return std::visit([t](const auto& f) { return eval(f, t); }, impl_);
  }

  // Points inside (t0, t1) where the function is not smooth. Quadrature and
  // the oracle integrator split their intervals here so each piece is exact
  // or rapidly convergent.
  std::vector<double> kinks_in(double t0, double t1) const {
    std::vector<double> out;
    if (const auto* pw = std::get_if<PiecewiseConstant>(&impl_)) {
      for (double b : pw->breakpoints)
        if (b > t0 && b < t1) out.push_back(b);
    } else if (const auto* tab = std::get_if<Tabulated>(&impl_)) {
      for (double b : tab->times)
        if (b > t0 && b < t1) out.push_back(b);
    }
    return out;
  }

  // Whether [t0, t1] lies inside the domain of definition.
  bool covers(double t0, double t1) const {
    if (const auto* pw = std::get_if<PiecewiseConstant>(&impl_))
      return t0 >= pw->breakpoints.front();
    if (const auto* tab = std::get_if<Tabulated>(&impl_)) {
      double slack = domain_slack(*tab);
      return t0 >= tab->times.front() - slack && t1 <= tab->times.back() + slack;
    }
    return true;
  }

 private:
  struct Constant {
    double value;
  };
  struct PiecewiseConstant {
    std::vector<double> breakpoints;
    std::vector<double> values;
  };
  struct DampedOscillation {
    double amplitude, decay, frequency, phase;
  };
  struct Tabulated {
    std::vector<double> times;
    std::vector<double> values;
  };

  static void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite");
  }

  static double eval(const Constant& f, double) { return f.value; }

  static double eval(const PiecewiseConstant& f, double t) {
    if (t < f.breakpoints.front())
      throw RateDomainError("piecewise rate evaluated before first breakpoint (t = " +
                            std::to_string(t) + ")");
    auto it = std::upper_bound(f.breakpoints.begin(), f.breakpoints.end(), t);
    return f.values[static_cast<std::size_t>(it - f.breakpoints.begin()) - 1];
  }

  static double eval(const DampedOscillation& f, double t) {
    return f.amplitude * std::exp(-f.decay * t) * std::sin(f.frequency * t + f.phase);
  }

  static double domain_slack(const Tabulated& f) {
    return 1e-9 * std::max(1.0, f.times.back() - f.times.front());
  }

  static double eval(const Tabulated& f, double t) {
    const double slack = domain_slack(f);
    if (t < f.times.front() - slack || t > f.times.back() + slack)
      throw RateDomainError("tabulated rate evaluated outside its samples (t = " +
                            std::to_string(t) + ")");
    double tc = std::clamp(t, f.times.front(), f.times.back());
    auto it = std::upper_bound(f.times.begin(), f.times.end(), tc);
    if (it == f.times.end()) return f.values.back();
    if (it == f.times.begin()) return f.values.front();
    std::size_t hi = static_cast<std::size_t>(it - f.times.begin());
    std::size_t lo = hi - 1;
    double u = (tc - f.times[lo]) / (f.times[hi] - f.times[lo]);
    return f.values[lo] + u * (f.values[hi] - f.values[lo]);
  }

  template <class T>
  explicit RateFunction(T impl) : impl_(std::move(impl)) {}

  std::variant<Constant, PiecewiseConstant, DampedOscillation, Tabulated> impl_;
};

}  // namespace nmqj

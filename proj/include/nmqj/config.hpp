#pragma once

// JSON run configuration. Schema (see README for the full reference):
//
// {
//   "model": { "type": "two_level" | "custom", ... },
//   "n_members": 100000,
//   "seed": 42,                      // required, no implicit entropy
//   "t_max": 6.0,
//   "step": {"dt": 1e-3, "max_jump_prob": 0.1, "order": "fourth"},
//   "output": {"spacing": 0.01} or {"times": [...]},   // default: every step
//   "observables": [{"name": "...", "matrix": [[[re,im],...],...]}],
//   "engine": {"adaptive_dt": true, "orphans": "strict", "max_subdivisions": 16},
//   "record_counts": false
// }
//
// Complex numbers are [re, im] pairs; matrices are row-major arrays of rows
// of pairs. Rates are {"type": "constant"|"piecewise_constant"|
// "damped_oscillation"|"tabulated", ...}; tabulated rates may inline
// "times"/"values" or reference a two-column CSV through "file" (relative
// paths resolve against the config file's directory).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "io.hpp"
#include "jump_engine.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "propagator.hpp"
#include "rates.hpp"

namespace nmqj {

struct OutputSpec {
  std::optional<double> spacing;
  std::optional<std::vector<double>> times;
};

struct NamedObservable {
  std::string name;
  Operator op;
};

struct RunConfig {
  ModelSpec model;
  std::int64_t n_members = 1;
  StepControl step;
  EnginePolicy policy;
  double t_max = 0.0;
  OutputSpec output;
  std::uint64_t seed = 0;
  std::vector<NamedObservable> observables;
  bool record_counts = false;
};

namespace cfg_detail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

inline const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "required field missing");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

inline complexd complex_pair(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) fail(path, "expected a [re, im] pair");
  return complexd(number(j[0], path + "[0]"), number(j[1], path + "[1]"));
}

inline std::vector<complexd> complex_list(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of [re, im] pairs");
  std::vector<complexd> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(complex_pair(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline Operator matrix(const json& j, std::size_t dim, const std::string& path) {
  if (!j.is_array() || j.size() != dim) fail(path, "expected " + std::to_string(dim) + " rows");
  std::vector<complexd> entries;
  entries.reserve(dim * dim);
  for (std::size_t r = 0; r < dim; ++r) {
    const json& row = j[r];
    std::string rp = path + "[" + std::to_string(r) + "]";
    if (!row.is_array() || row.size() != dim)
      fail(rp, "expected " + std::to_string(dim) + " [re, im] pairs");
    for (std::size_t c = 0; c < dim; ++c)
      entries.push_back(complex_pair(row[c], rp + "[" + std::to_string(c) + "]"));
  }
  return Operator::from_entries(dim, std::move(entries));
}

inline StateVector state(const json& j, std::size_t dim, const std::string& path) {
  std::vector<complexd> amps = complex_list(j, path);
  if (amps.size() != dim) fail(path, "expected " + std::to_string(dim) + " amplitudes");
  try {
    return StateVector::from_amplitudes(std::move(amps));
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

inline RateFunction rate(const json& j, const std::filesystem::path& base_dir,
                         const std::string& path) {
  if (j.is_number()) return RateFunction::constant(number(j, path));
  if (!j.is_object()) fail(path, "expected a rate object or a plain number");
  std::string type = require(j, "type", path).get<std::string>();
  try {
    if (type == "constant") return RateFunction::constant(number(require(j, "value", path), path + ".value"));
    if (type == "piecewise_constant") {
      std::vector<double> bp, vals;
      for (const json& v : require(j, "breakpoints", path)) bp.push_back(number(v, path + ".breakpoints"));
      for (const json& v : require(j, "values", path)) vals.push_back(number(v, path + ".values"));
      return RateFunction::piecewise_constant(std::move(bp), std::move(vals));
    }
    if (type == "damped_oscillation") {
      double amplitude = number(require(j, "amplitude", path), path + ".amplitude");
      double decay = number(require(j, "decay", path), path + ".decay");
      double frequency = number(require(j, "frequency", path), path + ".frequency");
      double phase = j.contains("phase") ? number(j["phase"], path + ".phase") : 0.0;
      return RateFunction::damped_oscillation(amplitude, decay, frequency, phase);
    }
    if (type == "tabulated") {
      if (j.contains("file")) {
        std::filesystem::path p = j["file"].get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        return load_rate_table(p);
      }
      std::vector<double> ts, vals;
      for (const json& v : require(j, "times", path)) ts.push_back(number(v, path + ".times"));
      for (const json& v : require(j, "values", path)) vals.push_back(number(v, path + ".values"));
      return RateFunction::tabulated(std::move(ts), std::move(vals));
    }
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  } catch (const Error& e) {
    fail(path, e.what());
  }
  fail(path + ".type", "unknown rate type '" + type + "'");
}

inline StateVector named_two_level_state(const json& j, const std::string& path) {
  if (j.is_string()) {
    std::string name = j.get<std::string>();
    if (name == "g" || name == "ground") return ground_state();
    if (name == "e" || name == "excited") return excited_state();
    if (name == "plus" || name == "superposition") return equal_superposition();
    fail(path, "unknown state name '" + name + "' (use g, e, plus, or amplitudes)");
  }
  return state(j, 2, path);
}

inline ModelSpec model(const json& j, const std::filesystem::path& base_dir,
                       const std::string& path) {
  std::string type = require(j, "type", path).get<std::string>();
  if (type == "two_level") {
    std::optional<RateFunction> lamb;
    if (j.contains("lamb_shift")) lamb = rate(j["lamb_shift"], base_dir, path + ".lamb_shift");
    ModelSpec m = build_two_level_model(rate(require(j, "delta", path), base_dir, path + ".delta"),
                                        std::move(lamb),
                                        named_two_level_state(require(j, "initial_state", path),
                                                              path + ".initial_state"));
    return m;
  }
  if (type == "custom") {
    ModelSpec m;
    double dim_raw = number(require(j, "dim", path), path + ".dim");
    if (dim_raw < 1 || dim_raw != std::floor(dim_raw) || dim_raw > 64)
      fail(path + ".dim", "expected an integer dimension in [1, 64]");
    m.dim = static_cast<std::size_t>(dim_raw);
    m.hamiltonian = matrix(require(j, "hamiltonian", path), m.dim, path + ".hamiltonian");
    if (j.contains("lamb_shift"))
      m.lamb_shift = rate(j["lamb_shift"], base_dir, path + ".lamb_shift");
    if (j.contains("lamb_shift_operator"))
      m.lamb_shift_operator =
          matrix(j["lamb_shift_operator"], m.dim, path + ".lamb_shift_operator");
    const json& chs = require(j, "channels", path);
    if (!chs.is_array() || chs.empty()) fail(path + ".channels", "expected a nonempty array");
    for (std::size_t i = 0; i < chs.size(); ++i) {
      std::string cp = path + ".channels[" + std::to_string(i) + "]";
      const json& cj = chs[i];
      std::string label = cj.contains("label") ? cj["label"].get<std::string>()
                                               : "channel" + std::to_string(i);
      m.channels.push_back(DecayChannel{matrix(require(cj, "matrix", cp), m.dim, cp + ".matrix"),
                                        rate(require(cj, "rate", cp), base_dir, cp + ".rate"),
                                        std::move(label)});
    }
    m.initial_state = state(require(j, "initial_state", path), m.dim, path + ".initial_state");
    return m;
  }
  fail(path + ".type", "unknown model type '" + type + "' (use two_level or custom)");
}

}  // namespace cfg_detail

inline RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                              std::optional<std::uint64_t> seed_override = {}) {
  using cfg_detail::fail;
  using cfg_detail::number;
  using cfg_detail::require;

  if (!j.is_object()) fail("config", "expected a JSON object");
  RunConfig cfg;
  cfg.model = cfg_detail::model(require(j, "model", "config"), base_dir, "model");

  std::vector<std::string> diags = validate(cfg.model);
  if (!diags.empty()) fail("model", diags.front());

  double n_raw = number(require(j, "n_members", "config"), "n_members");
  if (n_raw < 1 || n_raw != std::floor(n_raw)) fail("n_members", "expected a positive integer");
  cfg.n_members = static_cast<std::int64_t>(n_raw);

  if (seed_override) {
    cfg.seed = *seed_override;
  } else {
    if (!j.contains("seed")) fail("seed", "seed required");
    const nlohmann::json& s = j["seed"];
    if (!s.is_number_integer() && !s.is_number_unsigned())
      fail("seed", "expected an integer seed");
    cfg.seed = s.get<std::uint64_t>();
  }

  cfg.t_max = number(require(j, "t_max", "config"), "t_max");
  if (!(cfg.t_max > 0.0)) fail("t_max", "expected t_max > 0");

  if (j.contains("step")) {
    const nlohmann::json& st = j["step"];
    if (!st.is_object()) fail("step", "expected an object");
    if (st.contains("dt")) cfg.step.dt = number(st["dt"], "step.dt");
    if (st.contains("max_jump_prob"))
      cfg.step.max_jump_prob = number(st["max_jump_prob"], "step.max_jump_prob");
    if (st.contains("order")) {
      std::string o = st["order"].get<std::string>();
      if (o == "first") cfg.step.order = IntegratorOrder::first;
      else if (o == "fourth") cfg.step.order = IntegratorOrder::fourth;
      else fail("step.order", "expected 'first' or 'fourth'");
    }
  }
  try {
    validate(cfg.step);
  } catch (const std::invalid_argument& e) {
    fail("step", e.what());
  }
  if (cfg.step.dt > cfg.t_max) fail("step.dt", "dt exceeds t_max");

  if (j.contains("output")) {
    const nlohmann::json& out = j["output"];
    if (!out.is_object()) fail("output", "expected an object");
    if (out.contains("spacing") && out.contains("times"))
      fail("output", "give either spacing or times, not both");
    if (out.contains("spacing")) {
      double s = number(out["spacing"], "output.spacing");
      if (!(s > 0.0)) fail("output.spacing", "expected spacing > 0");
      cfg.output.spacing = s;
    } else if (out.contains("times")) {
      std::vector<double> ts;
      for (const nlohmann::json& v : out["times"]) ts.push_back(number(v, "output.times"));
      if (ts.empty()) fail("output.times", "expected at least one time");
      for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] < 0.0 || ts[i] > cfg.t_max + 1e-9 * std::max(1.0, cfg.t_max))
          fail("output.times", "time outside [0, t_max]");
        if (i > 0 && !(ts[i - 1] < ts[i])) fail("output.times", "times not strictly ascending");
      }
      cfg.output.times = std::move(ts);
    } else {
      fail("output", "expected spacing or times");
    }
  }

  if (j.contains("observables")) {
    const nlohmann::json& obs = j["observables"];
    if (!obs.is_array() || obs.empty()) fail("observables", "expected a nonempty array");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      std::string op = "observables[" + std::to_string(i) + "]";
      const nlohmann::json& o = obs[i];
      std::string name = require(o, "name", op).get<std::string>();
      Operator mat = cfg_detail::matrix(require(o, "matrix", op), cfg.model.dim, op + ".matrix");
      if (mat.hermiticity_error() > 1e-12) fail(op + ".matrix", "observable not Hermitian");
      cfg.observables.push_back(NamedObservable{std::move(name), std::move(mat)});
    }
  } else if (cfg.model.dim == 2) {
    cfg.observables.push_back(NamedObservable{"P_e", excited_projector()});
  } else {
    fail("observables", "required for models with dim != 2");
  }

  if (j.contains("engine")) {
    const nlohmann::json& en = j["engine"];
    if (!en.is_object()) fail("engine", "expected an object");
    if (en.contains("adaptive_dt")) {
      if (!en["adaptive_dt"].is_boolean()) fail("engine.adaptive_dt", "expected a boolean");
      cfg.policy.adaptive_dt = en["adaptive_dt"].get<bool>();
    }
    if (en.contains("orphans")) {
      std::string o = en["orphans"].get<std::string>();
      if (o == "strict") cfg.policy.orphans = OrphanPolicy::strict;
      else if (o == "permissive") cfg.policy.orphans = OrphanPolicy::permissive;
      else fail("engine.orphans", "expected 'strict' or 'permissive'");
    }
    if (en.contains("max_subdivisions")) {
      double v = number(en["max_subdivisions"], "engine.max_subdivisions");
      if (v < 0 || v > 16 || v != std::floor(v))
        fail("engine.max_subdivisions", "expected an integer in [0, 16]");
      cfg.policy.max_subdivisions = static_cast<int>(v);
    }
  }

  if (j.contains("record_counts")) {
    if (!j["record_counts"].is_boolean()) fail("record_counts", "expected a boolean");
    cfg.record_counts = j["record_counts"].get<bool>();
  }

  return cfg;
}

inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              std::optional<std::uint64_t> seed_override = {}) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: invalid JSON");
  return parse_config(j, base_dir, seed_override);
}

inline RunConfig load_config(const std::filesystem::path& file,
                             std::optional<std::uint64_t> seed_override = {}) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw ConfigError("config: cannot open " + file.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  std::filesystem::path base = file.has_parent_path() ? file.parent_path()
                                                      : std::filesystem::path(".");
  return parse_config(ss.str(), base, seed_override);
}

}  // namespace nmqj

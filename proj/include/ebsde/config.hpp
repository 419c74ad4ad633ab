#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ebsde/csv.hpp"
#include "ebsde/drivers.hpp"
#include "ebsde/error.hpp"
#include "ebsde/ergodic_cost.hpp"
#include "ebsde/oracles.hpp"
#include "ebsde/sde.hpp"
#include "ebsde/solvers.hpp"
#include "ebsde/utilities.hpp"

namespace ebsde {

// Grammar, one entry per line:
//   key = value      # trailing comment
// Keys are dotted (section.name). Lists are comma separated. Blank lines and
// lines starting with '#' are ignored. A key may appear once per file.

enum class ValueType { Real, Int, Bool, Text, RealList, IntList };

struct KeySpec {
  std::string key;
  ValueType type;
  std::string fallback;               // default, already in canonical form
  std::vector<std::string> choices;   // Text keys only; empty accepts anything
};

inline const std::vector<KeySpec>& config_schema() {
  using V = ValueType;
  static const std::vector<KeySpec> schema = {
      {"model.drift", V::Text, "ou", {"ou", "affine"}},
      {"model.mu", V::Real, "1", {}},
      {"model.slope", V::Real, "-1", {}},
      {"model.intercept", V::Real, "0", {}},
      {"model.kappa", V::RealList, "1", {}},
      {"model.v0", V::Real, "0", {}},
      {"grid.h", V::Real, "0.01", {}},
      {"grid.T", V::Real, "1", {}},
      {"grid.max_steps", V::Int, "0", {}},
      {"driver.kind", V::Text, "example1", {"example1", "example2", "log", "exp", "power", "constant"}},
      {"driver.C_v", V::Real, "1", {}},
      {"driver.c", V::Real, "0", {}},
      {"driver.delta", V::Real, "0.5", {}},
      {"driver.gamma", V::Real, "0.5", {}},
      {"driver.theta_kind", V::Text, "linear", {"linear", "constant"}},
      {"driver.theta", V::Real, "0", {}},
      {"driver.b", V::Real, "1", {}},
      {"driver.theta_vector", V::RealList, "", {}},
      {"driver.constraint", V::Text, "full", {"full", "box", "axis"}},
      {"driver.free_coords", V::IntList, "", {}},
      {"driver.box_lo", V::RealList, "", {}},
      {"driver.box_hi", V::RealList, "", {}},
      {"driver.truncate", V::Bool, "false", {}},
      {"driver.K", V::Text, "auto", {}},
      {"train.solver", V::Text, "gebsde", {"gebsde", "laebsde", "regression"}},
      {"train.batch", V::Int, "64", {}},
      {"train.steps", V::Int, "10000", {}},
      {"train.lr", V::Real, "0.0003", {}},
      {"train.seed", V::Int, "1", {}},
      {"train.resample", V::Bool, "false", {}},
      {"train.lr_decay", V::Bool, "false", {}},
      {"train.log_every", V::Int, "10", {}},
      {"train.eval_every", V::Int, "500", {}},
      {"train.eval_batch", V::Int, "0", {}},
      {"train.y0", V::Text, "auto", {}},
      {"train.basis_degree", V::Int, "4", {}},
      {"train.lambda_hat", V::Text, "auto", {}},
      {"estimator.method", V::Text, "ratio", {"ratio", "linear-exp", "cole-hopf"}},
      {"estimator.M", V::Int, "10000", {}},
      {"estimator.reps", V::Int, "1", {}},
      {"output.dir", V::Text, "out", {}},
      {"oracle.z_convention", V::Text, "markovian", {"markovian", "verbatim"}},
      {"utility.kind", V::Text, "auto", {"auto", "log", "exp", "power"}},
      {"utility.x0", V::Real, "1", {}},
      {"utility.u0_scale", V::Real, "1", {}},
      {"utility.x_min", V::Real, "0.1", {}},
      {"utility.x_max", V::Real, "3", {}},
      {"utility.x_points", V::Int, "30", {}},
      {"utility.t_points", V::Int, "11", {}},
      {"utility.paths", V::Int, "1000", {}},
      {"table.kind", V::Text, "lambda", {"lambda", "comparison", "err-h"}},
      {"table.h_list", V::RealList, "0.05,0.02,0.01", {}},
      {"table.M_list", V::IntList, "1000,10000", {}},
      {"table.reps", V::Int, "20", {}},
      {"table.trainings", V::Int, "0", {}},
      {"simulate.paths", V::Int, "1000", {}},
      {"simulate.dump", V::Bool, "false", {}},
  };
  return schema;
}

inline const KeySpec* find_key(const std::string& key) {
  for (const auto& k : config_schema())
    if (k.key == key) return &k;
  return nullptr;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline std::optional<double> parse_real(const std::string& s) {
  double x = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(x)) return std::nullopt;
  return x;
}

inline std::optional<long long> parse_int(const std::string& s) {
  long long x = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec == std::errc{} && r.ptr == s.data() + s.size()) return x;
  // accept 1e5 style integers
  auto d = parse_real(s);
  if (d && *d == std::floor(*d) && std::abs(*d) < 9.0e15) return static_cast<long long>(*d);
  return std::nullopt;
}

// Canonical text of a value, or ConfigError.
inline std::string canonical(const KeySpec& spec, const std::string& raw) {
  const std::string v = trim(raw);
  auto bad = [&](const std::string& what) {
    return Error(ErrorCode::ConfigError, spec.key + ": " + what + " (got '" + v + "')");
  };
  switch (spec.type) {
    case ValueType::Real: {
      auto x = parse_real(v);
      if (!x) throw bad("expected a real number");
      return fmt_num(*x);
    }
    case ValueType::Int: {
      auto x = parse_int(v);
      if (!x) throw bad("expected an integer");
      return std::to_string(*x);
    }
    case ValueType::Bool:
      if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
      if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
      throw bad("expected true or false");
    case ValueType::Text:
      if (!spec.choices.empty() && std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end()) {
        std::string all;
        for (const auto& c : spec.choices) all += (all.empty() ? "" : "|") + c;
        throw bad("expected one of " + all);
      }
      return v;
    case ValueType::RealList:
    case ValueType::IntList: {
      std::string out;
      for (const auto& item : split_list(v)) {
        std::string c;
        if (spec.type == ValueType::RealList) {
          auto x = parse_real(item);
          if (!x) throw bad("expected a list of reals");
          c = fmt_num(*x);
        } else {
          auto x = parse_int(item);
          if (!x) throw bad("expected a list of integers");
          c = std::to_string(*x);
        }
        out += (out.empty() ? "" : ",") + c;
      }
      return out;
    }
  }
  return v;
}

}  // namespace detail

/// Validated experiment configuration. Every schema key has a value; reads
/// go through typed accessors.
class Config {
 public:
  Config() {
    for (const auto& k : config_schema()) values_[k.key] = k.fallback;
  }

  void set(const std::string& key, const std::string& raw) {
    const KeySpec* spec = find_key(key);
    if (!spec) throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
    values_[key] = detail::canonical(*spec, raw);
  }

  /// Apply `key = value` lines. Unknown or repeated keys are errors.
  void merge_text(const std::string& text, const std::string& origin = "<text>") {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> seen;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = origin + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, where + ": expected key = value");
      const std::string key = detail::trim(line.substr(0, eq));
      if (std::find(seen.begin(), seen.end(), key) != seen.end())
        throw Error(ErrorCode::ConfigError, where + ": duplicate key '" + key + "'");
      seen.push_back(key);
      try {
        set(key, line.substr(eq + 1));
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, where + ": " + e.what());
      }
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    merge_text(ss.str(), path);
  }

  const std::string& text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
    return it->second;
  }
  double real(const std::string& key) const { return *detail::parse_real(text(key)); }
  long long integer(const std::string& key) const { return *detail::parse_int(text(key)); }
  std::size_t count(const std::string& key) const {
    const long long x = integer(key);
    require(x >= 0, ErrorCode::ConfigError, key + " must be non-negative");
    return static_cast<std::size_t>(x);
  }
  bool flag(const std::string& key) const { return text(key) == "true"; }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : detail::split_list(text(key))) out.push_back(*detail::parse_real(s));
    return out;
  }
  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& s : detail::split_list(text(key))) {
      const long long x = *detail::parse_int(s);
      require(x >= 0, ErrorCode::ConfigError, key + " entries must be non-negative");
      out.push_back(static_cast<std::size_t>(x));
    }
    return out;
  }
  /// Real value, or nullopt when the key holds "auto".
  std::optional<double> real_or_auto(const std::string& key) const {
    const std::string& s = text(key);
    if (s == "auto") return std::nullopt;
    auto x = detail::parse_real(s);
    if (!x) throw Error(ErrorCode::ConfigError, key + ": expected a real number or auto (got '" + s + "')");
    return x;
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("train.seed")); }

  /// Every key, sorted, one `key = value` per line.
  std::string dump() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  /// FNV-1a over the dump without output.* keys, so relocating the output
  /// directory leaves the hash unchanged.
  std::uint64_t hash() const {
    std::string text;
    for (const auto& [k, v] : values_)
      if (k.rfind("output.", 0) != 0) text += k + " = " + v + "\n";
    std::uint64_t hv = 1469598103934665603ull;
    for (unsigned char c : text) {
      hv ^= c;
      hv *= 1099511628211ull;
    }
    return hv;
  }

  std::string hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

  /// Provenance line written at the top of every CSV.
  std::string provenance() const { return "config_hash=" + hash_hex() + " seed=" + std::to_string(seed()); }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// presets (kept identical to configs/*.conf)

inline const std::map<std::string, std::string>& preset_texts() {
  static const std::map<std::string, std::string> presets = {
      {"example1",
       "# Example 1: F(v) = C_v v exp(-v^2/2), lambda = 0\n"
       "model.drift = ou\n"
       "model.mu = 1.5\n"
       "model.kappa = 0.8\n"
       "model.v0 = 0\n"
       "grid.h = 0.01\n"
       "grid.T = 1\n"
       "driver.kind = example1\n"
       "driver.C_v = 1\n"
       "train.solver = gebsde\n"
       "train.batch = 64\n"
       "train.steps = 10000\n"
       "train.lr = 0.0003\n"
       "estimator.method = ratio\n"
       "estimator.M = 10000\n"
       "table.kind = err-h\n"
       "table.h_list = 0.04,0.02,0.01\n"
       "table.M_list = 20000\n"
       "output.dir = out/example1\n"},
      {"example2",
       "# Example 2: F(v) = C_v |v| exp(-v^2/2), mu = kappa^2/2\n"
       "model.drift = ou\n"
       "model.mu = 1\n"
       "model.kappa = 1.4142135623730951\n"
       "model.v0 = 0\n"
       "grid.h = 0.01\n"
       "grid.T = 1\n"
       "driver.kind = example2\n"
       "driver.C_v = 0.75\n"
       "train.solver = gebsde\n"
       "train.batch = 64\n"
       "train.steps = 10000\n"
       "train.lr = 0.0003\n"
       "estimator.method = ratio\n"
       "estimator.M = 10000\n"
       "output.dir = out/example2\n"},
      {"example1-mc",
       "# Example 1 with the Monte Carlo table parameters\n"
       "model.drift = ou\n"
       "model.mu = 2\n"
       "model.kappa = 2\n"
       "model.v0 = 0.5\n"
       "grid.h = 0.01\n"
       "grid.T = 1\n"
       "driver.kind = example1\n"
       "driver.C_v = 1\n"
       "estimator.method = ratio\n"
       "estimator.M = 10000\n"
       "estimator.reps = 20\n"
       "table.kind = lambda\n"
       "table.h_list = 0.05,0.02,0.01\n"
       "table.M_list = 1000,10000,100000\n"
       "table.reps = 100\n"
       "output.dir = out/example1-mc\n"},
      {"example2-mc",
       "# Example 2 with the Monte Carlo table parameters\n"
       "model.drift = ou\n"
       "model.mu = 2\n"
       "model.kappa = 2\n"
       "model.v0 = 0.5\n"
       "grid.h = 0.01\n"
       "grid.T = 1\n"
       "driver.kind = example2\n"
       "driver.C_v = 1\n"
       "estimator.method = ratio\n"
       "estimator.M = 10000\n"
       "estimator.reps = 20\n"
       "table.kind = lambda\n"
       "table.h_list = 0.05,0.02,0.01\n"
       "table.M_list = 1000,10000,100000\n"
       "table.reps = 100\n"
       "output.dir = out/example2-mc\n"},
      {"power-5.3",
       "# power utility, truncated linear premium theta(v) = max(-b, min(b, theta v))\n"
       "model.drift = ou\n"
       "model.mu = 3\n"
       "model.kappa = 1.3\n"
       "model.v0 = 0\n"
       "grid.h = 0.01\n"
       "grid.T = 1\n"
       "driver.kind = power\n"
       "driver.delta = 0.5\n"
       "driver.theta_kind = linear\n"
       "driver.theta = 0.8\n"
       "driver.b = 3\n"
       "driver.constraint = full\n"
       "train.solver = gebsde\n"
       "train.batch = 64\n"
       "train.steps = 10000\n"
       "train.lr = 0.0007\n"
       "estimator.method = cole-hopf\n"
       "estimator.M = 100000\n"
       "table.kind = lambda\n"
       "table.h_list = 0.05,0.02,0.01\n"
       "table.M_list = 1000,10000,100000\n"
       "table.reps = 10\n"
       "utility.kind = power\n"
       "utility.x0 = 1\n"
       "output.dir = out/power-5.3\n"},
      {"two-dim-5.3",
       "# two Brownian factors, trading restricted to the first asset\n"
       "model.drift = ou\n"
       "model.mu = 3\n"
       "model.kappa = 1.0,0.83\n"
       "model.v0 = 0\n"
       "grid.h = 0.01\n"
       "grid.T = 1\n"
       "driver.kind = power\n"
       "driver.delta = 0.5\n"
       "driver.theta_kind = linear\n"
       "driver.theta = 0.8\n"
       "driver.b = 3\n"
       "driver.constraint = axis\n"
       "driver.free_coords = 0\n"
       "train.solver = gebsde\n"
       "train.batch = 64\n"
       "train.steps = 10000\n"
       "train.lr = 0.0007\n"
       "estimator.method = cole-hopf\n"
       "estimator.M = 100000\n"
       "utility.kind = power\n"
       "utility.x0 = 1\n"
       "output.dir = out/two-dim-5.3\n"},
  };
  return presets;
}

inline Config preset_config(const std::string& name) {
  const auto& p = preset_texts();
  auto it = p.find(name);
  if (it == p.end()) {
    std::string all;
    for (const auto& [k, v] : p) all += (all.empty() ? "" : ", ") + k;
    throw Error(ErrorCode::ConfigError, "unknown preset '" + name + "' (available: " + all + ")");
  }
  Config c;
  c.merge_text(it->second, name);
  return c;
}

// ---------------------------------------------------------------------------
// builders

inline FactorModel build_model(const Config& c) {
  FactorModel m = c.text("model.drift") == "ou"
                      ? FactorModel::ou(c.real("model.mu"), c.reals("model.kappa"), c.real("model.v0"))
                      : FactorModel::affine(c.real("model.slope"), c.real("model.intercept"), c.reals("model.kappa"),
                                            c.real("model.v0"));
  require(!m.kappa.empty(), ErrorCode::ConfigError, "model.kappa must list at least one entry");
  m.validate();
  return m;
}

inline TimeGrid build_grid(const Config& c) {
  TimeGrid g{c.real("grid.h"), c.real("grid.T"), c.count("grid.max_steps")};
  g.validate();
  return g;
}

inline RiskPremiumSpec build_premium(const Config& c) {
  if (c.text("driver.theta_kind") == "linear")
    return RiskPremiumSpec::truncated_linear(c.real("driver.theta"), c.real("driver.b"));
  return RiskPremiumSpec::constant(c.reals("driver.theta_vector"));
}

inline ConvexSet build_constraint(const Config& c) {
  const std::string& k = c.text("driver.constraint");
  if (k == "box") return ConvexSet::box(c.reals("driver.box_lo"), c.reals("driver.box_hi"));
  if (k == "axis") return ConvexSet::axis_subspace(c.counts("driver.free_coords"));
  return ConvexSet::full();
}

/// Driver without truncation radius; see resolve_driver.
inline Driver build_driver(const Config& c) {
  const std::size_t d = c.reals("model.kappa").size();
  const std::string& k = c.text("driver.kind");
  Driver f;
  if (k == "example1") f = Driver::example1(c.real("driver.C_v"), d);
  else if (k == "example2") f = Driver::example2(c.real("driver.C_v"), d);
  else if (k == "constant") f = Driver::constant(c.real("driver.c"), d);
  else if (k == "log") f = Driver::log_utility(build_premium(c), build_constraint(c), d);
  else if (k == "exp") f = Driver::exp_utility(c.real("driver.gamma"), build_premium(c), build_constraint(c), d);
  else f = Driver::power_utility(c.real("driver.delta"), build_premium(c), build_constraint(c), d);
  f.validate();
  return f;
}

/// Driver with truncation radius filled from the theoretical Z_max when
/// driver.truncate is set.
inline Driver resolve_driver(const Config& c, const FactorModel& m) {
  Driver f = build_driver(c);
  if (c.flag("driver.truncate")) {
    f.truncate = true;
    f.z_max = bounds(f, m).Z_max;
  }
  return f;
}

/// K from config, or sup |F(v,0)| (analytic where available, mesh otherwise).
inline double resolve_K(const Config& c, const Driver& f) {
  if (auto k = c.real_or_auto("driver.K")) {
    require(*k > 0.0, ErrorCode::ConfigError, "driver.K must be positive");
    return *k;
  }
  const double a = driver_k_analytic(f);
  const double k = a >= 0.0 ? a : driver_k_numeric(f);
  return k > 0.0 ? k : 1.0;
}

inline std::optional<OracleSolution> build_oracle(const Config& c, const FactorModel& m, const Driver& f) {
  const ZConvention conv =
      c.text("oracle.z_convention") == "verbatim" ? ZConvention::Verbatim : ZConvention::Markovian;
  if (m.dims() != 1 || m.drift_kind != DriftKind::OrnsteinUhlenbeck) return std::nullopt;
  if (f.kind == DriverKind::Example1) return example1_solution(f.c_v, m.mu, m.kappa[0], conv);
  if (f.kind == DriverKind::Example2) return example2_solution(f.c_v, m.kappa[0]);
  return std::nullopt;
}

inline UtilityKind utility_kind_for(const Config& c, const Driver& f) {
  const std::string& k = c.text("utility.kind");
  if (k == "log") return UtilityKind::Log;
  if (k == "exp") return UtilityKind::Exp;
  if (k == "power") return UtilityKind::Power;
  if (f.kind == DriverKind::Log) return UtilityKind::Log;
  if (f.kind == DriverKind::Exp) return UtilityKind::Exp;
  return UtilityKind::Power;
}

inline UtilitySpec build_utility(const Config& c, const Driver& f) {
  UtilitySpec u;
  u.kind = utility_kind_for(c, f);
  u.delta = f.kind == DriverKind::Power ? f.delta : c.real("driver.delta");
  u.gamma = f.kind == DriverKind::Exp ? f.gamma : c.real("driver.gamma");
  u.u0_scale = c.real("utility.u0_scale");
  u.x0 = c.real("utility.x0");
  u.validate();
  return u;
}

/// Y_0: explicit value, else the oracle's y(v0) for the examples, else the
/// initial-utility linkage for utility drivers, else 0.
inline double resolve_y0(const Config& c, const FactorModel& m, const Driver& f) {
  if (auto y = c.real_or_auto("train.y0")) return *y;
  if (auto o = build_oracle(c, m, f)) return o->y(m.v0);
  if (f.kind == DriverKind::Log || f.kind == DriverKind::Exp || f.kind == DriverKind::Power)
    return build_utility(c, f).y0();
  return 0.0;
}

inline LambdaMethod build_method(const Config& c) {
  const std::string& k = c.text("estimator.method");
  if (k == "linear-exp") return LambdaMethod::LinearExp;
  if (k == "cole-hopf") return LambdaMethod::ColeHopf;
  return LambdaMethod::Ratio;
}

inline SolverKind build_solver_kind(const Config& c) {
  const std::string& k = c.text("train.solver");
  if (k == "laebsde") return SolverKind::LAeBSDE;
  if (k == "regression") return SolverKind::Regression;
  return SolverKind::GeBSDE;
}

inline SolverConfig build_solver_config(const Config& c, std::size_t threads = 1) {
  SolverConfig s;
  s.kind = build_solver_kind(c);
  s.model = build_model(c);
  s.grid = build_grid(c);
  s.driver = resolve_driver(c, s.model);
  s.batch = c.count("train.batch");
  s.steps = c.count("train.steps");
  s.adam.lr = c.real("train.lr");
  s.adam.lr_decay = c.flag("train.lr_decay");
  s.seed = c.seed();
  s.y0 = resolve_y0(c, s.model, s.driver);
  s.K = resolve_K(c, s.driver);
  s.resample = c.flag("train.resample");
  s.eval_batch = c.count("train.eval_batch");
  s.eval_every = c.count("train.eval_every");
  s.log_every = std::max<std::size_t>(1, c.count("train.log_every"));
  s.threads = std::max<std::size_t>(1, threads);
  s.validate();
  return s;
}

}  // namespace ebsde

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stabcert/catalog.hpp"
#include "stabcert/detail/parallel.hpp"
#include "stabcert/gains.hpp"
#include "stabcert/lyapunov.hpp"
#include "stabcert/properties.hpp"
#include "stabcert/system.hpp"
#include "stabcert/trajectory.hpp"

namespace stabcert::config {

using Json = nlohmann::json;

/// Malformed or inconsistent configuration; the command line maps it to exit 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

[[nodiscard]] inline const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(where + ": missing key '" + key + "'");
  }
  return j.at(key);
}

[[nodiscard]] inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) {
    throw ConfigError(where + ": expected a number");
  }
  return j.get<double>();
}

[[nodiscard]] inline double number_or(const Json& j, const char* key, double fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    return fallback;
  }
  return number(j.at(key), where + "." + key);
}

[[nodiscard]] inline std::size_t count_or(const Json& j, const char* key, std::size_t fallback,
                                          const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    return fallback;
  }
  const Json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(where + "." + key + ": expected a nonnegative integer");
  }
  return v.get<std::size_t>();
}

[[nodiscard]] inline std::vector<double> vector(const Json& j, const std::string& where) {
  if (!j.is_array()) {
    throw ConfigError(where + ": expected an array of numbers");
  }
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

[[nodiscard]] inline std::vector<std::vector<double>> matrix(const Json& j, const std::string& where) {
  if (!j.is_array()) {
    throw ConfigError(where + ": expected an array of rows");
  }
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(vector(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

/// Numbers from either an explicit list or {"lo", "hi", "count"}.
[[nodiscard]] inline std::vector<double> axis(const Json& j, const std::string& where) {
  if (j.is_array()) {
    return vector(j, where);
  }
  const double lo = number(require(j, "lo", where), where + ".lo");
  const double hi = number(require(j, "hi", where), where + ".hi");
  const std::size_t count = count_or(j, "count", 0, where);
  if (count == 0) {
    throw ConfigError(where + ": count must be positive");
  }
  return linspace(lo, hi, count);
}

/// Two-column CSV (r, v) with an optional header line.
[[nodiscard]] inline std::pair<std::vector<double>, std::vector<double>> read_two_columns(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open gain table " + path.string());
  }
  std::vector<double> r;
  std::vector<double> v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double a = 0.0;
    double b = 0.0;
    if (!(row >> a >> b)) {
      if (line_no == 1) {
        continue;  // header
      }
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected two numbers");
    }
    r.push_back(a);
    v.push_back(b);
  }
  return {std::move(r), std::move(v)};
}

}  // namespace detail

/// Named gains and envelopes declared under "definitions", plus the directory
/// used to resolve relative CSV paths.
struct Context {
  std::filesystem::path base_dir = ".";
  std::map<std::string, Json> definitions;
  mutable std::vector<std::string> resolving;
};

[[nodiscard]] inline ScalarGain parse_gain(const Json& j, const Context& ctx, const std::string& where = "gain");

[[nodiscard]] inline const Json& resolve_reference(const Json& j, const Context& ctx, const std::string& where) {
  const std::string name = j.get<std::string>();
  const auto it = ctx.definitions.find(name);
  if (it == ctx.definitions.end()) {
    throw ConfigError(where + ": unknown definition '" + name + "'");
  }
  if (std::find(ctx.resolving.begin(), ctx.resolving.end(), name) != ctx.resolving.end()) {
    throw ConfigError(where + ": circular definition '" + name + "'");
  }
  return it->second;
}

/// Gain families: identity, linear{slope}, power{coeff, exponent},
/// table{r, v | csv, tail}, max{parts}, sum{parts}, compose{outer, inner}.
/// A string refers to an entry of "definitions".
[[nodiscard]] inline ScalarGain parse_gain(const Json& j, const Context& ctx, const std::string& where) {
  if (j.is_string()) {
    const Json& target = resolve_reference(j, ctx, where);
    ctx.resolving.push_back(j.get<std::string>());
    auto g = parse_gain(target, ctx, where + "->" + j.get<std::string>());
    ctx.resolving.pop_back();
    return g;
  }
  const Json& fam = detail::require(j, "family", where);
  if (!fam.is_string()) {
    throw ConfigError(where + ".family: expected a string");
  }
  const std::string family = fam.get<std::string>();
  try {
    if (family == "identity") {
      return ScalarGain::identity();
    }
    if (family == "linear") {
      return ScalarGain::linear(detail::number(detail::require(j, "slope", where), where + ".slope"));
    }
    if (family == "power") {
      return ScalarGain::power(detail::number_or(j, "coeff", 1.0, where),
                               detail::number(detail::require(j, "exponent", where), where + ".exponent"));
    }
    if (family == "table") {
      std::vector<double> r;
      std::vector<double> v;
      if (j.contains("csv")) {
        auto path = std::filesystem::path(j.at("csv").get<std::string>());
        if (path.is_relative()) {
          path = ctx.base_dir / path;
        }
        std::tie(r, v) = detail::read_two_columns(path);
      } else {
        r = detail::vector(detail::require(j, "r", where), where + ".r");
        v = detail::vector(detail::require(j, "v", where), where + ".v");
      }
      TailRule tail = TailRule::none;
      if (j.contains("tail")) {
        const std::string t = j.at("tail").get<std::string>();
        if (t == "linear") {
          tail = TailRule::linear;
        } else if (t != "none") {
          throw ConfigError(where + ".tail: expected 'none' or 'linear'");
        }
      }
      return ScalarGain::table(std::move(r), std::move(v), tail);
    }
    if (family == "max" || family == "sum") {
      const Json& parts = detail::require(j, "parts", where);
      if (!parts.is_array()) {
        throw ConfigError(where + ".parts: expected an array");
      }
      std::vector<ScalarGain> gains;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        gains.push_back(parse_gain(parts[i], ctx, where + ".parts[" + std::to_string(i) + "]"));
      }
      return family == "max" ? ScalarGain::max_of(std::move(gains)) : ScalarGain::sum_of(std::move(gains));
    }
    if (family == "compose") {
      return ScalarGain::compose(parse_gain(detail::require(j, "outer", where), ctx, where + ".outer"),
                                 parse_gain(detail::require(j, "inner", where), ctx, where + ".inner"));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ": unknown gain family '" + family + "'");
}

/// KL families: exp_kl{phi, a, b} for phi(s) e^{a - b t}, and
/// table{s, t, values} with values given as rows over t.
[[nodiscard]] inline KLEnvelope parse_envelope(const Json& j, const Context& ctx, const std::string& where = "beta") {
  if (j.is_string()) {
    const Json& target = resolve_reference(j, ctx, where);
    ctx.resolving.push_back(j.get<std::string>());
    auto b = parse_envelope(target, ctx, where + "->" + j.get<std::string>());
    ctx.resolving.pop_back();
    return b;
  }
  const Json& fam = detail::require(j, "family", where);
  const std::string family = fam.is_string() ? fam.get<std::string>() : "";
  try {
    if (family == "exp_kl") {
      const ScalarGain phi =
          j.contains("phi") ? parse_gain(j.at("phi"), ctx, where + ".phi") : ScalarGain::identity();
      return KLEnvelope::exponential(phi, detail::number_or(j, "a", 0.0, where),
                                     detail::number(detail::require(j, "b", where), where + ".b"));
    }
    if (family == "table") {
      auto s = detail::vector(detail::require(j, "s", where), where + ".s");
      auto t = detail::vector(detail::require(j, "t", where), where + ".t");
      const auto rows = detail::matrix(detail::require(j, "values", where), where + ".values");
      std::vector<double> flat;
      for (const auto& row : rows) {
        flat.insert(flat.end(), row.begin(), row.end());
      }
      if (rows.size() != s.size() || flat.size() != s.size() * t.size()) {
        throw ConfigError(where + ".values: expected one row of length |t| per s node");
      }
      return KLEnvelope::table(std::move(s), std::move(t), std::move(flat));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ": unknown envelope family '" + family + "'");
}

/// Regions: gain{rho}, origin, empty, everything, ball{radius}, box{lo, hi}.
[[nodiscard]] inline RegionPredicate parse_region(const Json& j, const Context& ctx,
                                                  const std::string& where = "region") {
  const std::string kind = j.is_string() ? j.get<std::string>() : detail::require(j, "kind", where).get<std::string>();
  try {
    if (kind == "gain") {
      return RegionPredicate::from_gain(parse_gain(detail::require(j, "rho", where), ctx, where + ".rho"));
    }
    if (kind == "origin") {
      return RegionPredicate::origin();
    }
    if (kind == "empty") {
      return RegionPredicate::empty();
    }
    if (kind == "everything") {
      return RegionPredicate::everything();
    }
    if (kind == "ball") {
      return RegionPredicate::ball(detail::number(detail::require(j, "radius", where), where + ".radius"));
    }
    if (kind == "box") {
      return RegionPredicate::box(detail::vector(detail::require(j, "lo", where), where + ".lo"),
                                  detail::vector(detail::require(j, "hi", where), where + ".hi"));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ": unknown region kind '" + kind + "'");
}

[[nodiscard]] inline DisturbanceSet parse_disturbances(const Json& j, const std::string& where) {
  if (j.is_null()) {
    return DisturbanceSet::zero(0);
  }
  if (j.contains("box")) {
    const Json& b = j.at("box");
    return DisturbanceSet::box(detail::vector(detail::require(b, "lo", where), where + ".box.lo"),
                               detail::vector(detail::require(b, "hi", where), where + ".box.hi"));
  }
  if (j.contains("points")) {
    return DisturbanceSet::points(detail::matrix(j.at("points"), where + ".points"));
  }
  if (j.contains("zero")) {
    return DisturbanceSet::zero(detail::count_or(j, "zero", 0, where));
  }
  throw ConfigError(where + ": expected 'box', 'points' or 'zero'");
}

/// {"catalog": name, "delta": ...} or {"linear": {A, B, H, G, disturbances}},
/// optionally with "magnitude": {"distance_to_points": [[...]]}.
[[nodiscard]] inline SystemPtr parse_system(const Json& j, const std::string& where = "system") {
  SystemPtr base;
  try {
    if (j.contains("catalog")) {
      const std::string name = j.at("catalog").get<std::string>();
      if (name == "disturbed_contraction") {
        base = catalog::disturbed_contraction(detail::number_or(j, "delta", 1.0, where));
      } else if (name == "zero_field") {
        base = catalog::zero_field(detail::count_or(j, "dim", 1, where));
      } else {
        for (const auto& e : catalog::entries()) {
          if (e.name == name && e.make) {
            base = e.make();
          }
        }
      }
      if (!base) {
        throw ConfigError(where + ": unknown catalog system '" + name + "'");
      }
    } else if (j.contains("linear")) {
      const Json& l = j.at("linear");
      const auto a = detail::matrix(detail::require(l, "A", where), where + ".linear.A");
      DisturbanceSet dist = l.contains("disturbances") ? parse_disturbances(l.at("disturbances"), where)
                                                       : DisturbanceSet::zero(0);
      auto b = l.contains("B") ? detail::matrix(l.at("B"), where + ".linear.B")
                               : catalog::Matrix(a.size(), std::vector<double>(dist.dim(), 0.0));
      base = catalog::linear_system(a, std::move(b), detail::matrix(detail::require(l, "H", where), where + ".H"),
                                    detail::matrix(detail::require(l, "G", where), where + ".G"), std::move(dist));
    } else {
      throw ConfigError(where + ": expected 'catalog' or 'linear'");
    }
    if (j.contains("magnitude")) {
      auto sys = std::make_shared<DisturbedSystem>(*base);
      const Json& m = j.at("magnitude");
      if (m.is_string() && m.get<std::string>() == "euclidean") {
        return sys;
      }
      sys->magnitude = catalog::distance_to_points(
          detail::matrix(detail::require(m, "distance_to_points", where + ".magnitude"), where + ".magnitude"));
      return sys;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return base;
}

[[nodiscard]] inline SimulationSettings parse_simulation(const Json& j, std::uint64_t seed) {
  SimulationSettings s;
  s.seed = seed;
  if (j.is_null()) {
    return s;
  }
  const std::string where = "simulation";
  s.dt = detail::number_or(j, "dt", s.dt, where);
  s.horizon = detail::number_or(j, "horizon", s.horizon, where);
  s.hold = detail::number_or(j, "hold", s.hold, where);
  s.blowup_bound = detail::number_or(j, "blowup_bound", s.blowup_bound, where);
  if (j.contains("strategy")) {
    try {
      s.strategy = parse_strategy(j.at("strategy").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(where + ".strategy: " + e.what());
    }
  }
  if (!(s.dt > 0.0) || !(s.horizon >= 0.0) || !(s.hold > 0.0) || !(s.blowup_bound > 0.0)) {
    throw ConfigError(where + ": dt, hold and blowup_bound must be positive and horizon nonnegative");
  }
  return s;
}

/// {"list": [[...]]}, {"box_grid": {lo, hi, counts}} or
/// {"annulus": {r_min, r_max, count}}; annulus samples draw from `seed`.
[[nodiscard]] inline std::vector<State> parse_initial_states(const Json& j, std::size_t dim, std::uint64_t seed) {
  const std::string where = "initial_states";
  std::vector<State> out;
  try {
    if (j.contains("list")) {
      out = detail::matrix(j.at("list"), where + ".list");
    } else if (j.contains("box_grid")) {
      const Json& b = j.at("box_grid");
      const auto counts_raw = detail::vector(detail::require(b, "counts", where), where + ".box_grid.counts");
      std::vector<std::size_t> counts;
      for (double c : counts_raw) {
        if (!(c >= 1.0) || c != std::floor(c)) {
          throw ConfigError(where + ".box_grid.counts: expected positive integers");
        }
        counts.push_back(static_cast<std::size_t>(c));
      }
      out = box_grid(detail::vector(detail::require(b, "lo", where), where + ".box_grid.lo"),
                     detail::vector(detail::require(b, "hi", where), where + ".box_grid.hi"), counts);
    } else if (j.contains("annulus")) {
      const Json& a = j.at("annulus");
      out = annulus_sample(dim, detail::number(detail::require(a, "r_min", where), where + ".annulus.r_min"),
                           detail::number(detail::require(a, "r_max", where), where + ".annulus.r_max"),
                           detail::count_or(a, "count", 0, where + ".annulus"), seed);
    } else {
      throw ConfigError(where + ": expected 'list', 'box_grid' or 'annulus'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (out.empty()) {
    throw ConfigError(where + ": no initial states");
  }
  for (const auto& x : out) {
    if (x.size() != dim) {
      throw ConfigError(where + ": initial state of dimension " + std::to_string(x.size()) + ", system has " +
                        std::to_string(dim));
    }
  }
  return out;
}

/// One hypothesis block of the "checks" list.
struct CheckSpec {
  std::string property;  // mes, sit, res, rmeb, reb, two_regime, small_gain, envelope
  std::string label;
  double slack = 1.02;
  std::optional<KLEnvelope> beta;
  std::map<std::string, ScalarGain> gains;
  std::optional<RegionPredicate> region;
  std::size_t stride = 50;
  std::vector<double> s_grid;
  std::size_t t_nodes = 41;
};

[[nodiscard]] inline CheckSpec parse_check(const Json& j, const Context& ctx, std::size_t index) {
  const std::string where = "checks[" + std::to_string(index) + "]";
  CheckSpec spec;
  spec.property = detail::require(j, "property", where).get<std::string>();
  spec.label = j.value("label", spec.property);
  spec.slack = detail::number_or(j, "slack", spec.slack, where);
  if (!(spec.slack >= 1.0)) {
    throw ConfigError(where + ".slack: must be at least 1");
  }
  const auto gain = [&](const char* key) {
    spec.gains.emplace(key, parse_gain(detail::require(j, key, where), ctx, where + "." + key));
  };
  const auto beta = [&] { spec.beta = parse_envelope(detail::require(j, "beta", where), ctx, where + ".beta"); };
  const std::string& p = spec.property;
  if (p == "mes") {
    beta();
    gain("gamma");
  } else if (p == "sit") {
    beta();
    gain("rho");
  } else if (p == "res") {
    beta();
    spec.region = parse_region(detail::require(j, "region", where), ctx, where + ".region");
  } else if (p == "rmeb") {
    gain("rho1");
    gain("sigma1");
    gain("sigma2");
  } else if (p == "reb") {
    if (j.contains("from_rmeb")) {
      const Json& r = j.at("from_rmeb");
      auto derived = reb_gains_from_rmeb(parse_gain(detail::require(r, "rho1", where), ctx, where + ".rho1"),
                                         parse_gain(detail::require(r, "sigma1", where), ctx, where + ".sigma1"),
                                         parse_gain(detail::require(r, "sigma2", where), ctx, where + ".sigma2"));
      spec.gains.emplace("rho2", derived.rho2);
      spec.gains.emplace("sigma", derived.sigma);
    } else {
      gain("rho2");
      gain("sigma");
    }
  } else if (p == "two_regime") {
    beta();
    gain("rho1");
    gain("sigma1");
    gain("sigma2");
    gain("rho_tilde");
  } else if (p == "small_gain") {
    beta();
    gain("gamma");
    spec.stride = detail::count_or(j, "stride", spec.stride, where);
  } else if (p == "envelope") {
    if (j.contains("s_grid")) {
      spec.s_grid = detail::axis(j.at("s_grid"), where + ".s_grid");
    }
  } else {
    throw ConfigError(where + ": unknown property '" + p + "'");
  }
  spec.t_nodes = detail::count_or(j, "t_nodes", spec.t_nodes, where);
  if (spec.t_nodes < 2) {
    throw ConfigError(where + ".t_nodes: need at least two time nodes");
  }
  return spec;
}

struct LyapunovSpec {
  RegionPredicate region = RegionPredicate::origin();
  std::vector<std::vector<double>> axes;
  ScalarGain alpha_tilde = ScalarGain::power(1.0, 2.0);
  std::optional<KLEnvelope> beta_tilde;
  ValueFunctionSettings settings;
  DecreaseProbeSettings probes;
  double slack = 1.02;
  // Optional quadratic candidate V(x) = x^T P x checked in integral and gradient form.
  std::optional<std::vector<std::vector<double>>> quadratic;
  ScalarGain alpha3 = ScalarGain::identity();
  double candidate_tol = 0.02;
};

[[nodiscard]] inline LyapunovSpec parse_lyapunov(const Json& j, const Context& ctx, const SimulationSettings& sim,
                                                 std::size_t dim) {
  const std::string where = "lyapunov";
  LyapunovSpec spec;
  if (j.contains("region")) {
    spec.region = parse_region(j.at("region"), ctx, where + ".region");
  }
  const Json& axes = detail::require(j, "axes", where);
  if (!axes.is_array() || axes.size() != dim) {
    throw ConfigError(where + ".axes: expected one axis per state dimension");
  }
  for (std::size_t a = 0; a < axes.size(); ++a) {
    spec.axes.push_back(detail::axis(axes[a], where + ".axes[" + std::to_string(a) + "]"));
  }
  if (j.contains("alpha_tilde")) {
    spec.alpha_tilde = parse_gain(j.at("alpha_tilde"), ctx, where + ".alpha_tilde");
  }
  if (j.contains("beta_tilde")) {
    spec.beta_tilde = parse_envelope(j.at("beta_tilde"), ctx, where + ".beta_tilde");
  }
  if (detail::number_or(j, "lambda", 2.0, where) != 2.0) {
    throw ConfigError(where + ".lambda: only the exponential path with lambda = 2 is supported");
  }
  spec.settings.budget = detail::count_or(j, "budget", 1, where);
  spec.settings.horizon_cap = detail::number_or(j, "horizon_cap", 10.0, where);
  spec.settings.dt = sim.dt;
  spec.settings.hold = sim.hold;
  spec.settings.strategy = sim.strategy;
  spec.settings.seed = sim.seed;
  spec.slack = detail::number_or(j, "slack", spec.slack, where);
  spec.probes.probes = detail::count_or(j, "probes", spec.probes.probes, where);
  spec.probes.horizon = detail::number_or(j, "probe_horizon", spec.probes.horizon, where);
  spec.probes.dt = sim.dt;
  spec.probes.hold = sim.hold;
  spec.probes.strategy = sim.strategy;
  spec.probes.seed = ::stabcert::detail::mix_seed(sim.seed, 0x9e3779b9U);
  spec.probes.slack = spec.slack;
  if (j.contains("candidate")) {
    const Json& c = j.at("candidate");
    spec.quadratic = detail::matrix(detail::require(c, "quadratic", where + ".candidate"), where + ".candidate");
    if (spec.quadratic->size() != dim) {
      throw ConfigError(where + ".candidate.quadratic: expected a square matrix of the state dimension");
    }
    if (c.contains("alpha3")) {
      spec.alpha3 = parse_gain(c.at("alpha3"), ctx, where + ".candidate.alpha3");
    }
    spec.candidate_tol = detail::number_or(c, "tol", spec.candidate_tol, where + ".candidate");
  }
  return spec;
}

/// Parsed run configuration. Every random choice derives from `seed`.
struct RunConfig {
  Json raw;
  Context context;
  std::uint64_t seed = 0;
  SystemPtr system;
  SimulationSettings simulation;
  std::vector<State> initial;
  std::size_t chunk = 250;  // trajectories held in memory at once
  std::vector<CheckSpec> checks;
  std::optional<LyapunovSpec> lyapunov;
  bool write_trajectories = true;
  std::size_t max_violation_records = 50;  // per check in report.json
};

/// Validates a configuration document. `seed_override` replaces the "seed" key.
[[nodiscard]] inline RunConfig parse_config(const Json& j, const std::filesystem::path& base_dir,
                                            std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (!j.is_object()) {
    throw ConfigError("configuration must be a JSON object");
  }
  RunConfig cfg;
  cfg.raw = j;
  cfg.context.base_dir = base_dir;
  if (seed_override) {
    cfg.seed = *seed_override;
  } else {
    const Json& seed = detail::require(j, "seed", "config");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
      throw ConfigError("config.seed: expected a nonnegative integer");
    }
    cfg.seed = seed.get<std::uint64_t>();
  }
  if (j.contains("definitions")) {
    const Json& defs = j.at("definitions");
    if (!defs.is_object()) {
      throw ConfigError("config.definitions: expected an object");
    }
    for (const auto& [name, body] : defs.items()) {
      cfg.context.definitions.emplace(name, body);
    }
  }
  cfg.system = parse_system(detail::require(j, "system", "config"));
  cfg.simulation = parse_simulation(j.value("simulation", Json()), cfg.seed);
  if (j.contains("simulation")) {
    cfg.chunk = detail::count_or(j.at("simulation"), "chunk", cfg.chunk, "simulation");
    if (cfg.chunk == 0) {
      throw ConfigError("simulation.chunk: must be positive");
    }
  }
  if (j.contains("initial_states")) {
    cfg.initial = parse_initial_states(j.at("initial_states"), cfg.system->dim,
                                       ::stabcert::detail::mix_seed(cfg.seed, 0x5eedU));
  }
  if (j.contains("checks")) {
    const Json& checks = j.at("checks");
    if (!checks.is_array()) {
      throw ConfigError("config.checks: expected an array");
    }
    for (std::size_t i = 0; i < checks.size(); ++i) {
      cfg.checks.push_back(parse_check(checks[i], cfg.context, i));
    }
  }
  if (j.contains("lyapunov")) {
    cfg.lyapunov = parse_lyapunov(j.at("lyapunov"), cfg.context, cfg.simulation, cfg.system->dim);
  }
  if (j.contains("outputs")) {
    const Json& o = j.at("outputs");
    cfg.write_trajectories = o.value("trajectories", cfg.write_trajectories);
    cfg.max_violation_records = detail::count_or(o, "violation_records", cfg.max_violation_records, "outputs");
  }
  // Resolve every definition once so unused but malformed entries are still reported.
  for (const auto& [name, body] : cfg.context.definitions) {
    const std::string fam = body.is_object() ? body.value("family", std::string()) : std::string();
    if (fam == "exp_kl" || (fam == "table" && body.contains("values"))) {
      (void)parse_envelope(body, cfg.context, "definitions." + name);
    } else {
      (void)parse_gain(body, cfg.context, "definitions." + name);
    }
  }
  return cfg;
}

[[nodiscard]] inline RunConfig load_config(const std::filesystem::path& path,
                                           std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."), seed_override);
}

}  // namespace stabcert::config

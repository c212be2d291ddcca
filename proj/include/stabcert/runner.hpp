#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stabcert/catalog.hpp"
#include "stabcert/config.hpp"
#include "stabcert/gains.hpp"
#include "stabcert/lyapunov.hpp"
#include "stabcert/properties.hpp"
#include "stabcert/report.hpp"
#include "stabcert/trajectory.hpp"

namespace stabcert::runner {

using OJson = nlohmann::ordered_json;
using config::Json;
using config::RunConfig;

/// Exit statuses of a run.
inline constexpr int exit_ok = 0;
inline constexpr int exit_violated = 1;
inline constexpr int exit_input_error = 2;

struct RunResult {
  int exit_code = exit_ok;
  std::string summary;
  std::vector<std::filesystem::path> files;
};

namespace detail {

/// Fixed-format number for CSV cells.
[[nodiscard]] inline std::string cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// JSON number, or null when not finite.
[[nodiscard]] inline OJson num(double v) { return std::isfinite(v) ? OJson(v) : OJson(nullptr); }

[[nodiscard]] inline OJson vec(std::span<const double> v) {
  OJson a = OJson::array();
  for (double x : v) {
    a.push_back(num(x));
  }
  return a;
}

[[nodiscard]] inline std::vector<std::string> unique_notes(const std::vector<std::string>& notes) {
  std::vector<std::string> out;
  for (const auto& n : notes) {
    if (std::find(out.begin(), out.end(), n) == out.end()) {
      out.push_back(n);
    }
  }
  return out;
}

[[nodiscard]] inline OJson report_json(const PropertyReport& r, std::size_t max_records) {
  OJson j;
  j["property"] = r.property;
  j["verdict"] = to_string(r.verdict());
  j["checked_points"] = r.checked_points;
  j["checked_intervals"] = r.checked_intervals;
  j["subjects"] = r.subjects;
  j["skipped"] = r.skipped;
  j["violation_count"] = r.violation_count;
  j["worst_margin"] = num(r.worst_margin);
  OJson v = OJson::array();
  for (std::size_t i = 0; i < std::min(max_records, r.violations.size()); ++i) {
    const auto& rec = r.violations[i];
    v.push_back({{"subject", rec.subject},
                 {"time", num(rec.time)},
                 {"lhs", num(rec.lhs)},
                 {"rhs", num(rec.rhs)},
                 {"margin", num(rec.margin)},
                 {"kind", rec.kind}});
  }
  j["violations"] = std::move(v);
  j["notes"] = unique_notes(r.notes);
  return j;
}

[[nodiscard]] inline OJson system_json(const DisturbedSystem& sys) {
  return {{"name", sys.name},
          {"anchor", sys.anchor},
          {"description", sys.description},
          {"dim", sys.dim},
          {"error_dim", sys.error_dim},
          {"measurement_dim", sys.measurement_dim},
          {"disturbance_dim", sys.disturbances.dim()}};
}

[[nodiscard]] inline OJson simulation_json(const SimulationSettings& s) {
  return {{"dt", s.dt},
          {"horizon", s.horizon},
          {"hold", s.hold},
          {"strategy", to_string(s.strategy)},
          {"seed", s.seed},
          {"blowup_bound", s.blowup_bound}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text, RunResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << text;
  result.files.push_back(path);
}

inline void write_json(const std::filesystem::path& path, const OJson& j, RunResult& result) {
  write_text(path, j.dump(2) + "\n", result);
}

/// Streams trajectories as rows trajectory,t,x_*,y_*,w_*,omega.
class TrajectoryCsv {
 public:
  TrajectoryCsv(const std::filesystem::path& path, const DisturbedSystem& sys) : out_(path, std::ios::binary) {
    if (!out_) {
      throw std::runtime_error("cannot write " + path.string());
    }
    out_ << "trajectory,t";
    for (std::size_t i = 0; i < sys.dim; ++i) out_ << ",x_" << i + 1;
    for (std::size_t i = 0; i < sys.error_dim; ++i) out_ << ",y_" << i + 1;
    for (std::size_t i = 0; i < sys.measurement_dim; ++i) out_ << ",w_" << i + 1;
    out_ << ",omega\n";
  }

  void add(const Trajectory& tr) {
    for (std::size_t k = 0; k < tr.size(); ++k) {
      out_ << tr.id << ',' << cell(tr.time(k));
      for (double v : tr.state(k)) out_ << ',' << cell(v);
      for (double v : tr.error(k)) out_ << ',' << cell(v);
      for (double v : tr.measurement(k)) out_ << ',' << cell(v);
      out_ << ',' << cell(tr.omega[k]) << '\n';
    }
  }

 private:
  std::ofstream out_;
};

[[nodiscard]] inline OJson trajectory_summary(const Trajectory& tr) {
  const auto x0 = tr.state(0);
  return {{"id", tr.id},
          {"seed", tr.seed},
          {"x0", vec(x0)},
          {"omega0", num(tr.omega.front())},
          {"final_time", num(tr.final_time())},
          {"final_omega", num(tr.omega.back())},
          {"sup_error", num(tr.error_sup.back())},
          {"sup_measurement", num(tr.measurement_sup.back())},
          {"blew_up", tr.blew_up}};
}

}  // namespace detail

/// Simulates the configured initial states in chunks of cfg.chunk and hands
/// each chunk to `visit` in id order.
template <typename Visit>
void for_each_chunk(const RunConfig& cfg, Visit&& visit) {
  for (std::size_t start = 0; start < cfg.initial.size(); start += cfg.chunk) {
    const std::size_t stop = std::min(cfg.initial.size(), start + cfg.chunk);
    const std::vector<State> part(cfg.initial.begin() + static_cast<std::ptrdiff_t>(start),
                                  cfg.initial.begin() + static_cast<std::ptrdiff_t>(stop));
    const Ensemble ens = simulate_ensemble(cfg.system, part, cfg.simulation, start);
    visit(ens);
  }
}

inline void require_initial_states(const RunConfig& cfg, const char* subcommand) {
  if (cfg.initial.empty()) {
    throw config::ConfigError(std::string(subcommand) + " needs an 'initial_states' block");
  }
}

/// `simulate`: trajectories.csv and ensemble.json.
[[nodiscard]] inline RunResult run_simulate(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  require_initial_states(cfg, "simulate");
  RunResult result;
  std::optional<detail::TrajectoryCsv> csv;
  if (cfg.write_trajectories) {
    csv.emplace(out_dir / "trajectories.csv", *cfg.system);
    result.files.push_back(out_dir / "trajectories.csv");
  }
  OJson summaries = OJson::array();
  std::size_t blow_ups = 0;
  for_each_chunk(cfg, [&](const Ensemble& ens) {
    for (const auto& tr : ens.trajectories) {
      if (csv) csv->add(tr);
      summaries.push_back(detail::trajectory_summary(tr));
    }
    blow_ups += ens.blow_ups();
  });
  OJson j;
  j["subcommand"] = "simulate";
  j["system"] = detail::system_json(*cfg.system);
  j["simulation"] = detail::simulation_json(cfg.simulation);
  j["trajectories"] = cfg.initial.size();
  j["blow_ups"] = blow_ups;
  j["summaries"] = std::move(summaries);
  detail::write_json(out_dir / "ensemble.json", j, result);
  std::ostringstream msg;
  msg << "simulated " << cfg.initial.size() << " trajectories of " << cfg.system->name << " (" << blow_ups
      << " blow-ups)";
  result.summary = msg.str();
  return result;
}

namespace detail {

/// Per-check accumulation across chunks.
struct CheckState {
  const config::CheckSpec* spec = nullptr;
  std::vector<PropertyReport> reports;  // one or more named reports
  std::vector<std::string> names;
  OJson extra = OJson::object();
  std::optional<EnvelopeAccumulator> envelope;
  std::optional<SmallGainReport> small_gain;

  PropertyReport& report(const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return reports[i];
    }
    names.push_back(name);
    reports.emplace_back();
    reports.back().property = name;
    return reports.back();
  }
};

inline void run_check_on_chunk(CheckState& state, const Ensemble& ens) {
  const auto& spec = *state.spec;
  const auto& g = spec.gains;
  const std::string& p = spec.property;
  if (p == "mes") {
    state.report("MES").merge(check_mes(ens, *spec.beta, g.at("gamma"), spec.slack));
  } else if (p == "sit") {
    state.report("SIT").merge(check_sit(ens, *spec.beta, g.at("rho"), spec.slack));
  } else if (p == "res") {
    state.report("RES").merge(check_res(ens, *spec.beta, *spec.region, spec.slack));
  } else if (p == "rmeb") {
    state.report("RMEB").merge(check_rmeb(ens, g.at("rho1"), g.at("sigma1"), g.at("sigma2"), spec.slack));
  } else if (p == "reb") {
    state.report("REB").merge(check_reb(ens, g.at("rho2"), g.at("sigma"), spec.slack));
  } else if (p == "two_regime") {
    auto& one = state.report("two_regime:decay");
    auto& two = state.report("two_regime:inside");
    auto& three = state.report("two_regime:excursion");
    if (!state.extra.contains("split_times")) state.extra["split_times"] = OJson::array();
    for (const auto& tr : ens.trajectories) {
      const auto split =
          two_regime_split(tr, g.at("rho1"), g.at("sigma1"), g.at("sigma2"), g.at("rho_tilde"), *spec.beta, spec.slack);
      one.merge(split.regime_one);
      two.merge(split.case_two);
      three.merge(split.case_three);
      state.extra["split_times"].push_back(num(split.split_time));
      state.extra["gamma"] = split.gamma.describe();
      state.extra["rho"] = split.rho.describe();
    }
  } else if (p == "envelope") {
    for (const auto& tr : ens.trajectories) state.envelope->add(tr);
  } else if (p == "small_gain") {
    state.small_gain = small_gain_check(ens, *spec.beta, g.at("gamma"), spec.slack, spec.stride);
  }
}

inline void write_envelope_csv(const std::filesystem::path& path, const EnvelopeFit& fit, RunResult& result) {
  std::ostringstream out;
  out << "s,t,raw,envelope\n";
  const auto& s = fit.envelope.s_grid();
  const auto& t = fit.envelope.t_grid();
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < t.size(); ++j) {
      out << cell(s[i]) << ',' << cell(t[j]) << ',' << cell(fit.raw[i * t.size() + j]) << ','
          << cell(fit.envelope.table_values()[i * t.size() + j]) << '\n';
    }
  }
  write_text(path, out.str(), result);
}

[[nodiscard]] inline OJson envelope_json(const EnvelopeFit& fit) {
  return {{"samples", fit.samples},
          {"beyond_grid", fit.beyond_grid},
          {"no_decay", fit.no_decay},
          {"floor", fit.floor},
          {"s_grid", vec(fit.envelope.s_grid())},
          {"t_grid", vec(fit.envelope.t_grid())},
          {"notes", fit.notes}};
}

}  // namespace detail

/// `check`: report.json, margins.csv, and envelope.csv when an envelope is fitted.
[[nodiscard]] inline RunResult run_check(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  require_initial_states(cfg, "check");
  if (cfg.checks.empty()) {
    throw config::ConfigError("check needs a nonempty 'checks' list");
  }
  const auto& sys = *cfg.system;
  double omega_lo = std::numeric_limits<double>::infinity();
  double omega_hi = 0.0;
  for (const auto& x : cfg.initial) {
    const double w = sys.magnitude(x);
    if (w > 0.0) omega_lo = std::min(omega_lo, w);
    omega_hi = std::max(omega_hi, w);
  }

  std::vector<detail::CheckState> states(cfg.checks.size());
  for (std::size_t i = 0; i < cfg.checks.size(); ++i) {
    const auto& spec = cfg.checks[i];
    states[i].spec = &spec;
    if (spec.property == "envelope") {
      auto s_grid = spec.s_grid.empty() ? envelope_s_grid(omega_lo, omega_hi, 24) : spec.s_grid;
      states[i].envelope.emplace(std::move(s_grid), linspace(0.0, cfg.simulation.horizon, spec.t_nodes));
    }
    if (spec.property == "small_gain" && cfg.initial.size() > cfg.chunk) {
      throw config::ConfigError("small_gain needs the whole ensemble in one chunk; raise simulation.chunk");
    }
  }

  RunResult result;
  std::optional<detail::TrajectoryCsv> csv;
  if (cfg.write_trajectories) {
    csv.emplace(out_dir / "trajectories.csv", sys);
    result.files.push_back(out_dir / "trajectories.csv");
  }
  std::size_t blow_ups = 0;
  for_each_chunk(cfg, [&](const Ensemble& ens) {
    blow_ups += ens.blow_ups();
    if (csv) {
      for (const auto& tr : ens.trajectories) csv->add(tr);
    }
    for (auto& st : states) detail::run_check_on_chunk(st, ens);
  });

  OJson checks = OJson::array();
  std::ostringstream margins;
  margins << "check,report,subject,t,lhs,rhs,margin,kind\n";
  bool violated = false;
  bool any_pass = false;
  std::ostringstream summary;
  for (auto& st : states) {
    const auto& spec = *st.spec;
    OJson c;
    c["label"] = spec.label;
    c["property"] = spec.property;
    c["slack"] = spec.slack;
    if (spec.beta) c["beta"] = spec.beta->describe();
    OJson gains = OJson::object();
    for (const auto& [name, g] : spec.gains) gains[name] = g.describe();
    c["gains"] = std::move(gains);
    if (st.envelope) {
      const EnvelopeFit fit = st.envelope->finish();
      detail::write_envelope_csv(out_dir / "envelope.csv", fit, result);
      c["envelope"] = detail::envelope_json(fit);
      st.report("envelope").notes = fit.notes;
    }
    if (st.small_gain) {
      st.reports = {st.small_gain->hypothesis, st.small_gain->envelope_check};
      st.names = {"small_gain", "small_gain:envelope"};
      c["reach_finite"] = st.small_gain->reach_finite;
      if (st.small_gain->fit) c["envelope"] = detail::envelope_json(*st.small_gain->fit);
      if (!st.small_gain->reach_finite) violated = true;
    }
    OJson reports = OJson::array();
    Verdict worst = Verdict::vacuous;
    for (const auto& r : st.reports) {
      reports.push_back(detail::report_json(r, cfg.max_violation_records));
      if (r.verdict() == Verdict::violated) worst = Verdict::violated;
      else if (r.verdict() == Verdict::pass && worst != Verdict::violated) worst = Verdict::pass;
      for (const auto& v : r.violations) {
        margins << spec.label << ',' << r.property << ',' << v.subject << ',' << detail::cell(v.time) << ','
                << detail::cell(v.lhs) << ',' << detail::cell(v.rhs) << ',' << detail::cell(v.margin) << ','
                << v.kind << '\n';
      }
    }
    if (st.small_gain && !st.small_gain->reach_finite) worst = Verdict::violated;
    c["verdict"] = to_string(worst);
    c["reports"] = std::move(reports);
    for (auto& [k, v] : st.extra.items()) c[k] = v;
    checks.push_back(std::move(c));
    violated = violated || worst == Verdict::violated;
    any_pass = any_pass || worst == Verdict::pass;
    summary << spec.label << ": " << to_string(worst) << "\n";
  }
  detail::write_text(out_dir / "margins.csv", margins.str(), result);

  OJson j;
  j["subcommand"] = "check";
  j["system"] = detail::system_json(sys);
  j["simulation"] = detail::simulation_json(cfg.simulation);
  j["trajectories"] = cfg.initial.size();
  j["blow_ups"] = blow_ups;
  j["verdict"] = violated ? "violated" : (any_pass ? "pass" : "vacuous");
  j["checks"] = std::move(checks);
  detail::write_json(out_dir / "report.json", j, result);
  result.exit_code = violated ? exit_violated : exit_ok;
  result.summary = summary.str() + "overall: " + j["verdict"].get<std::string>();
  return result;
}

/// `lyapunov`: lyapunov_table.csv and report.json.
[[nodiscard]] inline RunResult run_lyapunov(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  if (!cfg.lyapunov) {
    throw config::ConfigError("lyapunov needs a 'lyapunov' block");
  }
  const auto& spec = *cfg.lyapunov;
  const auto& sys = *cfg.system;
  RunResult result;
  const LyapunovTable table =
      build_value_function(cfg.system, spec.region, spec.axes, spec.alpha_tilde, spec.settings, spec.beta_tilde);

  std::ostringstream csv;
  for (std::size_t i = 0; i < sys.dim; ++i) csv << "x_" << i + 1 << ',';
  csv << "value,horizon,budget,in_region,degenerate\n";
  for (const auto& pt : table.points) {
    for (double v : pt.state) csv << detail::cell(v) << ',';
    csv << detail::cell(pt.value) << ',' << detail::cell(pt.horizon) << ',' << pt.budget << ','
        << (pt.in_region ? 1 : 0) << ',' << (pt.degenerate ? 1 : 0) << '\n';
  }
  detail::write_text(out_dir / "lyapunov_table.csv", csv.str(), result);

  std::vector<PropertyReport> reports;
  if (spec.beta_tilde) {
    reports.push_back(sandwich_check(table, spec.alpha_tilde, *spec.beta_tilde, spec.slack));
  }
  reports.push_back(exp_decrease_check(table, cfg.system, spec.region, spec.probes));
  if (spec.quadratic) {
    const auto p = *spec.quadratic;
    const CandidateFunction v = [p](std::span<const double> x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t k = 0; k < x.size(); ++k) acc += x[i] * p[i][k] * x[k];
      return acc;
    };
    std::vector<State> probes;
    for (const auto& pt : table.points) probes.push_back(pt.state);
    reports.push_back(gradient_decrease_check(v, sys, spec.region, spec.alpha3, probes, 1e-6, spec.candidate_tol));
    const Ensemble ens =
        simulate_ensemble(cfg.system, cfg.initial.empty() ? probes : cfg.initial, cfg.simulation);
    reports.push_back(integral_decrease_check(v, spec.region, spec.alpha3, ens, spec.candidate_tol));
  }

  bool violated = false;
  OJson rj = OJson::array();
  std::ostringstream summary;
  for (const auto& r : reports) {
    rj.push_back(detail::report_json(r, cfg.max_violation_records));
    violated = violated || r.verdict() == Verdict::violated;
    summary << r.property << ": " << to_string(r.verdict()) << "\n";
  }
  OJson j;
  j["subcommand"] = "lyapunov";
  j["system"] = detail::system_json(sys);
  j["region"] = table.region_name;
  j["alpha_tilde"] = spec.alpha_tilde.describe();
  if (spec.beta_tilde) j["beta_tilde"] = spec.beta_tilde->describe();
  j["lambda"] = table.lambda;
  j["budget"] = spec.settings.budget;
  j["horizon_cap"] = spec.settings.horizon_cap;
  j["points"] = table.points.size();
  j["approximation"] = "under-approximation of the supremum (finite sample, finite horizon)";
  j["table_notes"] = table.notes;
  j["verdict"] = violated ? "violated" : "pass";
  j["reports"] = std::move(rj);
  detail::write_json(out_dir / "report.json", j, result);
  result.exit_code = violated ? exit_violated : exit_ok;
  result.summary = summary.str() + "overall: " + j["verdict"].get<std::string>();
  return result;
}

/// `gains`: gains.csv with evaluated gains and report.json with derived
/// constructions, factorizations and settle times.
[[nodiscard]] inline RunResult run_gains(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  if (!cfg.raw.contains("gains")) {
    throw config::ConfigError("gains needs a 'gains' block");
  }
  const Json& block = cfg.raw.at("gains");
  const auto& ctx = cfg.context;
  RunResult result;
  OJson j;
  j["subcommand"] = "gains";
  bool violated = false;

  std::vector<std::pair<std::string, ScalarGain>> columns;
  if (block.contains("evaluate")) {
    for (const auto& name : block.at("evaluate")) {
      if (!name.is_string()) throw config::ConfigError("gains.evaluate: expected definition names");
      columns.emplace_back(name.get<std::string>(), config::parse_gain(name, ctx, "gains.evaluate"));
    }
  }
  if (block.contains("compose_mes")) {
    const Json& c = block.at("compose_mes");
    const auto g = compose_mes_gain(config::parse_gain(config::detail::require(c, "rho1", "compose_mes"), ctx),
                                    config::parse_gain(config::detail::require(c, "sigma1", "compose_mes"), ctx),
                                    config::parse_gain(config::detail::require(c, "sigma2", "compose_mes"), ctx),
                                    config::parse_gain(config::detail::require(c, "rho_tilde", "compose_mes"), ctx));
    j["compose_mes"] = g.describe();
    columns.emplace_back("compose_mes", g);
  }
  if (block.contains("sit_from_mes")) {
    const auto g = build_sit_gain_from_mes(config::parse_gain(block.at("sit_from_mes"), ctx, "gains.sit_from_mes"));
    j["sit_from_mes"] = g.describe();
    columns.emplace_back("sit_from_mes", g);
  }
  if (block.contains("reb_from_rmeb")) {
    const Json& c = block.at("reb_from_rmeb");
    const auto reb = reb_gains_from_rmeb(config::parse_gain(config::detail::require(c, "rho1", "reb_from_rmeb"), ctx),
                                         config::parse_gain(config::detail::require(c, "sigma1", "reb_from_rmeb"), ctx),
                                         config::parse_gain(config::detail::require(c, "sigma2", "reb_from_rmeb"), ctx));
    j["reb_from_rmeb"] = {{"rho2", reb.rho2.describe()}, {"sigma", reb.sigma.describe()}};
    columns.emplace_back("rho2", reb.rho2);
    columns.emplace_back("sigma", reb.sigma);
  }
  if (!columns.empty()) {
    const auto probes = block.contains("probes") ? config::detail::axis(block.at("probes"), "gains.probes")
                                                 : linspace(0.0, 10.0, 101);
    std::ostringstream csv;
    csv << "r";
    for (const auto& [name, g] : columns) csv << ',' << name;
    csv << '\n';
    std::size_t outside = 0;
    for (double r : probes) {
      csv << detail::cell(r);
      for (const auto& [name, g] : columns) {
        csv << ',';
        try {
          csv << detail::cell(g(r));
        } catch (const GainDomainError&) {
          ++outside;  // left empty beyond the domain
        }
      }
      csv << '\n';
    }
    detail::write_text(out_dir / "gains.csv", csv.str(), result);
    OJson described = OJson::object();
    for (const auto& [name, g] : columns) described[name] = g.describe();
    j["evaluated"] = std::move(described);
    j["cells_beyond_domain"] = outside;
  }
  if (block.contains("kl_factorize")) {
    const Json& c = block.at("kl_factorize");
    const auto beta = config::parse_envelope(config::detail::require(c, "beta", "kl_factorize"), ctx);
    const double lambda = config::detail::number_or(c, "lambda", 2.0, "kl_factorize");
    KLFactorization f;
    try {
      f = kl_factorize(beta, lambda);
    } catch (const std::invalid_argument& e) {
      throw config::ConfigError(std::string("kl_factorize: ") + e.what());
    }
    const auto s = c.contains("s") ? config::detail::axis(c.at("s"), "kl_factorize.s") : linspace(0.0, 10.0, 50);
    const auto t = c.contains("t") ? config::detail::axis(c.at("t"), "kl_factorize.t") : linspace(0.0, 10.0, 50);
    const auto check = verify_factorization(beta, f.outer, f.initial, lambda, product_grid(s, t));
    violated = violated || check.verdict() == Verdict::violated;
    j["kl_factorize"] = {{"beta", beta.describe()},
                         {"lambda", lambda},
                         {"outer", f.outer.describe()},
                         {"initial", f.initial.describe()},
                         {"verification", detail::report_json(check, cfg.max_violation_records)}};
  }
  if (block.contains("settle_time")) {
    OJson out = OJson::array();
    for (const auto& q : block.at("settle_time")) {
      const auto beta = config::parse_envelope(config::detail::require(q, "beta", "settle_time"), ctx);
      const double r = config::detail::number(config::detail::require(q, "r", "settle_time"), "settle_time.r");
      const double eps = config::detail::number(config::detail::require(q, "eps", "settle_time"), "settle_time.eps");
      out.push_back({{"beta", beta.describe()}, {"r", r}, {"eps", eps}, {"time", detail::num(settle_time(beta, r, eps))}});
    }
    j["settle_time"] = std::move(out);
  }
  j["verdict"] = violated ? "violated" : "pass";
  detail::write_json(out_dir / "report.json", j, result);
  result.exit_code = violated ? exit_violated : exit_ok;
  result.summary = std::string("gains: ") + (violated ? "violated" : "pass");
  return result;
}

/// Dispatches one subcommand. Throws config::ConfigError (and other
/// std::exception types) on input errors; the caller maps them to exit 2.
[[nodiscard]] inline RunResult run(const RunConfig& cfg, const std::string& subcommand,
                                   const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  if (subcommand == "simulate") return run_simulate(cfg, out_dir);
  if (subcommand == "check") return run_check(cfg, out_dir);
  if (subcommand == "lyapunov") return run_lyapunov(cfg, out_dir);
  if (subcommand == "gains") return run_gains(cfg, out_dir);
  throw config::ConfigError("unknown subcommand '" + subcommand + "'");
}

/// Loads, runs and maps failures to the exit-code contract.
[[nodiscard]] inline RunResult run_file(const std::filesystem::path& config_path, const std::string& subcommand,
                                        const std::filesystem::path& out_dir,
                                        std::optional<std::uint64_t> seed_override = std::nullopt) {
  try {
    const RunConfig cfg = config::load_config(config_path, seed_override);
    return run(cfg, subcommand, out_dir);
  } catch (const std::exception& e) {
    RunResult r;
    r.exit_code = exit_input_error;
    r.summary = std::string("error: ") + e.what();
    return r;
  }
}

}  // namespace stabcert::runner

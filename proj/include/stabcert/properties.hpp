#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stabcert/gains.hpp"
#include "stabcert/report.hpp"
#include "stabcert/system.hpp"
#include "stabcert/trajectory.hpp"

namespace stabcert {

/// Stability property names used in reports and configs.
enum class Property { mes, res, sit, rmeb, reb };

[[nodiscard]] inline const char* to_string(Property p) {
  switch (p) {
    case Property::mes:
      return "MES";
    case Property::res:
      return "RES";
    case Property::sit:
      return "SIT";
    case Property::rmeb:
      return "RMEB";
    case Property::reb:
      return "REB";
  }
  return "?";
}

/// Default multiplicative slack absorbing integration error.
inline constexpr double default_slack = 1.02;

/// Maximal time interval on which |y(t)| > rho(|w(t)|) holds strictly.
/// Grid indices first..last satisfy the inequality; begin and end are
/// bisection-refined switching times.
struct Interval {
  double begin = 0.0;
  double end = 0.0;
  std::size_t first = 0;
  std::size_t last = 0;
  bool reaches_horizon = false;
};

namespace detail {

/// |y| > rho(|w|) with the absolute tie tolerance.
[[nodiscard]] inline bool strictly_above(double y_norm, double w_norm, const ScalarGain& rho) {
  return y_norm > rho(w_norm) + tie_tolerance;
}

/// Length of the initial run of grid points on which |y| > rho(|w|).
[[nodiscard]] inline std::size_t initial_run(const Trajectory& tr, const ScalarGain& rho) {
  std::size_t m = 0;
  while (m < tr.size() && strictly_above(tr.error_norm[m], tr.measurement_norm[m], rho)) {
    ++m;
  }
  return m;
}

inline void require_nonempty(const Ensemble& ens, const char* what) {
  if (!ens.system) {
    throw std::invalid_argument(std::string(what) + ": ensemble has no system");
  }
}

}  // namespace detail

/// Maximal intervals of strict excursion |y(t)| > rho(|w(t)|), disjoint and
/// in time order.
[[nodiscard]] inline std::vector<Interval> sit_intervals(const Trajectory& tr, const ScalarGain& rho,
                                                         std::optional<double> tol = std::nullopt) {
  const DisturbedSystem& sys = *tr.system;
  const double eps = tol.value_or(default_bisection_tolerance(tr));
  const auto above = [&](const State& x) {
    return detail::strictly_above(sys.error_norm(x), sys.measurement_norm(x), rho);
  };
  const auto below = [&](const State& x) { return !above(x); };

  std::vector<Interval> out;
  std::size_t k = 0;
  while (k < tr.size()) {
    if (!detail::strictly_above(tr.error_norm[k], tr.measurement_norm[k], rho)) {
      ++k;
      continue;
    }
    Interval iv;
    iv.first = k;
    iv.begin = k == 0 ? 0.0 : refine_switch(tr, k - 1, above, eps);
    while (k + 1 < tr.size() && detail::strictly_above(tr.error_norm[k + 1], tr.measurement_norm[k + 1], rho)) {
      ++k;
    }
    iv.last = k;
    if (k + 1 < tr.size()) {
      iv.end = refine_switch(tr, k, below, eps);
    } else {
      iv.end = tr.final_time();
      iv.reaches_horizon = true;
    }
    out.push_back(iv);
    ++k;
  }
  return out;
}

namespace detail {

/// Checks |y(t_k)| <= slack * beta(|x(0)|_omega, t_k) for k < window.
inline void check_decay_window(const Trajectory& tr, std::size_t window, const KLEnvelope& beta, double slack,
                               PropertyReport& report, const char* kind) {
  if (window == 0) {
    return;
  }
  ++report.checked_intervals;
  const double w0 = tr.omega.front();
  for (std::size_t k = 0; k < window; ++k) {
    report.record(tr.id, tr.time(k), tr.error_norm[k], slack * beta(w0, tr.time(k)), kind);
  }
}

}  // namespace detail

/// |y(t)| <= max{beta(|x(0)|_omega, t), gamma(||w||_[0,t])} at every grid time.
[[nodiscard]] inline PropertyReport check_mes(const Ensemble& ens, const KLEnvelope& beta, const ScalarGain& gamma,
                                              double slack = default_slack) {
  detail::require_nonempty(ens, "check_mes");
  PropertyReport report;
  report.property = "MES";
  for (const auto& tr : ens.trajectories) {
    ++report.subjects;
    const double w0 = tr.omega.front();
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const double bound = std::max(beta(w0, tr.time(k)), gamma(tr.measurement_sup[k]));
      report.record(tr.id, tr.time(k), tr.error_norm[k], slack * bound, "mes");
    }
  }
  return report;
}

/// On the excursion |y| > rho(|w|) that starts at t = 0, |y(t)| <= beta(|x(0)|_omega, t).
/// Later excursions are counted in a note but do not bind beta.
[[nodiscard]] inline PropertyReport check_sit(const Ensemble& ens, const KLEnvelope& beta, const ScalarGain& rho,
                                              double slack = default_slack) {
  detail::require_nonempty(ens, "check_sit");
  PropertyReport report;
  report.property = "SIT";
  std::size_t later = 0;
  for (const auto& tr : ens.trajectories) {
    ++report.subjects;
    const std::size_t window = detail::initial_run(tr, rho);
    detail::check_decay_window(tr, window, beta, slack, report, "sit");
    for (std::size_t k = window + 1; k < tr.size(); ++k) {
      if (detail::strictly_above(tr.error_norm[k], tr.measurement_norm[k], rho) &&
          !detail::strictly_above(tr.error_norm[k - 1], tr.measurement_norm[k - 1], rho)) {
        ++later;
      }
    }
  }
  if (later > 0) {
    report.notes.push_back(std::to_string(later) + " later excursions observed (not binding)");
  }
  return report;
}

/// Relative error stability: |y(t)| <= beta(|x(0)|_omega, t) before the
/// first entrance into D.
[[nodiscard]] inline PropertyReport check_res(const Ensemble& ens, const KLEnvelope& beta,
                                              const RegionPredicate& region, double slack = default_slack) {
  detail::require_nonempty(ens, "check_res");
  PropertyReport report;
  report.property = "RES";
  for (const auto& tr : ens.trajectories) {
    ++report.subjects;
    const std::size_t window = hitting_time(tr, region).first_index;
    detail::check_decay_window(tr, window, beta, slack, report, "res");
  }
  return report;
}

/// On the initial excursion |y| > rho1(|w|):
/// |y(t)| <= max{sigma1(|h(x(0))|), sigma2(||w||_[0,t])}.
[[nodiscard]] inline PropertyReport check_rmeb(const Ensemble& ens, const ScalarGain& rho1, const ScalarGain& sigma1,
                                               const ScalarGain& sigma2, double slack = default_slack) {
  detail::require_nonempty(ens, "check_rmeb");
  PropertyReport report;
  report.property = "RMEB";
  for (const auto& tr : ens.trajectories) {
    ++report.subjects;
    const std::size_t window = detail::initial_run(tr, rho1);
    if (window == 0) {
      continue;
    }
    ++report.checked_intervals;
    const double initial = sigma1(tr.error_norm.front());
    for (std::size_t k = 0; k < window; ++k) {
      report.record(tr.id, tr.time(k), tr.error_norm[k], slack * std::max(initial, sigma2(tr.measurement_sup[k])),
                    "rmeb");
    }
  }
  return report;
}

/// On the initial excursion |y| > rho2(|w|): |y(t)| <= sigma(|h(x(0))|).
[[nodiscard]] inline PropertyReport check_reb(const Ensemble& ens, const ScalarGain& rho2, const ScalarGain& sigma,
                                              double slack = default_slack) {
  detail::require_nonempty(ens, "check_reb");
  PropertyReport report;
  report.property = "REB";
  for (const auto& tr : ens.trajectories) {
    ++report.subjects;
    const std::size_t window = detail::initial_run(tr, rho2);
    if (window == 0) {
      continue;
    }
    ++report.checked_intervals;
    const double bound = slack * sigma(tr.error_norm.front());
    for (std::size_t k = 0; k < window; ++k) {
      report.record(tr.id, tr.time(k), tr.error_norm[k], bound, "reb");
    }
  }
  return report;
}

struct RebGains {
  ScalarGain rho2;
  ScalarGain sigma;
};

/// Bounded-error gains implied by relative boundedness:
/// rho2 = max{rho1, sigma2}, sigma = sigma1.
[[nodiscard]] inline RebGains reb_gains_from_rmeb(const ScalarGain& rho1, const ScalarGain& sigma1,
                                                  const ScalarGain& sigma2) {
  return {compose_max({rho1, sigma2}), sigma1};
}

/// Split of one trajectory at t1 = inf{t : |y| <= rho(|w|)}, rho = max{rho_tilde, rho1}.
struct TwoRegimeReport {
  ScalarGain rho;
  ScalarGain gamma;
  double split_time = std::numeric_limits<double>::infinity();  // infinity: never enters
  std::size_t split_index = 0;
  PropertyReport regime_one;  // case (i): decay bound before t1
  PropertyReport case_two;    // t >= t1 with |y| <= rho(|w|)
  PropertyReport case_three;  // t >= t1 with |y| > rho(|w|)

  [[nodiscard]] bool regime_one_passed() const { return regime_one.passed(); }
  [[nodiscard]] bool regime_two_passed() const { return case_two.passed() && case_three.passed(); }
  [[nodiscard]] bool passed() const { return regime_one_passed() && regime_two_passed(); }
};

/// Two-regime verification: |y(t)| <= beta(|x(0)|_omega, t) on [0, t1) and
/// |y(t)| <= gamma(||w||_[t1, t]) afterwards, with
/// gamma = max{rho1, rho_tilde, sigma1 o rho1, sigma1 o rho_tilde, sigma2}.
[[nodiscard]] inline TwoRegimeReport two_regime_split(const Trajectory& tr, const ScalarGain& rho1,
                                                   const ScalarGain& sigma1, const ScalarGain& sigma2,
                                                   const ScalarGain& rho_tilde, const KLEnvelope& beta,
                                                   double slack = default_slack) {
  TwoRegimeReport out;
  out.rho = compose_max({rho_tilde, rho1});
  out.gamma = compose_mes_gain(rho1, sigma1, sigma2, rho_tilde);
  out.regime_one.property = "two_regime:decay";
  out.case_two.property = "two_regime:inside";
  out.case_three.property = "two_regime:excursion";
  for (auto* r : {&out.regime_one, &out.case_two, &out.case_three}) {
    r->subjects = 1;
  }

  const DisturbedSystem& sys = *tr.system;
  const std::size_t split = detail::initial_run(tr, out.rho);
  out.split_index = split;
  if (split == tr.size()) {
    out.split_time = std::numeric_limits<double>::infinity();
  } else if (split == 0) {
    out.split_time = 0.0;
  } else {
    out.split_time = refine_switch(
        tr, split - 1,
        [&](const State& x) { return !detail::strictly_above(sys.error_norm(x), sys.measurement_norm(x), out.rho); },
        default_bisection_tolerance(tr));
  }

  detail::check_decay_window(tr, split, beta, slack, out.regime_one, "regime_one");
  if (split < tr.size()) {
    const auto wsup = tr.measurement_sup_from(split);
    out.case_two.checked_intervals = out.case_three.checked_intervals = 1;
    for (std::size_t k = split; k < tr.size(); ++k) {
      const double bound = slack * out.gamma(wsup[k - split]);
      if (detail::strictly_above(tr.error_norm[k], tr.measurement_norm[k], out.rho)) {
        out.case_three.record(tr.id, tr.time(k), tr.error_norm[k], bound, "case_iii");
      } else {
        out.case_two.record(tr.id, tr.time(k), tr.error_norm[k], bound, "case_ii");
      }
    }
  }
  return out;
}

/// Pointwise-dominating monotone envelope of a row-major (s x t) table:
/// nondecreasing along s, nonincreasing along t.
[[nodiscard]] inline std::vector<double> monotone_envelope(std::vector<double> values, std::size_t ns,
                                                           std::size_t nt) {
  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t j = nt - 1; j-- > 0;) {
      values[i * nt + j] = std::max(values[i * nt + j], values[i * nt + j + 1]);
    }
  }
  for (std::size_t i = 1; i < ns; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      values[i * nt + j] = std::max(values[i * nt + j], values[(i - 1) * nt + j]);
    }
  }
  return values;
}

/// Fitted empirical KL envelope.
struct EnvelopeFit {
  KLEnvelope envelope;
  std::vector<double> raw;  // max over samples with |x(0)|_omega <= s of |y(t)|
  bool no_decay = false;
  double floor = 0.0;  // envelope includes + floor * s
  std::size_t samples = 0;
  std::size_t beyond_grid = 0;  // samples with |x(0)|_omega past the last s node
  std::vector<std::string> notes;
};

/// Accumulates (|x(0)|_omega, |y(t)| series) samples into an empirical KL
/// envelope on fixed (s, t) grids. Node (s_i, t_j) of the fitted envelope
/// covers samples with |x(0)|_omega <= s_{i+1} over times t >= t_{j-1}, so
/// bilinear interpolation dominates every sample with |x(0)|_omega >= s_1.
class EnvelopeAccumulator {
 public:
  EnvelopeAccumulator(std::vector<double> s_grid, std::vector<double> t_grid)
      : s_(std::move(s_grid)), t_(std::move(t_grid)) {
    if (s_.size() < 2 || t_.size() < 2 || s_.front() != 0.0 || t_.front() != 0.0) {
      throw std::invalid_argument("envelope grids need at least two nodes each, starting at 0");
    }
    raw_.assign(s_.size() * t_.size(), 0.0);
    dilated_.assign(s_.size() * t_.size(), 0.0);
  }

  void add(double omega0, std::span<const double> error_norm, double dt) {
    ++samples_;
    if (omega0 > s_.back()) {
      ++beyond_;
      return;
    }
    if (omega0 == 0.0 && *std::max_element(error_norm.begin(), error_norm.end()) > 0.0) {
      ++zero_start_nonzero_;
    }
    const std::size_t nt = t_.size();
    std::vector<double> suffix(error_norm.begin(), error_norm.end());
    for (std::size_t k = suffix.size() - 1; k-- > 0;) {
      suffix[k] = std::max(suffix[k], suffix[k + 1]);
    }
    const auto index = [&](double t) {
      const auto k = static_cast<std::size_t>(std::floor(t / dt + 1e-9));
      return std::min(k, error_norm.size() - 1);
    };
    // first s node that this sample counts toward
    const auto first_s =
        static_cast<std::size_t>(std::lower_bound(s_.begin(), s_.end(), omega0) - s_.begin());
    for (std::size_t j = 0; j < nt; ++j) {
      const double at = t_[j] <= static_cast<double>(error_norm.size() - 1) * dt + 1e-12
                            ? error_norm[index(t_[j])]
                            : 0.0;
      const double tail = suffix[index(j == 0 ? 0.0 : t_[j - 1])];
      for (std::size_t i = first_s; i < s_.size(); ++i) {
        raw_[i * nt + j] = std::max(raw_[i * nt + j], at);
      }
      for (std::size_t i = first_s == 0 ? 0 : first_s - 1; i < s_.size(); ++i) {
        dilated_[i * nt + j] = std::max(dilated_[i * nt + j], tail);
      }
    }
  }

  void add(const Trajectory& tr) { add(tr.omega.front(), tr.error_norm, tr.dt); }

  [[nodiscard]] EnvelopeFit finish(double floor = 1e-12) const {
    const std::size_t ns = s_.size();
    const std::size_t nt = t_.size();
    std::vector<double> values = monotone_envelope(dilated_, ns, nt);
    for (std::size_t j = 0; j < nt; ++j) {
      values[j] = 0.0;
    }
    for (std::size_t i = 1; i < ns; ++i) {
      for (std::size_t j = 0; j < nt; ++j) {
        values[i * nt + j] += floor * s_[i];
      }
    }
    EnvelopeFit fit{KLEnvelope::table(s_, t_, values), raw_, false, floor, samples_, beyond_, {}};
    double first = 0.0;
    double last = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      first = std::max(first, values[i * nt]);
      last = std::max(last, values[i * nt + nt - 1]);
    }
    fit.no_decay = last > 0.5 * first;
    if (fit.no_decay) {
      fit.notes.push_back("no decay: last time column exceeds half of the first");
    }
    if (floor > 0.0) {
      fit.notes.push_back("positivity floor " + std::to_string(floor) + "*s added to every node");
    }
    if (beyond_ > 0) {
      fit.notes.push_back(std::to_string(beyond_) + " samples start beyond the s grid and were ignored");
    }
    if (zero_start_nonzero_ > 0) {
      fit.notes.push_back(std::to_string(zero_start_nonzero_) +
                          " samples with zero magnitude but nonzero error cannot be enveloped");
    }
    return fit;
  }

 private:
  std::vector<double> s_;
  std::vector<double> t_;
  std::vector<double> raw_;
  std::vector<double> dilated_;
  std::size_t samples_ = 0;
  std::size_t beyond_ = 0;
  std::size_t zero_start_nonzero_ = 0;
};

/// Empirical KL envelope of |y(t)| against |x(0)|_omega over an ensemble.
[[nodiscard]] inline EnvelopeFit fit_kl_envelope(const Ensemble& ens, std::vector<double> s_grid,
                                                 std::vector<double> t_grid, double floor = 1e-12) {
  EnvelopeAccumulator acc(std::move(s_grid), std::move(t_grid));
  for (const auto& tr : ens.trajectories) {
    acc.add(tr);
  }
  return acc.finish(floor);
}

/// s grid {0} followed by `count` nodes spanning [lo, hi].
[[nodiscard]] inline std::vector<double> envelope_s_grid(double lo, double hi, std::size_t count) {
  std::vector<double> out{0.0};
  if (!(hi > 0.0)) {
    out.push_back(1.0);
    return out;
  }
  lo = lo > 0.0 ? std::min(lo, hi) : hi / static_cast<double>(std::max<std::size_t>(count, 1));
  if (lo == hi || count < 2) {
    out.push_back(hi);
    return out;
  }
  for (double v : linspace(lo, hi, count)) {
    out.push_back(v);
  }
  return out;
}

struct SmallGainReport {
  PropertyReport hypothesis;       // |y(t)| <= max{beta(|x(t0)|, t-t0), gamma(||y||_[t0,t])}
  ReachTable reach;                // empirical R(r, t - t0) over strided suffixes
  bool reach_finite = true;        // false when a trajectory blew up
  std::optional<EnvelopeFit> fit;  // empirical beta-tilde, fitted when the hypothesis holds
  PropertyReport envelope_check;   // |y(t)| <= slack * beta-tilde(|x(t0)|, t - t0)

  [[nodiscard]] bool passed() const { return hypothesis.passed() && reach_finite && envelope_check.passed(); }
};

/// Small-gain hypotheses over the pairs t0 <= t of every trajectory, with
/// t0 on a stride. Each suffix from t0 is read as a fresh trajectory of the
/// time-invariant system. Throws std::invalid_argument if gamma(r) < r fails
/// on the probed data range.
[[nodiscard]] inline SmallGainReport small_gain_check(const Ensemble& ens, const KLEnvelope& beta,
                                                      const ScalarGain& gamma, double slack = default_slack,
                                                      std::size_t stride = 50, std::size_t s_nodes = 24,
                                                      std::size_t t_nodes = 41) {
  detail::require_nonempty(ens, "small_gain_check");
  if (stride == 0) {
    throw std::invalid_argument("small_gain_check stride must be positive");
  }
  double y_lo = std::numeric_limits<double>::infinity();
  double y_hi = 0.0;
  for (const auto& tr : ens.trajectories) {
    for (double v : tr.error_norm) {
      if (v > 0.0) {
        y_lo = std::min(y_lo, v);
        y_hi = std::max(y_hi, v);
      }
    }
  }
  if (y_hi > 0.0) {
    const std::size_t probes = 128;
    for (std::size_t i = 0; i <= probes; ++i) {
      const double r = y_lo * std::pow(y_hi / y_lo, static_cast<double>(i) / probes);
      if (!(gamma(r) < r)) {
        throw std::invalid_argument("small_gain_check: gamma(r) < r fails at r = " + std::to_string(r));
      }
    }
  }

  SmallGainReport out;
  out.hypothesis.property = "small_gain";
  out.envelope_check.property = "small_gain:envelope";

  double horizon = 0.0;
  double omega_lo = std::numeric_limits<double>::infinity();
  double omega_hi = 0.0;
  for (const auto& tr : ens.trajectories) {
    ++out.hypothesis.subjects;
    horizon = std::max(horizon, tr.final_time());
    if (tr.blew_up) {
      out.reach_finite = false;
    }
    for (std::size_t t0 = 0; t0 < tr.size(); t0 += stride) {
      ++out.hypothesis.checked_intervals;
      const double w0 = tr.omega[t0];
      if (w0 > 0.0) omega_lo = std::min(omega_lo, w0);
      omega_hi = std::max(omega_hi, w0);
      const auto ysup = tr.error_sup_from(t0);
      for (std::size_t k = t0; k < tr.size(); ++k) {
        const double bound = std::max(beta(w0, tr.time(k - t0)), gamma(ysup[k - t0]));
        out.hypothesis.record(tr.id, tr.time(k), tr.error_norm[k], slack * bound, "hypothesis_i");
      }
    }
  }
  if (!out.reach_finite) {
    out.hypothesis.notes.push_back("a trajectory blew up: reachability hypothesis not established");
  }

  // reachability over suffixes
  const auto r_grid = envelope_s_grid(omega_lo, omega_hi, s_nodes);
  const auto t_grid = linspace(0.0, horizon, t_nodes);
  out.reach.r = r_grid;
  out.reach.t = t_grid;
  out.reach.values.assign(r_grid.size() * t_grid.size(), 0.0);
  for (const auto& tr : ens.trajectories) {
    for (std::size_t t0 = 0; t0 < tr.size(); t0 += stride) {
      const auto reach = detail::running_max(tr.omega, t0);
      for (std::size_t j = 0; j < t_grid.size(); ++j) {
        const auto k = std::min(reach.size() - 1, static_cast<std::size_t>(std::floor(t_grid[j] / tr.dt + 1e-9)));
        for (std::size_t i = 0; i < r_grid.size(); ++i) {
          if (tr.omega[t0] <= r_grid[i]) {
            auto& cell = out.reach.values[i * t_grid.size() + j];
            cell = std::max(cell, reach[k]);
          }
        }
      }
    }
  }

  if (!out.hypothesis.passed()) {
    return out;
  }
  EnvelopeAccumulator acc(r_grid, t_grid);
  for (const auto& tr : ens.trajectories) {
    for (std::size_t t0 = 0; t0 < tr.size(); t0 += stride) {
      acc.add(tr.omega[t0], std::span<const double>(tr.error_norm).subspan(t0), tr.dt);
    }
  }
  out.fit = acc.finish();
  const KLEnvelope& fitted = out.fit->envelope;
  for (const auto& tr : ens.trajectories) {
    ++out.envelope_check.subjects;
    for (std::size_t t0 = 0; t0 < tr.size(); t0 += stride) {
      const double w0 = tr.omega[t0];
      if (w0 > 0.0 && w0 < r_grid[1]) {
        ++out.envelope_check.skipped;
        continue;
      }
      for (std::size_t k = t0; k < tr.size(); ++k) {
        out.envelope_check.record(tr.id, tr.time(k), tr.error_norm[k], slack * fitted(w0, tr.time(k - t0)),
                                  "envelope");
      }
    }
  }
  return out;
}

}  // namespace stabcert

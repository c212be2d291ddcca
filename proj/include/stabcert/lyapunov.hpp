#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stabcert/detail/parallel.hpp"
#include "stabcert/gains.hpp"
#include "stabcert/report.hpp"
#include "stabcert/system.hpp"
#include "stabcert/trajectory.hpp"

namespace stabcert {

/// Largest horizon for which e^t stays comfortably finite in double.
inline constexpr double max_exponential_horizon = 700.0;

/// One node of a value-function table.
struct LyapunovPoint {
  State state;
  double value = 0.0;
  double horizon = 0.0;  // time horizon used for the supremum
  std::size_t budget = 0;
  bool in_region = false;
  bool degenerate = false;  // |h| = 0 off the region: no finite truncation, capped
  double error_norm = 0.0;
  double magnitude = 0.0;
};

/// Off-grid estimate of the table with its declared error.
struct Interpolated {
  double value = 0.0;
  double error = 0.0;  // oscillation of the cell's corner values

  [[nodiscard]] double lower() const { return std::max(0.0, value - error); }
};

/// Trajectory-supremum value function sampled on a tensor grid.
///   V(xi) = max over sampled solutions from xi and grid times
///           t <= min{theta, T_xi} of alpha_tilde(|y(t)|) e^t,
/// and V = 0 on the region D. A finite sample under-approximates the
/// supremum over all solutions.
struct LyapunovTable {
  std::vector<std::vector<double>> axes;
  std::vector<LyapunovPoint> points;  // first axis varies slowest
  ScalarGain alpha_tilde;
  double lambda = 2.0;
  double horizon_cap = 10.0;
  std::string region_name;
  std::vector<std::string> notes;

  [[nodiscard]] std::size_t dim() const { return axes.size(); }

  [[nodiscard]] std::size_t flat_index(std::span<const std::size_t> idx) const {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      flat = flat * axes[a].size() + idx[a];
    }
    return flat;
  }

  /// Multilinear interpolation on the grid cell containing x. Empty when x
  /// is outside the grid hull, or when the cell touches the region at a
  /// corner or at its centre (the value function is discontinuous there).
  [[nodiscard]] std::optional<Interpolated> interpolate(const DisturbedSystem& sys, const RegionPredicate& region,
                                                        std::span<const double> x) const {
    const std::size_t n = axes.size();
    if (x.size() != n) {
      throw std::invalid_argument("interpolate: state dimension mismatch");
    }
    std::vector<std::size_t> lo(n);
    std::vector<double> frac(n);
    State centre(n);
    for (std::size_t a = 0; a < n; ++a) {
      const auto& ax = axes[a];
      if (x[a] < ax.front() || x[a] > ax.back()) {
        return std::nullopt;
      }
      if (ax.size() == 1) {
        lo[a] = 0;
        frac[a] = 0.0;
        centre[a] = ax[0];
        continue;
      }
      auto it = std::upper_bound(ax.begin(), ax.end(), x[a]);
      std::size_t i = static_cast<std::size_t>(it - ax.begin());
      i = std::clamp<std::size_t>(i, 1, ax.size() - 1);
      lo[a] = i - 1;
      frac[a] = (x[a] - ax[i - 1]) / (ax[i] - ax[i - 1]);
      centre[a] = 0.5 * (ax[i - 1] + ax[i]);
    }
    if (region.contains(sys, centre)) {
      return std::nullopt;
    }
    double value = 0.0;
    double vmin = std::numeric_limits<double>::infinity();
    double vmax = 0.0;
    std::vector<std::size_t> idx(n);
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      double weight = 1.0;
      for (std::size_t a = 0; a < n; ++a) {
        const bool up = ((mask >> a) & 1U) != 0 && axes[a].size() > 1;
        idx[a] = lo[a] + (up ? 1 : 0);
        weight *= up ? frac[a] : (axes[a].size() > 1 ? 1.0 - frac[a] : 1.0);
      }
      const auto& p = points[flat_index(idx)];
      if (p.in_region) {
        return std::nullopt;
      }
      value += weight * p.value;
      vmin = std::min(vmin, p.value);
      vmax = std::max(vmax, p.value);
    }
    return Interpolated{value, vmax - vmin};
  }
};

/// Sampling parameters of the value-function construction.
struct ValueFunctionSettings {
  std::size_t budget = 1;  // sampled solutions per grid point
  double horizon_cap = 10.0;
  double dt = 1e-3;
  double hold = 0.1;
  DisturbanceStrategy strategy = DisturbanceStrategy::uniform;
  std::uint64_t seed = 0;
};

/// Builds the value-function table on the tensor grid spanned by `axes`.
/// When beta_tilde is supplied the per-point horizon is
/// min{horizon_cap, settle_time(beta_tilde, 2|xi|_omega, alpha_tilde(|h(xi)|/2))}.
[[nodiscard]] inline LyapunovTable build_value_function(SystemPtr system, const RegionPredicate& region,
                                                        std::vector<std::vector<double>> axes,
                                                        const ScalarGain& alpha_tilde,
                                                        const ValueFunctionSettings& settings,
                                                        const std::optional<KLEnvelope>& beta_tilde = std::nullopt) {
  if (!system) {
    throw std::invalid_argument("build_value_function needs a system");
  }
  const DisturbedSystem& sys = *system;
  if (axes.size() != sys.dim) {
    throw std::invalid_argument("value-function grid needs one axis per state dimension");
  }
  for (const auto& ax : axes) {
    if (ax.empty() || !std::is_sorted(ax.begin(), ax.end()) ||
        std::adjacent_find(ax.begin(), ax.end()) != ax.end()) {
      throw std::invalid_argument("value-function grid axes must be nonempty and strictly increasing");
    }
  }
  if (settings.budget == 0) {
    throw std::invalid_argument("value-function budget must be at least one trajectory per point");
  }
  if (!(settings.horizon_cap >= 0.0) || settings.horizon_cap > max_exponential_horizon) {
    throw std::invalid_argument("value-function horizon cap must lie in [0, 700] to keep e^t finite");
  }
  if (!alpha_tilde.unbounded()) {
    throw std::invalid_argument("alpha_tilde must be class K-infinity");
  }

  LyapunovTable table;
  table.alpha_tilde = alpha_tilde;
  table.horizon_cap = settings.horizon_cap;
  table.region_name = region.name();
  std::vector<State> nodes{State{}};
  for (const auto& ax : axes) {
    std::vector<State> next;
    next.reserve(nodes.size() * ax.size());
    for (const auto& prefix : nodes) {
      for (double v : ax) {
        State s = prefix;
        s.push_back(v);
        next.push_back(std::move(s));
      }
    }
    nodes = std::move(next);
  }
  table.axes = std::move(axes);
  table.points.resize(nodes.size());

  std::vector<std::string> point_notes(nodes.size());
  detail::parallel_for(nodes.size(), [&](std::size_t p) {
    LyapunovPoint& pt = table.points[p];
    pt.state = nodes[p];
    pt.error_norm = sys.error_norm(pt.state);
    pt.magnitude = sys.magnitude(pt.state);
    if (region.contains(sys, pt.state)) {
      pt.in_region = true;
      return;
    }
    double horizon = settings.horizon_cap;
    if (beta_tilde) {
      if (pt.magnitude == 0.0) {
        horizon = 0.0;
      } else if (pt.error_norm == 0.0) {
        pt.degenerate = true;
      } else {
        try {
          horizon = std::min(horizon, settle_time(*beta_tilde, 2.0 * pt.magnitude, alpha_tilde(pt.error_norm / 2.0)));
        } catch (const GainDomainError& e) {
          point_notes[p] = "point " + std::to_string(p) + ": settle time unavailable (" + e.what() + "), capped";
        }
      }
    } else if (pt.error_norm == 0.0) {
      pt.degenerate = true;
    }
    pt.horizon = horizon;
    pt.value = alpha_tilde(pt.error_norm);
    for (std::size_t b = 0; b < settings.budget; ++b) {
      ++pt.budget;
      if (horizon == 0.0) {
        break;
      }
      const std::uint64_t seed = detail::mix_seed(detail::mix_seed(settings.seed, p), b);
      auto signal = sample_disturbance_signal(sys, horizon, settings.hold, settings.strategy, seed);
      const Trajectory tr = integrate(system, pt.state, std::move(signal), horizon, settings.dt);
      const HittingTime theta = hitting_time(tr, region);
      const double stop = std::min(theta.time, horizon);
      for (std::size_t k = 0; k < tr.size() && tr.time(k) <= stop; ++k) {
        pt.value = std::max(pt.value, alpha_tilde(tr.error_norm[k]) * std::exp(tr.time(k)));
      }
      if (theta.reached() && theta.time <= horizon) {
        const State at = state_at(tr, theta.time);
        pt.value = std::max(pt.value, alpha_tilde(sys.error_norm(at)) * std::exp(theta.time));
      }
    }
  });
  std::size_t degenerate = 0;
  for (std::size_t p = 0; p < nodes.size(); ++p) {
    degenerate += table.points[p].degenerate ? 1 : 0;
    if (!point_notes[p].empty()) {
      table.notes.push_back(point_notes[p]);
    }
  }
  if (degenerate > 0) {
    table.notes.push_back(std::to_string(degenerate) +
                          " points with zero error off the region have no finite truncation; horizon capped");
  }
  table.notes.push_back("values under-approximate the supremum over all solutions (finite sample, finite horizon)");
  return table;
}

/// alpha_tilde(|h(xi)|) <= V(xi) <= beta_tilde(|xi|_omega, 0) off the region;
/// the upper side is relaxed by the multiplicative slack.
[[nodiscard]] inline PropertyReport sandwich_check(const LyapunovTable& table, const ScalarGain& alpha_tilde,
                                                   const KLEnvelope& beta_tilde, double slack = 1.02) {
  PropertyReport report;
  report.property = "sandwich";
  for (std::size_t p = 0; p < table.points.size(); ++p) {
    const auto& pt = table.points[p];
    if (pt.in_region) {
      ++report.skipped;
      continue;
    }
    ++report.subjects;
    report.record(p, 0.0, alpha_tilde(pt.error_norm), pt.value, "lower");
    report.record(p, 0.0, pt.value, slack * beta_tilde(pt.magnitude, 0.0), "upper");
  }
  return report;
}

struct DecreaseProbeSettings {
  std::size_t probes = 20;
  double horizon = 2.0;
  double dt = 1e-3;
  double hold = 0.1;
  DisturbanceStrategy strategy = DisturbanceStrategy::uniform;
  std::uint64_t seed = 0;
  double slack = 1.02;
};

/// Exponential decrease along sampled solutions started at grid nodes off the
/// region: V(x(t)) <= V(x(0)) e^{-t} and
/// V(x(0)) e^{-t} + int_0^t V(x(s)) ds <= V(x(0)). Off-grid values use the
/// interpolated value minus its declared error. A probe stops when it enters
/// the region and is truncated (counted as skipped) when it leaves the
/// certifiable part of the grid.
[[nodiscard]] inline PropertyReport exp_decrease_check(const LyapunovTable& table, SystemPtr system,
                                                       const RegionPredicate& region,
                                                       const DecreaseProbeSettings& settings) {
  const DisturbedSystem& sys = *system;
  PropertyReport report;
  report.property = "exp_decrease";
  std::vector<std::size_t> candidates;
  for (std::size_t p = 0; p < table.points.size(); ++p) {
    if (!table.points[p].in_region) {
      candidates.push_back(p);
    }
  }
  if (candidates.empty()) {
    return report;
  }
  std::mt19937_64 rng(settings.seed);
  std::vector<std::size_t> chosen(settings.probes);
  for (std::size_t i = 0; i < settings.probes; ++i) {
    chosen[i] = i < candidates.size() ? candidates[i] : candidates[rng() % candidates.size()];
  }
  std::vector<PropertyReport> parts(settings.probes);
  detail::parallel_for(settings.probes, [&](std::size_t i) {
    PropertyReport& part = parts[i];
    const auto& pt = table.points[chosen[i]];
    auto signal = sample_disturbance_signal(sys, settings.horizon, settings.hold, settings.strategy,
                                            detail::mix_seed(settings.seed, i));
    const Trajectory tr = integrate(system, pt.state, std::move(signal), settings.horizon, settings.dt);
    ++part.subjects;
    const double v0 = pt.value;
    double integral = 0.0;
    double prev = v0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const auto x = tr.state(k);
      if (region.contains(sys, x)) {
        break;
      }
      double current = v0;
      if (k > 0) {
        const auto est = table.interpolate(sys, region, x);
        if (!est) {
          ++part.skipped;
          break;
        }
        current = est->lower();
        integral += 0.5 * tr.dt * (prev + current);
      }
      const double t = tr.time(k);
      part.record(i, t, current, settings.slack * v0 * std::exp(-t), "pointwise");
      part.record(i, t, v0 * std::exp(-t) + integral, settings.slack * v0, "integral");
      prev = current;
    }
  });
  for (auto& part : parts) {
    report.merge(part);
  }
  if (report.skipped > 0) {
    report.notes.push_back(std::to_string(report.skipped) + " probes truncated on leaving the certifiable grid");
  }
  return report;
}

using CandidateFunction = std::function<double(std::span<const double>)>;

/// Integral decrease of a candidate along each trajectory while it stays off
/// the region: V(x(t)) - V(x(0)) <= -(1 - tol) int_0^t alpha3(V(x(s))) ds.
[[nodiscard]] inline PropertyReport integral_decrease_check(const CandidateFunction& candidate,
                                                            const RegionPredicate& region,
                                                            const ScalarGain& alpha3, const Ensemble& ens,
                                                            double tol = 0.02) {
  PropertyReport report;
  report.property = "integral_decrease";
  for (const auto& tr : ens.trajectories) {
    ++report.subjects;
    const std::size_t window = hitting_time(tr, region).first_index;
    if (window == 0) {
      continue;
    }
    ++report.checked_intervals;
    const double v0 = candidate(tr.state(0));
    double integral = 0.0;
    double prev_rate = alpha3(v0);
    for (std::size_t k = 0; k < window; ++k) {
      const double v = candidate(tr.state(k));
      if (k > 0) {
        const double rate = alpha3(v);
        integral += 0.5 * tr.dt * (prev_rate + rate);
        prev_rate = rate;
      }
      report.record(tr.id, tr.time(k), v - v0, -(1.0 - tol) * integral, "integral_decrease");
    }
  }
  return report;
}

/// Central-difference gradient of a candidate.
[[nodiscard]] inline State numerical_gradient(const CandidateFunction& candidate, std::span<const double> x,
                                              double step) {
  State grad(x.size());
  State probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = candidate(probe);
    probe[i] = x[i] - step;
    const double down = candidate(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// grad V(xi) . f(xi, d) <= -(1 - tol) alpha3(V(xi)) at every probe off the
/// region, for each extreme disturbance (and the box centre).
[[nodiscard]] inline PropertyReport gradient_decrease_check(const CandidateFunction& candidate,
                                                            const DisturbedSystem& sys, const RegionPredicate& region,
                                                            const ScalarGain& alpha3, const std::vector<State>& probes,
                                                            double fd_step = 1e-6, double tol = 0.02) {
  if (!(fd_step > 0.0)) {
    throw std::invalid_argument("finite-difference step must be positive");
  }
  PropertyReport report;
  report.property = "gradient_decrease";
  auto disturbances = sys.disturbances.extreme_points();
  if (sys.disturbances.kind() == DisturbanceSet::Kind::box) {
    State centre(sys.disturbances.dim());
    for (std::size_t i = 0; i < centre.size(); ++i) {
      centre[i] = 0.5 * (sys.disturbances.lo()[i] + sys.disturbances.hi()[i]);
    }
    disturbances.push_back(std::move(centre));
  }
  State f(sys.dim);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const State& xi = probes[p];
    if (region.contains(sys, xi)) {
      ++report.skipped;
      continue;
    }
    ++report.subjects;
    const State grad = numerical_gradient(candidate, xi, fd_step);
    const double rhs = -(1.0 - tol) * alpha3(candidate(xi));
    for (const auto& d : disturbances) {
      sys.field(xi, d, f);
      double dot = 0.0;
      for (std::size_t i = 0; i < sys.dim; ++i) {
        dot += grad[i] * f[i];
      }
      report.record(p, 0.0, dot, rhs, "gradient");
    }
  }
  return report;
}

/// Sampled solution of w' = -alpha(w) (+ 1/n when perturbed), w(0) = v0.
struct ComparisonSolution {
  double dt = 1e-3;
  std::vector<double> times;
  std::vector<double> values;
  std::optional<std::size_t> perturbation;
};

/// RK4 solution clamped at 0. alpha is evaluated at max(w, 0).
[[nodiscard]] inline ComparisonSolution solve_comparison_ode(const ScalarGain& alpha, double v0, double horizon,
                                                             double dt, std::optional<std::size_t> n = std::nullopt) {
  if (!(v0 >= 0.0) || !(dt > 0.0) || !(horizon >= 0.0)) {
    throw std::invalid_argument("comparison ODE needs v0 >= 0, dt > 0 and horizon >= 0");
  }
  if (n && *n == 0) {
    throw std::invalid_argument("perturbation index must be positive");
  }
  const double forcing = n ? 1.0 / static_cast<double>(*n) : 0.0;
  const auto rate = [&](double w) { return -alpha(std::max(w, 0.0)) + forcing; };
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  ComparisonSolution sol;
  sol.dt = dt;
  sol.perturbation = n;
  sol.times.reserve(steps + 1);
  sol.values.reserve(steps + 1);
  double w = v0;
  sol.times.push_back(0.0);
  sol.values.push_back(w);
  for (std::size_t k = 0; k < steps; ++k) {
    const double k1 = rate(w);
    const double k2 = rate(w + 0.5 * dt * k1);
    const double k3 = rate(w + 0.5 * dt * k2);
    const double k4 = rate(w + dt * k3);
    w = std::max(0.0, w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    sol.times.push_back(static_cast<double>(k + 1) * dt);
    sol.values.push_back(w);
  }
  return sol;
}

struct DominationReport {
  bool refused = false;               // the decrease inequality fails on the input
  double precondition_excess = 0.0;   // max_{i<j} (v_j + I_j) - (v_i + I_i)
  PropertyReport domination;          // v(t) <= (1 + tol) w(t)
  ComparisonSolution comparison;
};

/// Checks the sampled v against the comparison solution w with w(0) = v(0).
/// The input must first satisfy v(t2) <= v(t1) - int_{t1}^{t2} alpha(v) on
/// the grid (trapezoid quadrature); otherwise the check is refused.
[[nodiscard]] inline DominationReport comparison_domination_check(std::span<const double> v, const ScalarGain& alpha,
                                                                  double dt, double tol = 1e-6,
                                                                  double precondition_tol = 1e-6) {
  if (v.empty() || !(dt > 0.0)) {
    throw std::invalid_argument("domination check needs samples and dt > 0");
  }
  DominationReport out;
  out.domination.property = "comparison_domination";
  if (std::any_of(v.begin(), v.end(), [](double x) { return !(x >= 0.0); })) {
    out.refused = true;
    out.domination.notes.push_back("input has negative or non-finite samples");
    return out;
  }
  double integral = 0.0;
  double running_min = v[0];
  for (std::size_t k = 1; k < v.size(); ++k) {
    integral += 0.5 * dt * (alpha(v[k - 1]) + alpha(v[k]));
    const double m = v[k] + integral;
    out.precondition_excess = std::max(out.precondition_excess, m - running_min);
    running_min = std::min(running_min, m);
  }
  if (out.precondition_excess > precondition_tol * std::max(1.0, v[0])) {
    out.refused = true;
    out.domination.notes.push_back("decrease inequality fails by " + std::to_string(out.precondition_excess));
    return out;
  }
  out.comparison = solve_comparison_ode(alpha, v[0], dt * static_cast<double>(v.size() - 1), dt);
  out.domination.subjects = 1;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out.domination.record(0, out.comparison.times[k], v[k], (1.0 + tol) * out.comparison.values[k], "domination");
  }
  return out;
}

/// Tabulated flow map (s, t) -> w_s(t) of w' = -alpha(w), w(0) = s: the KL
/// bound behind the comparison argument. Throws if the sampled map is not
/// monotone in the KL sense.
[[nodiscard]] inline KLEnvelope comparison_flow_envelope(const ScalarGain& alpha, const std::vector<double>& s_grid,
                                                         const std::vector<double>& t_grid, double dt = 1e-3) {
  if (t_grid.empty() || s_grid.empty()) {
    throw std::invalid_argument("flow envelope needs nonempty grids");
  }
  std::vector<double> values(s_grid.size() * t_grid.size(), 0.0);
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    const auto sol = solve_comparison_ode(alpha, s_grid[i], t_grid.back(), dt);
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
      const auto k = std::min(sol.values.size() - 1, static_cast<std::size_t>(std::llround(t_grid[j] / dt)));
      values[i * t_grid.size() + j] = sol.values[k];
    }
  }
  return KLEnvelope::table(s_grid, t_grid, std::move(values));
}

}  // namespace stabcert

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stabcert/detail/parallel.hpp"
#include "stabcert/system.hpp"

namespace stabcert {

namespace detail {

/// Scratch buffers for one RK4 step of an n-dimensional field.
struct Rk4Workspace {
  explicit Rk4Workspace(std::size_t n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}
  State k1, k2, k3, k4, tmp;
};

/// Classical RK4 step of size h with the disturbance held at d.
inline void rk4_step(const DisturbedSystem& sys, std::span<const double> x, std::span<const double> d, double h,
                     std::span<double> out, Rk4Workspace& ws) {
  const std::size_t n = x.size();
  sys.field(x, d, ws.k1);
  for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = x[i] + 0.5 * h * ws.k1[i];
  sys.field(ws.tmp, d, ws.k2);
  for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = x[i] + 0.5 * h * ws.k2[i];
  sys.field(ws.tmp, d, ws.k3);
  for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = x[i] + h * ws.k3[i];
  sys.field(ws.tmp, d, ws.k4);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] + h / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
  }
}

[[nodiscard]] inline std::vector<double> running_max(std::span<const double> v, std::size_t start) {
  std::vector<double> out(v.size() - std::min(start, v.size()));
  double acc = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    acc = std::max(acc, v[start + k]);
    out[k] = acc;
  }
  return out;
}

}  // namespace detail

/// A solution sampled on the uniform grid t_k = k * dt, together with its
/// outputs, magnitudes and running sup norms. Immutable after integration.
struct Trajectory {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  SystemPtr system;
  DisturbanceSignal signal;
  double dt = 1e-3;
  bool blew_up = false;

  std::vector<double> states;        // row-major, size() x dim
  std::vector<double> errors;        // y(t_k), size() x error_dim
  std::vector<double> measurements;  // w(t_k), size() x measurement_dim
  std::vector<double> omega;         // |x(t_k)|_omega
  std::vector<double> error_norm;    // |y(t_k)|
  std::vector<double> measurement_norm;
  std::vector<double> error_sup;        // ||y||_[0, t_k]
  std::vector<double> measurement_sup;  // ||w||_[0, t_k]

  [[nodiscard]] std::size_t size() const { return omega.size(); }
  [[nodiscard]] double time(std::size_t k) const { return static_cast<double>(k) * dt; }
  [[nodiscard]] double final_time() const { return time(size() - 1); }
  [[nodiscard]] std::size_t dim() const { return system->dim; }

  [[nodiscard]] std::span<const double> state(std::size_t k) const {
    return std::span<const double>(states).subspan(k * system->dim, system->dim);
  }
  [[nodiscard]] std::span<const double> error(std::size_t k) const {
    return std::span<const double>(errors).subspan(k * system->error_dim, system->error_dim);
  }
  [[nodiscard]] std::span<const double> measurement(std::size_t k) const {
    return std::span<const double>(measurements).subspan(k * system->measurement_dim, system->measurement_dim);
  }

  /// Disturbance value used on the step [t_k, t_{k+1}).
  [[nodiscard]] std::span<const double> step_disturbance(std::size_t k) const {
    return signal.at((static_cast<double>(k) + 0.5) * dt);
  }

  /// ||w||_[t_start, t_k] for every k >= start (entry 0 is k = start).
  [[nodiscard]] std::vector<double> measurement_sup_from(std::size_t start) const {
    return detail::running_max(measurement_norm, start);
  }

  /// ||y||_[t_start, t_k] for every k >= start.
  [[nodiscard]] std::vector<double> error_sup_from(std::size_t start) const {
    return detail::running_max(error_norm, start);
  }

  /// Grid index of the last sample at or before t.
  [[nodiscard]] std::size_t index_at_or_before(double t) const {
    if (t <= 0.0) return 0;
    const auto k = static_cast<std::size_t>(std::floor(t / dt + 1e-9));
    return std::min(k, size() - 1);
  }
};

/// Fixed-step RK4 with the disturbance held constant within each step. The
/// trajectory is truncated and flagged when |x| exceeds blowup_bound.
[[nodiscard]] inline Trajectory integrate(SystemPtr system, const State& x0, DisturbanceSignal signal, double horizon,
                                          double dt, double blowup_bound = 1e8) {
  if (!system) {
    throw std::invalid_argument("integrate needs a system");
  }
  const DisturbedSystem& sys = *system;
  if (!(dt > 0.0) || !(horizon >= 0.0)) {
    throw std::invalid_argument("integrate needs dt > 0 and horizon >= 0");
  }
  if (x0.size() != sys.dim) {
    throw std::invalid_argument("initial state dimension mismatch for system " + sys.name);
  }
  if (signal.values.empty()) {
    throw std::invalid_argument("disturbance signal is empty");
  }
  for (const auto& d : signal.values) {
    if (!sys.disturbances.contains(d)) {
      throw std::invalid_argument("disturbance signal leaves the admissible set of system " + sys.name);
    }
  }
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));

  Trajectory tr;
  tr.system = std::move(system);
  tr.signal = std::move(signal);
  tr.dt = dt;
  const std::size_t n = sys.dim;
  tr.states.reserve((steps + 1) * n);
  tr.errors.reserve((steps + 1) * sys.error_dim);
  tr.measurements.reserve((steps + 1) * sys.measurement_dim);
  for (auto* v : {&tr.omega, &tr.error_norm, &tr.measurement_norm, &tr.error_sup, &tr.measurement_sup}) {
    v->reserve(steps + 1);
  }

  State y(sys.error_dim);
  State w(sys.measurement_dim);
  auto push = [&](std::span<const double> x) {
    tr.states.insert(tr.states.end(), x.begin(), x.end());
    sys.error_output(x, y);
    sys.measurement_output(x, w);
    tr.errors.insert(tr.errors.end(), y.begin(), y.end());
    tr.measurements.insert(tr.measurements.end(), w.begin(), w.end());
    tr.omega.push_back(sys.magnitude(x));
    const double yn = euclidean_norm(y);
    const double wn = euclidean_norm(w);
    tr.error_norm.push_back(yn);
    tr.measurement_norm.push_back(wn);
    tr.error_sup.push_back(tr.error_sup.empty() ? yn : std::max(tr.error_sup.back(), yn));
    tr.measurement_sup.push_back(tr.measurement_sup.empty() ? wn : std::max(tr.measurement_sup.back(), wn));
  };

  State x = x0;
  State next(n);
  detail::Rk4Workspace ws(n);
  push(x);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto d = tr.signal.at((static_cast<double>(k) + 0.5) * dt);
    detail::rk4_step(sys, x, d, dt, next, ws);
    const double norm = euclidean_norm(next);
    if (!std::isfinite(norm) || norm > blowup_bound) {
      tr.blew_up = true;
      break;
    }
    x.swap(next);
    push(x);
  }
  return tr;
}

/// State at an off-grid time, by one partial RK4 step from the preceding
/// grid point with that step's disturbance.
[[nodiscard]] inline State state_at(const Trajectory& tr, double t) {
  const std::size_t k = tr.index_at_or_before(t);
  const auto xk = tr.state(k);
  const double tau = t - tr.time(k);
  if (tau <= 0.0 || k + 1 >= tr.size()) {
    return State(xk.begin(), xk.end());
  }
  State out(tr.dim());
  detail::Rk4Workspace ws(tr.dim());
  detail::rk4_step(*tr.system, xk, tr.step_disturbance(k), tau, out, ws);
  return out;
}

/// Given pred false at t_k and true at t_{k+1}, bisects inside the step and
/// returns the earliest time found with pred true (within tol).
template <class Pred>
[[nodiscard]] double refine_switch(const Trajectory& tr, std::size_t k, Pred&& pred, double tol) {
  double lo = tr.time(k);
  double hi = tr.time(k + 1);
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (pred(state_at(tr, mid))) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

[[nodiscard]] inline double default_bisection_tolerance(const Trajectory& tr) { return tr.dt * 1e-3; }

/// Result of a first-entrance search.
struct HittingTime {
  double time = std::numeric_limits<double>::infinity();  // infinity: not reached within the horizon
  std::size_t first_index = 0;                            // first grid index inside D (size() if none)

  [[nodiscard]] bool reached() const { return std::isfinite(time); }
};

/// theta = inf{t : x(t) in D}, located on the grid and refined by bisection
/// between the bracketing grid points.
[[nodiscard]] inline HittingTime hitting_time(const Trajectory& tr, const RegionPredicate& region,
                                              std::optional<double> tol = std::nullopt) {
  const DisturbedSystem& sys = *tr.system;
  const double eps = tol.value_or(default_bisection_tolerance(tr));
  for (std::size_t k = 0; k < tr.size(); ++k) {
    if (region.contains(sys, tr.state(k))) {
      if (k == 0) {
        return {0.0, 0};
      }
      const double t = refine_switch(
          tr, k - 1, [&](const State& x) { return region.contains(sys, x); }, eps);
      return {t, k};
    }
  }
  return {std::numeric_limits<double>::infinity(), tr.size()};
}

/// Parameters shared by every trajectory of an ensemble.
struct SimulationSettings {
  double dt = 1e-3;
  double horizon = 1.0;
  double hold = 0.1;
  DisturbanceStrategy strategy = DisturbanceStrategy::uniform;
  std::uint64_t seed = 0;
  double blowup_bound = 1e8;
};

/// Finite sample of solutions of one system.
struct Ensemble {
  SystemPtr system;
  SimulationSettings settings;
  std::vector<Trajectory> trajectories;

  [[nodiscard]] std::size_t blow_ups() const {
    return static_cast<std::size_t>(
        std::count_if(trajectories.begin(), trajectories.end(), [](const Trajectory& t) { return t.blew_up; }));
  }
};

/// Integrates one trajectory per initial state in parallel. Trajectory i gets
/// id first_id + i and a disturbance seed derived from (settings.seed, id).
[[nodiscard]] inline Ensemble simulate_ensemble(SystemPtr system, const std::vector<State>& initial,
                                                const SimulationSettings& settings, std::size_t first_id = 0) {
  Ensemble ens;
  ens.system = system;
  ens.settings = settings;
  ens.trajectories.resize(initial.size());
  detail::parallel_for(initial.size(), [&](std::size_t i) {
    const std::size_t id = first_id + i;
    const std::uint64_t seed = detail::mix_seed(settings.seed, id);
    auto signal = sample_disturbance_signal(*system, settings.horizon, settings.hold, settings.strategy, seed);
    Trajectory tr = integrate(system, initial[i], std::move(signal), settings.horizon, settings.dt,
                              settings.blowup_bound);
    tr.id = id;
    tr.seed = seed;
    ens.trajectories[i] = std::move(tr);
  });
  return ens;
}

/// Outcome of a nearby-trajectory search.
struct TrackingReport {
  bool certified = false;
  double lipschitz = 0.0;
  double best_ratio = std::numeric_limits<double>::infinity();  // max_k gap_k / (|x0 - p| e^{L t_k})
  std::size_t best_candidate = 0;                               // 0 = replay of the reference signal
  std::size_t candidates = 0;
  DisturbanceSignal best_signal;
  std::vector<double> best_gap;  // |x(t_k) - z_p(t_k)|
};

/// Searches disturbance signals from p for a solution z_p with
/// |x(t) - z_p(t)| <= |x(0) - p| e^{L t} on every grid time. The reference
/// signal is replayed first, then `samples` random signals are tried. A
/// failed search is inconclusive, not a counterexample.
[[nodiscard]] inline TrackingReport track_nearby(const Trajectory& tr, const State& p, std::size_t samples,
                                                 std::uint64_t seed, std::optional<double> lipschitz = std::nullopt,
                                                 DisturbanceStrategy strategy = DisturbanceStrategy::uniform) {
  const DisturbedSystem& sys = *tr.system;
  if (p.size() != sys.dim) {
    throw std::invalid_argument("track_nearby: point has the wrong dimension");
  }
  for (double v : p) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("track_nearby: point must be finite");
    }
  }
  const auto x0 = tr.state(0);
  State offset(sys.dim);
  for (std::size_t i = 0; i < sys.dim; ++i) offset[i] = x0[i] - p[i];
  const double dist0 = euclidean_norm(offset);

  TrackingReport report;
  if (lipschitz) {
    report.lipschitz = *lipschitz;
  } else if (sys.lipschitz_hint) {
    report.lipschitz = *sys.lipschitz_hint;
  } else {
    State lo(sys.dim, std::numeric_limits<double>::infinity());
    State hi(sys.dim, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const auto x = tr.state(k);
      for (std::size_t i = 0; i < sys.dim; ++i) {
        lo[i] = std::min(lo[i], x[i] - dist0);
        hi[i] = std::max(hi[i], x[i] + dist0);
      }
    }
    report.lipschitz = estimate_lipschitz(sys, lo, hi, 2000, seed);
  }

  const double horizon = tr.final_time();
  const double hold = std::isfinite(tr.signal.hold()) ? tr.signal.hold() : std::max(horizon, tr.dt);
  State diff(sys.dim);
  for (std::size_t c = 0; c <= samples; ++c) {
    DisturbanceSignal sig = c == 0 ? tr.signal
                                   : sample_disturbance_signal(sys, horizon, hold, strategy,
                                                               detail::mix_seed(seed, c));
    const Trajectory z = integrate(tr.system, p, sig, horizon, tr.dt, std::numeric_limits<double>::max());
    ++report.candidates;
    double ratio = 0.0;
    std::vector<double> gaps(tr.size(), std::numeric_limits<double>::infinity());
    const std::size_t common = std::min(tr.size(), z.size());
    for (std::size_t k = 0; k < common; ++k) {
      const auto a = tr.state(k);
      const auto b = z.state(k);
      for (std::size_t i = 0; i < sys.dim; ++i) diff[i] = a[i] - b[i];
      gaps[k] = euclidean_norm(diff);
      const double bound = dist0 * std::exp(report.lipschitz * tr.time(k));
      if (bound > 0.0) {
        ratio = std::max(ratio, gaps[k] / bound);
      } else if (gaps[k] > tie_tolerance) {
        ratio = std::numeric_limits<double>::infinity();
      }
    }
    if (common < tr.size()) {
      ratio = std::numeric_limits<double>::infinity();
    }
    if (ratio < report.best_ratio) {
      report.best_ratio = ratio;
      report.best_candidate = c;
      report.best_signal = std::move(sig);
      report.best_gap = std::move(gaps);
    }
    if (report.best_ratio <= 1.0 + 1e-9) {
      break;
    }
  }
  report.certified = report.best_ratio <= 1.0 + 1e-9;
  return report;
}

/// Empirical reach table R(r, t) = max over trajectories with
/// |x(0)|_omega <= r of max_{s <= t} |x(s)|_omega. Row-major over r.
struct ReachTable {
  std::vector<double> r;
  std::vector<double> t;
  std::vector<double> values;
  std::size_t truncated = 0;  // trajectories that blew up before the last t

  [[nodiscard]] double at(std::size_t i, std::size_t j) const { return values[i * t.size() + j]; }
};

[[nodiscard]] inline ReachTable empirical_reach_bound(const Ensemble& ens, std::vector<double> r_grid,
                                                      std::vector<double> t_grid) {
  ReachTable table;
  table.r = std::move(r_grid);
  table.t = std::move(t_grid);
  table.values.assign(table.r.size() * table.t.size(), 0.0);
  const std::size_t nt = table.t.size();
  for (const auto& tr : ens.trajectories) {
    const auto reach = detail::running_max(tr.omega, 0);
    const double w0 = tr.omega.front();
    if (tr.blew_up) {
      ++table.truncated;
    }
    for (std::size_t j = 0; j < nt; ++j) {
      const double v = reach[tr.index_at_or_before(table.t[j])];
      for (std::size_t i = 0; i < table.r.size(); ++i) {
        if (w0 <= table.r[i]) {
          table.values[i * nt + j] = std::max(table.values[i * nt + j], v);
        }
      }
    }
  }
  return table;
}

/// Evenly spaced values lo, ..., hi.
[[nodiscard]] inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count == 0) return {};
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  out.back() = hi;
  return out;
}

/// Tensor grid of states, first axis varying slowest.
[[nodiscard]] inline std::vector<State> box_grid(const State& lo, const State& hi,
                                                 const std::vector<std::size_t>& counts) {
  if (lo.size() != hi.size() || lo.size() != counts.size() || lo.empty()) {
    throw std::invalid_argument("box grid needs matching lo, hi and counts");
  }
  std::vector<std::vector<double>> axes;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    axes.push_back(linspace(lo[i], hi[i], counts[i]));
  }
  std::vector<State> out{State{}};
  for (const auto& axis : axes) {
    std::vector<State> next;
    for (const auto& prefix : out) {
      for (double v : axis) {
        State s = prefix;
        s.push_back(v);
        next.push_back(std::move(s));
      }
    }
    out = std::move(next);
  }
  return out;
}

/// `count` states with Euclidean norm uniform in [r_min, r_max] and
/// direction uniform on the sphere.
[[nodiscard]] inline std::vector<State> annulus_sample(std::size_t dim, double r_min, double r_max, std::size_t count,
                                                       std::uint64_t seed) {
  if (dim == 0 || !(r_min >= 0.0) || !(r_max >= r_min)) {
    throw std::invalid_argument("annulus sample needs dim > 0 and 0 <= r_min <= r_max");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<State> out;
  out.reserve(count);
  while (out.size() < count) {
    State x(dim);
    for (double& v : x) v = normal(rng);
    const double n = euclidean_norm(x);
    if (n < 1e-12) continue;
    const double r = r_min + unit(rng) * (r_max - r_min);
    for (double& v : x) v *= r / n;
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace stabcert

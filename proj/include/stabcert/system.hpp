#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stabcert/gains.hpp"

namespace stabcert {

using State = std::vector<double>;

[[nodiscard]] inline double euclidean_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) {
    acc += x * x;
  }
  return std::sqrt(acc);
}

/// Compact disturbance set: an axis-aligned box, a finite point cloud, or
/// the singleton {0} of an undisturbed system.
class DisturbanceSet {
 public:
  enum class Kind { zero, box, points };

  static DisturbanceSet zero(std::size_t dim = 1) {
    DisturbanceSet out;
    out.kind_ = Kind::zero;
    out.dim_ = dim;
    return out;
  }

  static DisturbanceSet box(State lo, State hi) {
    if (lo.empty() || lo.size() != hi.size()) {
      throw std::invalid_argument("disturbance box needs matching nonempty bounds");
    }
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (!(lo[i] <= hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i])) {
        throw std::invalid_argument("disturbance box bounds must be finite with lo <= hi");
      }
    }
    DisturbanceSet out;
    out.kind_ = Kind::box;
    out.dim_ = lo.size();
    out.lo_ = std::move(lo);
    out.hi_ = std::move(hi);
    return out;
  }

  static DisturbanceSet points(std::vector<State> pts) {
    if (pts.empty()) {
      throw std::invalid_argument("disturbance point set must be nonempty");
    }
    const std::size_t dim = pts.front().size();
    for (const auto& p : pts) {
      if (p.size() != dim || dim == 0) {
        throw std::invalid_argument("disturbance points must share a nonzero dimension");
      }
      for (double v : p) {
        if (!std::isfinite(v)) {
          throw std::invalid_argument("disturbance points must be finite");
        }
      }
    }
    DisturbanceSet out;
    out.kind_ = Kind::points;
    out.dim_ = dim;
    out.points_ = std::move(pts);
    return out;
  }

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] const State& lo() const { return lo_; }
  [[nodiscard]] const State& hi() const { return hi_; }
  [[nodiscard]] const std::vector<State>& point_list() const { return points_; }

  [[nodiscard]] bool contains(std::span<const double> d, double tol = 1e-12) const {
    if (d.size() != dim_) {
      return false;
    }
    switch (kind_) {
      case Kind::zero:
        return std::all_of(d.begin(), d.end(), [&](double v) { return std::abs(v) <= tol; });
      case Kind::box:
        for (std::size_t i = 0; i < dim_; ++i) {
          if (d[i] < lo_[i] - tol || d[i] > hi_[i] + tol) {
            return false;
          }
        }
        return true;
      case Kind::points:
        return std::any_of(points_.begin(), points_.end(), [&](const State& p) {
          for (std::size_t i = 0; i < dim_; ++i) {
            if (std::abs(p[i] - d[i]) > tol) {
              return false;
            }
          }
          return true;
        });
    }
    return false;
  }

  /// Extreme points used for worst-case probing: box corners (up to 2^12),
  /// every listed point, or the origin.
  [[nodiscard]] std::vector<State> extreme_points() const {
    switch (kind_) {
      case Kind::zero:
        return {State(dim_, 0.0)};
      case Kind::points:
        return points_;
      case Kind::box: {
        if (dim_ > 12) {
          throw std::invalid_argument("too many box corners to enumerate");
        }
        std::vector<State> out;
        for (std::size_t mask = 0; mask < (std::size_t{1} << dim_); ++mask) {
          State c(dim_);
          for (std::size_t i = 0; i < dim_; ++i) {
            c[i] = (mask >> i) & 1U ? hi_[i] : lo_[i];
          }
          out.push_back(std::move(c));
        }
        return out;
      }
    }
    return {};
  }

 private:
  Kind kind_ = Kind::zero;
  std::size_t dim_ = 1;
  State lo_;
  State hi_;
  std::vector<State> points_;
};

/// How piecewise-constant disturbance values are drawn from the set.
enum class DisturbanceStrategy { zero, vertices, uniform };

[[nodiscard]] inline DisturbanceStrategy parse_strategy(const std::string& name) {
  if (name == "zero") return DisturbanceStrategy::zero;
  if (name == "vertices") return DisturbanceStrategy::vertices;
  if (name == "uniform") return DisturbanceStrategy::uniform;
  throw std::invalid_argument("unknown disturbance strategy '" + name + "'");
}

[[nodiscard]] inline const char* to_string(DisturbanceStrategy s) {
  switch (s) {
    case DisturbanceStrategy::zero:
      return "zero";
    case DisturbanceStrategy::vertices:
      return "vertices";
    case DisturbanceStrategy::uniform:
      return "uniform";
  }
  return "zero";
}

/// A system x' = f(x, d), d in a compact set, with error output y = h(x),
/// measurement output w = g(x) and magnitude |x|_omega.
struct DisturbedSystem {
  using Field = std::function<void(std::span<const double> x, std::span<const double> d, std::span<double> dx)>;
  using Output = std::function<void(std::span<const double> x, std::span<double> out)>;
  using Magnitude = std::function<double(std::span<const double> x)>;

  std::string name;
  std::string description;
  std::string anchor;
  std::size_t dim = 1;
  std::size_t error_dim = 1;
  std::size_t measurement_dim = 1;
  Field field;
  DisturbanceSet disturbances = DisturbanceSet::zero();
  Output error_output;
  Output measurement_output;
  Magnitude magnitude = [](std::span<const double> x) { return euclidean_norm(x); };
  std::optional<double> lipschitz_hint;

  [[nodiscard]] State error(std::span<const double> x) const {
    State out(error_dim);
    error_output(x, out);
    return out;
  }

  [[nodiscard]] State measurement(std::span<const double> x) const {
    State out(measurement_dim);
    measurement_output(x, out);
    return out;
  }

  [[nodiscard]] double error_norm(std::span<const double> x) const { return euclidean_norm(error(x)); }
  [[nodiscard]] double measurement_norm(std::span<const double> x) const { return euclidean_norm(measurement(x)); }
};

using SystemPtr = std::shared_ptr<const DisturbedSystem>;

/// f(x, d) with dimension and membership checks.
[[nodiscard]] inline State evaluate_field(const DisturbedSystem& sys, std::span<const double> x,
                                          std::span<const double> d) {
  if (x.size() != sys.dim) {
    throw std::invalid_argument("state dimension mismatch for system " + sys.name);
  }
  if (d.size() != sys.disturbances.dim()) {
    throw std::invalid_argument("disturbance dimension mismatch for system " + sys.name);
  }
  if (!sys.disturbances.contains(d)) {
    throw std::invalid_argument("disturbance outside the admissible set of system " + sys.name);
  }
  State dx(sys.dim);
  sys.field(x, d, dx);
  return dx;
}

[[nodiscard]] inline State evaluate_field(const DisturbedSystem& sys, std::span<const double> x) {
  const State d(sys.disturbances.dim(), 0.0);
  if (!sys.disturbances.contains(d)) {
    throw std::invalid_argument("system " + sys.name + " needs an explicit disturbance");
  }
  return evaluate_field(sys, x, d);
}

/// Bad set D in state space, either as an explicit membership test or in
/// gain form D = {x : |h(x)| <= rho(|g(x)|)}. Boundary points belong to D.
class RegionPredicate {
 public:
  using Membership = std::function<bool(std::span<const double>)>;

  static RegionPredicate from_gain(ScalarGain rho) {
    RegionPredicate out;
    out.rho_ = std::move(rho);
    out.name_ = "gain:" + out.rho_->describe();
    return out;
  }

  static RegionPredicate from_set(Membership test, std::string name) {
    RegionPredicate out;
    out.test_ = std::move(test);
    out.name_ = std::move(name);
    return out;
  }

  static RegionPredicate empty() {
    return from_set([](std::span<const double>) { return false; }, "empty");
  }

  static RegionPredicate everything() {
    return from_set([](std::span<const double>) { return true; }, "everything");
  }

  /// The singleton {0}.
  static RegionPredicate origin() {
    return from_set(
        [](std::span<const double> x) { return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; }); },
        "origin");
  }

  /// Closed Euclidean ball around the origin.
  static RegionPredicate ball(double radius) {
    return from_set([radius](std::span<const double> x) { return euclidean_norm(x) <= radius; },
                    "ball:" + std::to_string(radius));
  }

  static RegionPredicate box(State lo, State hi) {
    if (lo.size() != hi.size()) {
      throw std::invalid_argument("region box bounds must match");
    }
    return from_set(
        [lo, hi](std::span<const double> x) {
          for (std::size_t i = 0; i < lo.size(); ++i) {
            if (x[i] < lo[i] || x[i] > hi[i]) {
              return false;
            }
          }
          return true;
        },
        "box");
  }

  [[nodiscard]] bool contains(const DisturbedSystem& sys, std::span<const double> x) const {
    if (rho_) {
      return sys.error_norm(x) <= (*rho_)(sys.measurement_norm(x)) + tie_tolerance;
    }
    return test_(x);
  }

  [[nodiscard]] bool gain_form() const { return rho_.has_value(); }
  [[nodiscard]] const ScalarGain& gain() const { return *rho_; }
  [[nodiscard]] const std::string& name() const { return name_; }

 private:
  std::optional<ScalarGain> rho_;
  Membership test_;
  std::string name_;
};

/// Piecewise-constant disturbance signal on right-open intervals
/// [breakpoints[i], breakpoints[i+1]); the last value holds to infinity.
struct DisturbanceSignal {
  std::vector<double> breakpoints;
  std::vector<State> values;

  [[nodiscard]] std::span<const double> at(double t) const {
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    const std::size_t i = it == breakpoints.begin() ? 0 : static_cast<std::size_t>(it - breakpoints.begin()) - 1;
    return values[i];
  }

  [[nodiscard]] double hold() const {
    return breakpoints.size() > 1 ? breakpoints[1] - breakpoints[0] : std::numeric_limits<double>::infinity();
  }

  static DisturbanceSignal constant(State value) { return {{0.0}, {std::move(value)}}; }
};

/// Draws a piecewise-constant signal with values from the disturbance set.
/// Deterministic for a fixed seed. The singleton set and the "zero" strategy
/// both yield the zero signal.
[[nodiscard]] inline DisturbanceSignal sample_disturbance_signal(const DisturbedSystem& sys, double horizon,
                                                                 double hold, DisturbanceStrategy strategy,
                                                                 std::uint64_t seed) {
  if (!(hold > 0.0)) {
    throw std::invalid_argument("disturbance hold time must be positive");
  }
  const DisturbanceSet& set = sys.disturbances;
  const std::size_t m = set.dim();
  if (set.kind() == DisturbanceSet::Kind::zero || strategy == DisturbanceStrategy::zero) {
    State zero(m, 0.0);
    if (!set.contains(zero)) {
      // "zero" on a set without the origin: hold its first extreme point
      zero = set.extreme_points().front();
    }
    return DisturbanceSignal::constant(std::move(zero));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto intervals = static_cast<std::size_t>(std::max(1.0, std::ceil(horizon / hold - 1e-9)));
  DisturbanceSignal sig;
  sig.breakpoints.reserve(intervals);
  sig.values.reserve(intervals);
  for (std::size_t k = 0; k < intervals; ++k) {
    sig.breakpoints.push_back(static_cast<double>(k) * hold);
    State d(m);
    if (set.kind() == DisturbanceSet::Kind::points) {
      const auto& pts = set.point_list();
      d = pts[std::min(pts.size() - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(pts.size())))];
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        const double u = unit(rng);
        if (strategy == DisturbanceStrategy::vertices) {
          d[i] = u < 0.5 ? set.lo()[i] : set.hi()[i];
        } else {
          d[i] = set.lo()[i] + u * (set.hi()[i] - set.lo()[i]);
        }
      }
    }
    sig.values.push_back(std::move(d));
  }
  return sig;
}

/// Sampled lower estimate of the Lipschitz constant of f(., d) on a box:
/// max over random pairs and disturbances of |f(a,d) - f(b,d)| / |a - b|.
[[nodiscard]] inline double estimate_lipschitz(const DisturbedSystem& sys, const State& lo, const State& hi,
                                               std::size_t samples, std::uint64_t seed = 1) {
  if (lo.size() != sys.dim || hi.size() != sys.dim) {
    throw std::invalid_argument("Lipschitz probe box has the wrong dimension");
  }
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) {
      throw std::invalid_argument("Lipschitz probe box is empty");
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&]() {
    State x(sys.dim);
    for (std::size_t i = 0; i < sys.dim; ++i) {
      x[i] = lo[i] + unit(rng) * (hi[i] - lo[i]);
    }
    return x;
  };
  const auto draw_d = [&]() {
    const auto& set = sys.disturbances;
    State d(set.dim(), 0.0);
    if (set.kind() == DisturbanceSet::Kind::box) {
      for (std::size_t i = 0; i < set.dim(); ++i) {
        d[i] = set.lo()[i] + unit(rng) * (set.hi()[i] - set.lo()[i]);
      }
    } else if (set.kind() == DisturbanceSet::Kind::points) {
      const auto& pts = set.point_list();
      d = pts[std::min(pts.size() - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(pts.size())))];
    }
    return d;
  };
  double best = 0.0;
  State fa(sys.dim);
  State fb(sys.dim);
  State diff(sys.dim);
  for (std::size_t k = 0; k < samples; ++k) {
    const State a = draw();
    const State b = draw();
    const State d = draw_d();
    for (std::size_t i = 0; i < sys.dim; ++i) {
      diff[i] = a[i] - b[i];
    }
    const double dist = euclidean_norm(diff);
    if (dist == 0.0) {
      continue;
    }
    sys.field(a, d, fa);
    sys.field(b, d, fb);
    for (std::size_t i = 0; i < sys.dim; ++i) {
      diff[i] = fa[i] - fb[i];
    }
    best = std::max(best, euclidean_norm(diff) / dist);
  }
  return best;
}

}  // namespace stabcert

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stabcert/report.hpp"

namespace stabcert {

/// Thrown when a gain or envelope is evaluated outside its declared domain or
/// inverted outside its range. Callers enlarge the table or the probe range.
class GainDomainError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Behaviour of a tabulated gain past its last breakpoint.
enum class TailRule {
  none,    // evaluation beyond the table is a domain error
  linear,  // continue with the slope of the last segment (declares K-infinity)
};

/// A class-K function r -> g(r): continuous, zero at zero, strictly
/// increasing. Immutable; copies share the underlying representation.
///
/// Parametric families have unbounded domain and are K-infinity. Tables are
/// defined on [0, last breakpoint] unless they declare a linear tail.
/// Composite gains (max, sum, composition) inherit the narrowest domain of
/// their parts.
class ScalarGain {
 public:
  enum class Family { linear, power, table, max, sum, compose };

  ScalarGain() : ScalarGain(identity()) {}

  static ScalarGain identity() { return linear(1.0); }

  static ScalarGain linear(double slope) {
    if (!(slope > 0.0) || !std::isfinite(slope)) {
      throw std::invalid_argument("linear gain needs a positive finite slope");
    }
    Node n;
    n.family = Family::linear;
    n.coeff = slope;
    return ScalarGain(std::move(n));
  }

  /// r -> coeff * r^exponent
  static ScalarGain power(double coeff, double exponent) {
    if (!(coeff > 0.0) || !std::isfinite(coeff) || !(exponent > 0.0) || !std::isfinite(exponent)) {
      throw std::invalid_argument("power gain needs positive finite coefficient and exponent");
    }
    Node n;
    n.family = Family::power;
    n.coeff = coeff;
    n.exponent = exponent;
    return ScalarGain(std::move(n));
  }

  /// Piecewise-linear gain through (r[i], v[i]). Requires r[0] = v[0] = 0 and
  /// both coordinates strictly increasing.
  static ScalarGain table(std::vector<double> r, std::vector<double> v, TailRule tail = TailRule::none) {
    if (r.size() != v.size() || r.size() < 2) {
      throw std::invalid_argument("gain table needs at least two (r, value) pairs of equal length");
    }
    if (r.front() != 0.0 || v.front() != 0.0) {
      throw std::invalid_argument("gain table must start at (0, 0)");
    }
    for (std::size_t i = 1; i < r.size(); ++i) {
      if (!(r[i] > r[i - 1]) || !(v[i] > v[i - 1]) || !std::isfinite(r[i]) || !std::isfinite(v[i])) {
        throw std::invalid_argument("gain table breakpoints must strictly increase in both coordinates");
      }
    }
    Node n;
    n.family = Family::table;
    n.r = std::move(r);
    n.v = std::move(v);
    n.tail = tail;
    return ScalarGain(std::move(n));
  }

  static ScalarGain max_of(std::vector<ScalarGain> parts) {
    return combine(Family::max, std::move(parts));
  }

  static ScalarGain sum_of(std::vector<ScalarGain> parts) {
    return combine(Family::sum, std::move(parts));
  }

  /// r -> outer(inner(r))
  static ScalarGain compose(ScalarGain outer, ScalarGain inner) {
    Node n;
    n.family = Family::compose;
    n.parts = {std::move(outer), std::move(inner)};
    return ScalarGain(std::move(n));
  }

  [[nodiscard]] double operator()(double r) const {
    if (!(r >= 0.0)) {
      throw std::invalid_argument("gain argument must be a nonnegative number");
    }
    if (r > node_->cap) {
      std::ostringstream msg;
      msg << "gain " << describe() << " evaluated at " << r << " beyond its domain cap " << node_->cap;
      throw GainDomainError(msg.str());
    }
    return eval(r);
  }

  /// g^{-1}(value). Exact for parametric and tabulated gains, bisection to
  /// machine precision for composites.
  [[nodiscard]] double inverse(double value) const {
    if (!(value >= 0.0)) {
      throw std::invalid_argument("gain inverse needs a nonnegative value");
    }
    if (value == 0.0) {
      return 0.0;
    }
    if (value > range_cap()) {
      std::ostringstream msg;
      msg << "value " << value << " outside the range of gain " << describe();
      throw GainDomainError(msg.str());
    }
    const Node& n = *node_;
    switch (n.family) {
      case Family::linear:
        return value / n.coeff;
      case Family::power:
        return std::pow(value / n.coeff, 1.0 / n.exponent);
      case Family::table: {
        const auto it = std::lower_bound(n.v.begin(), n.v.end(), value);
        if (it == n.v.end()) {
          const std::size_t last = n.v.size() - 1;
          const double slope = (n.v[last] - n.v[last - 1]) / (n.r[last] - n.r[last - 1]);
          return n.r[last] + (value - n.v[last]) / slope;
        }
        const auto i = static_cast<std::size_t>(it - n.v.begin());
        if (*it == value) {
          return n.r[i];
        }
        const double frac = (value - n.v[i - 1]) / (n.v[i] - n.v[i - 1]);
        return n.r[i - 1] + frac * (n.r[i] - n.r[i - 1]);
      }
      default:
        return bisect_inverse(value);
    }
  }

  /// Largest argument accepted by evaluation (infinity for K-infinity gains).
  [[nodiscard]] double domain_cap() const { return node_->cap; }

  /// Supremum of the gain over its domain.
  [[nodiscard]] double range_cap() const {
    return std::isinf(node_->cap) ? std::numeric_limits<double>::infinity() : eval(node_->cap);
  }

  /// True for K-infinity gains. Every representable gain with unbounded
  /// domain is also unbounded in value.
  [[nodiscard]] bool unbounded() const { return std::isinf(node_->cap); }

  [[nodiscard]] Family family() const { return node_->family; }
  [[nodiscard]] double coefficient() const { return node_->coeff; }
  [[nodiscard]] double exponent() const { return node_->exponent; }
  [[nodiscard]] const std::vector<double>& breakpoints() const { return node_->r; }
  [[nodiscard]] const std::vector<double>& values() const { return node_->v; }
  [[nodiscard]] TailRule tail() const { return node_->tail; }
  [[nodiscard]] const std::vector<ScalarGain>& parts() const { return node_->parts; }

  [[nodiscard]] std::string describe() const {
    const Node& n = *node_;
    std::ostringstream out;
    switch (n.family) {
      case Family::linear:
        out << n.coeff << "*r";
        break;
      case Family::power:
        out << n.coeff << "*r^" << n.exponent;
        break;
      case Family::table:
        out << "table[" << n.r.size() << " pts, cap " << n.r.back() << (n.tail == TailRule::linear ? ", linear tail" : "")
            << "]";
        break;
      case Family::max:
      case Family::sum: {
        out << (n.family == Family::max ? "max{" : "sum{");
        for (std::size_t i = 0; i < n.parts.size(); ++i) {
          out << (i ? ", " : "") << n.parts[i].describe();
        }
        out << "}";
        break;
      }
      case Family::compose:
        out << "(" << n.parts[0].describe() << ")o(" << n.parts[1].describe() << ")";
        break;
    }
    return out.str();
  }

 private:
  struct Node {
    Family family = Family::linear;
    double coeff = 1.0;
    double exponent = 1.0;
    std::vector<double> r;
    std::vector<double> v;
    TailRule tail = TailRule::none;
    std::vector<ScalarGain> parts;
    double cap = std::numeric_limits<double>::infinity();
  };

  explicit ScalarGain(Node n) {
    n.cap = compute_cap(n);
    node_ = std::make_shared<const Node>(std::move(n));
  }

  static ScalarGain combine(Family family, std::vector<ScalarGain> parts) {
    if (parts.empty()) {
      throw std::invalid_argument("gain combination needs a nonempty list");
    }
    if (parts.size() == 1) {
      return parts.front();
    }
    Node n;
    n.family = family;
    n.parts = std::move(parts);
    return ScalarGain(std::move(n));
  }

  static double compute_cap(const Node& n) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (n.family) {
      case Family::linear:
      case Family::power:
        return inf;
      case Family::table:
        return n.tail == TailRule::linear ? inf : n.r.back();
      case Family::max:
      case Family::sum: {
        double cap = inf;
        for (const auto& p : n.parts) {
          cap = std::min(cap, p.domain_cap());
        }
        return cap;
      }
      case Family::compose: {
        const ScalarGain& outer = n.parts[0];
        const ScalarGain& inner = n.parts[1];
        if (outer.unbounded() || outer.domain_cap() >= inner.range_cap()) {
          return inner.domain_cap();
        }
        return inner.inverse(outer.domain_cap());
      }
    }
    return inf;
  }

  [[nodiscard]] double eval(double r) const {
    const Node& n = *node_;
    switch (n.family) {
      case Family::linear:
        return n.coeff * r;
      case Family::power:
        return n.coeff * std::pow(r, n.exponent);
      case Family::table: {
        const std::size_t last = n.r.size() - 1;
        if (r >= n.r[last]) {
          const double slope = (n.v[last] - n.v[last - 1]) / (n.r[last] - n.r[last - 1]);
          return n.v[last] + slope * (r - n.r[last]);
        }
        const auto it = std::upper_bound(n.r.begin(), n.r.end(), r);
        const auto i = static_cast<std::size_t>(it - n.r.begin());
        const double frac = (r - n.r[i - 1]) / (n.r[i] - n.r[i - 1]);
        return n.v[i - 1] + frac * (n.v[i] - n.v[i - 1]);
      }
      case Family::max: {
        double out = 0.0;
        for (const auto& p : n.parts) {
          out = std::max(out, p.eval(r));
        }
        return out;
      }
      case Family::sum: {
        double out = 0.0;
        for (const auto& p : n.parts) {
          out += p.eval(r);
        }
        return out;
      }
      case Family::compose:
        return n.parts[0](n.parts[1].eval(r));
    }
    return 0.0;
  }

  [[nodiscard]] double bisect_inverse(double value) const {
    double lo = 0.0;
    double hi = std::isinf(node_->cap) ? 1.0 : node_->cap;
    if (std::isinf(node_->cap)) {
      while (eval(hi) < value) {
        lo = hi;
        hi *= 2.0;
      }
    }
    for (int it = 0; it < 2000 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (eval(mid) < value) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

  std::shared_ptr<const Node> node_;
};

[[nodiscard]] inline double evaluate(const ScalarGain& g, double r) { return g(r); }

[[nodiscard]] inline double inverse(const ScalarGain& g, double v) { return g.inverse(v); }

/// Pointwise maximum of class-K gains.
[[nodiscard]] inline ScalarGain compose_max(std::vector<ScalarGain> parts) {
  return ScalarGain::max_of(std::move(parts));
}

/// Measurement-to-error gain assembled from relative-boundedness gains
/// (rho1, sigma1, sigma2) and the three-measures gain rho_tilde:
///   r -> max{rho1(r), rho_tilde(r), sigma1(rho1(r)), sigma1(rho_tilde(r)), sigma2(r)}.
[[nodiscard]] inline ScalarGain compose_mes_gain(const ScalarGain& rho1, const ScalarGain& sigma1,
                                                 const ScalarGain& sigma2, const ScalarGain& rho_tilde) {
  return ScalarGain::max_of({rho1, rho_tilde, ScalarGain::compose(sigma1, rho1),
                             ScalarGain::compose(sigma1, rho_tilde), sigma2});
}

/// K-infinity gain rho = gamma + id, so gamma(rho^{-1}(s)) < s for every s > 0.
[[nodiscard]] inline ScalarGain build_sit_gain_from_mes(const ScalarGain& gamma) {
  return ScalarGain::sum_of({gamma, ScalarGain::identity()});
}

/// A class-KL function beta(s, t).
///
/// Parametric form: phi(s) * exp(a - b t) with phi class K and b > 0.
/// Tabulated form: values on an (s, t) grid with s and t starting at 0,
/// bilinear interpolation inside the grid, and past the last time node the
/// last column decays as t_last / t.
class KLEnvelope {
 public:
  KLEnvelope() : KLEnvelope(exponential(ScalarGain::identity(), 0.0, 1.0)) {}

  static KLEnvelope exponential(ScalarGain phi, double a, double b) {
    if (!(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
      throw std::invalid_argument("exponential KL envelope needs finite a and b > 0");
    }
    KLEnvelope out(Kind::parametric);
    out.phi_ = std::move(phi);
    out.a_ = a;
    out.b_ = b;
    return out;
  }

  /// values are row-major: values[i * t.size() + j] = beta(s[i], t[j]).
  static KLEnvelope table(std::vector<double> s, std::vector<double> t, std::vector<double> values) {
    if (s.size() < 2 || t.size() < 2 || values.size() != s.size() * t.size()) {
      throw std::invalid_argument("KL table needs an s grid and a t grid of at least two nodes each");
    }
    if (s.front() != 0.0 || t.front() != 0.0) {
      throw std::invalid_argument("KL table grids must start at 0");
    }
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (!(s[i] > s[i - 1])) {
        throw std::invalid_argument("KL table s grid must strictly increase");
      }
    }
    for (std::size_t j = 1; j < t.size(); ++j) {
      if (!(t[j] > t[j - 1])) {
        throw std::invalid_argument("KL table t grid must strictly increase");
      }
    }
    const std::size_t nt = t.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < nt; ++j) {
        const double v = values[i * nt + j];
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw std::invalid_argument("KL table values must be finite and nonnegative");
        }
        if (i == 0 && v != 0.0) {
          throw std::invalid_argument("KL table must vanish at s = 0");
        }
        if (i > 0 && v < values[(i - 1) * nt + j]) {
          throw std::invalid_argument("KL table must be nondecreasing in s");
        }
        if (j > 0 && v > values[i * nt + j - 1]) {
          throw std::invalid_argument("KL table must be nonincreasing in t");
        }
      }
    }
    KLEnvelope out(Kind::tabulated);
    out.s_ = std::move(s);
    out.t_ = std::move(t);
    out.values_ = std::move(values);
    return out;
  }

  [[nodiscard]] double operator()(double s, double t) const {
    if (!(s >= 0.0) || !(t >= 0.0)) {
      throw std::invalid_argument("KL envelope arguments must be nonnegative");
    }
    if (kind_ == Kind::parametric) {
      if (s == 0.0) {
        return 0.0;
      }
      return phi_(s) * std::exp(a_ - b_ * t);
    }
    if (s > s_.back()) {
      std::ostringstream msg;
      msg << "KL table evaluated at s = " << s << " beyond its grid cap " << s_.back();
      throw GainDomainError(msg.str());
    }
    if (t > t_.back()) {
      return column_value(s, t_.size() - 1) * (t_.back() / t);
    }
    const auto jt = std::upper_bound(t_.begin(), t_.end(), t);
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(jt - t_.begin()), t_.size() - 1);
    const double ft = (t - t_[j - 1]) / (t_[j] - t_[j - 1]);
    return (1.0 - ft) * column_value(s, j - 1) + ft * column_value(s, j);
  }

  /// c * beta
  [[nodiscard]] KLEnvelope scaled(double c) const {
    if (!(c > 0.0)) {
      throw std::invalid_argument("KL envelope scale must be positive");
    }
    KLEnvelope out = *this;
    if (kind_ == Kind::parametric) {
      out.a_ += std::log(c);
    } else {
      for (double& v : out.values_) {
        v *= c;
      }
    }
    return out;
  }

  [[nodiscard]] bool parametric() const { return kind_ == Kind::parametric; }
  [[nodiscard]] const ScalarGain& phi() const { return phi_; }
  [[nodiscard]] double a() const { return a_; }
  [[nodiscard]] double b() const { return b_; }
  [[nodiscard]] const std::vector<double>& s_grid() const { return s_; }
  [[nodiscard]] const std::vector<double>& t_grid() const { return t_; }
  [[nodiscard]] const std::vector<double>& table_values() const { return values_; }

  /// Last time node of a table; infinity for the parametric family.
  [[nodiscard]] double horizon() const {
    return kind_ == Kind::parametric ? std::numeric_limits<double>::infinity() : t_.back();
  }

  [[nodiscard]] double s_cap() const {
    return kind_ == Kind::parametric ? phi_.domain_cap() : s_.back();
  }

  [[nodiscard]] std::string describe() const {
    std::ostringstream out;
    if (kind_ == Kind::parametric) {
      out << "(" << phi_.describe() << ")*exp(" << a_ << " - " << b_ << "*t)";
    } else {
      out << "KL table[" << s_.size() << "x" << t_.size() << ", s<=" << s_.back() << ", t<=" << t_.back() << "]";
    }
    return out.str();
  }

 private:
  enum class Kind { parametric, tabulated };

  explicit KLEnvelope(Kind kind) : kind_(kind) {}

  [[nodiscard]] double column_value(double s, std::size_t j) const {
    const std::size_t nt = t_.size();
    const auto is = std::upper_bound(s_.begin(), s_.end(), s);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(is - s_.begin()), s_.size() - 1);
    const double fs = (s - s_[i - 1]) / (s_[i] - s_[i - 1]);
    return (1.0 - fs) * values_[(i - 1) * nt + j] + fs * values_[i * nt + j];
  }

  Kind kind_;
  ScalarGain phi_;
  double a_ = 0.0;
  double b_ = 1.0;
  std::vector<double> s_;
  std::vector<double> t_;
  std::vector<double> values_;
};

/// inf{t >= 0 : beta(r, t) <= eps}; zero when beta(r, 0) <= eps already.
/// Monotone in the sense that beta(s, t) <= eps for all s <= r and t past the
/// returned time.
[[nodiscard]] inline double settle_time(const KLEnvelope& beta, double r, double eps) {
  if (!(r > 0.0) || !(eps > 0.0)) {
    throw std::invalid_argument("settle_time needs r > 0 and eps > 0");
  }
  if (beta(r, 0.0) <= eps) {
    return 0.0;
  }
  if (beta.parametric()) {
    return (beta.a() + std::log(beta.phi()(r) / eps)) / beta.b();
  }
  double lo = 0.0;
  double hi = beta.horizon();
  if (beta(r, hi) > eps) {
    std::ostringstream msg;
    msg << "KL table does not fall below " << eps << " at s = " << r << " within its horizon " << hi;
    throw GainDomainError(msg.str());
  }
  while (hi - lo > 1e-13 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (beta(r, mid) <= eps) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

struct KLFactorization {
  ScalarGain outer;    // alpha_bar_1
  ScalarGain initial;  // alpha_bar_2
};

/// For beta(s,t) = phi(s) e^{a - b t}, returns K-infinity gains with
/// outer(beta(s,t)) <= initial(s) e^{-lambda t}: outer(r) = r^p with
/// p = ceil(lambda / b), initial(s) = phi(s)^p e^{a p}.
[[nodiscard]] inline KLFactorization kl_factorize(const KLEnvelope& beta, double lambda) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("kl_factorize needs lambda > 0");
  }
  if (!beta.parametric()) {
    throw std::invalid_argument(
        "kl_factorize supports the exponential family only; supply a triple to verify_factorization instead");
  }
  const double p = std::max(1.0, std::ceil(lambda / beta.b() - 1e-12));
  ScalarGain outer = ScalarGain::power(1.0, p);
  ScalarGain initial = ScalarGain::compose(ScalarGain::power(std::exp(beta.a() * p), p), beta.phi());
  return {std::move(outer), std::move(initial)};
}

/// Every (s, t) pair of two axes.
[[nodiscard]] inline std::vector<std::pair<double, double>> product_grid(const std::vector<double>& s,
                                                                         const std::vector<double>& t) {
  std::vector<std::pair<double, double>> out;
  out.reserve(s.size() * t.size());
  for (double si : s) {
    for (double tj : t) {
      out.emplace_back(si, tj);
    }
  }
  return out;
}

/// Lists grid points where outer(beta(s,t)) > initial(s) e^{-lambda t}.
/// The comparison allows a relative rounding slack of 1e-12.
[[nodiscard]] inline PropertyReport verify_factorization(const KLEnvelope& beta, const ScalarGain& outer,
                                                         const ScalarGain& initial, double lambda,
                                                         const std::vector<std::pair<double, double>>& grid) {
  PropertyReport report;
  report.property = "kl_factorization";
  report.subjects = grid.size();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto [s, t] = grid[k];
    const double lhs = outer(beta(s, t));
    const double rhs = initial(s) * std::exp(-lambda * t);
    report.record(k, t, lhs, rhs * (1.0 + 1e-12), "factorization");
  }
  return report;
}

}  // namespace stabcert

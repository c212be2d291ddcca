#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stabcert/system.hpp"

namespace stabcert::catalog {

/// Growing spiral x1' = x1 + x2, x2' = -x1 + x2 with y = x1 and w = 1.
/// Every solution satisfies |x(t)| = e^t |x(0)|.
[[nodiscard]] inline SystemPtr example_5_5() {
  auto sys = std::make_shared<DisturbedSystem>();
  sys->name = "example_5_5";
  sys->anchor = "§5 Example 5.5";
  sys->description = "spiral x1'=x1+x2, x2'=-x1+x2; y=x1, w=1; three-measures stable but not measurement-to-error stable";
  sys->dim = 2;
  sys->error_dim = 1;
  sys->measurement_dim = 1;
  sys->field = [](std::span<const double> x, std::span<const double>, std::span<double> dx) {
    dx[0] = x[0] + x[1];
    dx[1] = -x[0] + x[1];
  };
  sys->error_output = [](std::span<const double> x, std::span<double> y) { y[0] = x[0]; };
  sys->measurement_output = [](std::span<const double>, std::span<double> w) { w[0] = 1.0; };
  sys->lipschitz_hint = std::sqrt(2.0);
  return sys;
}

/// Same spiral with projection outputs y = x1, w = x2. |y| > |w| never lasts
/// longer than pi/2, so with rho = id the three-measures bound holds with
/// beta(r, t) = r e^{pi/2} e^{pi/2 - t} regardless of the growth.
[[nodiscard]] inline SystemPtr spiral_projection() {
  auto sys = std::make_shared<DisturbedSystem>(*example_5_5());
  sys->name = "spiral_projection";
  sys->anchor = "Remark 5.6";
  sys->description = "growth-bounded spiral with y=x1, w=x2; excursions |y|>|w| last at most pi/2";
  sys->measurement_output = [](std::span<const double> x, std::span<double> w) { w[0] = x[1]; };
  return sys;
}

/// x' = -x, y = w = x.
[[nodiscard]] inline SystemPtr scalar_contraction() {
  auto sys = std::make_shared<DisturbedSystem>();
  sys->name = "scalar_contraction";
  sys->anchor = "reference contraction";
  sys->description = "x'=-x; y=x, w=x";
  sys->dim = 1;
  sys->field = [](std::span<const double> x, std::span<const double>, std::span<double> dx) { dx[0] = -x[0]; };
  sys->error_output = [](std::span<const double> x, std::span<double> y) { y[0] = x[0]; };
  sys->measurement_output = [](std::span<const double> x, std::span<double> w) { w[0] = x[0]; };
  sys->lipschitz_hint = 1.0;
  return sys;
}

/// x' = -x, y = x, w = 0.
[[nodiscard]] inline SystemPtr scalar_contraction_blind() {
  auto sys = std::make_shared<DisturbedSystem>(*scalar_contraction());
  sys->name = "scalar_contraction_blind";
  sys->description = "x'=-x; y=x, w=0";
  sys->measurement_output = [](std::span<const double>, std::span<double> w) { w[0] = 0.0; };
  return sys;
}

/// x' = x, y = w = x. Used as a negative control.
[[nodiscard]] inline SystemPtr scalar_expansion() {
  auto sys = std::make_shared<DisturbedSystem>(*scalar_contraction());
  sys->name = "scalar_expansion";
  sys->anchor = "negative control";
  sys->description = "x'=x; y=x, w=x";
  sys->field = [](std::span<const double> x, std::span<const double>, std::span<double> dx) { dx[0] = x[0]; };
  return sys;
}

/// x' = -x + d, |d| <= delta, y = w = x.
[[nodiscard]] inline SystemPtr disturbed_contraction(double delta = 1.0) {
  if (!(delta >= 0.0)) {
    throw std::invalid_argument("disturbance bound must be nonnegative");
  }
  auto sys = std::make_shared<DisturbedSystem>(*scalar_contraction());
  sys->name = "disturbed_contraction";
  sys->description = "x'=-x+d, |d|<=" + std::to_string(delta) + "; y=x, w=x";
  sys->field = [](std::span<const double> x, std::span<const double> d, std::span<double> dx) {
    dx[0] = -x[0] + d[0];
  };
  sys->disturbances = DisturbanceSet::box({-delta}, {delta});
  return sys;
}

/// Identically zero field in n dimensions with y = w = x.
[[nodiscard]] inline SystemPtr zero_field(std::size_t n = 1) {
  auto sys = std::make_shared<DisturbedSystem>();
  sys->name = "zero_field";
  sys->anchor = "trivial";
  sys->description = "x'=0; y=x, w=x";
  sys->dim = n;
  sys->error_dim = n;
  sys->measurement_dim = n;
  sys->field = [](std::span<const double>, std::span<const double>, std::span<double> dx) {
    std::fill(dx.begin(), dx.end(), 0.0);
  };
  sys->error_output = [](std::span<const double> x, std::span<double> y) { std::copy(x.begin(), x.end(), y.begin()); };
  sys->measurement_output = [](std::span<const double> x, std::span<double> w) {
    std::copy(x.begin(), x.end(), w.begin());
  };
  sys->lipschitz_hint = 0.0;
  return sys;
}

using Matrix = std::vector<std::vector<double>>;

namespace detail {

inline void check_matrix(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.size() != rows) {
    throw std::invalid_argument(std::string("matrix ") + what + " has the wrong number of rows");
  }
  for (const auto& row : m) {
    if (row.size() != cols) {
      throw std::invalid_argument(std::string("matrix ") + what + " has the wrong number of columns");
    }
  }
}

inline void apply(const Matrix& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      acc += m[i][j] * x[j];
    }
    out[i] = acc;
  }
}

[[nodiscard]] inline double induced_two_norm_bound(const Matrix& a) {
  double fro = 0.0;
  for (const auto& row : a) {
    for (double v : row) {
      fro += v * v;
    }
  }
  return std::sqrt(fro);
}

}  // namespace detail

/// x' = A x + B d with y = H x and w = G x. The Lipschitz hint is the
/// Frobenius norm of A, an upper bound on its operator norm.
[[nodiscard]] inline SystemPtr linear_system(Matrix a, Matrix b, Matrix h, Matrix g, DisturbanceSet disturbances) {
  const std::size_t n = a.size();
  if (n == 0) {
    throw std::invalid_argument("linear system needs a nonempty A matrix");
  }
  detail::check_matrix(a, n, n, "A");
  detail::check_matrix(b, n, disturbances.dim(), "B");
  if (h.empty() || g.empty()) {
    throw std::invalid_argument("linear system needs nonempty H and G matrices");
  }
  detail::check_matrix(h, h.size(), n, "H");
  detail::check_matrix(g, g.size(), n, "G");
  auto sys = std::make_shared<DisturbedSystem>();
  sys->name = "linear";
  sys->anchor = "user linear system";
  sys->description = "x'=Ax+Bd; y=Hx, w=Gx";
  sys->dim = n;
  sys->error_dim = h.size();
  sys->measurement_dim = g.size();
  sys->lipschitz_hint = detail::induced_two_norm_bound(a);
  sys->disturbances = std::move(disturbances);
  sys->field = [a = std::move(a), b = std::move(b)](std::span<const double> x, std::span<const double> d,
                                                     std::span<double> dx) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        acc += a[i][j] * x[j];
      }
      for (std::size_t j = 0; j < d.size(); ++j) {
        acc += b[i][j] * d[j];
      }
      dx[i] = acc;
    }
  };
  sys->error_output = [h = std::move(h)](std::span<const double> x, std::span<double> y) { detail::apply(h, x, y); };
  sys->measurement_output = [g = std::move(g)](std::span<const double> x, std::span<double> w) {
    detail::apply(g, x, w);
  };
  return sys;
}

/// Magnitude |x|_omega = distance from x to a finite point cloud.
[[nodiscard]] inline DisturbedSystem::Magnitude distance_to_points(std::vector<State> cloud) {
  if (cloud.empty()) {
    throw std::invalid_argument("distance magnitude needs a nonempty point cloud");
  }
  return [cloud = std::move(cloud)](std::span<const double> x) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : cloud) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        acc += (x[i] - p[i]) * (x[i] - p[i]);
      }
      best = std::min(best, std::sqrt(acc));
    }
    return best;
  };
}

struct Entry {
  std::string name;
  std::string anchor;
  std::string summary;
  std::function<SystemPtr()> make;
};

/// Named systems available to the command line (the user linear system is
/// configured separately because it needs matrices).
[[nodiscard]] inline std::vector<Entry> entries() {
  std::vector<Entry> out;
  for (auto make : {example_5_5, spiral_projection, scalar_contraction, scalar_contraction_blind, scalar_expansion}) {
    auto sys = make();
    out.push_back({sys->name, sys->anchor, sys->description, make});
  }
  {
    auto sys = disturbed_contraction();
    out.push_back({sys->name, sys->anchor, sys->description, [] { return disturbed_contraction(); }});
  }
  {
    auto sys = zero_field();
    out.push_back({sys->name, sys->anchor, sys->description, [] { return zero_field(); }});
  }
  out.push_back({"linear", "user linear system", "x'=Ax+Bd; y=Hx, w=Gx (matrices from the config)", nullptr});
  return out;
}

/// One line per entry: name, anchor and summary.
[[nodiscard]] inline std::string describe_catalog() {
  std::string out;
  for (const auto& e : entries()) {
    out += e.name + "  [" + e.anchor + "]  " + e.summary + "\n";
  }
  return out;
}

}  // namespace stabcert::catalog

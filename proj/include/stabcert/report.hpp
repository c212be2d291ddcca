#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace stabcert {

/// Absolute tolerance used when deciding strict inequalities on sampled data.
inline constexpr double tie_tolerance = 1e-12;

enum class Verdict { pass, violated, vacuous };

[[nodiscard]] inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "pass";
    case Verdict::violated:
      return "violated";
    case Verdict::vacuous:
      return "vacuous";
  }
  return "unknown";
}

/// One failed inequality lhs <= rhs. `subject` is a trajectory id for
/// trajectory checks and a grid/probe index for pointwise checks.
struct Violation {
  std::size_t subject = 0;
  double time = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs, negative for violations
  std::string kind;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Outcome of a check over an ensemble, a grid or a probe set.
struct PropertyReport {
  std::string property;
  std::size_t checked_points = 0;
  std::size_t checked_intervals = 0;
  std::size_t subjects = 0;
  std::size_t skipped = 0;
  std::size_t violation_count = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::vector<Violation> violations;
  std::vector<std::string> notes;

  /// Stored violation records are capped; violation_count is always exact.
  static constexpr std::size_t max_records = 20000;

  [[nodiscard]] Verdict verdict() const {
    if (violation_count > 0) {
      return Verdict::violated;
    }
    return checked_points > 0 ? Verdict::pass : Verdict::vacuous;
  }

  [[nodiscard]] bool passed() const { return verdict() != Verdict::violated; }

  /// Records lhs <= rhs at one point; returns true when it holds.
  bool record(std::size_t subject, double time, double lhs, double rhs, const char* kind = "") {
    ++checked_points;
    const double margin = rhs - lhs;
    worst_margin = std::min(worst_margin, margin);
    if (lhs <= rhs + tie_tolerance) {
      return true;
    }
    ++violation_count;
    if (violations.size() < max_records) {
      violations.push_back({subject, time, lhs, rhs, margin, kind});
    }
    return false;
  }

  /// Appends another report over disjoint subjects. Merging in subject order
  /// keeps the record list deterministic.
  void merge(const PropertyReport& other) {
    checked_points += other.checked_points;
    checked_intervals += other.checked_intervals;
    subjects += other.subjects;
    skipped += other.skipped;
    violation_count += other.violation_count;
    worst_margin = std::min(worst_margin, other.worst_margin);
    for (const auto& v : other.violations) {
      if (violations.size() >= max_records) {
        break;
      }
      violations.push_back(v);
    }
    notes.insert(notes.end(), other.notes.begin(), other.notes.end());
  }
};

/// True when both reports flag the same points with the same values,
/// ignoring which check produced them.
[[nodiscard]] inline bool same_records(const PropertyReport& a, const PropertyReport& b) {
  if (a.violation_count != b.violation_count || a.violations.size() != b.violations.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.violations.size(); ++i) {
    const auto& u = a.violations[i];
    const auto& v = b.violations[i];
    if (u.subject != v.subject || u.time != v.time || u.lhs != v.lhs || u.rhs != v.rhs) {
      return false;
    }
  }
  return true;
}

}  // namespace stabcert

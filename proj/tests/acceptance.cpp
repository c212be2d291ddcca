// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "stabcert/catalog.hpp"
#include "stabcert/lyapunov.hpp"
#include "stabcert/properties.hpp"
#include "stabcert/runner.hpp"

using namespace stabcert;
namespace fs = std::filesystem;

namespace {

const double pi = std::numbers::pi;
const ScalarGain id = ScalarGain::identity();

struct Outcome {
  bool ok = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome spiral_fidelity() {
  const auto t0 = Clock::now();
  const auto tr = integrate(catalog::example_5_5(), {1.0, 0.0}, DisturbanceSignal::constant({0.0}), 2.0 * pi, 1e-3);
  double worst = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double t = tr.time(k);
    worst = std::max(worst, std::abs(tr.state(k)[0] - std::exp(t) * std::cos(t)));
    worst = std::max(worst, std::abs(tr.state(k)[1] + std::exp(t) * std::sin(t)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 1.0, fmt("max error %.3g, %.3f s", worst, secs)};
}

Outcome spiral_sit() {
  const auto t0 = Clock::now();
  const auto sys = catalog::example_5_5();
  const auto xs = annulus_sample(2, 0.1, 10.0, 1000, 2024);
  const auto beta = KLEnvelope::exponential(id, 2.0 * pi, 1.0);
  SimulationSettings s;
  s.horizon = 2.0 * pi;
  s.dt = 1e-3;
  s.seed = 2024;
  PropertyReport total;
  for (std::size_t start = 0; start < xs.size(); start += 100) {
    const std::vector<State> chunk(xs.begin() + start, xs.begin() + std::min(xs.size(), start + 100));
    total.merge(check_sit(simulate_ensemble(sys, chunk, s, start), beta, id, 1.0));
  }
  const double secs = seconds_since(t0);
  return {total.violation_count == 0 && secs < 30.0,
          fmt("%.0f violations over %.0f checked points, %.1f s", static_cast<double>(total.violation_count),
              static_cast<double>(total.checked_points), secs)};
}

Outcome spiral_mes_falsification() {
  Outcome out;
  const auto sys = catalog::example_5_5();
  for (double T : {5.0, 10.0, 15.0}) {
    const auto tr = integrate(sys, {1.0, 0.0}, DisturbanceSignal::constant({0.0}), T, 1e-3);
    double w_dev = 0.0;
    for (double w : tr.measurement_norm) w_dev = std::max(w_dev, std::abs(w - 1.0));
    const double sup = tr.error_sup.back();
    const double floor = std::exp(T - pi);
    out.ok = out.ok && sup >= floor * 0.99 && w_dev <= 1e-12;
    out.detail += fmt("T=%g: sup|y|=%.4g vs %.4g; ", T, sup, floor);
  }
  return out;
}

Outcome value_function_oracle() {
  std::vector<double> axis;
  for (int i = -20; i <= 20; ++i) {
    if (i != 0) axis.push_back(0.1 * i);
  }
  const auto sys = catalog::scalar_contraction();
  const auto alpha = ScalarGain::power(1.0, 2.0);
  const auto beta_tilde = KLEnvelope::exponential(alpha, 0.0, 1.0);
  ValueFunctionSettings s;
  s.horizon_cap = 10.0;
  const auto table = build_value_function(sys, RegionPredicate::origin(), {axis}, alpha, s, beta_tilde);
  double worst = 0.0;
  for (const auto& p : table.points) {
    const double xi2 = p.state[0] * p.state[0];
    worst = std::max(worst, std::abs(p.value - xi2) / xi2);
  }
  const auto sandwich = sandwich_check(table, alpha, beta_tilde, 1.02);
  DecreaseProbeSettings probes;
  probes.probes = 40;
  const auto decrease = exp_decrease_check(table, sys, RegionPredicate::origin(), probes);
  return {worst <= 1e-3 && sandwich.violation_count == 0 && decrease.violation_count == 0,
          fmt("relative error %.3g; sandwich violations %.0f; decrease violations %.0f", worst,
              static_cast<double>(sandwich.violation_count), static_cast<double>(decrease.violation_count))};
}

Outcome comparison_suite() {
  Outcome out;
  const double dt = 1e-3;
  const auto lin = solve_comparison_ode(id, 1.0, 5.0, dt);
  const auto quad = solve_comparison_ode(ScalarGain::power(1.0, 2.0), 1.0, 5.0, dt);
  double e1 = 0.0;
  double e2 = 0.0;
  for (std::size_t k = 0; k < lin.values.size(); ++k) {
    e1 = std::max(e1, std::abs(lin.values[k] - std::exp(-lin.times[k])));
    e2 = std::max(e2, std::abs(quad.values[k] - 1.0 / (1.0 + quad.times[k])));
  }
  out.ok = e1 <= 1e-6 && e2 <= 1e-6;
  out.detail = fmt("ode errors %.2g, %.2g; gaps", e1, e2);

  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n : {10u, 100u, 1000u}) {
    const auto p = solve_comparison_ode(id, 1.0, 5.0, dt, n);
    double gap = 0.0;
    for (std::size_t k = 0; k < p.values.size(); ++k) gap = std::max(gap, std::abs(p.values[k] - lin.values[k]));
    out.ok = out.ok && gap < prev;
    out.detail += fmt(" %.4g", gap);
    prev = gap;
  }

  std::vector<double> equal;
  std::vector<double> stair{1.0};
  std::vector<double> flat;
  const double step = (1.0 - dt / 2.0) / (1.0 + dt / 2.0);
  for (int k = 0; k <= 5000; ++k) {
    equal.push_back(std::exp(-k * dt));
    flat.push_back(std::exp(-std::ceil(k * dt - 1e-12)));
    if (k > 0) stair.push_back(stair.back() * step * (k % 1000 == 0 ? 0.5 : 1.0));
  }
  const auto r_eq = comparison_domination_check(equal, id, dt);
  const auto r_st = comparison_domination_check(stair, id, dt);
  const auto r_fl = comparison_domination_check(flat, id, dt);
  const bool dom = !r_eq.refused && r_eq.domination.passed() && !r_st.refused && r_st.domination.passed() &&
                   r_fl.refused;
  out.ok = out.ok && dom;
  out.detail += dom ? "; domination cases as expected" : "; domination cases wrong";
  return out;
}

Outcome gain_algebra() {
  Outcome out;
  const auto g = compose_mes_gain(ScalarGain::linear(2.0), ScalarGain::power(1.0, 2.0), ScalarGain::linear(3.0), id);
  std::size_t mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    const double r = 0.05 * i;
    if (g(r) != std::max(3.0 * r, 4.0 * r * r)) ++mismatches;
  }
  const auto beta = KLEnvelope::exponential(id, 2.0 * pi, 1.0);
  const auto f = kl_factorize(beta, 2.0);
  const auto grid = product_grid(linspace(0.0, 10.0, 50), linspace(0.0, 20.0, 50));
  const auto ver = verify_factorization(beta, f.outer, f.initial, 2.0, grid);
  const auto decay = KLEnvelope::exponential(id, 0.0, 1.0);
  double settle_err = 0.0;
  for (double r : {0.5, 1.0, 3.0, 10.0}) {
    for (double eps : {1e-3, 0.1, 0.4}) {
      settle_err = std::max(settle_err, std::abs(settle_time(decay, r, eps) - std::log(r / eps)));
    }
  }
  out.ok = mismatches == 0 && ver.violation_count == 0 && settle_err <= 1e-6;
  out.detail = fmt("%.0f gain mismatches; %.0f factorization violations; settle error %.2g",
                   static_cast<double>(mismatches), static_cast<double>(ver.violation_count), settle_err);
  return out;
}

Outcome cross_checker() {
  std::size_t sit_mismatch = 0;
  std::size_t ensembles = 0;
  std::uint64_t seed = 31;
  SimulationSettings s;
  s.horizon = 4.0;
  s.dt = 1e-2;
  for (const auto& e : catalog::entries()) {
    if (!e.make) continue;
    const auto sys = e.make();
    s.seed = seed;
    const auto ens = simulate_ensemble(sys, annulus_sample(sys->dim, 0.1, 5.0, 40, seed++), s);
    ++ensembles;
    for (const auto& rho : {id, ScalarGain::linear(0.5), ScalarGain::power(1.0, 2.0)}) {
      const auto beta = KLEnvelope::exponential(id, 1.0, 1.0);
      if (!same_records(check_sit(ens, beta, rho, 1.0),
                        check_res(ens, beta, RegionPredicate::from_gain(rho), 1.0))) {
        ++sit_mismatch;
      }
    }
  }

  std::size_t rmeb_pass = 0;
  std::size_t reb_fail = 0;
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> c(0.3, 3.0);
  const std::vector<SystemPtr> systems{catalog::example_5_5(), catalog::spiral_projection(),
                                       catalog::disturbed_contraction(0.5), catalog::scalar_contraction_blind(),
                                       catalog::scalar_contraction()};
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto& sys = systems[k % systems.size()];
    s.seed = 500 + k;
    s.horizon = 2.0;
    const auto ens = simulate_ensemble(sys, annulus_sample(sys->dim, 0.1, 3.0, 25, 500 + k), s);
    const auto rho1 = ScalarGain::linear(c(rng));
    const auto s1 = ScalarGain::power(c(rng), 1.0 + c(rng) / 3.0);
    const auto s2 = ScalarGain::linear(4.0 * c(rng));
    if (!check_rmeb(ens, rho1, s1, s2, 1.0).passed()) continue;
    ++rmeb_pass;
    const auto d = reb_gains_from_rmeb(rho1, s1, s2);
    if (!check_reb(ens, d.rho2, d.sigma, 1.0).passed()) ++reb_fail;
  }
  return {sit_mismatch == 0 && reb_fail == 0,
          fmt("%.0f SIT/RES mismatches over %.0f catalog ensembles; REB failed on %.0f", static_cast<double>(sit_mismatch),
              static_cast<double>(ensembles), static_cast<double>(reb_fail)) +
              fmt(" of %.0f RMEB-passing ensembles", static_cast<double>(rmeb_pass))};
}

Outcome tracking() {
  const auto sys = catalog::disturbed_contraction(1.0);
  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  std::size_t certified = 0;
  double replay_err = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const double x0 = box(rng);
    const double p = box(rng);
    const auto sig = sample_disturbance_signal(*sys, 2.0, 0.1, DisturbanceStrategy::uniform, 1000 + i);
    const auto tr = integrate(sys, {x0}, sig, 2.0, 1e-3);
    const auto rep = track_nearby(tr, {p}, 4, 2000 + i, 1.0);
    if (rep.certified) ++certified;
    const auto replay = integrate(sys, {p}, sig, 2.0, 1e-3);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const double gap = std::abs(tr.state(k)[0] - replay.state(k)[0]);
      replay_err = std::max(replay_err, std::abs(gap - std::abs(x0 - p) * std::exp(-tr.time(k))));
    }
  }
  return {certified == 50 && replay_err <= 1e-6,
          fmt("%.0f of 50 pairs certified; replay error %.2g", static_cast<double>(certified), replay_err)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& out_root) {
  struct Case {
    const char* file;
    const char* sub;
    int expected;
  };
  const Case cases[] = {{"spiral_sit.json", "check", 0},
                        {"spiral_mes.json", "check", 1},
                        {"contraction_lyapunov.json", "lyapunov", 0},
                        {"gains_demo.json", "gains", 0},
                        {"malformed_gain.json", "check", 2}};
  Outcome out;
  std::size_t files = 0;
  for (const auto& c : cases) {
    const fs::path cfg = fs::path(STABCERT_CONFIG_DIR) / c.file;
    std::vector<runner::RunResult> runs;
    for (const char* tag : {"a", "b"}) {
      const auto dir = out_root / (std::string(c.file) + "." + tag);
      fs::remove_all(dir);
      runs.push_back(runner::run_file(cfg, c.sub, dir));
    }
    if (runs[0].exit_code != c.expected || runs[1].exit_code != c.expected || runs[0].summary != runs[1].summary) {
      out.ok = false;
      out.detail += std::string(c.file) + " exit mismatch; ";
    }
    for (const auto& f : runs[0].files) {
      const auto twin = out_root / (std::string(c.file) + ".b") / f.filename();
      ++files;
      if (slurp(f) != slurp(twin)) {
        out.ok = false;
        out.detail += f.filename().string() + " differs; ";
      }
    }
  }
  out.detail += fmt("%.0f files compared", static_cast<double>(files));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out_root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "stabcert_acceptance";
  fs::create_directories(out_root);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 spiral closed form", spiral_fidelity},
      {"2 spiral SIT certificate", spiral_sit},
      {"3 spiral MES falsification", spiral_mes_falsification},
      {"4 value function oracle", value_function_oracle},
      {"5 comparison principle suite", comparison_suite},
      {"6 gain algebra", gain_algebra},
      {"7 cross-checker consistency", cross_checker},
      {"8 tracking certificate", tracking},
      {"9 determinism", [&] { return determinism(out_root); }},
  };

  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  criterion %s: %s\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.ok) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

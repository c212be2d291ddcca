// Library walk-through: the growing spiral passes the three-measures check
// while its error grows without bound, and a contraction gets a tabulated
// Lyapunov function.

#include <cmath>
#include <cstdio>
#include <numbers>

#include "stabcert/catalog.hpp"
#include "stabcert/lyapunov.hpp"
#include "stabcert/properties.hpp"

using namespace stabcert;

int main() {
  const double two_pi = 2.0 * std::numbers::pi;
  const auto id = ScalarGain::identity();

  SimulationSettings sim;
  sim.horizon = two_pi;
  sim.seed = 3;
  const auto spiral = catalog::example_5_5();
  const auto ens = simulate_ensemble(spiral, annulus_sample(2, 0.1, 10.0, 50, 3), sim);

  const auto sit = check_sit(ens, KLEnvelope::exponential(id, two_pi, 1.0), id, 1.0);
  std::printf("sit: %s over %zu points\n", to_string(sit.verdict()), sit.checked_points);

  const auto mes = check_mes(ens, KLEnvelope::exponential(id, two_pi, 1.0), id);
  std::printf("mes: %s, worst margin %.3g\n", to_string(mes.verdict()), mes.worst_margin);

  const auto square = ScalarGain::power(1.0, 2.0);
  ValueFunctionSettings vf;
  vf.horizon_cap = 10.0;
  const auto table = build_value_function(catalog::scalar_contraction(), RegionPredicate::origin(),
                                          {linspace(0.25, 2.0, 8)}, square, vf);
  for (const auto& p : table.points) {
    std::printf("V(%.2f) = %.6f\n", p.state[0], p.value);
  }
  return 0;
}

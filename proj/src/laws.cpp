#include "mcsim/laws.hpp"

#include <cmath>

#include "mcsim/types.hpp"

namespace mcsim::laws {

ScalingReport dennard_scale(int generations) {
  if (generations < 0) throw Error("dennard_scale: generations must be >= 0");
  ScalingReport r;
  r.generations = generations;
  const double k = std::pow(kDimensionStep, generations);
  r.dimension_factor = k;
  r.density_factor = 1.0 / (k * k);
  r.delay_factor = k;
  r.voltage_factor = k;
  // Power per transistor ~ C V^2 f with C ~ k, V ~ k, f ~ 1/k; area per
  // transistor ~ k^2.
  const double power_per_transistor = k * (k * k) / k;
  r.power_density_factor = power_per_transistor / (k * k);
  return r;
}

double pollack_performance(double area_ratio) {
  if (!(area_ratio > 0.0)) throw Error("pollack_performance: area ratio must be positive");
  return std::sqrt(area_ratio);
}

double amdahl_speedup(double parallel_fraction, std::int64_t n_cores) {
  if (!(parallel_fraction >= 0.0 && parallel_fraction <= 1.0))
    throw Error("amdahl_speedup: parallel fraction must lie in [0, 1]");
  if (n_cores < 1) throw Error("amdahl_speedup: core count must be >= 1");
  return 1.0 / ((1.0 - parallel_fraction) + parallel_fraction / static_cast<double>(n_cores));
}

double compound_growth(double annual_rate, double years) {
  if (!(annual_rate > -1.0)) throw Error("compound_growth: rate must exceed -1");
  if (years < 0.0) throw Error("compound_growth: years must be >= 0");
  return std::pow(1.0 + annual_rate, years);
}

std::int64_t bypass_paths(std::int64_t n_units) {
  if (n_units < 1) throw Error("bypass_paths: unit count must be >= 1");
  return n_units * n_units;
}

std::vector<LawRow> reference_table() {
  const auto d1 = dennard_scale(1);
  return {
      {"dennard.g1.dimension", "Dennard dimension factor (1 gen)", d1.dimension_factor, ""},
      {"dennard.g1.density", "Dennard density factor (1 gen)", d1.density_factor, "~2x, i.e. doubling"},
      {"dennard.g1.delay", "Dennard delay factor (1 gen)", d1.delay_factor, ""},
      {"dennard.g1.speed_gain", "Dennard speed gain (1 gen)", d1.speed_gain(), "~43% faster"},
      {"dennard.g1.power_density", "Dennard power density (1 gen)", d1.power_density_factor, "constant"},
      {"pollack.area2", "Pollack performance at 2x area", pollack_performance(2.0), "~40% per generation"},
      {"amdahl.f0.9.n16", "Amdahl speedup f=0.9 n=16", amdahl_speedup(0.9, 16), ""},
      {"growth.r0.52.y17", "Growth at 52%/yr over 1986-2003", compound_growth(0.52, 17.0), ""},
      {"growth.r0.5.y20", "Growth at 50%/yr over 20 years", compound_growth(0.5, 20.0), "> 1000x"},
      {"growth.r0.22.y10", "Growth at 22%/yr over 10 years", compound_growth(0.22, 10.0), ""},
      {"bypass.n8", "Bypass paths for 8 units", static_cast<double>(bypass_paths(8)), "quadratic"},
  };
}

}  // namespace mcsim::laws

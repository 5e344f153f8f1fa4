#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mcsim::laws {

/// Per-generation shrink of transistor dimensions under ideal scaling.
inline constexpr double kDimensionStep = 0.7;

struct ScalingReport {
  int generations = 0;
  double dimension_factor = 1.0;
  double density_factor = 1.0;
  double delay_factor = 1.0;
  double voltage_factor = 1.0;
  double power_density_factor = 1.0;

  double speed_gain() const { return 1.0 / delay_factor - 1.0; }
};

/// Ideal constant-field scaling over `generations` process steps.
ScalingReport dennard_scale(int generations);

/// Single-core performance ratio for a core-area ratio (square-root rule).
double pollack_performance(double area_ratio);

/// Speedup bound for parallel fraction `parallel_fraction` on `n_cores`.
double amdahl_speedup(double parallel_fraction, std::int64_t n_cores);

double compound_growth(double annual_rate, double years);

/// Full producer-to-consumer bypass network size: n^2 paths.
std::int64_t bypass_paths(std::int64_t n_units);

struct LawRow {
  std::string key;
  std::string label;
  double value;
  std::string note;
};

/// Evaluation of every law at its reference point, for reporting.
std::vector<LawRow> reference_table();

}  // namespace mcsim::laws

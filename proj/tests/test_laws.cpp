#include <cmath>

#include "doctest.h"
#include "mcsim/laws.hpp"

using namespace mcsim::laws;
using doctest::Approx;

TEST_CASE("dennard scaling") {
  auto g0 = dennard_scale(0);
  CHECK(g0.dimension_factor == 1.0);
  CHECK(g0.density_factor == 1.0);
  CHECK(g0.delay_factor == 1.0);
  CHECK(g0.power_density_factor == 1.0);

  auto g1 = dennard_scale(1);
  CHECK(g1.density_factor == Approx(1.0 / 0.49));
  CHECK(g1.density_factor == Approx(2.04).epsilon(0.005));
  CHECK(g1.speed_gain() == Approx(0.43).epsilon(0.01));
  CHECK(g1.power_density_factor == Approx(1.0));

  auto g2 = dennard_scale(2);
  CHECK(g2.density_factor == Approx(4.16).epsilon(0.002));
  CHECK(g2.delay_factor == Approx(0.49));

  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      auto ab = dennard_scale(a + b), x = dennard_scale(a), y = dennard_scale(b);
      CHECK(ab.density_factor == Approx(x.density_factor * y.density_factor).epsilon(1e-12));
      CHECK(ab.delay_factor == Approx(x.delay_factor * y.delay_factor).epsilon(1e-12));
    }
  CHECK_THROWS(dennard_scale(-1));
}

TEST_CASE("pollack") {
  CHECK(pollack_performance(2) == Approx(1.41421356));
  CHECK(pollack_performance(1) == 1.0);
  CHECK(pollack_performance(4) == Approx(2.0));
  CHECK(pollack_performance(3) * pollack_performance(5) == Approx(pollack_performance(15)).epsilon(1e-12));
  CHECK_THROWS(pollack_performance(0));
  CHECK_THROWS(pollack_performance(-1));
}

TEST_CASE("amdahl") {
  CHECK(amdahl_speedup(1.0, 8) == Approx(8.0));
  CHECK(amdahl_speedup(0.0, 64) == Approx(1.0));
  CHECK(amdahl_speedup(0.9, 16) == Approx(1.0 / (0.1 + 0.9 / 16)));
  CHECK(amdahl_speedup(0.9, 16) == Approx(6.4).epsilon(0.001));
  CHECK_THROWS(amdahl_speedup(1.1, 4));
  CHECK_THROWS(amdahl_speedup(0.5, 0));
  double prev = 0;
  for (int n = 1; n <= 64; ++n) {
    const double s = amdahl_speedup(0.8, n);
    CHECK(s >= prev);
    CHECK(s < 1.0 / 0.2);
    prev = s;
  }
}

TEST_CASE("compound growth") {
  CHECK(compound_growth(0.5, 20) == Approx(std::pow(1.5, 20)));
  CHECK(compound_growth(0.5, 20) > 1000.0);
  CHECK(compound_growth(0.0, 7) == 1.0);
  CHECK(compound_growth(0.22, 10) == Approx(7.30).epsilon(0.001));
  CHECK_THROWS(compound_growth(-1.0, 3));
}

TEST_CASE("bypass paths") {
  CHECK(bypass_paths(1) == 1);
  CHECK(bypass_paths(2) == 4);
  CHECK(bypass_paths(8) == 64);
  CHECK_THROWS(bypass_paths(0));
}

TEST_CASE("reference table is labelled") {
  auto t = reference_table();
  CHECK(t.size() >= 6);
  for (const auto& r : t) {
    CHECK(!r.key.empty());
    CHECK(!r.label.empty());
  }
}

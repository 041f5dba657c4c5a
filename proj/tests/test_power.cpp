#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "bletrack/power.hpp"

using namespace bletrack;

TEST_CASE("field guide rows") {
  struct Row {
    double mph, interval, days;
  };
  // published field guide
  const Row table[] = {{5, 1400, 262.5},  {10, 1300, 243.75}, {15, 1300, 243.75},
                       {20, 1200, 225.0}, {25, 1200, 225.0},  {30, 1000, 187.5},
                       {35, 900, 168.75}, {40, 700, 131.25},  {45, 700, 131.25}};
  const auto guide = field_guide();
  REQUIRE(guide.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(guide[i].max_speed_mph == table[i].mph);
    CHECK(guide[i].interval_ms == table[i].interval);
    CHECK(std::abs(guide[i].battery_days - table[i].days) < 0.005);
    CHECK(std::abs(battery_life({}, table[i].interval) - table[i].days) < 0.005);
  }
}

TEST_CASE("battery life") {
  CHECK(battery_life({}, 700.0) == doctest::Approx(131.25));
  CHECK_THROWS_AS(battery_life({}, 0.0), std::domain_error);
  CHECK_THROWS_AS(battery_life({}, -5.0), std::domain_error);

  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> t(100.0, 10000.0);
  for (int i = 0; i < 500; ++i) {
    const double a = t(gen), b = t(gen);
    CHECK(battery_life({}, a + b) == doctest::Approx(battery_life({}, a) + battery_life({}, b)));
    if (a < b) CHECK(battery_life({}, a) < battery_life({}, b));
  }
}

TEST_CASE("recommend_interval") {
  CHECK(recommend_interval(45.0).interval_ms == 700.0);
  CHECK(recommend_interval(45.0).battery_days == doctest::Approx(131.25));
  CHECK(recommend_interval(5.0).interval_ms == 1400.0);
  CHECK(recommend_interval(0.5).interval_ms == 1400.0);
  CHECK(recommend_interval(31.0).interval_ms == 900.0);
  CHECK(recommend_interval(31.0).bucket_mph == 35.0);
  CHECK(recommend_interval(20.0).interval_ms == 1200.0);
  CHECK_THROWS_AS(recommend_interval(0.0), std::domain_error);
  CHECK_THROWS_AS(recommend_interval(45.01), std::domain_error);

  double prev = 1e9;
  for (double v = 0.25; v <= 45.0; v += 0.25) {
    const double t = recommend_interval(v).interval_ms;
    CHECK(t <= prev);
    prev = t;
  }
}

TEST_CASE("derive_guide") {
  const std::vector<double> speeds{5, 25, 45};
  // toy model: reliable up to 2000 - 30 v ms, then nothing
  const DetectionModel step = [](double v, double t) { return t <= 2000.0 - 30.0 * v ? 1.0 : 0.0; };
  auto rows = derive_guide(1.0, speeds, step);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].interval_ms == 1800.0);
  CHECK(rows[1].interval_ms == 1200.0);
  CHECK(rows[2].interval_ms == 600.0);
  CHECK(rows[2].battery_days == doctest::Approx(112.5));

  rows = derive_guide(0.0, speeds, step);
  for (const auto& r : rows) CHECK(r.interval_ms == kGuideMaxIntervalMs);

  // a dip below target stops the scan even if longer intervals recover
  const DetectionModel dip = [](double, double t) { return t == 500.0 ? 0.5 : 1.0; };
  CHECK(derive_guide(0.9, speeds, dip)[0].interval_ms == 400.0);

  const DetectionModel never = [](double, double) { return 0.0; };
  CHECK_FALSE(derive_guide(0.5, speeds, never)[0].feasible);

  CHECK_THROWS_AS(derive_guide(1.5, speeds, step), std::domain_error);
  CHECK_THROWS_AS(derive_guide(-0.1, speeds, step), std::domain_error);
}

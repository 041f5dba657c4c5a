#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bletrack/error.hpp"
#include "bletrack/sim.hpp"

using namespace bletrack;

namespace {

const std::string kData = BLETRACK_DATA_DIR;

std::string csv(const MatrixResult& m) {
  std::ostringstream out;
  write_matrix_csv(out, m);
  return out.str();
}

}  // namespace

TEST_CASE("labels and bands") {
  CHECK(label_from_counts(3, 3) == Band::Y);
  CHECK(label_from_counts(2, 3) == Band::P66);
  CHECK(label_from_counts(1, 3) == Band::P33);
  CHECK(label_from_counts(0, 3) == Band::N);
  CHECK(label_from_counts(1, 2) == Band::P66);
  CHECK_THROWS_AS(label_from_counts(0, 0), std::domain_error);

  const BandThresholds b;
  CHECK(b.classify(1.0) == Band::Y);
  CHECK(b.classify(0.95) == Band::Y);
  CHECK(b.classify(0.9499) == Band::P66);
  CHECK(b.classify(0.4) == Band::P66);
  CHECK(b.classify(0.3999) == Band::P33);
  CHECK(b.classify(0.1) == Band::P33);
  CHECK(b.classify(0.0999) == Band::N);
  CHECK(b.classify(0.0) == Band::N);
  // total and monotone over [0, 1]
  Band prev = Band::N;
  for (int i = 0; i <= 10000; ++i) {
    const Band cur = b.classify(i / 10000.0);
    CHECK(static_cast<int>(cur) >= static_cast<int>(prev));
    prev = cur;
  }
  CHECK_THROWS_AS((BandThresholds{0.5, 0.6, 0.1}.validate()), ConfigError);

  for (Band x : {Band::Y, Band::P66, Band::P33, Band::N}) {
    CHECK(parse_band(band_code(x)) == x);
    CHECK(parse_band(band_label(x)) == x);
  }
  CHECK_THROWS_AS(parse_band("50%"), ConfigError);
  CHECK(parse_mount("Bonnet") == Mount::Bonnet);
  CHECK(parse_mount("wheel_arch") == Mount::WheelArch);
  CHECK_THROWS_AS(parse_mount("roof"), ConfigError);
}

TEST_CASE("simulate_pass") {
  const auto p = default_presets();
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    CHECK(simulate_pass(seed, 20.0, 200.0, Mount::WheelArch, p).detected);
    const auto a = simulate_pass(seed, 45.0, 1500.0, Mount::Bonnet, p);
    const auto b = simulate_pass(seed, 45.0, 1500.0, Mount::Bonnet, p);
    CHECK(a.detected == b.detected);
    CHECK(a.latency_s == b.latency_s);
    if (a.detected) CHECK(std::abs(a.latency_s) <= 0.5 * pass_time(45.0, Mount::Bonnet, p) + 1e-9);
  }
  auto wide = p;
  wide.lateral_offset_m = 30.0;
  CHECK(pass_time(10.0, Mount::WheelArch, wide) == 0.0);
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    CHECK_FALSE(simulate_pass(seed, 10.0, 100.0, Mount::WheelArch, wide).detected);
}

TEST_CASE("mount and far side materials") {
  auto p = default_presets();
  CHECK(mount_materials(Mount::WheelArch, p).empty());
  CHECK(mount_materials(Mount::Bonnet, p) == MaterialSet{Material::Bonnet});
  CHECK(pass_detection_range(Mount::Bonnet, p) < pass_detection_range(Mount::WheelArch, p));
  p.far_side = true;
  CHECK(mount_materials(Mount::WheelArch, p) == MaterialSet{Material::VehicleBody});
}

TEST_CASE("run_matrix") {
  const auto p = default_presets();
  TrialMatrixSpec spec;
  spec.speeds_mph = {5, 25, 45};
  spec.intervals_ms = {700, 1000, 1300, 1600};
  spec.trials_per_cell = 3;
  const auto m = run_matrix(spec, p);
  REQUIRE(m.cells.size() == 12);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const auto& c = m.at(i, j);
      CHECK(c.speed_mph == spec.speeds_mph[i]);
      CHECK(c.interval_ms == spec.intervals_ms[j]);
      CHECK(c.trials == 3);
      CHECK(c.label == label_from_counts(c.detections, 3));
      CHECK(c.expected_probability == expected_probability(c.speed_mph, c.interval_ms, spec.mount, p));
      if (c.expected_probability == 1.0) CHECK(c.label == Band::Y);
    }

  spec.trials_per_cell = 257;
  const auto one = csv(run_matrix(spec, p, 1));
  CHECK(one == csv(run_matrix(spec, p, 3)));
  CHECK(one == csv(run_matrix(spec, p, 12)));
  spec.seed += 1;
  CHECK(one != csv(run_matrix(spec, p, 1)));

  CHECK(csv(m).rfind("speed_mph,interval_ms,detections,trials,label,expected_p\n5,700,3,3,Y,1.000000\n", 0) == 0);

  TrialMatrixSpec bad;
  CHECK_THROWS_AS(run_matrix(bad, p), ConfigError);
  bad.speeds_mph = {10};
  bad.intervals_ms = {1000};
  bad.trials_per_cell = 0;
  CHECK_THROWS_AS(run_matrix(bad, p), ConfigError);
}

TEST_CASE("run_matrix frequencies follow the analytic model") {
  const auto p = default_presets();
  TrialMatrixSpec spec;
  spec.speeds_mph = {30, 45};
  spec.intervals_ms = {900, 1200, 1500};
  spec.mount = Mount::Bonnet;
  spec.trials_per_cell = 20000;
  const auto m = run_matrix(spec, p);
  for (const auto& c : m.cells) {
    const double freq = static_cast<double>(c.detections) / c.trials;
    const double se = std::sqrt(c.expected_probability * (1 - c.expected_probability) / c.trials);
    CHECK(std::abs(freq - c.expected_probability) <= 4.0 * se + 0.005);
  }
}

TEST_CASE("expected_probability is nonincreasing in speed") {
  const auto p = default_presets();
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> t(100.0, 3000.0);
  for (int i = 0; i < 60; ++i) {
    const double interval = std::round(t(gen));
    for (Mount mount : {Mount::WheelArch, Mount::Bonnet}) {
      double prev = 1.0;
      for (double v = 5.0; v <= 60.0; v += 2.5) {
        const double cur = expected_probability(v, interval, mount, p);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
      }
    }
  }
}

TEST_CASE("calibrated preset against the wheel-arch matrix") {
  const auto p = default_presets();
  // the wheel-arch target marks 66% at 45 mph / 1200 ms
  CHECK(BandThresholds{}.classify(expected_probability(45, 1200, Mount::WheelArch, p)) == Band::P66);
  for (double v = 5; v <= 40; v += 5) CHECK(expected_probability(v, 1000, Mount::WheelArch, p) >= 0.95);
}

TEST_CASE("target matrices") {
  const auto t2 = load_target_matrix(kData + "/table2_wheelarch.csv");
  const auto t3 = load_target_matrix(kData + "/table3_bonnet.csv");
  CHECK(t2.speeds_mph.size() == 9);
  CHECK(t2.intervals_ms.size() == 7);
  CHECK(t3.speeds_mph.size() == 9);
  CHECK(t3.intervals_ms.size() == 9);
  CHECK(t2.at(8, 6) == Band::N);
  CHECK(t2.at(4, 5) == Band::P66);
  CHECK(t3.at(6, 5) == Band::P66);
  CHECK(t3.at(0, 8) == Band::N);

  std::istringstream ragged("speed_mph,1000,1100\n5,Y\n");
  CHECK_THROWS_AS(read_target_matrix(ragged), ConfigError);
  std::istringstream label("speed_mph,1000\n5,Q\n");
  CHECK_THROWS_AS(read_target_matrix(label), ConfigError);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_target_matrix(empty), ConfigError);
}

namespace {

TargetMatrix model_targets(const SimPresets& p, Mount mount, std::vector<double> speeds,
                           std::vector<double> intervals) {
  TargetMatrix t;
  t.speeds_mph = std::move(speeds);
  t.intervals_ms = std::move(intervals);
  for (double v : t.speeds_mph)
    for (double i : t.intervals_ms) t.labels.push_back(BandThresholds{}.classify(expected_probability(v, i, mount, p)));
  return t;
}

}  // namespace

TEST_CASE("calibrate") {
  CalibrationTargets targets;
  targets.wheel_arch = load_target_matrix(kData + "/table2_wheelarch.csv");
  targets.bonnet = load_target_matrix(kData + "/table3_bonnet.csv");
  targets.bonnet_shift_ms = 400.0;
  const auto base = default_presets();

  SearchGrid grid{{900, 1000, 1150, 1300}, {1.0, 2.5, 4.0}};
  const auto r = calibrate(targets, grid, base);
  CHECK(r.grid_points == 12);
  // argmin: no grid point scores lower
  for (double w : grid.scan_windows_ms)
    for (double a : grid.bonnet_attenuations_db) {
      CalibrationResult pt;
      pt.scan_window_ms = w;
      pt.bonnet_attenuation_db = a;
      CHECK(r.objective <= evaluate_calibration(targets, apply_calibration(base, pt)).objective);
    }
  CHECK(r.cells.size() == 63 + 81);
  CHECK(r.objective == r.band_mismatch + targets.shift_weight * r.shift_penalty);

  // the frozen preset values are the argmin of the default grid
  const auto full = calibrate(targets, default_search_grid(), base, {}, 2);
  CHECK(full.scan_window_ms == calibrated::kScanWindowMs);
  CHECK(full.bonnet_attenuation_db == calibrated::kBonnetAttenuationDb);
  CHECK(full.shift_penalty == 0.0);
  for (const auto& s : full.shifts) CHECK(std::abs(s.shift_ms() - 400.0) <= 100.0);

  // ties go to the smaller window: a target no parameter can affect
  CalibrationTargets flat;
  flat.wheel_arch = model_targets(base, Mount::WheelArch, {1}, {100});
  const auto tie = calibrate(flat, {{1300, 900, 1000}, {3.0, 1.0}}, base);
  CHECK(tie.objective == 0.0);
  CHECK(tie.scan_window_ms == 900.0);
  CHECK(tie.bonnet_attenuation_db == 1.0);

  CHECK_THROWS_AS(calibrate(targets, {{}, {1.0}}, base), ConfigError);
  CHECK_THROWS_AS(calibrate(targets, {{1000}, {}}, base), ConfigError);
  CHECK_THROWS_AS(calibrate(targets, {{3000}, {1.0}}, base), ConfigError);
}

TEST_CASE("calibrate is thread-count independent") {
  CalibrationTargets targets;
  targets.wheel_arch = load_target_matrix(kData + "/table2_wheelarch.csv");
  targets.bonnet = load_target_matrix(kData + "/table3_bonnet.csv");
  targets.bonnet_shift_ms = 400.0;
  const SearchGrid grid{{700, 1150, 1600, 2000}, {0.0, 2.5, 5.0, 7.5}};
  std::ostringstream a, b;
  write_calibration_report(a, calibrate(targets, grid, default_presets(), {}, 1));
  write_calibration_report(b, calibrate(targets, grid, default_presets(), {}, 5));
  CHECK(a.str() == b.str());
}

TEST_CASE("calibration recovers generating parameters") {
  const std::vector<double> speeds{5, 15, 25, 35, 45};
  const std::vector<double> intervals{500, 800, 1100, 1400, 1700, 2000};
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> wi(0, 6), ai(0, 8);
  const SearchGrid grid{{400, 600, 800, 1000, 1200, 1400, 1600}, {0, 1, 2, 3, 4, 5, 6, 7, 8}};
  for (int rep = 0; rep < 5; ++rep) {
    CalibrationResult truth;
    truth.scan_window_ms = grid.scan_windows_ms[wi(gen)];
    truth.bonnet_attenuation_db = grid.bonnet_attenuations_db[ai(gen)];
    const auto generating = apply_calibration(default_presets(), truth);
    CalibrationTargets t;
    t.wheel_arch = model_targets(generating, Mount::WheelArch, speeds, intervals);
    t.bonnet = model_targets(generating, Mount::Bonnet, speeds, intervals);
    const auto r = calibrate(t, grid, default_presets());
    CHECK(r.objective == 0.0);
    // band-equivalent: the recovered point reproduces every generated label
    const auto recovered = apply_calibration(default_presets(), r);
    CHECK(model_targets(recovered, Mount::WheelArch, speeds, intervals).labels == t.wheel_arch.labels);
    CHECK(model_targets(recovered, Mount::Bonnet, speeds, intervals).labels == t.bonnet->labels);
    CHECK(r.scan_window_ms <= truth.scan_window_ms);
  }
}

TEST_CASE("reliable_ceiling") {
  const auto p = default_presets();
  const double c = reliable_ceiling(45, Mount::WheelArch, p);
  CHECK(c > 0.0);
  for (double t = 100; t <= c; t += 100) CHECK(expected_probability(45, t, Mount::WheelArch, p) >= 0.95);
  CHECK(expected_probability(45, c + 100, Mount::WheelArch, p) < 0.95);
  CHECK(reliable_ceiling(45, Mount::Bonnet, p) < c);

  // empirical ceilings from large trial matrices show the same bonnet shift
  TrialMatrixSpec spec;
  spec.speeds_mph = {45};
  for (double t = 100; t <= 1500; t += 100) spec.intervals_ms.push_back(t);
  spec.trials_per_cell = 4000;
  auto empirical = [&](Mount mount) {
    spec.mount = mount;
    const auto m = run_matrix(spec, p);
    double ceiling = 0.0;
    for (const auto& cell : m.cells) {
      if (static_cast<double>(cell.detections) / cell.trials < 0.95) break;
      ceiling = cell.interval_ms;
    }
    return ceiling;
  };
  const double shift = empirical(Mount::WheelArch) - empirical(Mount::Bonnet);
  CHECK(std::abs(shift - 400.0) <= 100.0);
}

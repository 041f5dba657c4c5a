#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "bletrack/error.hpp"
#include "bletrack/sim.hpp"

namespace bletrack {

SearchGrid default_search_grid() {
  SearchGrid g;
  for (double w = 50.0; w <= 2500.0; w += 25.0) g.scan_windows_ms.push_back(w);
  for (int i = 0; i <= 32; ++i) g.bonnet_attenuations_db.push_back(0.25 * i);
  return g;
}

double reliable_ceiling(double speed_mph, Mount mount, const SimPresets& presets,
                        const BandThresholds& bands, double max_interval_ms) {
  double ceiling = 0.0;
  for (double t = 100.0; t <= max_interval_ms; t += 100.0) {
    if (expected_probability(speed_mph, t, mount, presets) < bands.y) break;
    ceiling = t;
  }
  return ceiling;
}

SimPresets apply_calibration(const SimPresets& base, const CalibrationResult& result) {
  SimPresets p = base;
  p.scanner.scan_window_ms = result.scan_window_ms;
  p.beacon.attenuation.set(Material::Bonnet, result.bonnet_attenuation_db);
  p.beacon.attenuation.set(Material::VehicleBody, result.bonnet_attenuation_db);
  return p;
}

namespace {

SimPresets with_params(const SimPresets& base, double window, double bonnet_db) {
  CalibrationResult r;
  r.scan_window_ms = window;
  r.bonnet_attenuation_db = bonnet_db;
  return apply_calibration(base, r);
}

int matrix_mismatch(const TargetMatrix& t, Mount mount, const SimPresets& p,
                    const BandThresholds& bands, std::vector<CellResidual>* cells) {
  int total = 0;
  for (std::size_t i = 0; i < t.speeds_mph.size(); ++i) {
    for (std::size_t j = 0; j < t.intervals_ms.size(); ++j) {
      const double prob = expected_probability(t.speeds_mph[i], t.intervals_ms[j], mount, p);
      const Band predicted = bands.classify(prob);
      const int dist = std::abs(static_cast<int>(predicted) - static_cast<int>(t.at(i, j)));
      total += dist;
      if (cells)
        cells->push_back({mount, t.speeds_mph[i], t.intervals_ms[j], t.at(i, j), predicted, prob, dist});
    }
  }
  return total;
}

std::vector<double> shift_speeds(const CalibrationTargets& targets) {
  std::vector<double> speeds;
  for (double v : targets.wheel_arch.speeds_mph)
    if (v >= targets.shift_min_speed_mph) speeds.push_back(v);
  return speeds;
}

std::vector<double> ceilings(const std::vector<double>& speeds, Mount mount, const SimPresets& p,
                             const BandThresholds& bands) {
  std::vector<double> out;
  out.reserve(speeds.size());
  for (double v : speeds) out.push_back(reliable_ceiling(v, mount, p, bands));
  return out;
}

double shift_penalty(const CalibrationTargets& targets, const std::vector<double>& wheel,
                     const std::vector<double>& bonnet) {
  if (!targets.bonnet_shift_ms) return 0.0;
  double penalty = 0.0;
  for (std::size_t i = 0; i < wheel.size(); ++i) {
    const double miss = std::abs((wheel[i] - bonnet[i]) - *targets.bonnet_shift_ms);
    penalty += std::max(0.0, miss - targets.shift_tolerance_ms) / 100.0;
  }
  return penalty;
}

template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) body(i);
    });
}

}  // namespace

CalibrationResult evaluate_calibration(const CalibrationTargets& targets, const SimPresets& presets,
                                       const BandThresholds& bands) {
  bands.validate();
  CalibrationResult r;
  r.scan_window_ms = presets.scanner.scan_window_ms;
  r.bonnet_attenuation_db = presets.beacon.attenuation[Material::Bonnet];
  r.band_mismatch = matrix_mismatch(targets.wheel_arch, Mount::WheelArch, presets, bands, &r.cells);
  if (targets.bonnet)
    r.band_mismatch += matrix_mismatch(*targets.bonnet, Mount::Bonnet, presets, bands, &r.cells);

  const auto speeds = shift_speeds(targets);
  const auto wheel = ceilings(speeds, Mount::WheelArch, presets, bands);
  const auto bonnet = ceilings(speeds, Mount::Bonnet, presets, bands);
  for (std::size_t i = 0; i < speeds.size(); ++i) r.shifts.push_back({speeds[i], wheel[i], bonnet[i]});
  r.shift_penalty = shift_penalty(targets, wheel, bonnet);
  r.objective = r.band_mismatch + targets.shift_weight * r.shift_penalty;
  r.grid_points = 1;
  return r;
}

CalibrationResult calibrate(const CalibrationTargets& targets, const SearchGrid& grid,
                            const SimPresets& base, const BandThresholds& bands, unsigned threads) {
  bands.validate();
  if (grid.scan_windows_ms.empty() || grid.bonnet_attenuations_db.empty())
    throw ConfigError("calibrate: empty search grid");
  for (double w : grid.scan_windows_ms)
    if (!(w > 0.0 && w <= base.scanner.scan_cycle_ms))
      throw ConfigError(fmt::format("calibrate: scan window {} outside (0, cycle]", w));
  for (double a : grid.bonnet_attenuations_db)
    if (!(a >= 0.0) || !std::isfinite(a))
      throw ConfigError("calibrate: bonnet attenuation must be finite and >= 0");

  const auto& windows = grid.scan_windows_ms;
  const auto& atts = grid.bonnet_attenuations_db;
  const auto speeds = shift_speeds(targets);
  const bool need_bonnet_ceiling = targets.bonnet_shift_ms.has_value();

  // Wheel-arch terms depend on the scan window only.
  std::vector<int> wheel_mismatch(windows.size());
  std::vector<std::vector<double>> wheel_ceiling(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    const auto p = with_params(base, windows[i], 0.0);
    wheel_mismatch[i] = matrix_mismatch(targets.wheel_arch, Mount::WheelArch, p, bands, nullptr);
    if (need_bonnet_ceiling) wheel_ceiling[i] = ceilings(speeds, Mount::WheelArch, p, bands);
  });

  const std::size_t n = windows.size() * atts.size();
  std::vector<double> objective(n);
  parallel_for(n, threads, [&](std::size_t k) {
    const std::size_t i = k / atts.size();
    const std::size_t j = k % atts.size();
    const auto p = with_params(base, windows[i], atts[j]);
    double obj = wheel_mismatch[i];
    if (targets.bonnet) obj += matrix_mismatch(*targets.bonnet, Mount::Bonnet, p, bands, nullptr);
    if (need_bonnet_ceiling) {
      const auto bonnet = ceilings(speeds, Mount::Bonnet, p, bands);
      obj += targets.shift_weight * shift_penalty(targets, wheel_ceiling[i], bonnet);
    }
    objective[k] = obj;
  });

  // Sequential argmin with explicit tie-breaking keeps the answer independent
  // of the grid's input order and of the thread count.
  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k) {
    const auto key = [&](std::size_t x) {
      return std::tuple(objective[x], windows[x / atts.size()], atts[x % atts.size()]);
    };
    if (key(k) < key(best)) best = k;
  }

  auto result = evaluate_calibration(
      targets, with_params(base, windows[best / atts.size()], atts[best % atts.size()]), bands);
  result.grid_points = n;
  return result;
}

void write_calibration_report(std::ostream& out, const CalibrationResult& r) {
  out << fmt::format("scan_window_ms        {}\n", r.scan_window_ms);
  out << fmt::format("bonnet_attenuation_db {}\n", r.bonnet_attenuation_db);
  out << fmt::format("objective             {}\n", r.objective);
  out << fmt::format("band_mismatch         {}\n", r.band_mismatch);
  out << fmt::format("shift_penalty         {}\n", r.shift_penalty);
  out << fmt::format("grid_points           {}\n", r.grid_points);
  if (!r.shifts.empty()) {
    out << "\nreliable interval ceiling (ms)\n";
    out << fmt::format("{:>9} {:>10} {:>8} {:>7}\n", "speed", "wheelarch", "bonnet", "shift");
    for (const auto& s : r.shifts)
      out << fmt::format("{:>5} mph {:>10} {:>8} {:>7}\n", s.speed_mph, s.wheel_arch_ceiling_ms,
                         s.bonnet_ceiling_ms, s.shift_ms());
  }
  out << "\nmount,speed_mph,interval_ms,target,predicted,expected_p,band_distance\n";
  for (const auto& c : r.cells)
    out << fmt::format("{},{},{},{},{},{:.6f},{}\n", mount_name(c.mount), c.speed_mph, c.interval_ms,
                       band_code(c.target), band_code(c.predicted), c.expected_probability,
                       c.band_distance);
}

}  // namespace bletrack

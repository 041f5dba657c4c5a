#include "bletrack/power.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace bletrack {

namespace {

constexpr std::array<GuideRow, 9> kFieldGuide{{
    {5.0, 1400.0, 262.5, true},
    {10.0, 1300.0, 243.75, true},
    {15.0, 1300.0, 243.75, true},
    {20.0, 1200.0, 225.0, true},
    {25.0, 1200.0, 225.0, true},
    {30.0, 1000.0, 187.5, true},
    {35.0, 900.0, 168.75, true},
    {40.0, 700.0, 131.25, true},
    {45.0, 700.0, 131.25, true},
}};

}  // namespace

double battery_life(const BatteryModel& model, double interval_ms) {
  if (!(interval_ms > 0.0)) throw std::domain_error("battery_life: interval must be positive");
  return model.days_per_ms * interval_ms;
}

std::span<const GuideRow> field_guide() { return kFieldGuide; }

Recommendation recommend_interval(double max_speed_mph, const BatteryModel& model) {
  if (!(max_speed_mph > 0.0))
    throw std::domain_error("recommend_interval: speed must be positive");
  if (max_speed_mph > kMaxValidatedSpeedMph)
    throw std::domain_error(fmt::format(
        "recommend_interval: {} mph is outside the validated envelope (<= 45 mph)", max_speed_mph));
  for (const auto& row : kFieldGuide) {
    if (max_speed_mph <= row.max_speed_mph)
      return {row.interval_ms, battery_life(model, row.interval_ms), row.max_speed_mph};
  }
  // unreachable: the last bucket is the envelope limit
  throw std::logic_error("recommend_interval: guide table exhausted");
}

std::vector<GuideRow> derive_guide(double reliability_target, std::span<const double> speeds_mph,
                                   const DetectionModel& detect, const BatteryModel& battery) {
  if (!(reliability_target >= 0.0 && reliability_target <= 1.0))
    throw std::domain_error("derive_guide: reliability target must be in [0, 1]");
  std::vector<GuideRow> rows;
  rows.reserve(speeds_mph.size());
  for (double speed : speeds_mph) {
    GuideRow row{speed, 0.0, 0.0, false};
    for (double t = kGuideMinIntervalMs; t <= kGuideMaxIntervalMs; t += kGuideStepMs) {
      if (reliability_target > 0.0 && detect(speed, t) < reliability_target) break;
      row.interval_ms = t;
      row.feasible = true;
    }
    if (row.feasible) row.battery_days = battery_life(battery, row.interval_ms);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bletrack

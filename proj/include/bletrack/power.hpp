#pragma once

// Beacon battery life versus broadcast interval, and the speed -> interval
// deployment guide.

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace bletrack {

struct BatteryModel {
  double days_per_ms = 0.1875;  ///< days of life per ms of interval
};

/// days_per_ms * interval. Throws std::domain_error for interval <= 0.
double battery_life(const BatteryModel& model, double interval_ms);

struct GuideRow {
  double max_speed_mph = 0.0;
  double interval_ms = 0.0;
  double battery_days = 0.0;
  bool feasible = true;
};

/// The published field guide: nine speed buckets, 5..45 mph.
std::span<const GuideRow> field_guide();

inline constexpr double kMaxValidatedSpeedMph = 45.0;

struct Recommendation {
  double interval_ms = 0.0;
  double battery_days = 0.0;
  double bucket_mph = 0.0;
};

/// Guide row for the smallest listed speed >= max_speed. Throws
/// std::domain_error for speeds <= 0 or above the validated 45 mph envelope.
Recommendation recommend_interval(double max_speed_mph, const BatteryModel& model = {});

inline constexpr double kGuideStepMs = 100.0;
inline constexpr double kGuideMinIntervalMs = 100.0;
inline constexpr double kGuideMaxIntervalMs = 10200.0;

/// Detection probability for (speed mph, interval ms); supplied by the sim
/// layer so that this module stays free of radio details.
using DetectionModel = std::function<double(double speed_mph, double interval_ms)>;

/// For each speed, the largest interval on the 100 ms grid such that it and
/// every shorter interval meet `reliability_target`. Rows with no such
/// interval are flagged infeasible. Throws std::domain_error unless
/// 0 <= target <= 1.
std::vector<GuideRow> derive_guide(double reliability_target, std::span<const double> speeds_mph,
                                   const DetectionModel& detect, const BatteryModel& battery = {});

}  // namespace bletrack

#pragma once

// Seeded drive-by simulation: single passes, speed x interval trial
// matrices, and calibration of the scanner duty and bonnet loss against the
// published matrices.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bletrack/presets.hpp"

namespace bletrack {

enum class Mount { WheelArch, Bonnet };

std::string_view mount_name(Mount m);
/// "wheelarch" / "bonnet" (case-insensitive). Throws ConfigError otherwise.
Mount parse_mount(std::string_view text);

/// Detection categories used in the published matrices.
enum class Band { N = 0, P33 = 1, P66 = 2, Y = 3 };

std::string_view band_code(Band b);   ///< Y, P66, P33, N
std::string_view band_label(Band b);  ///< Y, 66%, 33%, N
/// Accepts either form. Throws ConfigError.
Band parse_band(std::string_view text);

/// Probability bands: Y >= y, P66 in [p66, y), P33 in [p33, p66), N < p33.
/// Total and mutually exclusive over [0, 1].
struct BandThresholds {
  double y = 0.95;
  double p66 = 0.4;
  double p33 = 0.1;

  Band classify(double probability) const;
  void validate() const;
};

/// Category for an observed hit count: all -> Y, none -> N, at least half
/// -> P66, otherwise P33 (for 3 trials: 3/3, 2/3, 1/3, 0/3).
Band label_from_counts(std::size_t detections, std::size_t trials);

MaterialSet mount_materials(Mount mount, const SimPresets& presets);
double pass_detection_range(Mount mount, const SimPresets& presets);
/// Seconds inside the detection disc at `speed_mph` with the preset offset.
double pass_time(double speed_mph, Mount mount, const SimPresets& presets);
/// Analytic single-pass detection probability.
double expected_probability(double speed_mph, double interval_ms, Mount mount,
                            const SimPresets& presets);

struct PassResult {
  bool detected = false;
  /// Time of the heard event relative to closest approach, seconds
  /// (negative = before passing). 0 when not detected.
  double latency_s = 0.0;
};

PassResult simulate_pass(std::uint64_t seed, double speed_mph, double interval_ms, Mount mount,
                         const SimPresets& presets);

struct TrialMatrixSpec {
  std::vector<double> speeds_mph;
  std::vector<double> intervals_ms;
  std::size_t trials_per_cell = 3;
  Mount mount = Mount::WheelArch;
  std::uint64_t seed = 20190401;

  void validate() const;
};

struct CellResult {
  double speed_mph = 0.0;
  double interval_ms = 0.0;
  std::size_t detections = 0;
  std::size_t trials = 0;
  Band label = Band::N;
  double expected_probability = 0.0;
  double mean_latency_s = 0.0;
};

struct MatrixResult {
  TrialMatrixSpec spec;
  std::vector<CellResult> cells;  ///< row-major: speed, then interval

  const CellResult& at(std::size_t speed_idx, std::size_t interval_idx) const {
    return cells[speed_idx * spec.intervals_ms.size() + interval_idx];
  }
};

/// Per-trial randomness is keyed by (seed, cell index, trial index), so the
/// output is identical for any `threads`.
MatrixResult run_matrix(const TrialMatrixSpec& spec, const SimPresets& presets,
                        unsigned threads = 1);

void write_matrix_csv(std::ostream& out, const MatrixResult& m);
/// Aligned text mirroring the published layout (speeds down, intervals
/// across), followed by the expected probabilities.
void write_matrix_table(std::ostream& out, const MatrixResult& m);

/// A published speed x interval matrix of categories.
struct TargetMatrix {
  std::vector<double> speeds_mph;
  std::vector<double> intervals_ms;
  std::vector<Band> labels;  ///< row-major

  Band at(std::size_t speed_idx, std::size_t interval_idx) const {
    return labels[speed_idx * intervals_ms.size() + interval_idx];
  }
};

/// CSV: header `speed_mph,<interval>,...`, then one row per speed.
TargetMatrix read_target_matrix(std::istream& in);
TargetMatrix load_target_matrix(const std::string& path);

struct CalibrationTargets {
  TargetMatrix wheel_arch;
  std::optional<TargetMatrix> bonnet;
  /// Expected drop of the reliable interval ceiling under the bonnet, for
  /// every wheel-arch target speed >= shift_min_speed_mph.
  std::optional<double> bonnet_shift_ms;
  double shift_tolerance_ms = 100.0;
  double shift_min_speed_mph = 25.0;
  /// Objective cost per 100 ms of shift outside tolerance, in band units.
  double shift_weight = 10.0;
};

struct SearchGrid {
  std::vector<double> scan_windows_ms;
  std::vector<double> bonnet_attenuations_db;
};

/// 50..2500 ms in 25 ms steps, 0..8 dB in 0.25 dB steps.
SearchGrid default_search_grid();

struct CellResidual {
  Mount mount = Mount::WheelArch;
  double speed_mph = 0.0;
  double interval_ms = 0.0;
  Band target = Band::N;
  Band predicted = Band::N;
  double expected_probability = 0.0;
  int band_distance = 0;
};

struct ShiftRow {
  double speed_mph = 0.0;
  double wheel_arch_ceiling_ms = 0.0;
  double bonnet_ceiling_ms = 0.0;
  double shift_ms() const { return wheel_arch_ceiling_ms - bonnet_ceiling_ms; }
};

struct CalibrationResult {
  double scan_window_ms = 0.0;
  double bonnet_attenuation_db = 0.0;
  double objective = 0.0;
  int band_mismatch = 0;         ///< sum of band distances over all target cells
  double shift_penalty = 0.0;    ///< 100 ms steps outside the shift tolerance
  std::vector<CellResidual> cells;
  std::vector<ShiftRow> shifts;
  std::size_t grid_points = 0;
};

/// Largest interval on the 100 ms grid such that it and every shorter
/// interval reach `bands.y` (0 if even 100 ms does not).
double reliable_ceiling(double speed_mph, Mount mount, const SimPresets& presets,
                        const BandThresholds& bands = {}, double max_interval_ms = 10200.0);

/// Residuals of `presets` against `targets` (no search).
CalibrationResult evaluate_calibration(const CalibrationTargets& targets, const SimPresets& presets,
                                       const BandThresholds& bands = {});

/// Grid search over (scan window, bonnet attenuation) minimising
/// band_mismatch + shift_weight * shift_penalty. Ties go to the smaller scan
/// window, then the smaller attenuation. Throws ConfigError on an empty
/// grid.
CalibrationResult calibrate(const CalibrationTargets& targets, const SearchGrid& grid,
                            const SimPresets& base, const BandThresholds& bands = {},
                            unsigned threads = 1);

/// `base` with the calibrated scanner window and bonnet loss applied.
SimPresets apply_calibration(const SimPresets& base, const CalibrationResult& result);

void write_calibration_report(std::ostream& out, const CalibrationResult& result);

}  // namespace bletrack

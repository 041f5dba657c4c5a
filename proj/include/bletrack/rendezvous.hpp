#pragma once

// Advertiser/scanner rendezvous during a single drive-by.
//
// A beacon advertises every `interval` ms (plus a 0..jitter ms random delay
// per event); each event is hearable for `event_duration` ms. The receiver
// listens for `scan_window` ms at the start of every `scan_cycle` ms. The
// vehicle is inside the beacon's detection disc for t_in seconds. Both
// phases are unknown and uniformly distributed.

#include <cstddef>
#include <cstdint>

namespace bletrack {

struct AdvertiserConfig {
  double interval_ms = 1000.0;    ///< [100, 10240]
  double event_duration_ms = 3.0; ///< > 0, <= interval
  double jitter_ms = 10.0;        ///< [0, 10]

  void validate() const;
  friend bool operator==(const AdvertiserConfig&, const AdvertiserConfig&) = default;
};

struct ScannerConfig {
  double scan_window_ms = 1000.0;  ///< > 0
  double scan_cycle_ms = 2500.0;   ///< >= scan_window

  void validate() const;
  friend bool operator==(const ScannerConfig&, const ScannerConfig&) = default;
};

struct PassGeometry {
  double speed_mps = 10.0;
  double lateral_offset_m = 2.0;  ///< closest approach
  double detection_range_m = 25.0;
};

inline constexpr double kMetersPerSecondPerMph = 0.44704;

constexpr double mph_to_mps(double mph) { return mph * kMetersPerSecondPerMph; }
constexpr double mps_to_mph(double mps) { return mps / kMetersPerSecondPerMph; }

/// Chord transit time through the detection disc, in seconds; 0 when the
/// closest approach is outside the disc. Throws std::domain_error on a
/// non-positive speed.
double in_range_time(const PassGeometry& geometry);

/// Probability that at least one advertising event overlaps a scan window
/// while the vehicle is in range.
///
/// Exact average over both phases of the periodic process. Per-event delays
/// are folded in as a mean drift (period interval + jitter/2); the Monte
/// Carlo oracle below keeps the full random walk.
double detection_probability(const AdvertiserConfig& adv, const ScannerConfig& scan,
                             double t_in_s);

/// The textbook independent-events approximation,
/// 1 - (1 - q)^floor(N) * (1 - frac(N) q) with q = (window + event) / cycle
/// and N = t_in / interval. Kept for comparison; it ignores the phase
/// correlation between events and disagrees with the oracle by >0.1 in
/// parts of the parameter space.
double detection_probability_independent(const AdvertiserConfig& adv,
                                         const ScannerConfig& scan, double t_in_s);

struct OracleEstimate {
  double probability = 0.0;
  double standard_error = 0.0;
  std::size_t hits = 0;
  std::size_t trials = 0;
  /// Mean time of the first heard event relative to closest approach
  /// (negative = before passing the beacon), seconds. 0 when no hits.
  double mean_latency_s = 0.0;
};

/// Brute-force phase sampling. Deterministic in `seed`; per-trial streams are
/// keyed by (seed, stream, trial index) so the result does not depend on
/// `threads`. Throws std::domain_error when trials == 0.
OracleEstimate detection_probability_oracle(const AdvertiserConfig& adv,
                                            const ScannerConfig& scan, double t_in_s,
                                            std::size_t trials, std::uint64_t seed,
                                            unsigned threads = 1, std::uint64_t stream = 0);

}  // namespace bletrack

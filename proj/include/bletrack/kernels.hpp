#pragma once

// Drive-by trial kernels. Each trial draws a uniform advertiser phase, a
// uniform scanner phase and per-event advertising delays from a
// counter-based stream keyed by (seed, stream, trial), then walks the
// advertising events that start inside the pass looking for one that
// overlaps a scan window.
//
// The scalar kernel is the reference. Vector variants must produce
// bit-identical output; the dispatcher picks one at runtime.

#include <cstdint>
#include <span>
#include <string_view>

namespace bletrack::kernels {

struct TrialParams {
  double interval_ms = 1000.0;
  double event_ms = 3.0;
  double jitter_ms = 10.0;
  double window_ms = 1000.0;
  double cycle_ms = 2500.0;
  double pass_ms = 0.0;  ///< time spent inside the detection disc
};

struct TrialStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;       ///< e.g. matrix cell index
  std::uint64_t first_trial = 0;  ///< trial index of out[0]
};

/// Output for one trial: hit flag and, when hit, the start time (ms from
/// entering the disc) of the first advertising event that was heard.
struct TrialOutputs {
  std::span<std::uint8_t> hit;
  std::span<double> hit_time_ms;
};

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// Best variant supported by this CPU. The environment variable
/// BLETRACK_ISA=scalar forces the reference kernel.
Isa active_isa();
bool isa_supported(Isa isa);

void run_trials_scalar(const TrialParams& p, const TrialStream& s, TrialOutputs out);
#if defined(BLETRACK_HAVE_AVX2)
void run_trials_avx2(const TrialParams& p, const TrialStream& s, TrialOutputs out);
#endif

/// Dispatches to `isa` (default: active_isa()). Spans must be equal length.
void run_trials(const TrialParams& p, const TrialStream& s, TrialOutputs out);
void run_trials(const TrialParams& p, const TrialStream& s, TrialOutputs out, Isa isa);

}  // namespace bletrack::kernels

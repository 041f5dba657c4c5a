#include <cmath>

#include "bletrack/kernels.hpp"
#include "bletrack/rng.hpp"

namespace bletrack::kernels {

void run_trials_scalar(const TrialParams& p, const TrialStream& s, TrialOutputs out) {
  const double T = p.interval_ms;
  const double C = p.cycle_ms;
  const double w = p.window_ms;
  const double d = p.event_ms;
  const double J = p.jitter_ms;
  const double pass = p.pass_ms;

  for (std::size_t i = 0; i < out.hit.size(); ++i) {
    const std::uint64_t key = rng::stream_key(s.seed, s.stream, s.first_trial + i);
    const double scan_phase = rng::uniform(key, 1) * C;
    double e = rng::uniform(key, 0) * T;
    std::uint64_t counter = 2;
    bool hit = false;
    double when = 0.0;
    while (e < pass) {
      // latest window starting at or before the end of this event
      const double k = std::floor((e + d - scan_phase) / C);
      const double start = scan_phase + k * C;
      if ((e < start + w && e + d > start) || e < (start - C) + w) {
        hit = true;
        when = e;
        break;
      }
      e = (e + T) + rng::uniform(key, counter) * J;
      ++counter;
    }
    out.hit[i] = hit ? 1 : 0;
    out.hit_time_ms[i] = when;
  }
}

}  // namespace bletrack::kernels

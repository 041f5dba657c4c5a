#include "bletrack/rendezvous.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "bletrack/kernels.hpp"

namespace bletrack {

void AdvertiserConfig::validate() const {
  if (!(interval_ms >= 100.0 && interval_ms <= 10240.0))
    throw std::invalid_argument(fmt::format("advertising interval {} ms outside [100, 10240]", interval_ms));
  if (!(event_duration_ms > 0.0) || event_duration_ms > interval_ms)
    throw std::invalid_argument("advertising event duration must be in (0, interval]");
  if (!(jitter_ms >= 0.0 && jitter_ms <= 10.0))
    throw std::invalid_argument("advertising jitter must be in [0, 10] ms");
}

void ScannerConfig::validate() const {
  if (!(scan_window_ms > 0.0)) throw std::invalid_argument("scan window must be positive");
  if (!(scan_cycle_ms >= scan_window_ms) || !std::isfinite(scan_cycle_ms))
    throw std::invalid_argument("scan cycle must be >= scan window");
}

double in_range_time(const PassGeometry& g) {
  if (!(g.speed_mps > 0.0)) throw std::domain_error("in_range_time: speed must be positive");
  if (g.lateral_offset_m >= g.detection_range_m) return 0.0;
  const double r = g.detection_range_m;
  const double o = g.lateral_offset_m;
  return 2.0 * std::sqrt(r * r - o * o) / g.speed_mps;
}

namespace {

// Everything the phase integral needs, in milliseconds.
struct PhaseProblem {
  double period;  // effective advertising period
  double event;
  double window;
  double cycle;
  double pass;
  int k_lo;
  int k_hi;
};

// Fraction of advertiser phases that produce a heard event, for a fixed
// scanner phase. Hearing set H = union_k (s + kC - d, s + kC + w) clipped to
// [0, pass); an advertiser phase is heard iff its lattice meets H, i.e. iff
// it lies in H projected onto the circle of circumference `period`.
double heard_fraction(const PhaseProblem& p, double s,
                      std::vector<std::pair<double, double>>& arcs) {
  arcs.clear();
  for (int k = p.k_lo; k <= p.k_hi; ++k) {
    const double start = s + k * p.cycle;
    const double lo = std::max(0.0, start - p.event);
    const double hi = std::min(p.pass, start + p.window);
    if (!(hi > lo)) continue;
    const double len = hi - lo;
    if (len >= p.period) return 1.0;
    const double a = std::fmod(lo, p.period);
    const double b = a + len;
    if (b <= p.period) {
      arcs.emplace_back(a, b);
    } else {
      arcs.emplace_back(a, p.period);
      arcs.emplace_back(0.0, b - p.period);
    }
  }
  if (arcs.empty()) return 0.0;
  std::sort(arcs.begin(), arcs.end());
  double covered = 0.0;
  double cur_lo = arcs.front().first;
  double cur_hi = arcs.front().second;
  for (std::size_t i = 1; i < arcs.size(); ++i) {
    if (arcs[i].first <= cur_hi) {
      cur_hi = std::max(cur_hi, arcs[i].second);
    } else {
      covered += cur_hi - cur_lo;
      cur_lo = arcs[i].first;
      cur_hi = arcs[i].second;
    }
  }
  covered += cur_hi - cur_lo;
  return std::min(1.0, covered / p.period);
}

}  // namespace

double detection_probability(const AdvertiserConfig& adv, const ScannerConfig& scan,
                             double t_in_s) {
  adv.validate();
  scan.validate();
  if (!(t_in_s >= 0.0)) throw std::domain_error("detection_probability: t_in must be >= 0");
  const double pass = t_in_s * 1000.0;
  const double period = adv.interval_ms + 0.5 * adv.jitter_ms;
  if (pass <= 0.0) return 0.0;

  const double C = scan.scan_cycle_ms;
  const double w = scan.scan_window_ms;
  const double d = adv.event_duration_ms;

  if (w >= C) return std::min(1.0, pass / period);

  PhaseProblem p{period, d, w, C, pass, -1,
                 static_cast<int>(std::floor((pass + d) / C)) + 1};

  // heard_fraction is piecewise linear in s. Kinks happen where a window
  // edge crosses a clip point (0 or pass), directly or modulo the period.
  std::vector<double> cuts{0.0, C};
  auto add_cut = [&](double x) {
    if (x > 0.0 && x < C) cuts.push_back(x);
  };
  for (int k = p.k_lo; k <= p.k_hi; ++k) {
    for (double edge : {k * C - d, k * C + w}) {
      for (double fixed : {0.0, pass}) {
        const double base = fixed - edge;
        add_cut(base);
        double first = base - std::floor(base / period) * period;
        for (double x = first; x < C; x += period) add_cut(x);
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::pair<double, double>> arcs;
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double width = cuts[i + 1] - cuts[i];
    if (width <= 0.0) continue;
    integral += width * heard_fraction(p, 0.5 * (cuts[i] + cuts[i + 1]), arcs);
  }
  return std::clamp(integral / C, 0.0, 1.0);
}

double detection_probability_independent(const AdvertiserConfig& adv,
                                         const ScannerConfig& scan, double t_in_s) {
  adv.validate();
  scan.validate();
  if (!(t_in_s >= 0.0)) throw std::domain_error("detection_probability: t_in must be >= 0");
  const double q = std::min(1.0, (scan.scan_window_ms + adv.event_duration_ms) / scan.scan_cycle_ms);
  const double events = t_in_s * 1000.0 / adv.interval_ms;
  const double whole = std::floor(events);
  const double frac = events - whole;
  return 1.0 - std::pow(1.0 - q, whole) * (1.0 - frac * q);
}

OracleEstimate detection_probability_oracle(const AdvertiserConfig& adv,
                                            const ScannerConfig& scan, double t_in_s,
                                            std::size_t trials, std::uint64_t seed,
                                            unsigned threads, std::uint64_t stream) {
  adv.validate();
  scan.validate();
  if (trials == 0) throw std::domain_error("detection_probability_oracle: trials must be >= 1");
  if (!(t_in_s >= 0.0)) throw std::domain_error("detection_probability_oracle: t_in must be >= 0");

  const kernels::TrialParams params{adv.interval_ms, adv.event_duration_ms, adv.jitter_ms,
                                    scan.scan_window_ms, scan.scan_cycle_ms, t_in_s * 1000.0};

  constexpr std::size_t kBlock = 8192;
  const std::size_t blocks = (trials + kBlock - 1) / kBlock;
  std::vector<std::size_t> block_hits(blocks, 0);
  std::vector<double> block_time(blocks, 0.0);

  auto run_block = [&](std::size_t b) {
    const std::size_t first = b * kBlock;
    const std::size_t n = std::min(kBlock, trials - first);
    std::vector<std::uint8_t> hit(n);
    std::vector<double> when(n);
    kernels::run_trials(params, {seed, stream, first}, {hit, when});
    std::size_t h = 0;
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (hit[i]) {
        ++h;
        t += when[i];
      }
    }
    block_hits[b] = h;
    block_time[b] = t;
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(blocks)));
  if (threads == 1) {
    for (std::size_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t b = t; b < blocks; b += threads) run_block(b);
      });
  }

  OracleEstimate est;
  est.trials = trials;
  double time_sum = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    est.hits += block_hits[b];
    time_sum += block_time[b];
  }
  const double p = static_cast<double>(est.hits) / static_cast<double>(trials);
  est.probability = p;
  est.standard_error = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  if (est.hits > 0)
    est.mean_latency_s = (time_sum / static_cast<double>(est.hits) - 0.5 * params.pass_ms) / 1000.0;
  return est;
}

}  // namespace bletrack

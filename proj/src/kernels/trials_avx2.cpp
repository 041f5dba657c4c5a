// Compiled with -mavx2. Four trials per lane group; bit-identical to
// run_trials_scalar.

#include <immintrin.h>

#include <bit>
#include <cstdint>

#include "bletrack/kernels.hpp"
#include "bletrack/rng.hpp"

namespace bletrack::kernels {

namespace {

// 64x64 -> low 64 multiply; AVX2 only has 32x32 -> 64.
inline __m256i mullo64(__m256i a, __m256i b) {
  const __m256i lo = _mm256_mul_epu32(a, b);
  const __m256i a_hi_b_lo = _mm256_mul_epu32(_mm256_srli_epi64(a, 32), b);
  const __m256i a_lo_b_hi = _mm256_mul_epu32(a, _mm256_srli_epi64(b, 32));
  const __m256i cross = _mm256_slli_epi64(_mm256_add_epi64(a_hi_b_lo, a_lo_b_hi), 32);
  return _mm256_add_epi64(lo, cross);
}

inline __m256i splitmix64(__m256i x) {
  const __m256i c1 = _mm256_set1_epi64x(static_cast<long long>(0xBF58476D1CE4E5B9ULL));
  const __m256i c2 = _mm256_set1_epi64x(static_cast<long long>(0x94D049BB133111EBULL));
  x = mullo64(_mm256_xor_si256(x, _mm256_srli_epi64(x, 30)), c1);
  x = mullo64(_mm256_xor_si256(x, _mm256_srli_epi64(x, 27)), c2);
  return _mm256_xor_si256(x, _mm256_srli_epi64(x, 31));
}

inline __m256d uniform(__m256i key, std::uint64_t counter) {
  const __m256i offset =
      _mm256_set1_epi64x(static_cast<long long>((counter + 1) * rng::kGolden));
  const __m256i bits = splitmix64(_mm256_add_epi64(key, offset));
  const __m256i one_bits = _mm256_set1_epi64x(0x3FF0000000000000LL);
  const __m256d x = _mm256_castsi256_pd(_mm256_or_si256(_mm256_srli_epi64(bits, 12), one_bits));
  return _mm256_sub_pd(x, _mm256_set1_pd(1.0));
}

}  // namespace

void run_trials_avx2(const TrialParams& p, const TrialStream& s, TrialOutputs out) {
  const std::size_t n = out.hit.size();
  const std::size_t full = n - n % 4;

  const __m256d T = _mm256_set1_pd(p.interval_ms);
  const __m256d C = _mm256_set1_pd(p.cycle_ms);
  const __m256d w = _mm256_set1_pd(p.window_ms);
  const __m256d d = _mm256_set1_pd(p.event_ms);
  const __m256d J = _mm256_set1_pd(p.jitter_ms);
  const __m256d pass = _mm256_set1_pd(p.pass_ms);

  // stream_key(seed, stream, trial): first two rounds are lane-invariant
  std::uint64_t k0 = rng::splitmix64(s.seed + rng::kGolden);
  k0 = rng::splitmix64(k0 ^ (s.stream + 0x632BE59BD9B4E019ULL));
  const __m256i base = _mm256_set1_epi64x(static_cast<long long>(k0));

  for (std::size_t i = 0; i < full; i += 4) {
    const std::uint64_t t0 = s.first_trial + i + 0x85157AF5ULL;
    const __m256i trial = _mm256_set_epi64x(
        static_cast<long long>(t0 + 3), static_cast<long long>(t0 + 2),
        static_cast<long long>(t0 + 1), static_cast<long long>(t0));
    const __m256i key = splitmix64(_mm256_xor_si256(base, trial));

    const __m256d scan_phase = _mm256_mul_pd(uniform(key, 1), C);
    __m256d e = _mm256_mul_pd(uniform(key, 0), T);
    __m256d hit = _mm256_setzero_pd();
    __m256d when = _mm256_setzero_pd();
    std::uint64_t counter = 2;

    for (;;) {
      const __m256d inside = _mm256_cmp_pd(e, pass, _CMP_LT_OQ);
      const __m256d active = _mm256_andnot_pd(hit, inside);
      if (_mm256_movemask_pd(active) == 0) break;

      const __m256d ed = _mm256_add_pd(e, d);
      const __m256d k = _mm256_floor_pd(_mm256_div_pd(_mm256_sub_pd(ed, scan_phase), C));
      const __m256d start = _mm256_add_pd(scan_phase, _mm256_mul_pd(k, C));
      const __m256d in_k = _mm256_and_pd(_mm256_cmp_pd(e, _mm256_add_pd(start, w), _CMP_LT_OQ),
                                         _mm256_cmp_pd(ed, start, _CMP_GT_OQ));
      const __m256d in_prev =
          _mm256_cmp_pd(e, _mm256_add_pd(_mm256_sub_pd(start, C), w), _CMP_LT_OQ);
      const __m256d now = _mm256_and_pd(active, _mm256_or_pd(in_k, in_prev));
      when = _mm256_blendv_pd(when, e, now);
      hit = _mm256_or_pd(hit, now);

      const __m256d next = _mm256_add_pd(_mm256_add_pd(e, T), _mm256_mul_pd(uniform(key, counter), J));
      e = _mm256_blendv_pd(e, next, _mm256_andnot_pd(now, active));
      ++counter;
    }

    alignas(32) double hit_lanes[4];
    alignas(32) double when_lanes[4];
    _mm256_store_pd(hit_lanes, hit);
    _mm256_store_pd(when_lanes, when);
    for (int l = 0; l < 4; ++l) {
      const bool h = std::bit_cast<std::uint64_t>(hit_lanes[l]) != 0;
      out.hit[i + l] = h ? 1 : 0;
      out.hit_time_ms[i + l] = h ? when_lanes[l] : 0.0;
    }
  }

  if (full < n) {
    TrialStream tail = s;
    tail.first_trial = s.first_trial + full;
    run_trials_scalar(p, tail, {out.hit.subspan(full), out.hit_time_ms.subspan(full)});
  }
}

}  // namespace bletrack::kernels

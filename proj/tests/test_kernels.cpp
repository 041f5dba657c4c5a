#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "bletrack/kernels.hpp"
#include "bletrack/rng.hpp"

using namespace bletrack;
using namespace bletrack::kernels;

namespace {

// Same draws as the kernel, but enumerate every (event, window) pair
// explicitly instead of indexing the window arithmetically.
bool brute_force_trial(const TrialParams& p, const TrialStream& s, std::uint64_t i, double* when) {
  const std::uint64_t key = rng::stream_key(s.seed, s.stream, s.first_trial + i);
  const double phase = rng::uniform(key, 1) * p.cycle_ms;
  double e = rng::uniform(key, 0) * p.interval_ms;
  std::uint64_t counter = 2;
  while (e < p.pass_ms) {
    for (double start = phase - p.cycle_ms; start < e + p.event_ms + p.cycle_ms; start += p.cycle_ms) {
      const double end = start + p.window_ms;
      if (e < end && e + p.event_ms > start) {
        *when = e;
        return true;
      }
    }
    e = e + p.interval_ms + rng::uniform(key, counter++) * p.jitter_ms;
  }
  return false;
}

TrialParams random_params(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TrialParams p;
  p.interval_ms = 100.0 + 5000.0 * u(gen);
  p.event_ms = 0.5 + 4.5 * u(gen);
  p.jitter_ms = 10.0 * u(gen);
  p.cycle_ms = 300.0 + 4000.0 * u(gen);
  p.window_ms = p.cycle_ms * u(gen);
  p.pass_ms = 20000.0 * u(gen);
  return p;
}

}  // namespace

TEST_CASE("uniform draws are in [0, 1)") {
  for (std::uint64_t c = 0; c < 10000; ++c) {
    const double x = rng::uniform(rng::stream_key(1, 2, 3), c);
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
  CHECK(rng::bits_to_unit(0) == 0.0);
  CHECK(rng::bits_to_unit(~0ULL) < 1.0);
}

TEST_CASE("scalar kernel matches explicit enumeration") {
  std::mt19937_64 gen(11);
  for (int c = 0; c < 40; ++c) {
    const TrialParams p = random_params(gen);
    const TrialStream s{static_cast<std::uint64_t>(c), 3, 1000};
    std::vector<std::uint8_t> hit(500);
    std::vector<double> when(500);
    run_trials_scalar(p, s, {hit, when});
    for (std::uint64_t i = 0; i < hit.size(); ++i) {
      double t = 0.0;
      const bool expect = brute_force_trial(p, s, i, &t);
      REQUIRE(static_cast<bool>(hit[i]) == expect);
      if (expect) REQUIRE(when[i] == t);
    }
  }
}

TEST_CASE("trial block boundaries do not change results") {
  std::mt19937_64 gen(12);
  const TrialParams p = random_params(gen);
  std::vector<std::uint8_t> all(1000), part(1000);
  std::vector<double> t_all(1000), t_part(1000);
  run_trials(p, {5, 1, 0}, {all, t_all});
  run_trials(p, {5, 1, 0}, {std::span(part).first(333), std::span(t_part).first(333)});
  run_trials(p, {5, 1, 333}, {std::span(part).subspan(333), std::span(t_part).subspan(333)});
  CHECK(all == part);
  CHECK(t_all == t_part);
}

#if defined(BLETRACK_HAVE_AVX2)
TEST_CASE("avx2 kernel is bit-identical to the scalar reference") {
  if (!isa_supported(Isa::Avx2)) {
    MESSAGE("AVX2 not available on this CPU; skipping");
    return;
  }
  std::mt19937_64 gen(13);
  for (int c = 0; c < 60; ++c) {
    const TrialParams p = random_params(gen);
    const std::size_t n = 1 + static_cast<std::size_t>(gen() % 2003);
    const TrialStream s{gen(), gen() % 100, gen() % 100000};
    std::vector<std::uint8_t> h1(n), h2(n);
    std::vector<double> t1(n), t2(n);
    run_trials_scalar(p, s, {h1, t1});
    run_trials_avx2(p, s, {h2, t2});
    REQUIRE(h1 == h2);
    REQUIRE(std::memcmp(t1.data(), t2.data(), n * sizeof(double)) == 0);
  }
}
#endif

TEST_CASE("dispatcher reports a supported ISA") {
  CHECK(isa_supported(active_isa()));
  CHECK(isa_name(Isa::Scalar) == "scalar");
}

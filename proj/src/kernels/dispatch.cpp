#include <cstdlib>
#include <stdexcept>
#include <string_view>

#include "bletrack/kernels.hpp"

namespace bletrack::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(BLETRACK_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() {
  static const Isa chosen = [] {
    if (const char* env = std::getenv("BLETRACK_ISA")) {
      if (std::string_view(env) == "scalar") return Isa::Scalar;
    }
    return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
  }();
  return chosen;
}

void run_trials(const TrialParams& p, const TrialStream& s, TrialOutputs out, Isa isa) {
  if (out.hit.size() != out.hit_time_ms.size())
    throw std::invalid_argument("run_trials: output spans differ in length");
  switch (isa) {
#if defined(BLETRACK_HAVE_AVX2)
    case Isa::Avx2:
      if (isa_supported(Isa::Avx2)) {
        run_trials_avx2(p, s, out);
        return;
      }
      break;
#endif
    default:
      break;
  }
  run_trials_scalar(p, s, out);
}

void run_trials(const TrialParams& p, const TrialStream& s, TrialOutputs out) {
  run_trials(p, s, out, active_isa());
}

}  // namespace bletrack::kernels

#include "bletrack/sim.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>

#include <fmt/format.h>

#include "bletrack/error.hpp"
#include "bletrack/kernels.hpp"
#include "text_util.hpp"

namespace bletrack {

std::string_view mount_name(Mount m) {
  return m == Mount::Bonnet ? "bonnet" : "wheelarch";
}

Mount parse_mount(std::string_view text) {
  std::string lower(detail::trim(text));
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "wheelarch" || lower == "wheel_arch" || lower == "wheel-arch") return Mount::WheelArch;
  if (lower == "bonnet") return Mount::Bonnet;
  throw ConfigError(fmt::format("unknown mount '{}' (expected wheelarch or bonnet)", text));
}

std::string_view band_code(Band b) {
  switch (b) {
    case Band::Y: return "Y";
    case Band::P66: return "P66";
    case Band::P33: return "P33";
    case Band::N: return "N";
  }
  return "?";
}

std::string_view band_label(Band b) {
  switch (b) {
    case Band::Y: return "Y";
    case Band::P66: return "66%";
    case Band::P33: return "33%";
    case Band::N: return "N";
  }
  return "?";
}

Band parse_band(std::string_view text) {
  text = detail::trim(text);
  if (text == "Y") return Band::Y;
  if (text == "N") return Band::N;
  if (text == "66%" || text == "P66") return Band::P66;
  if (text == "33%" || text == "P33") return Band::P33;
  throw ConfigError(fmt::format("unknown detection label '{}'", text));
}

Band BandThresholds::classify(double p) const {
  if (p >= y) return Band::Y;
  if (p >= p66) return Band::P66;
  if (p >= p33) return Band::P33;
  return Band::N;
}

void BandThresholds::validate() const {
  if (!(0.0 < p33 && p33 < p66 && p66 < y && y <= 1.0))
    throw ConfigError("band thresholds must satisfy 0 < p33 < p66 < y <= 1");
}

Band label_from_counts(std::size_t detections, std::size_t trials) {
  if (trials == 0) throw std::domain_error("label_from_counts: zero trials");
  if (detections >= trials) return Band::Y;
  if (detections == 0) return Band::N;
  return 2 * detections >= trials ? Band::P66 : Band::P33;
}

MaterialSet mount_materials(Mount mount, const SimPresets& presets) {
  MaterialSet ms;
  if (mount == Mount::Bonnet) ms.insert(Material::Bonnet);
  if (presets.far_side) ms.insert(Material::VehicleBody);
  return ms;
}

double pass_detection_range(Mount mount, const SimPresets& presets) {
  return detection_range(presets.beacon, mount_materials(mount, presets)).meters;
}

double pass_time(double speed_mph, Mount mount, const SimPresets& presets) {
  return in_range_time({mph_to_mps(speed_mph), presets.lateral_offset_m,
                        pass_detection_range(mount, presets)});
}

double expected_probability(double speed_mph, double interval_ms, Mount mount,
                            const SimPresets& presets) {
  return detection_probability({interval_ms, presets.event_duration_ms, presets.jitter_ms},
                               presets.scanner, pass_time(speed_mph, mount, presets));
}

namespace {

kernels::TrialParams trial_params(double speed_mph, double interval_ms, Mount mount,
                                  const SimPresets& presets) {
  const AdvertiserConfig adv{interval_ms, presets.event_duration_ms, presets.jitter_ms};
  adv.validate();
  presets.scanner.validate();
  return {interval_ms,
          presets.event_duration_ms,
          presets.jitter_ms,
          presets.scanner.scan_window_ms,
          presets.scanner.scan_cycle_ms,
          pass_time(speed_mph, mount, presets) * 1000.0};
}

}  // namespace

PassResult simulate_pass(std::uint64_t seed, double speed_mph, double interval_ms, Mount mount,
                         const SimPresets& presets) {
  const auto params = trial_params(speed_mph, interval_ms, mount, presets);
  std::uint8_t hit = 0;
  double when = 0.0;
  kernels::run_trials(params, {seed, 0, 0}, {std::span(&hit, 1), std::span(&when, 1)});
  PassResult r;
  r.detected = hit != 0;
  if (r.detected) r.latency_s = (when - 0.5 * params.pass_ms) / 1000.0;
  return r;
}

void TrialMatrixSpec::validate() const {
  if (speeds_mph.empty() || intervals_ms.empty())
    throw ConfigError("trial matrix needs at least one speed and one interval");
  if (trials_per_cell < 1) throw ConfigError("trials_per_cell must be >= 1");
  for (double v : speeds_mph)
    if (!(v > 0.0)) throw ConfigError("trial matrix speeds must be positive");
}

MatrixResult run_matrix(const TrialMatrixSpec& spec, const SimPresets& presets, unsigned threads) {
  spec.validate();
  MatrixResult result;
  result.spec = spec;
  const std::size_t cols = spec.intervals_ms.size();
  result.cells.resize(spec.speeds_mph.size() * cols);

  auto run_cell = [&](std::size_t c) {
    const double speed = spec.speeds_mph[c / cols];
    const double interval = spec.intervals_ms[c % cols];
    const auto params = trial_params(speed, interval, spec.mount, presets);
    std::vector<std::uint8_t> hit(spec.trials_per_cell);
    std::vector<double> when(spec.trials_per_cell);
    kernels::run_trials(params, {spec.seed, c, 0}, {hit, when});

    CellResult& cell = result.cells[c];
    cell.speed_mph = speed;
    cell.interval_ms = interval;
    cell.trials = spec.trials_per_cell;
    double latency = 0.0;
    for (std::size_t t = 0; t < hit.size(); ++t) {
      if (!hit[t]) continue;
      ++cell.detections;
      latency += (when[t] - 0.5 * params.pass_ms) / 1000.0;
    }
    cell.mean_latency_s = cell.detections ? latency / static_cast<double>(cell.detections) : 0.0;
    cell.label = label_from_counts(cell.detections, cell.trials);
    cell.expected_probability = expected_probability(speed, interval, spec.mount, presets);
  };

  const std::size_t n = result.cells.size();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t c = 0; c < n; ++c) run_cell(c);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < n; c += threads) run_cell(c);
      });
  }
  return result;
}

void write_matrix_csv(std::ostream& out, const MatrixResult& m) {
  out << "speed_mph,interval_ms,detections,trials,label,expected_p\n";
  for (const auto& c : m.cells)
    out << fmt::format("{},{},{},{},{},{:.6f}\n", c.speed_mph, c.interval_ms, c.detections,
                       c.trials, band_code(c.label), c.expected_probability);
}

void write_matrix_table(std::ostream& out, const MatrixResult& m) {
  const auto& spec = m.spec;
  out << fmt::format("mount: {}   trials/cell: {}   seed: {}\n\n", mount_name(spec.mount),
                     spec.trials_per_cell, spec.seed);
  auto header = [&] {
    out << fmt::format("{:>8}", "");
    for (double t : spec.intervals_ms) out << fmt::format(" {:>7}", fmt::format("{}ms", t));
    out << '\n';
  };
  header();
  for (std::size_t i = 0; i < spec.speeds_mph.size(); ++i) {
    out << fmt::format("{:>8}", fmt::format("{} mph", spec.speeds_mph[i]));
    for (std::size_t j = 0; j < spec.intervals_ms.size(); ++j)
      out << fmt::format(" {:>7}", band_label(m.at(i, j).label));
    out << '\n';
  }
  out << "\nexpected detection probability\n";
  header();
  for (std::size_t i = 0; i < spec.speeds_mph.size(); ++i) {
    out << fmt::format("{:>8}", fmt::format("{} mph", spec.speeds_mph[i]));
    for (std::size_t j = 0; j < spec.intervals_ms.size(); ++j)
      out << fmt::format(" {:>7.3f}", m.at(i, j).expected_probability);
    out << '\n';
  }
}

TargetMatrix read_target_matrix(std::istream& in) {
  TargetMatrix t;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto cols = detail::split(view, ',');
    if (!header) {
      if (detail::trim(cols[0]) != "speed_mph" || cols.size() < 2)
        throw ConfigError(fmt::format("target matrix line {}: expected 'speed_mph,<interval>,...'", line_no));
      for (std::size_t j = 1; j < cols.size(); ++j) {
        auto v = detail::parse_double(cols[j]);
        if (!v) throw ConfigError(fmt::format("target matrix line {}: bad interval '{}'", line_no, cols[j]));
        t.intervals_ms.push_back(*v);
      }
      header = true;
      continue;
    }
    if (cols.size() != t.intervals_ms.size() + 1)
      throw ConfigError(fmt::format("target matrix line {}: expected {} columns", line_no,
                                    t.intervals_ms.size() + 1));
    auto speed = detail::parse_double(cols[0]);
    if (!speed || !(*speed > 0.0))
      throw ConfigError(fmt::format("target matrix line {}: bad speed", line_no));
    t.speeds_mph.push_back(*speed);
    for (std::size_t j = 1; j < cols.size(); ++j) t.labels.push_back(parse_band(cols[j]));
  }
  if (t.speeds_mph.empty()) throw ConfigError("target matrix is empty");
  return t;
}

TargetMatrix load_target_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open target matrix '{}'", path));
  return read_target_matrix(in);
}

}  // namespace bletrack

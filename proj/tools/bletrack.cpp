// bletrack: calibration, drive-by matrices, deployment planning and the
// SMS/detection pipeline from one entry point.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "bletrack/error.hpp"
#include "bletrack/kernels.hpp"
#include "bletrack/power.hpp"
#include "bletrack/presets.hpp"
#include "bletrack/protocol.hpp"
#include "bletrack/rf_model.hpp"
#include "bletrack/roadplan.hpp"
#include "bletrack/sim.hpp"

using namespace bletrack;

namespace {

constexpr std::uint64_t kDefaultSeed = 20190401;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Writes to `path`, or stdout for "" / "-".
template <typename F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path));
  write(out);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::string line;
  auto slurp = [&](std::istream& in) {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(line);
    }
  };
  if (path.empty() || path == "-") {
    slurp(std::cin);
  } else {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open '{}'", path));
    slurp(in);
  }
  return lines;
}

// ------------------------------------------------------------ calibrate --

struct CalibrateArgs {
  std::string rssi_csv;
  double rssi_ref = anchors::kRssiAt1m;
  std::string preset = "hm10-bt4";
  std::string name = "calibrated";
  std::string wheel_arch = "data/table2_wheelarch.csv";
  std::string bonnet = "data/table3_bonnet.csv";
  double bonnet_shift_ms = 400.0;
  double shift_weight = 10.0;
  std::vector<double> windows;
  std::vector<double> attenuations;
  bool skip_search = false;
  std::string out;
  std::string report;
  unsigned threads = default_threads();
};

int cmd_calibrate(const CalibrateArgs& a) {
  SimPresets base = resolve_preset(a.preset);
  std::ostringstream report;
  report << fmt::format("# bletrack calibrate  base preset: {}\n", a.preset);

  if (!a.rssi_csv.empty()) {
    std::ifstream in(a.rssi_csv);
    if (!in) throw ConfigError(fmt::format("cannot open '{}'", a.rssi_csv));
    const auto samples = read_rssi_csv(in);
    if (samples.empty()) throw UsageError(fmt::format("'{}' contains no samples", a.rssi_csv));
    const auto fit = fit_exponent(samples, a.rssi_ref, base.beacon);
    base.beacon = fit.model;
    report << fmt::format("\n[exponent fit]\nsamples        {}\nrssi_ref_dbm   {}\nexponent       {:.6f}\n"
                          "stderr         {:.6f}\nrmse_db        {:.4f}\ndetection_m    {:.3f}\n",
                          samples.size(), a.rssi_ref, fit.exponent, fit.stderr_exponent, fit.rmse_db,
                          detection_range(base.beacon).meters);
  }

  if (!a.skip_search) {
    CalibrationTargets targets;
    targets.wheel_arch = load_target_matrix(a.wheel_arch);
    if (!a.bonnet.empty()) targets.bonnet = load_target_matrix(a.bonnet);
    if (a.bonnet_shift_ms > 0) targets.bonnet_shift_ms = a.bonnet_shift_ms;
    targets.shift_weight = a.shift_weight;
    SearchGrid grid = default_search_grid();
    if (!a.windows.empty()) grid.scan_windows_ms = a.windows;
    if (!a.attenuations.empty()) grid.bonnet_attenuations_db = a.attenuations;
    const auto result = calibrate(targets, grid, base, {}, a.threads);
    base = apply_calibration(base, result);
    report << "\n[grid search]\n";
    write_calibration_report(report, result);
  }

  base.name = a.name;
  if (!a.out.empty()) emit(a.out, [&](std::ostream& o) { write_preset(o, base); });
  else {
    report << "\n[preset]\n";
    write_preset(report, base);
  }
  emit(a.report, [&](std::ostream& o) { o << report.str(); });
  return 0;
}

// --------------------------------------------------------------- matrix --

struct MatrixArgs {
  std::string preset = "hm10-bt4";
  std::string mount = "wheelarch";
  std::vector<double> speeds;
  std::vector<double> intervals;
  std::size_t trials = 3;
  std::uint64_t seed = kDefaultSeed;
  std::string csv;
  std::string format = "table";
  unsigned threads = default_threads();
};

int cmd_matrix(const MatrixArgs& a) {
  const auto presets = resolve_preset(a.preset);
  TrialMatrixSpec spec;
  spec.mount = parse_mount(a.mount);
  spec.speeds_mph = a.speeds;
  spec.intervals_ms = a.intervals;
  if (spec.speeds_mph.empty()) spec.speeds_mph = {5, 10, 15, 20, 25, 30, 35, 40, 45};
  if (spec.intervals_ms.empty()) {
    if (spec.mount == Mount::Bonnet) spec.intervals_ms = {700, 800, 900, 1000, 1100, 1200, 1300, 1400, 1500};
    else spec.intervals_ms = {1000, 1100, 1200, 1300, 1400, 1500, 1600};
  }
  spec.trials_per_cell = a.trials;
  spec.seed = a.seed;
  const auto m = run_matrix(spec, presets, a.threads);

  if (!a.csv.empty()) emit(a.csv, [&](std::ostream& o) { write_matrix_csv(o, m); });
  if (a.format == "csv") {
    if (a.csv.empty()) write_matrix_csv(std::cout, m);
  } else {
    std::cout << fmt::format("# bletrack matrix  preset: {}\n", presets.name);
    write_matrix_table(std::cout, m);
  }
  return 0;
}

// ----------------------------------------------------------------- plan --

struct PlanArgs {
  std::string road;
  int budget = 3;
  SitingOptions siting;
  std::string out;
  std::string registry;
};

int cmd_plan(const PlanArgs& a) {
  const Road road = load_road_geojson(a.road);
  const auto plan = plan_deployment(road, a.budget, a.siting);
  std::cout << fmt::format("# bletrack plan  budget: {}\n", a.budget);
  write_plan_summary(std::cout, plan);
  if (!a.out.empty()) emit(a.out, [&](std::ostream& o) { write_plan_geojson(o, plan); });
  if (!a.registry.empty()) {
    BeaconRegistry reg;
    for (const auto& s : plan.sites) reg[s.beacon_id] = {s.beacon_id, s.position, s.interval_ms, s.beacon_preset};
    emit(a.registry, [&](std::ostream& o) { write_registry_csv(o, reg); });
  }
  return 0;
}

// ---------------------------------------------------------------- guide --

struct GuideArgs {
  double reliability = -1.0;  ///< < 0: print the published guide
  std::string preset = "hm10-bt4";
  std::string mount = "wheelarch";
  std::vector<double> speeds{5, 10, 15, 20, 25, 30, 35, 40, 45};
  std::string out;
};

int cmd_guide(const GuideArgs& a) {
  std::vector<GuideRow> rows;
  if (a.reliability < 0.0) {
    rows.assign(field_guide().begin(), field_guide().end());
  } else {
    const auto presets = resolve_preset(a.preset);
    const Mount mount = parse_mount(a.mount);
    rows = derive_guide(a.reliability, a.speeds, [&](double v, double t) {
      return expected_probability(v, t, mount, presets);
    });
  }
  bool all_feasible = true;
  emit(a.out, [&](std::ostream& o) {
    o << "max_speed_mph,interval_ms,battery_days\n";
    for (const auto& r : rows) {
      if (!r.feasible) {
        all_feasible = false;
        o << fmt::format("{},,\n", r.max_speed_mph);
        continue;
      }
      o << fmt::format("{},{},{}\n", r.max_speed_mph, r.interval_ms, r.battery_days);
    }
  });
  if (!all_feasible) {
    std::cerr << "bletrack: no interval meets the reliability target for some speeds\n";
    return 1;
  }
  return 0;
}

// --------------------------------------------------------------- ingest --

struct IngestArgs {
  std::string segments = "-";
  std::string registry;
  std::string store;
  std::string received_at;
  std::string geojson;
};

int cmd_ingest(const IngestArgs& a) {
  const auto registry = load_registry_csv(a.registry);
  DetectionStore store = load_store(a.store);
  const auto lines = read_lines(a.segments);

  std::vector<std::string> diagnostics;
  std::map<std::pair<std::string, int>, std::vector<std::string>> groups;
  std::vector<DetectionEvent> appended;
  std::size_t merged = 0, duplicates = 0, quarantined = 0;
  for (const auto& line : lines) {
    // optional "<received_at>," prefix from the gateway dump
    std::string at = a.received_at, raw = line;
    if (!line.empty() && line.front() != 'T') {
      const auto comma = line.find(',');
      if (comma == std::string::npos) {
        diagnostics.push_back(fmt::format("line '{}': not a segment", line));
        continue;
      }
      at = line.substr(0, comma);
      raw = line.substr(comma + 1);
    }
    if (at.empty())
      throw UsageError("segment without a receipt time; prefix lines with '<received_at>,' or pass --received-at");
    const auto seg = parse_segment(raw, diagnostics);
    if (!seg) continue;
    groups[{seg->receiver_id, seg->segment_total}].push_back(raw);
    const auto outcome = store.merge(seg->receiver_id, seg->records, registry, at);
    if (outcome.duplicate) ++duplicates;
    merged += outcome.appended;
    quarantined += outcome.quarantined;
    appended.insert(appended.end(), outcome.new_events.begin(), outcome.new_events.end());
  }
  append_to_store(a.store, appended);

  std::cout << fmt::format("# bletrack ingest  lines: {}\n", lines.size());
  std::cout << fmt::format("events appended     {}\nquarantined         {}\nduplicate segments  {}\n"
                           "store size          {}\n",
                           merged, quarantined, duplicates, store.size());
  for (const auto& [key, raws] : groups) {
    const auto dec = decode_sms(raws);
    if (!dec.missing_segments.empty())
      std::cout << fmt::format("incomplete message from {}: missing segments {}\n", key.first,
                               fmt::join(dec.missing_segments, ","));
  }
  for (const auto& d : diagnostics) std::cerr << "bletrack: " << d << '\n';
  if (!a.geojson.empty())
    emit(a.geojson, [&](std::ostream& o) { write_detections_geojson(o, store.events()); });
  return 0;
}

// -------------------------------------------------------- encode/decode --

struct EncodeArgs {
  std::string receiver = "RX1";
  std::vector<std::string> records;
  std::string records_csv;
};

int cmd_encode(const EncodeArgs& a) {
  std::vector<DetectionRecord> recs;
  auto parse = [&](const std::string& text, char sep, bool csv_order) {
    std::vector<std::string> f;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, sep);) f.push_back(part);
    if (f.size() != 3) throw UsageError(fmt::format("bad record '{}'", text));
    try {
      // CLI form id:count:first_seen, CSV form beacon_id,first_seen_s,count
      const auto count = std::stoul(csv_order ? f[2] : f[1]);
      const auto first = std::stoul(csv_order ? f[1] : f[2]);
      recs.push_back({f[0], static_cast<std::uint32_t>(first), static_cast<std::uint32_t>(count)});
    } catch (const std::logic_error&) {
      throw UsageError(fmt::format("bad record '{}'", text));
    }
  };
  for (const auto& r : a.records) parse(r, ':', false);
  if (!a.records_csv.empty()) {
    const auto lines = read_lines(a.records_csv);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (i == 0 && lines[i] == "beacon_id,first_seen_s,count") continue;
      parse(lines[i], ',', true);
    }
  }
  if (recs.empty()) throw UsageError("no records given");
  for (const auto& p : encode_sms(a.receiver, recs)) std::cout << p.wire << '\n';
  return 0;
}

int cmd_decode(const std::string& source) {
  const auto dec = decode_sms(read_lines(source));
  std::cout << fmt::format("receiver {}\nsegments {}\n", dec.receiver_id, dec.segment_total);
  if (!dec.missing_segments.empty())
    std::cout << fmt::format("missing {}\n", fmt::join(dec.missing_segments, ","));
  std::cout << "beacon_id,first_seen_s,count\n";
  for (const auto& r : dec.records) std::cout << fmt::format("{},{},{}\n", r.beacon, r.first_seen_s, r.count);
  for (const auto& d : dec.diagnostics) std::cerr << "bletrack: " << d << '\n';
  return dec.segment_total == 0 ? 1 : 0;
}

int cmd_export(const std::string& store_path, const std::string& out, bool include_quarantined) {
  std::ifstream in(store_path);
  if (!in) throw ConfigError(fmt::format("cannot open store '{}'", store_path));
  auto events = read_store_ndjson(in).events();
  if (!include_quarantined)
    events.erase(std::remove_if(events.begin(), events.end(), [](const auto& e) { return e.quarantined(); }),
                 events.end());
  emit(out, [&](std::ostream& o) { write_detections_geojson(o, events); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bletrack: BLE checkpoint tracking toolkit"};
  app.set_config("--config", "", "INI file; [section] names match subcommands, flags override it");
  app.require_subcommand(1);
  bool show_isa = false;
  app.add_flag("--isa", show_isa, "Print the selected trial kernel to stderr");

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Fit the path-loss exponent and the scanner/bonnet parameters");
  c->add_option("--rssi", cal.rssi_csv, "RSSI samples CSV (distance_m,rssi_dbm,materials)")->check(CLI::ExistingFile);
  c->add_option("--rssi-ref", cal.rssi_ref, "RSSI at 1 m held fixed in the fit (dBm)");
  c->add_option("--preset", cal.preset, "Base preset name or file");
  c->add_option("--name", cal.name, "Name written into the output preset");
  c->add_option("--targets-wheelarch", cal.wheel_arch, "Wheel-arch target matrix CSV");
  c->add_option("--targets-bonnet", cal.bonnet, "Bonnet target matrix CSV ('' to skip)");
  c->add_option("--bonnet-shift", cal.bonnet_shift_ms, "Target bonnet shift in ms (0 disables)");
  c->add_option("--shift-weight", cal.shift_weight, "Objective weight per 100 ms of shift miss");
  c->add_option("--windows", cal.windows, "Scan windows to search (ms)")->delimiter(',');
  c->add_option("--attenuations", cal.attenuations, "Bonnet attenuations to search (dB)")->delimiter(',');
  c->add_flag("--no-search", cal.skip_search, "Only fit the exponent");
  c->add_option("-o,--out", cal.out, "Preset file to write");
  c->add_option("--report", cal.report, "Residual report file (default stdout)");
  c->add_option("--threads", cal.threads, "Worker threads")->check(CLI::PositiveNumber);

  MatrixArgs mat;
  auto* m = app.add_subcommand("matrix", "Simulate a speed x interval trial matrix");
  m->add_option("--preset", mat.preset, "Preset name or file");
  m->add_option("--mount", mat.mount, "wheelarch or bonnet");
  m->add_option("--speeds", mat.speeds, "Speeds in mph")->delimiter(',');
  m->add_option("--intervals", mat.intervals, "Intervals in ms")->delimiter(',');
  m->add_option("--trials", mat.trials, "Trials per cell")->check(CLI::PositiveNumber);
  m->add_option("--seed", mat.seed, "Random seed");
  m->add_option("--csv", mat.csv, "Also write CSV here");
  m->add_option("--format", mat.format, "table or csv")->check(CLI::IsMember({"table", "csv"}));
  m->add_option("--threads", mat.threads, "Worker threads")->check(CLI::PositiveNumber);

  PlanArgs plan;
  auto* p = app.add_subcommand("plan", "Place beacons along a road");
  p->add_option("--road", plan.road, "Road GeoJSON LineString")->required()->check(CLI::ExistingFile);
  p->add_option("--budget", plan.budget, "Maximum number of beacons")->check(CLI::PositiveNumber);
  p->add_option("--preset", plan.siting.preset, "Beacon preset name or file");
  p->add_option("--spacing", plan.siting.max_spacing_m, "Coverage spacing in metres")->check(CLI::PositiveNumber);
  p->add_option("--a-lat", plan.siting.a_lat_max, "Comfort lateral acceleration m/s^2")->check(CLI::PositiveNumber);
  p->add_option("--offset", plan.siting.offset_m, "Beacon offset from the road centre (m)")->check(CLI::NonNegativeNumber);
  p->add_option("-o,--out", plan.out, "Plan GeoJSON to write");
  p->add_option("--registry", plan.registry, "Beacon registry CSV to write");

  GuideArgs guide;
  auto* g = app.add_subcommand("guide", "Speed -> interval -> battery guide");
  g->add_option("--reliability", guide.reliability, "Derive from the model at this target instead of printing the published guide")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--preset", guide.preset, "Preset for --reliability");
  g->add_option("--mount", guide.mount, "Mount for --reliability");
  g->add_option("--speeds", guide.speeds, "Speeds for --reliability")->delimiter(',');
  g->add_option("-o,--out", guide.out, "CSV file (default stdout)");

  IngestArgs ing;
  auto* i = app.add_subcommand("ingest", "Merge SMS segments into the detection store");
  i->add_option("--segments", ing.segments, "Segment dump, one per line ('-' = stdin)");
  i->add_option("--registry", ing.registry, "Beacon registry CSV")->required()->check(CLI::ExistingFile);
  i->add_option("--store", ing.store, "Detection store (NDJSON, appended)")->required();
  i->add_option("--received-at", ing.received_at, "Receipt time for lines without a prefix");
  i->add_option("--geojson", ing.geojson, "Write the whole store as GeoJSON");

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Encode detection records as SMS segments");
  e->add_option("--receiver", enc.receiver, "Receiver id");
  e->add_option("--record", enc.records, "id:count:first_seen (repeatable)");
  e->add_option("--records", enc.records_csv, "CSV beacon_id,first_seen_s,count");

  std::string decode_source = "-";
  auto* d = app.add_subcommand("decode", "Decode SMS segments");
  d->add_option("--segments", decode_source, "Segments, one per line ('-' = stdin)");

  std::string export_store, export_out;
  bool export_quarantined = true;
  auto* x = app.add_subcommand("export", "Export the detection store as GeoJSON");
  x->add_option("--store", export_store, "Detection store")->required();
  x->add_option("-o,--out", export_out, "GeoJSON file (default stdout)");
  x->add_option("--quarantined", export_quarantined, "Include quarantined events (true/false)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }
  if (show_isa) std::cerr << "bletrack: trial kernel " << kernels::isa_name(kernels::active_isa()) << '\n';

  try {
    if (*c) return cmd_calibrate(cal);
    if (*m) return cmd_matrix(mat);
    if (*p) return cmd_plan(plan);
    if (*g) return cmd_guide(guide);
    if (*i) return cmd_ingest(ing);
    if (*e) return cmd_encode(enc);
    if (*d) return cmd_decode(decode_source);
    if (*x) return cmd_export(export_store, export_out, export_quarantined);
  } catch (const ModelError& err) {
    std::cerr << "bletrack: " << err.what() << '\n';
    return 1;
  } catch (const ConfigError& err) {
    std::cerr << "bletrack: " << err.what() << '\n';
    return 2;
  } catch (const UsageError& err) {
    std::cerr << "bletrack: " << err.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& err) {
    std::cerr << "bletrack: " << err.what() << '\n';
    return 2;
  } catch (const std::domain_error& err) {
    std::cerr << "bletrack: " << err.what() << '\n';
    return 1;
  }
  return 2;
}

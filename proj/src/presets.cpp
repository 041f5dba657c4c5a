#include "bletrack/presets.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "bletrack/error.hpp"
#include "text_util.hpp"

namespace bletrack {

AttenuationTable material_table(double exponent, double clear_range_m, double water_range_m,
                                double bonnet_db) {
  AttenuationTable t;
  t.set(Material::PlasticCase,
        attenuation_from_ranges(clear_range_m, anchors::kPlasticCaseRange, exponent));
  t.set(Material::CardboardCase,
        attenuation_from_ranges(clear_range_m, anchors::kCardboardCaseRange, exponent));
  t.set(Material::WaterLitre, attenuation_from_ranges(clear_range_m, water_range_m, exponent));
  t.set(Material::PlasticBag, anchors::kPlasticBagDb);
  t.set(Material::Bonnet, bonnet_db);
  // Unmeasured; assumed comparable to the engine bay.
  t.set(Material::VehicleBody, bonnet_db);
  return t;
}

namespace {

PathLossModel anchored_model(double reliable_range) {
  PathLossModel m;
  m.rssi_ref = anchors::kRssiAt1m;
  m.reliability_threshold = anchors::kReliabilityThreshold;
  m.exponent = exponent_from_anchor(m.rssi_ref, reliable_range, m.reliability_threshold);
  return m;
}

// Obstruction dB values are a property of the material, measured with the
// HM-10, and shared by every preset.
const double kHm10Exponent = anchored_model(anchors::kHm10ReliableRange).exponent;

SimPresets make(std::string name, double reliable_range, double clear_range, double water_range) {
  SimPresets p;
  p.name = std::move(name);
  p.beacon = anchored_model(reliable_range);
  p.beacon.attenuation = material_table(kHm10Exponent, clear_range, water_range,
                                        calibrated::kBonnetAttenuationDb);
  return p;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"hm10-bt4", "hm10-bt4-clear80", "hm10-bt4-water37", "otsb-bt5"};
}

SimPresets preset(std::string_view name) {
  using namespace anchors;
  if (name == "hm10-bt4")
    return make("hm10-bt4", kHm10ReliableRange, kClearRangeCardboardFit, kWaterRangeMeasured);
  if (name == "hm10-bt4-clear80")
    return make("hm10-bt4-clear80", kHm10ReliableRange, kClearRangePlasticFit, kWaterRangeMeasured);
  if (name == "hm10-bt4-water37")
    return make("hm10-bt4-water37", kHm10ReliableRange, kClearRangeCardboardFit,
                kWaterRangeExtrapolated);
  if (name == "otsb-bt5")
    return make("otsb-bt5", kBt5ReliableRange, kClearRangeCardboardFit, kWaterRangeMeasured);
  throw ConfigError(fmt::format("unknown preset '{}'", name));
}

void write_preset(std::ostream& out, const SimPresets& p) {
  out << "# bletrack preset\n";
  out << "[preset]\n";
  out << "name = " << p.name << "\n";
  out << "\n[model]\n";
  out << fmt::format("rssi_ref_dbm = {}\n", p.beacon.rssi_ref);
  out << fmt::format("exponent = {}\n", p.beacon.exponent);
  out << fmt::format("reliability_threshold_dbm = {}\n", p.beacon.reliability_threshold);
  out << "\n[attenuation_db]\n";
  for (std::size_t i = 1; i < kMaterialCount; ++i) {
    const auto m = static_cast<Material>(i);
    out << fmt::format("{} = {}\n", material_name(m), p.beacon.attenuation[m]);
  }
  out << "\n[scanner]\n";
  out << fmt::format("scan_window_ms = {}\n", p.scanner.scan_window_ms);
  out << fmt::format("scan_cycle_ms = {}\n", p.scanner.scan_cycle_ms);
  out << "\n[advertiser]\n";
  out << fmt::format("event_duration_ms = {}\n", p.event_duration_ms);
  out << fmt::format("jitter_ms = {}\n", p.jitter_ms);
  out << "\n[geometry]\n";
  out << fmt::format("lateral_offset_m = {}\n", p.lateral_offset_m);
  out << fmt::format("far_side = {}\n", p.far_side ? "true" : "false");
}

namespace {

double get_number(const boost::property_tree::ptree& tree, const std::string& key) {
  const auto raw = tree.get_optional<std::string>(key);
  if (!raw) throw ConfigError(fmt::format("preset: missing key '{}'", key));
  const auto v = detail::parse_double(*raw);
  if (!v) throw ConfigError(fmt::format("preset: '{}' is not a number ('{}')", key, *raw));
  return *v;
}

}  // namespace

SimPresets read_preset(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("preset: {}", e.message()));
  }
  SimPresets p;
  p.name = tree.get<std::string>("preset.name", "custom");
  p.beacon.rssi_ref = get_number(tree, "model.rssi_ref_dbm");
  p.beacon.exponent = get_number(tree, "model.exponent");
  p.beacon.reliability_threshold = get_number(tree, "model.reliability_threshold_dbm");
  try {
    for (std::size_t i = 1; i < kMaterialCount; ++i) {
      const auto m = static_cast<Material>(i);
      const std::string key = fmt::format("attenuation_db.{}", material_name(m));
      if (tree.get_optional<std::string>(key)) p.beacon.attenuation.set(m, get_number(tree, key));
    }
    p.beacon.validate();
    p.scanner.scan_window_ms = get_number(tree, "scanner.scan_window_ms");
    p.scanner.scan_cycle_ms = get_number(tree, "scanner.scan_cycle_ms");
    p.scanner.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("preset: {}", e.what()));
  }
  p.event_duration_ms = get_number(tree, "advertiser.event_duration_ms");
  p.jitter_ms = get_number(tree, "advertiser.jitter_ms");
  p.lateral_offset_m = get_number(tree, "geometry.lateral_offset_m");
  const auto far = tree.get<std::string>("geometry.far_side", "false");
  if (far != "true" && far != "false")
    throw ConfigError("preset: geometry.far_side must be true or false");
  p.far_side = far == "true";
  return p;
}

SimPresets load_preset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open preset file '{}'", path));
  return read_preset(in);
}

SimPresets resolve_preset(const std::string& name_or_path) {
  for (const auto& n : preset_names())
    if (n == name_or_path) return preset(n);
  if (std::filesystem::exists(name_or_path)) return load_preset_file(name_or_path);
  throw ConfigError(fmt::format("unknown preset '{}' (not a preset name or a file)", name_or_path));
}

}  // namespace bletrack

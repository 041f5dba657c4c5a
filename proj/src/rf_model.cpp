#include "bletrack/rf_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "bletrack/error.hpp"
#include "text_util.hpp"

namespace bletrack {

namespace {

constexpr std::array<std::string_view, kMaterialCount> kMaterialNames = {
    "none", "plastic_case", "cardboard_case", "water", "plastic_bag", "bonnet", "vehicle_body"};

}  // namespace

std::string_view material_name(Material m) {
  return kMaterialNames.at(static_cast<std::size_t>(m));
}

std::optional<Material> parse_material(std::string_view name) {
  name = detail::trim(name);
  for (std::size_t i = 0; i < kMaterialCount; ++i)
    if (kMaterialNames[i] == name) return static_cast<Material>(i);
  if (name == "water_litre") return Material::WaterLitre;
  return std::nullopt;
}

MaterialSet MaterialSet::parse(std::string_view text) {
  MaterialSet out;
  text = detail::trim(text);
  if (text.empty()) return out;
  for (auto part : detail::split(text, '+')) {
    auto m = parse_material(part);
    if (!m) throw std::invalid_argument(fmt::format("unknown material '{}'", part));
    out.insert(*m);
  }
  return out;
}

std::string MaterialSet::to_string() const {
  std::string out;
  for (std::size_t i = 1; i < kMaterialCount; ++i) {
    if (!bits_.test(i)) continue;
    if (!out.empty()) out += '+';
    out += kMaterialNames[i];
  }
  return out;
}

void AttenuationTable::set(Material m, double db) {
  if (!std::isfinite(db) || db < 0.0)
    throw std::invalid_argument(
        fmt::format("attenuation for {} must be finite and >= 0", material_name(m)));
  if (m == Material::None && db != 0.0)
    throw std::invalid_argument("attenuation of 'none' is fixed at 0 dB");
  db_[static_cast<std::size_t>(m)] = db;
}

double AttenuationTable::total(const MaterialSet& ms) const {
  double sum = 0.0;
  for (std::size_t i = 1; i < kMaterialCount; ++i)
    if (ms.contains(static_cast<Material>(i))) sum += db_[i];
  return sum;
}

void PathLossModel::validate() const {
  if (!std::isfinite(rssi_ref) || !std::isfinite(reliability_threshold))
    throw std::invalid_argument("path loss model: non-finite reference or threshold");
  if (!(rssi_ref > reliability_threshold))
    throw std::invalid_argument("path loss model: rssi_ref must exceed the reliability threshold");
  if (!(exponent > 0.5 && exponent < 6.0))
    throw std::invalid_argument(
        fmt::format("path loss model: exponent {} outside (0.5, 6.0)", exponent));
}

double predict_rssi(const PathLossModel& model, double distance_m,
                    const MaterialSet& materials, bool* near_field_clamped) {
  if (!(distance_m > 0.0) || !std::isfinite(distance_m))
    throw std::domain_error("predict_rssi: distance must be positive");
  const bool clamp = distance_m < 1.0;
  if (near_field_clamped) *near_field_clamped = clamp;
  const double d = clamp ? 1.0 : distance_m;
  return model.rssi_ref - 10.0 * model.exponent * std::log10(d) -
         model.attenuation.total(materials);
}

DetectionRange detection_range(const PathLossModel& model, double threshold_dbm,
                               const MaterialSet& materials) {
  const double budget = model.rssi_ref - model.attenuation.total(materials) - threshold_dbm;
  if (budget < 0.0) return {0.0, true};
  return {std::pow(10.0, budget / (10.0 * model.exponent)), false};
}

ExponentFit fit_exponent(const std::vector<RssiSample>& samples, double rssi_ref,
                         const PathLossModel& base) {
  std::set<double> distances;
  for (const auto& s : samples) {
    if (!(s.distance > 0.0)) throw std::domain_error("fit_exponent: distance must be positive");
    distances.insert(s.distance);
  }
  if (distances.size() < 2)
    throw ModelError("fit_exponent: need samples at two or more distinct distances");

  // y = rssi_ref - attenuation - rssi = n * x, x = 10 log10(d)
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& s : samples) {
    const double x = 10.0 * std::log10(std::max(s.distance, 1.0));
    const double y = rssi_ref - base.attenuation.total(s.materials) - s.rssi;
    sxx += x * x;
    sxy += x * y;
  }
  if (sxx <= 0.0) throw ModelError("fit_exponent: no sample beyond the 1 m reference");

  ExponentFit fit;
  fit.exponent = sxy / sxx;
  fit.model = base;
  fit.model.rssi_ref = rssi_ref;
  fit.model.exponent = fit.exponent;

  double ssr = 0.0;
  fit.residuals_db.reserve(samples.size());
  for (const auto& s : samples) {
    const double x = 10.0 * std::log10(std::max(s.distance, 1.0));
    const double pred = rssi_ref - base.attenuation.total(s.materials) - fit.exponent * x;
    const double r = s.rssi - pred;
    fit.residuals_db.push_back(r);
    ssr += r * r;
  }
  const auto m = static_cast<double>(samples.size());
  fit.rmse_db = std::sqrt(ssr / m);
  fit.stderr_exponent = samples.size() > 1 ? std::sqrt(ssr / (m - 1.0) / sxx) : 0.0;
  return fit;
}

double attenuation_from_ranges(double range_clear_m, double range_obstructed_m,
                               double exponent) {
  if (!(range_obstructed_m > 0.0) || !(range_clear_m > 0.0))
    throw std::domain_error("attenuation_from_ranges: ranges must be positive");
  if (range_obstructed_m > range_clear_m)
    throw std::domain_error("attenuation_from_ranges: obstructed range exceeds clear range");
  return 10.0 * exponent * std::log10(range_clear_m / range_obstructed_m);
}

double exponent_from_anchor(double rssi_ref, double range_m, double threshold_dbm) {
  if (!(range_m > 1.0)) throw std::domain_error("exponent_from_anchor: range must exceed 1 m");
  return (rssi_ref - threshold_dbm) / (10.0 * std::log10(range_m));
}

std::vector<RssiSample> read_rssi_csv(std::istream& in) {
  std::vector<RssiSample> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (!header_seen) {
      auto cols = detail::split(view, ',');
      if (cols.size() < 2 || detail::trim(cols[0]) != "distance_m" ||
          detail::trim(cols[1]) != "rssi_dbm")
        throw ConfigError(fmt::format(
            "line {}: expected header 'distance_m,rssi_dbm,materials'", line_no));
      header_seen = true;
      continue;
    }
    auto cols = detail::split(view, ',');
    if (cols.size() < 2 || cols.size() > 3)
      throw ConfigError(fmt::format("line {}: expected 2 or 3 columns", line_no));
    auto d = detail::parse_double(cols[0]);
    auto r = detail::parse_double(cols[1]);
    if (!d || !r || !(*d > 0.0))
      throw ConfigError(fmt::format("line {}: bad distance or rssi", line_no));
    RssiSample s{*d, *r, {}};
    if (cols.size() == 3) {
      try {
        s.materials = MaterialSet::parse(cols[2]);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
      }
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace bletrack

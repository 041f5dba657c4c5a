#include "bletrack/roadplan.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "bletrack/error.hpp"
#include "bletrack/power.hpp"
#include "bletrack/sim.hpp"

namespace bletrack {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kMetresPerSecondPerMph = 0.44704;

LatLon lerp(LatLon a, LatLon b, double t) {
  return {a.lat + t * (b.lat - a.lat), a.lon + t * (b.lon - a.lon)};
}

}  // namespace

double haversine_m(LatLon a, LatLon b) {
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

void Road::validate() const {
  if (polyline.size() < 2) throw ConfigError("road needs at least two points");
  if (!(surface_vmax_mph > 0.0) || !std::isfinite(surface_vmax_mph))
    throw ConfigError("road surface_vmax_mph must be positive");
  for (std::size_t i = 0; i < polyline.size(); ++i) {
    const auto& p = polyline[i];
    if (!(std::abs(p.lat) <= 90.0) || !(std::abs(p.lon) <= 180.0))
      throw ConfigError(fmt::format("road point {} out of range ({}, {})", i, p.lat, p.lon));
    if (i > 0 && haversine_m(polyline[i - 1], p) == 0.0)
      throw ConfigError(fmt::format("road points {} and {} coincide", i - 1, i));
  }
}

std::vector<double> Road::vertex_arcs() const {
  std::vector<double> arcs(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i)
    arcs[i] = arcs[i - 1] + haversine_m(polyline[i - 1], polyline[i]);
  return arcs;
}

double Road::length_m() const { return vertex_arcs().back(); }

LatLon Road::point_at(double arc_m) const {
  const auto arcs = vertex_arcs();
  if (arc_m <= 0.0) return polyline.front();
  if (arc_m >= arcs.back()) return polyline.back();
  const auto it = std::upper_bound(arcs.begin(), arcs.end(), arc_m);
  const std::size_t i = static_cast<std::size_t>(it - arcs.begin()) - 1;
  const double t = (arc_m - arcs[i]) / (arcs[i + 1] - arcs[i]);
  return lerp(polyline[i], polyline[i + 1], t);
}

RoadProjection project_onto(const Road& road, LatLon p) {
  const auto arcs = road.vertex_arcs();
  RoadProjection best;
  best.offset_m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < road.polyline.size(); ++i) {
    const LatLon a = road.polyline[i], b = road.polyline[i + 1];
    const double kx = std::cos(a.lat * kDeg);
    const double bx = (b.lon - a.lon) * kx, by = b.lat - a.lat;
    const double px = (p.lon - a.lon) * kx, py = p.lat - a.lat;
    const double t = std::clamp((px * bx + py * by) / (bx * bx + by * by), 0.0, 1.0);
    const LatLon q = lerp(a, b, t);
    const double d = haversine_m(p, q);
    if (d < best.offset_m) best = {arcs[i] + t * (arcs[i + 1] - arcs[i]), d, q};
  }
  return best;
}

std::vector<double> speed_profile(const Road& road, double a_lat_max) {
  road.validate();
  if (!(a_lat_max > 0.0)) throw std::invalid_argument("speed_profile: a_lat_max must be positive");
  const auto& pts = road.polyline;
  const std::size_t n = pts.size();
  std::vector<double> mph(n, road.surface_vmax_mph);
  if (n < 3) return mph;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    std::array<double, 3> s{haversine_m(pts[i - 1], pts[i]), haversine_m(pts[i], pts[i + 1]),
                            haversine_m(pts[i - 1], pts[i + 1])};
    std::sort(s.begin(), s.end(), std::greater<>());
    const double a = s[0], b = s[1], c = s[2];
    // Heron, in the cancellation-safe ordering
    const double q = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    if (q <= 0.0) continue;
    const double radius = a * b * c / std::sqrt(q);
    mph[i] = std::min(road.surface_vmax_mph, std::sqrt(a_lat_max * radius) / kMetresPerSecondPerMph);
  }
  mph.front() = mph[1];
  mph.back() = mph[n - 2];
  return mph;
}

std::vector<CoverageGap> coverage_gaps(const Road& road, const std::vector<BeaconSite>& sites,
                                       double max_spacing_m) {
  const double length = road.length_m();
  const double half = 0.5 * max_spacing_m;
  std::vector<std::pair<double, double>> covered;
  for (const auto& s : sites) covered.emplace_back(std::max(0.0, s.arc_m - half), std::min(length, s.arc_m + half));
  std::sort(covered.begin(), covered.end());
  std::vector<CoverageGap> gaps;
  double cursor = 0.0;
  for (const auto& [lo, hi] : covered) {
    if (lo - cursor > 1e-9) gaps.push_back({cursor, lo});
    cursor = std::max(cursor, hi);
  }
  if (length - cursor > 1e-9) gaps.push_back({cursor, length});
  return gaps;
}

namespace {

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
  const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
  return ys[i] + t * (ys[i + 1] - ys[i]);
}

}  // namespace

std::vector<BeaconSite> select_sites(const Road& road, int count_budget, const SitingOptions& options) {
  if (count_budget < 1) throw std::invalid_argument("select_sites: count_budget must be >= 1");
  if (!(options.max_spacing_m > 0.0)) throw std::invalid_argument("select_sites: spacing must be positive");
  if (!(options.offset_m >= 0.0)) throw std::invalid_argument("select_sites: offset must be >= 0");
  const auto speeds = speed_profile(road, options.a_lat_max);
  const auto arcs = road.vertex_arcs();
  const double half = 0.5 * options.max_spacing_m;
  const auto budget = static_cast<std::size_t>(count_budget);

  std::vector<double> chosen;
  std::vector<std::size_t> minima;
  for (std::size_t i = 1; i + 1 < speeds.size(); ++i) {
    if (speeds[i] >= road.surface_vmax_mph) continue;
    if (speeds[i] <= speeds[i - 1] && speeds[i] <= speeds[i + 1]) minima.push_back(i);
  }
  std::stable_sort(minima.begin(), minima.end(),
                   [&](std::size_t a, std::size_t b) { return speeds[a] < speeds[b]; });
  for (std::size_t i : minima) {
    if (chosen.size() == budget) break;
    const bool near = std::any_of(chosen.begin(), chosen.end(),
                                  [&](double s) { return std::abs(s - arcs[i]) < half; });
    if (!near) chosen.push_back(arcs[i]);
  }

  auto as_sites = [&] {
    std::vector<BeaconSite> out;
    for (double s : chosen) {
      BeaconSite site;
      site.arc_m = s;
      out.push_back(site);
    }
    return out;
  };
  while (chosen.size() < budget) {
    const auto gaps = coverage_gaps(road, as_sites(), options.max_spacing_m);
    if (gaps.empty()) break;
    const auto widest = std::max_element(gaps.begin(), gaps.end(), [](const auto& a, const auto& b) {
      return (a.to_m - a.from_m) < (b.to_m - b.from_m);
    });
    chosen.push_back(0.5 * (widest->from_m + widest->to_m));
  }

  std::sort(chosen.begin(), chosen.end());
  std::vector<BeaconSite> sites;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    BeaconSite site;
    site.beacon_id = fmt::format("B-{:02}", k + 1);
    site.arc_m = chosen[k];
    site.position = road.point_at(chosen[k]);
    site.offset_m = options.offset_m;
    site.beacon_preset = options.preset;
    site.local_vmax_mph = interpolate(arcs, speeds, chosen[k]);
    try {
      const auto rec = recommend_interval(site.local_vmax_mph);
      site.interval_ms = rec.interval_ms;
      site.predicted_battery_days = rec.battery_days;
    } catch (const std::domain_error& e) {
      throw ModelError(fmt::format("site {}: {}", site.beacon_id, e.what()));
    }
    sites.push_back(site);
  }
  return sites;
}

DeploymentPlan plan_deployment(const Road& road, int count_budget, const SitingOptions& options) {
  auto presets = resolve_preset(options.preset);
  presets.lateral_offset_m = options.offset_m;
  DeploymentPlan plan;
  plan.road = road;
  plan.options = options;
  plan.sites = select_sites(road, count_budget, options);
  plan.coverage_gaps = coverage_gaps(road, plan.sites, options.max_spacing_m);
  for (auto& site : plan.sites) {
    site.detection_probability =
        expected_probability(site.local_vmax_mph, site.interval_ms, Mount::WheelArch, presets);
    plan.expected_detections += site.detection_probability;
  }
  return plan;
}

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

Road road_from_line(const json& geometry, const json& properties) {
  if (!geometry.is_object() || geometry.value("type", "") != "LineString")
    throw ConfigError("road GeoJSON: expected a LineString geometry");
  const auto& coords = geometry.at("coordinates");
  if (!coords.is_array()) throw ConfigError("road GeoJSON: coordinates must be an array");
  Road road;
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
      throw ConfigError("road GeoJSON: each coordinate must be [lon, lat]");
    road.polyline.push_back({c[1].get<double>(), c[0].get<double>()});
  }
  if (properties.is_object() && properties.contains("surface_vmax_mph")) {
    if (!properties["surface_vmax_mph"].is_number())
      throw ConfigError("road GeoJSON: surface_vmax_mph must be a number");
    road.surface_vmax_mph = properties["surface_vmax_mph"].get<double>();
  }
  road.validate();
  return road;
}

}  // namespace

Road read_road_geojson(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
    const std::string type = doc.value("type", "");
    if (type == "LineString") return road_from_line(doc, json::object());
    if (type == "Feature") return road_from_line(doc.at("geometry"), doc.value("properties", json::object()));
    if (type == "FeatureCollection") {
      const json* found = nullptr;
      for (const auto& f : doc.at("features")) {
        if (f.contains("geometry") && f["geometry"].is_object() &&
            f["geometry"].value("type", "") == "LineString") {
          if (found) throw ConfigError("road GeoJSON: more than one LineString feature");
          found = &f;
        }
      }
      if (!found) throw ConfigError("road GeoJSON: no LineString feature");
      return road_from_line(found->at("geometry"), found->value("properties", json::object()));
    }
    throw ConfigError(fmt::format("road GeoJSON: unsupported type '{}'", type));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("road GeoJSON: {}", e.what()));
  }
}

Road load_road_geojson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open road file '{}'", path));
  return read_road_geojson(in);
}

void write_plan_geojson(std::ostream& out, const DeploymentPlan& plan) {
  ordered_json features = ordered_json::array();
  for (const auto& s : plan.sites) {
    ordered_json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "Point"}, {"coordinates", {s.position.lon, s.position.lat}}};
    f["properties"] = {{"beacon_id", s.beacon_id},
                       {"interval_ms", s.interval_ms},
                       {"battery_days", s.predicted_battery_days},
                       {"local_vmax_mph", s.local_vmax_mph},
                       {"detection_probability", s.detection_probability},
                       {"arc_m", s.arc_m},
                       {"offset_m", s.offset_m},
                       {"preset", s.beacon_preset}};
    features.push_back(std::move(f));
  }
  for (const auto& g : plan.coverage_gaps) {
    ordered_json coords = ordered_json::array();
    const auto arcs = plan.road.vertex_arcs();
    auto push = [&](LatLon p) { coords.push_back({p.lon, p.lat}); };
    push(plan.road.point_at(g.from_m));
    for (std::size_t i = 0; i < arcs.size(); ++i)
      if (arcs[i] > g.from_m && arcs[i] < g.to_m) push(plan.road.polyline[i]);
    push(plan.road.point_at(g.to_m));
    ordered_json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "LineString"}, {"coordinates", coords}};
    f["properties"] = {{"coverage_gap", true}, {"from_m", g.from_m}, {"to_m", g.to_m}};
    features.push_back(std::move(f));
  }
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = std::move(features);
  out << doc.dump(2) << '\n';
}

void write_plan_summary(std::ostream& out, const DeploymentPlan& plan) {
  out << fmt::format("road length {:.1f} m, {} vertices, cap {} mph\n", plan.road.length_m(),
                     plan.road.polyline.size(), plan.road.surface_vmax_mph);
  out << fmt::format("spacing {} m, a_lat {} m/s^2, preset {}\n\n", plan.options.max_spacing_m,
                     plan.options.a_lat_max, plan.options.preset);
  out << fmt::format("{:<6} {:>9} {:>11} {:>11} {:>8} {:>9} {:>7}\n", "id", "arc_m", "lat", "lon",
                     "vmax", "interval", "P");
  for (const auto& s : plan.sites)
    out << fmt::format("{:<6} {:>9.1f} {:>11.6f} {:>11.6f} {:>8.1f} {:>9} {:>7.3f}\n", s.beacon_id,
                       s.arc_m, s.position.lat, s.position.lon, s.local_vmax_mph, s.interval_ms,
                       s.detection_probability);
  out << fmt::format("\ncoverage gaps: {}\n", plan.coverage_gaps.size());
  for (const auto& g : plan.coverage_gaps)
    out << fmt::format("  {:.1f} .. {:.1f} m\n", g.from_m, g.to_m);
  out << fmt::format("expected detections per traverse: {:.3f}\n", plan.expected_detections);
}

}  // namespace bletrack

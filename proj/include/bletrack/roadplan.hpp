#pragma once

// Road geometry, curvature speed profile and greedy beacon siting.

#include <iosfwd>
#include <string>
#include <vector>

namespace bletrack {

struct LatLon {
  double lat = 0.0;  ///< degrees
  double lon = 0.0;  ///< degrees

  friend bool operator==(const LatLon&, const LatLon&) = default;
};

inline constexpr double kEarthRadiusM = 6371000.0;

/// Great-circle distance on a spherical earth.
double haversine_m(LatLon a, LatLon b);

struct Road {
  std::vector<LatLon> polyline;
  double surface_vmax_mph = 45.0;

  /// Throws ConfigError: fewer than two points, repeated consecutive points,
  /// coordinates out of range, or a non-positive speed cap.
  void validate() const;
  /// Arc length at each vertex, metres; front() == 0.
  std::vector<double> vertex_arcs() const;
  double length_m() const;
  /// Point at arc length `arc_m` (clamped to the road), interpolated within
  /// its segment.
  LatLon point_at(double arc_m) const;
};

struct RoadProjection {
  double arc_m = 0.0;
  double offset_m = 0.0;  ///< distance from the query point to `point`
  LatLon point;
};

/// Closest point on the polyline, using a local flat-earth frame per segment.
RoadProjection project_onto(const Road& road, LatLon p);

inline constexpr double kDefaultLateralAccel = 2.0;  ///< m/s^2

/// Per-vertex comfortable speed in mph: min(vmax, sqrt(a_lat * radius)),
/// radius from the circumcircle of each vertex triple. Endpoints copy their
/// neighbour; two-point roads get vmax everywhere.
std::vector<double> speed_profile(const Road& road, double a_lat_max = kDefaultLateralAccel);

struct BeaconSite {
  std::string beacon_id;
  LatLon position;
  double arc_m = 0.0;
  double offset_m = 2.0;
  std::string beacon_preset = "hm10-bt4";
  double interval_ms = 0.0;
  double predicted_battery_days = 0.0;
  double local_vmax_mph = 0.0;
  double detection_probability = 0.0;  ///< filled by plan_deployment
};

struct SitingOptions {
  double max_spacing_m = 400.0;
  double a_lat_max = kDefaultLateralAccel;
  double offset_m = 2.0;
  std::string preset = "hm10-bt4";
};

/// Stretch of road, by arc length, not within max_spacing/2 of any site.
struct CoverageGap {
  double from_m = 0.0;
  double to_m = 0.0;
};

/// Local speed minima first (slowest first, skipping any within half a
/// spacing of an earlier pick), then the centre of the longest uncovered
/// stretch until the budget is spent or nothing is uncovered. Sites come
/// back sorted by arc length and named B-01, B-02, ...
/// Throws std::invalid_argument when count_budget < 1.
std::vector<BeaconSite> select_sites(const Road& road, int count_budget,
                                     const SitingOptions& options = {});

std::vector<CoverageGap> coverage_gaps(const Road& road, const std::vector<BeaconSite>& sites,
                                       double max_spacing_m);

struct DeploymentPlan {
  Road road;
  SitingOptions options;
  std::vector<BeaconSite> sites;
  std::vector<CoverageGap> coverage_gaps;
  double expected_detections = 0.0;  ///< per traverse at local speeds
};

/// Sites plus per-site single-pass probability at local_vmax. Throws
/// ConfigError for an unknown preset and ModelError when a site's speed is
/// outside the guide's validated envelope.
DeploymentPlan plan_deployment(const Road& road, int count_budget, const SitingOptions& options = {});

/// GeoJSON LineString, Feature or single-LineString FeatureCollection;
/// coordinates are [lon, lat]. An optional `surface_vmax_mph` property sets
/// the cap. Throws ConfigError.
Road read_road_geojson(std::istream& in);
Road load_road_geojson(const std::string& path);

void write_plan_geojson(std::ostream& out, const DeploymentPlan& plan);
void write_plan_summary(std::ostream& out, const DeploymentPlan& plan);

}  // namespace bletrack

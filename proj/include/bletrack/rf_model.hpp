#pragma once

// Log-distance path loss with discrete obstruction materials.
//
//   rssi(d) = rssi_ref - 10 n log10(d) - sum(attenuation[m] for m in materials)
//
// with d in metres (clamped to >= 1 m) and rssi in dBm.

#include <array>
#include <bitset>
#include <cstddef>
#include <initializer_list>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bletrack {

enum class Material : std::size_t {
  None = 0,
  PlasticCase,
  CardboardCase,
  WaterLitre,
  PlasticBag,
  Bonnet,
  VehicleBody,
};

inline constexpr std::size_t kMaterialCount = 7;

std::string_view material_name(Material m);
std::optional<Material> parse_material(std::string_view name);

/// Set of obstructions between beacon and receiver. Text form is a
/// `+`-joined list of material names, e.g. `plastic_case+water`.
class MaterialSet {
 public:
  MaterialSet() = default;
  MaterialSet(std::initializer_list<Material> ms) {
    for (Material m : ms) insert(m);
  }

  void insert(Material m) {
    if (m != Material::None) bits_.set(static_cast<std::size_t>(m));
  }
  bool contains(Material m) const { return bits_.test(static_cast<std::size_t>(m)); }
  bool empty() const { return bits_.none(); }
  friend bool operator==(const MaterialSet&, const MaterialSet&) = default;

  /// Throws std::invalid_argument on an unknown material name.
  static MaterialSet parse(std::string_view text);
  std::string to_string() const;

 private:
  std::bitset<kMaterialCount> bits_;
};

/// Per-material attenuation in dB; None is pinned to 0.
class AttenuationTable {
 public:
  AttenuationTable() { db_.fill(0.0); }

  double operator[](Material m) const { return db_[static_cast<std::size_t>(m)]; }
  /// Throws std::invalid_argument for negative or non-finite values, or a
  /// non-zero value for Material::None.
  void set(Material m, double db);
  double total(const MaterialSet& ms) const;

  friend bool operator==(const AttenuationTable&, const AttenuationTable&) = default;

 private:
  std::array<double, kMaterialCount> db_{};
};

struct PathLossModel {
  double rssi_ref = -70.0;                ///< dBm at 1 m
  double exponent = 2.0;                  ///< dimensionless, in (0.5, 6)
  double reliability_threshold = -95.0;   ///< dBm
  AttenuationTable attenuation;

  /// Throws std::invalid_argument if an invariant is violated.
  void validate() const;

  friend bool operator==(const PathLossModel&, const PathLossModel&) = default;
};

struct RssiSample {
  double distance = 1.0;  ///< metres, > 0
  double rssi = 0.0;      ///< dBm
  MaterialSet materials;
};

/// Predicted RSSI in dBm. Distances in (0, 1) are clamped to 1 m and
/// `near_field_clamped` (if given) is set; non-positive distance throws
/// std::domain_error.
double predict_rssi(const PathLossModel& model, double distance_m,
                    const MaterialSet& materials = {},
                    bool* near_field_clamped = nullptr);

struct DetectionRange {
  double meters = 0.0;
  /// The attenuated 1 m signal is already below the threshold.
  bool dead_on_arrival = false;
};

/// Distance at which the predicted RSSI equals `threshold_dbm`.
DetectionRange detection_range(const PathLossModel& model, double threshold_dbm,
                               const MaterialSet& materials = {});

/// Detection range at the model's own reliability threshold.
inline DetectionRange detection_range(const PathLossModel& model,
                                      const MaterialSet& materials = {}) {
  return detection_range(model, model.reliability_threshold, materials);
}

struct ExponentFit {
  PathLossModel model;
  double exponent = 0.0;
  double stderr_exponent = 0.0;  ///< standard error of the slope estimate
  double rmse_db = 0.0;
  std::vector<double> residuals_db;  ///< observed - predicted, in input order
};

/// Least-squares path-loss exponent with the 1 m reference held fixed.
/// Material attenuation of each sample is taken from `base.attenuation`.
/// Throws ModelError when fewer than two distinct distances are present or
/// no sample lies beyond 1 m.
ExponentFit fit_exponent(const std::vector<RssiSample>& samples, double rssi_ref,
                         const PathLossModel& base = {});

/// Extra loss implied by a shortened range: 10 n log10(clear / obstructed).
double attenuation_from_ranges(double range_clear_m, double range_obstructed_m,
                               double exponent);

/// Exponent such that `rssi_ref - 10 n log10(range) == threshold`.
double exponent_from_anchor(double rssi_ref, double range_m, double threshold_dbm);

/// Parses `distance_m,rssi_dbm,materials` CSV (header required). Throws
/// ConfigError with a line number on malformed input.
std::vector<RssiSample> read_rssi_csv(std::istream& in);

}  // namespace bletrack

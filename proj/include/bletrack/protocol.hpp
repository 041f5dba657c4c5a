#pragma once

// Receiver logging state machine, SMS wire codec, and the server-side
// detection store.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "bletrack/roadplan.hpp"

namespace bletrack {

/// 1-12 characters from [A-Z0-9-].
bool valid_beacon_id(std::string_view id);
/// 1-8 characters from [A-Z0-9-].
bool valid_receiver_id(std::string_view id);

struct DetectionRecord {
  std::string beacon;
  std::uint32_t first_seen_s = 0;  ///< seconds since receiver boot
  std::uint32_t count = 1;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
  friend auto operator<=>(const DetectionRecord&, const DetectionRecord&) = default;
};

// ---------------------------------------------------------------- codec --

inline constexpr int kWireVersion = 1;
inline constexpr std::size_t kSegmentSeptets = 160;

/// Septets needed to send `text` in GSM 7-bit (extension characters such as
/// `|` cost two); nullopt when a character has no GSM-7 encoding.
std::optional<std::size_t> gsm7_septets(std::string_view text);

struct SmsPayload {
  int version = kWireVersion;
  std::string receiver_id;
  int segment_index = 1;  ///< 1-based
  int segment_total = 1;
  std::vector<DetectionRecord> records;
  std::string wire;  ///< `T1|<rx>|<i>/<n>|<id>:<count>:<first_seen>;...`
};

/// Greedy packing into segments of at most 160 septets, records kept in
/// order. Throws std::invalid_argument for an invalid receiver id, an empty
/// record list, or an invalid record (bad beacon id, count 0).
std::vector<SmsPayload> encode_sms(const std::string& receiver_id,
                                   const std::vector<DetectionRecord>& records);

struct DecodeResult {
  std::string receiver_id;
  int segment_total = 0;
  std::vector<DetectionRecord> records;  ///< in segment order
  std::vector<int> missing_segments;
  std::vector<std::string> diagnostics;

  bool complete() const { return segment_total > 0 && missing_segments.empty(); }
};

/// Parses one raw segment. Malformed records are skipped with a diagnostic;
/// a malformed header yields nullopt and a diagnostic.
std::optional<SmsPayload> parse_segment(std::string_view raw, std::vector<std::string>& diagnostics);

/// Reassembles segments in any order; duplicates are ignored. Segments whose
/// receiver or total disagree with the first valid segment are skipped with
/// a diagnostic.
DecodeResult decode_sms(const std::vector<std::string>& segments);

// -------------------------------------------------------------- receiver --

enum class ReceiverMode { Scanning, Reporting, Idle };
std::string_view receiver_mode_name(ReceiverMode m);

inline constexpr std::uint32_t kDefaultDedupWindowS = 300;

struct ReceiverState {
  std::string receiver_id = "RX1";
  std::uint32_t dedup_window_s = kDefaultDedupWindowS;
  ReceiverMode mode = ReceiverMode::Scanning;
  bool gsm_available = false;
  std::vector<DetectionRecord> buffer;  ///< ordered by first_seen
  /// Last sighting time of each beacon's open record (index into buffer).
  std::map<std::string, std::pair<std::size_t, std::uint32_t>> open;
  std::optional<std::uint32_t> last_event_s;

  friend bool operator==(const ReceiverState&, const ReceiverState&) = default;
};

enum class EventKind { Sighting, GsmUp, GsmDown, Tick };

struct ReceiverEvent {
  EventKind kind = EventKind::Tick;
  std::uint32_t t_s = 0;
  std::string beacon;  ///< Sighting only
  double rssi_dbm = 0.0;

  static ReceiverEvent sighting(std::string beacon, double rssi, std::uint32_t t) {
    return {EventKind::Sighting, t, std::move(beacon), rssi};
  }
  static ReceiverEvent gsm_up(std::uint32_t t) { return {EventKind::GsmUp, t, {}, 0.0}; }
  static ReceiverEvent gsm_down(std::uint32_t t) { return {EventKind::GsmDown, t, {}, 0.0}; }
  static ReceiverEvent tick(std::uint32_t t) { return {EventKind::Tick, t, {}, 0.0}; }
};

struct StepResult {
  ReceiverState state;
  std::vector<SmsPayload> outgoing;
  std::optional<std::string> diagnostic;  ///< set when the event was rejected
};

/// A sighting within dedup_window of the beacon's previous sighting bumps the
/// open record; otherwise it starts a new record. GsmUp, or a Tick while GSM
/// is up, emits the buffer and then clears it. Out-of-order timestamps and
/// malformed beacon ids are rejected with the state unchanged.
StepResult receiver_step(const ReceiverState& state, const ReceiverEvent& event);

// ----------------------------------------------------------------- store --

struct RegistryEntry {
  std::string beacon_id;
  LatLon position;
  double interval_ms = 0.0;
  std::string preset;
};

using BeaconRegistry = std::map<std::string, RegistryEntry>;

/// CSV `beacon_id,lat,lon,interval_ms,preset`. Throws ConfigError.
BeaconRegistry read_registry_csv(std::istream& in);
BeaconRegistry load_registry_csv(const std::string& path);
void write_registry_csv(std::ostream& out, const BeaconRegistry& registry);

struct DetectionEvent {
  std::string receiver_id;
  std::string beacon_id;
  std::uint32_t count = 1;
  std::uint32_t first_seen_s = 0;
  std::string received_at;
  std::optional<LatLon> position;  ///< nullopt = quarantined
  std::string merge_key;

  bool quarantined() const { return !position.has_value(); }
  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

/// Identity of one merge: receiver, canonical record text and receipt time.
std::string merge_key(const std::string& receiver_id, const std::vector<DetectionRecord>& records,
                      const std::string& received_at);

struct MergeOutcome {
  std::size_t appended = 0;
  std::size_t quarantined = 0;
  bool duplicate = false;
  std::vector<DetectionEvent> new_events;
};

/// Detection events kept in canonical order (received_at, receiver,
/// first_seen, beacon), so the contents do not depend on merge order.
/// Merges are serialised; readers may run concurrently.
class DetectionStore {
 public:
  DetectionStore() = default;
  DetectionStore(const DetectionStore& other);
  DetectionStore& operator=(const DetectionStore& other);

  /// Idempotent per merge_key. Unknown beacons are kept, quarantined.
  MergeOutcome merge(const std::string& receiver_id, const std::vector<DetectionRecord>& records,
                     const BeaconRegistry& registry, const std::string& received_at);

  std::vector<DetectionEvent> events() const;
  std::size_t size() const;
  bool contains_key(const std::string& key) const;

  /// Adds an already-resolved event (used when loading a store file).
  void restore(const DetectionEvent& event);

 private:
  mutable std::shared_mutex mutex_;
  std::vector<DetectionEvent> events_;
  std::set<std::string> keys_;
};

/// Convenience wrapper over DetectionStore::merge.
MergeOutcome merge_detections(DetectionStore& store, const DecodeResult& payload,
                              const BeaconRegistry& registry, const std::string& received_at);

/// One JSON object per line. Throws ConfigError with a line number.
DetectionStore read_store_ndjson(std::istream& in);
DetectionStore load_store(const std::string& path);  ///< missing file = empty store
void append_events_ndjson(std::ostream& out, const std::vector<DetectionEvent>& events);
void append_to_store(const std::string& path, const std::vector<DetectionEvent>& events);

/// FeatureCollection with one Point per event; quarantined events carry a
/// null geometry.
void write_detections_geojson(std::ostream& out, const std::vector<DetectionEvent>& events);

}  // namespace bletrack

#include "bletrack/protocol.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#include "bletrack/error.hpp"
#include "text_util.hpp"

namespace bletrack {

namespace {

bool id_charset(std::string_view id, std::size_t max_len) {
  if (id.empty() || id.size() > max_len) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-';
  });
}

std::string record_text(const DetectionRecord& r) {
  return fmt::format("{}:{}:{}", r.beacon, r.count, r.first_seen_s);
}

std::string segment_header(const std::string& rx, int index, int total) {
  return fmt::format("T{}|{}|{}/{}|", kWireVersion, rx, index, total);
}

int digits(int n) { return static_cast<int>(std::to_string(n).size()); }

}  // namespace

bool valid_beacon_id(std::string_view id) { return id_charset(id, 12); }
bool valid_receiver_id(std::string_view id) { return id_charset(id, 8); }

std::optional<std::size_t> gsm7_septets(std::string_view text) {
  static constexpr std::string_view kExtension = "^{}\\[~]|";
  std::size_t n = 0;
  for (char c : text) {
    const bool basic = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                       std::string_view(" !\"#%&'()*+,-./:;<=>?@$_\n\r").find(c) != std::string_view::npos;
    if (basic) {
      n += 1;
    } else if (kExtension.find(c) != std::string_view::npos) {
      n += 2;
    } else {
      return std::nullopt;
    }
  }
  return n;
}

std::vector<SmsPayload> encode_sms(const std::string& receiver_id,
                                   const std::vector<DetectionRecord>& records) {
  if (!valid_receiver_id(receiver_id))
    throw std::invalid_argument(fmt::format("encode_sms: invalid receiver id '{}'", receiver_id));
  if (records.empty()) throw std::invalid_argument("encode_sms: no records");
  std::vector<std::string> texts;
  for (const auto& r : records) {
    if (!valid_beacon_id(r.beacon))
      throw std::invalid_argument(fmt::format("encode_sms: invalid beacon id '{}'", r.beacon));
    if (r.count == 0) throw std::invalid_argument("encode_sms: record count must be >= 1");
    texts.push_back(record_text(r));
  }

  // The header width depends on the digit count of the total, so repack
  // until the guess is stable.
  int total_guess = 1;
  for (;;) {
    std::vector<std::vector<std::size_t>> groups;
    std::size_t used = 0;
    for (std::size_t k = 0; k < texts.size(); ++k) {
      const std::size_t cost = *gsm7_septets(texts[k]);
      if (!groups.empty() && used + 1 + cost <= kSegmentSeptets) {
        groups.back().push_back(k);
        used += 1 + cost;
        continue;
      }
      const int index = static_cast<int>(groups.size()) + 1;
      const std::size_t header = *gsm7_septets(segment_header(receiver_id, index, total_guess));
      if (header + cost > kSegmentSeptets) throw std::logic_error("encode_sms: record exceeds a segment");
      groups.push_back({k});
      used = header + cost;
    }
    const int total = static_cast<int>(groups.size());
    if (digits(total) != digits(total_guess)) {
      total_guess = total;
      continue;
    }

    std::vector<SmsPayload> out;
    for (int i = 0; i < total; ++i) {
      SmsPayload p;
      p.receiver_id = receiver_id;
      p.segment_index = i + 1;
      p.segment_total = total;
      p.wire = segment_header(receiver_id, i + 1, total);
      for (std::size_t j = 0; j < groups[i].size(); ++j) {
        if (j) p.wire += ';';
        p.wire += texts[groups[i][j]];
        p.records.push_back(records[groups[i][j]]);
      }
      out.push_back(std::move(p));
    }
    return out;
  }
}

std::optional<SmsPayload> parse_segment(std::string_view raw, std::vector<std::string>& diagnostics) {
  raw = detail::trim(raw);
  const auto parts = detail::split(raw, '|');
  if (parts.size() != 4) {
    diagnostics.push_back(fmt::format("segment '{}': expected 4 '|'-separated fields", raw));
    return std::nullopt;
  }
  SmsPayload p;
  p.wire = std::string(raw);
  const auto version = parts[0].size() > 1 && parts[0][0] == 'T' ? detail::parse_decimal(parts[0].substr(1))
                                                                   : std::nullopt;
  if (!version || *version != kWireVersion) {
    diagnostics.push_back(fmt::format("segment '{}': unsupported version '{}'", raw, parts[0]));
    return std::nullopt;
  }
  p.version = kWireVersion;
  if (!valid_receiver_id(parts[1])) {
    diagnostics.push_back(fmt::format("segment '{}': invalid receiver id", raw));
    return std::nullopt;
  }
  p.receiver_id = std::string(parts[1]);
  const auto seg = detail::split(parts[2], '/');
  const auto index = seg.size() == 2 ? detail::parse_decimal(seg[0]) : std::nullopt;
  const auto total = seg.size() == 2 ? detail::parse_decimal(seg[1]) : std::nullopt;
  if (!index || !total || *index < 1 || *index > *total || *total > 9999) {
    diagnostics.push_back(fmt::format("segment '{}': bad segment number '{}'", raw, parts[2]));
    return std::nullopt;
  }
  p.segment_index = static_cast<int>(*index);
  p.segment_total = static_cast<int>(*total);

  const auto body = detail::split(parts[3], ';');
  for (std::size_t k = 0; k < body.size(); ++k) {
    const auto fields = detail::split(body[k], ':');
    const auto count = fields.size() == 3 ? detail::parse_decimal(fields[1]) : std::nullopt;
    const auto first = fields.size() == 3 ? detail::parse_decimal(fields[2]) : std::nullopt;
    constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
    if (fields.size() != 3 || !valid_beacon_id(fields[0]) || !count || *count == 0 || *count > kMax ||
        !first || *first > kMax) {
      diagnostics.push_back(fmt::format("segment {}/{}: skipped malformed record '{}'", p.segment_index,
                                        p.segment_total, body[k]));
      continue;
    }
    p.records.push_back({std::string(fields[0]), static_cast<std::uint32_t>(*first),
                         static_cast<std::uint32_t>(*count)});
  }
  return p;
}

DecodeResult decode_sms(const std::vector<std::string>& segments) {
  DecodeResult result;
  std::map<int, SmsPayload> by_index;
  for (const auto& raw : segments) {
    auto p = parse_segment(raw, result.diagnostics);
    if (!p) continue;
    if (result.segment_total == 0) {
      result.receiver_id = p->receiver_id;
      result.segment_total = p->segment_total;
    } else if (p->receiver_id != result.receiver_id || p->segment_total != result.segment_total) {
      result.diagnostics.push_back(fmt::format("segment '{}': receiver or total differs from '{}' x{}; skipped",
                                               p->wire, result.receiver_id, result.segment_total));
      continue;
    }
    auto [it, inserted] = by_index.emplace(p->segment_index, *p);
    if (!inserted && it->second.records != p->records)
      result.diagnostics.push_back(
          fmt::format("segment {}: conflicting duplicate; keeping the first copy", p->segment_index));
  }
  if (result.segment_total == 0) {
    result.diagnostics.push_back("no valid segments");
    return result;
  }
  for (int i = 1; i <= result.segment_total; ++i) {
    const auto it = by_index.find(i);
    if (it == by_index.end()) {
      result.missing_segments.push_back(i);
      continue;
    }
    result.records.insert(result.records.end(), it->second.records.begin(), it->second.records.end());
  }
  return result;
}

std::string_view receiver_mode_name(ReceiverMode m) {
  switch (m) {
    case ReceiverMode::Scanning: return "scanning";
    case ReceiverMode::Reporting: return "reporting";
    case ReceiverMode::Idle: return "idle";
  }
  return "?";
}

StepResult receiver_step(const ReceiverState& state, const ReceiverEvent& event) {
  StepResult r{state, {}, std::nullopt};
  if (state.last_event_s && event.t_s < *state.last_event_s) {
    r.diagnostic = fmt::format("event at {} s precedes the previous event at {} s; rejected", event.t_s,
                               *state.last_event_s);
    return r;
  }
  if (event.kind == EventKind::Sighting && !valid_beacon_id(event.beacon)) {
    r.diagnostic = fmt::format("sighting with invalid beacon id '{}'; rejected", event.beacon);
    return r;
  }

  ReceiverState& s = r.state;
  s.last_event_s = event.t_s;
  auto flush = [&] {
    if (s.buffer.empty()) return;
    r.outgoing = encode_sms(s.receiver_id, s.buffer);
    s.buffer.clear();
    s.open.clear();
  };

  switch (event.kind) {
    case EventKind::Sighting: {
      auto it = s.open.find(event.beacon);
      if (it != s.open.end() && event.t_s - it->second.second <= s.dedup_window_s) {
        auto& rec = s.buffer[it->second.first];
        if (rec.count < std::numeric_limits<std::uint32_t>::max()) ++rec.count;
        it->second.second = event.t_s;
      } else {
        s.buffer.push_back({event.beacon, event.t_s, 1});
        s.open[event.beacon] = {s.buffer.size() - 1, event.t_s};
      }
      s.mode = s.gsm_available ? ReceiverMode::Reporting : ReceiverMode::Scanning;
      break;
    }
    case EventKind::GsmUp:
      s.gsm_available = true;
      flush();
      s.mode = ReceiverMode::Idle;
      break;
    case EventKind::Tick:
      if (s.gsm_available) {
        flush();
        s.mode = ReceiverMode::Idle;
      }
      break;
    case EventKind::GsmDown:
      s.gsm_available = false;
      s.mode = ReceiverMode::Scanning;
      break;
  }
  return r;
}

BeaconRegistry read_registry_csv(std::istream& in) {
  BeaconRegistry reg;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto cols = detail::split(view, ',');
    if (!header) {
      if (view != "beacon_id,lat,lon,interval_ms,preset")
        throw ConfigError(fmt::format("registry line {}: expected header 'beacon_id,lat,lon,interval_ms,preset'", line_no));
      header = true;
      continue;
    }
    if (cols.size() != 5) throw ConfigError(fmt::format("registry line {}: expected 5 columns", line_no));
    RegistryEntry e;
    e.beacon_id = std::string(detail::trim(cols[0]));
    if (!valid_beacon_id(e.beacon_id))
      throw ConfigError(fmt::format("registry line {}: invalid beacon id '{}'", line_no, e.beacon_id));
    const auto lat = detail::parse_double(cols[1]);
    const auto lon = detail::parse_double(cols[2]);
    const auto interval = detail::parse_double(cols[3]);
    if (!lat || !lon || !(std::abs(*lat) <= 90.0) || !(std::abs(*lon) <= 180.0))
      throw ConfigError(fmt::format("registry line {}: bad coordinates", line_no));
    if (!interval || !(*interval > 0.0))
      throw ConfigError(fmt::format("registry line {}: bad interval", line_no));
    e.position = {*lat, *lon};
    e.interval_ms = *interval;
    e.preset = std::string(detail::trim(cols[4]));
    if (!reg.emplace(e.beacon_id, e).second)
      throw ConfigError(fmt::format("registry line {}: duplicate beacon id '{}'", line_no, e.beacon_id));
  }
  if (!header) throw ConfigError("registry: missing header");
  return reg;
}

BeaconRegistry load_registry_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open registry '{}'", path));
  return read_registry_csv(in);
}

void write_registry_csv(std::ostream& out, const BeaconRegistry& registry) {
  out << "beacon_id,lat,lon,interval_ms,preset\n";
  for (const auto& [id, e] : registry)
    out << fmt::format("{},{},{},{},{}\n", id, e.position.lat, e.position.lon, e.interval_ms, e.preset);
}

std::string merge_key(const std::string& receiver_id, const std::vector<DetectionRecord>& records,
                      const std::string& received_at) {
  std::string key = receiver_id + "|";
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i) key += ';';
    key += record_text(records[i]);
  }
  return key + "|" + received_at;
}

namespace {

auto order_key(const DetectionEvent& e) {
  return std::tie(e.received_at, e.receiver_id, e.first_seen_s, e.beacon_id, e.count, e.merge_key);
}

void insert_sorted(std::vector<DetectionEvent>& events, const DetectionEvent& e) {
  const auto pos = std::upper_bound(events.begin(), events.end(), e,
                                    [](const auto& a, const auto& b) { return order_key(a) < order_key(b); });
  events.insert(pos, e);
}

}  // namespace

DetectionStore::DetectionStore(const DetectionStore& other) {
  std::shared_lock lock(other.mutex_);
  events_ = other.events_;
  keys_ = other.keys_;
}

DetectionStore& DetectionStore::operator=(const DetectionStore& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_);
  std::shared_lock other_lock(other.mutex_);
  events_ = other.events_;
  keys_ = other.keys_;
  return *this;
}

MergeOutcome DetectionStore::merge(const std::string& receiver_id, const std::vector<DetectionRecord>& records,
                                   const BeaconRegistry& registry, const std::string& received_at) {
  MergeOutcome out;
  const auto key = merge_key(receiver_id, records, received_at);
  std::unique_lock lock(mutex_);
  if (keys_.count(key)) {
    out.duplicate = true;
    return out;
  }
  keys_.insert(key);
  for (const auto& r : records) {
    DetectionEvent e;
    e.receiver_id = receiver_id;
    e.beacon_id = r.beacon;
    e.count = r.count;
    e.first_seen_s = r.first_seen_s;
    e.received_at = received_at;
    e.merge_key = key;
    if (const auto it = registry.find(r.beacon); it != registry.end()) {
      e.position = it->second.position;
    } else {
      ++out.quarantined;
    }
    insert_sorted(events_, e);
    out.new_events.push_back(std::move(e));
    ++out.appended;
  }
  return out;
}

std::vector<DetectionEvent> DetectionStore::events() const {
  std::shared_lock lock(mutex_);
  return events_;
}

std::size_t DetectionStore::size() const {
  std::shared_lock lock(mutex_);
  return events_.size();
}

bool DetectionStore::contains_key(const std::string& key) const {
  std::shared_lock lock(mutex_);
  return keys_.count(key) != 0;
}

void DetectionStore::restore(const DetectionEvent& event) {
  std::unique_lock lock(mutex_);
  keys_.insert(event.merge_key);
  insert_sorted(events_, event);
}

MergeOutcome merge_detections(DetectionStore& store, const DecodeResult& payload,
                              const BeaconRegistry& registry, const std::string& received_at) {
  return store.merge(payload.receiver_id, payload.records, registry, received_at);
}

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

}  // namespace

DetectionStore read_store_ndjson(std::istream& in) {
  DetectionStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      DetectionEvent e;
      e.receiver_id = j.at("receiver_id").get<std::string>();
      e.beacon_id = j.at("beacon_id").get<std::string>();
      e.count = j.at("count").get<std::uint32_t>();
      e.first_seen_s = j.at("first_seen_s").get<std::uint32_t>();
      e.received_at = j.at("received_at").get<std::string>();
      e.merge_key = j.at("merge_key").get<std::string>();
      if (!j.at("lat").is_null()) e.position = LatLon{j.at("lat").get<double>(), j.at("lon").get<double>()};
      store.restore(e);
    } catch (const json::exception& ex) {
      throw ConfigError(fmt::format("store line {}: {}", line_no, ex.what()));
    }
  }
  return store;
}

DetectionStore load_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {};
  return read_store_ndjson(in);
}

void append_events_ndjson(std::ostream& out, const std::vector<DetectionEvent>& events) {
  for (const auto& e : events) {
    ordered_json j;
    j["receiver_id"] = e.receiver_id;
    j["beacon_id"] = e.beacon_id;
    j["count"] = e.count;
    j["first_seen_s"] = e.first_seen_s;
    j["received_at"] = e.received_at;
    j["lat"] = e.position ? json(e.position->lat) : json(nullptr);
    j["lon"] = e.position ? json(e.position->lon) : json(nullptr);
    j["quarantined"] = e.quarantined();
    j["merge_key"] = e.merge_key;
    out << j.dump() << '\n';
  }
}

void append_to_store(const std::string& path, const std::vector<DetectionEvent>& events) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError(fmt::format("cannot open store '{}' for append", path));
  append_events_ndjson(out, events);
}

void write_detections_geojson(std::ostream& out, const std::vector<DetectionEvent>& events) {
  ordered_json features = ordered_json::array();
  for (const auto& e : events) {
    ordered_json f;
    f["type"] = "Feature";
    if (e.position)
      f["geometry"] = {{"type", "Point"}, {"coordinates", {e.position->lon, e.position->lat}}};
    else
      f["geometry"] = nullptr;
    f["properties"] = {{"beacon_id", e.beacon_id},     {"receiver_id", e.receiver_id},
                       {"count", e.count},             {"first_seen_s", e.first_seen_s},
                       {"received_at", e.received_at}, {"quarantined", e.quarantined()}};
    features.push_back(std::move(f));
  }
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = std::move(features);
  out << doc.dump(2) << '\n';
}

}  // namespace bletrack

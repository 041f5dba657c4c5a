#include <doctest.h>

#include <algorithm>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "bletrack/error.hpp"
#include "bletrack/protocol.hpp"
#include "replay_oracle.hpp"

using namespace bletrack;

namespace {

std::vector<std::string> wires(const std::vector<SmsPayload>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.wire);
  return out;
}

std::string random_id(std::mt19937_64& gen, std::size_t max_len) {
  static constexpr std::string_view chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-";
  std::uniform_int_distribution<std::size_t> len(1, max_len), pick(0, chars.size() - 1);
  std::string s(len(gen), ' ');
  for (char& c : s) c = chars[pick(gen)];
  return s;
}

std::uint32_t random_u32(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> kind(0, 3);
  switch (kind(gen)) {
    case 0: return std::uniform_int_distribution<std::uint32_t>(1, 9)(gen);
    case 1: return std::uniform_int_distribution<std::uint32_t>(1, 100000)(gen);
    case 2: return std::numeric_limits<std::uint32_t>::max();
    default: return std::uniform_int_distribution<std::uint32_t>(1, std::numeric_limits<std::uint32_t>::max())(gen);
  }
}

}  // namespace

TEST_CASE("identifiers") {
  CHECK(valid_beacon_id("B-01"));
  CHECK(valid_beacon_id("ABCDEFGHIJKL"));
  CHECK_FALSE(valid_beacon_id("ABCDEFGHIJKLM"));
  CHECK_FALSE(valid_beacon_id(""));
  CHECK_FALSE(valid_beacon_id("b-01"));
  CHECK_FALSE(valid_beacon_id("B_01"));
  CHECK(valid_receiver_id("RX1"));
  CHECK_FALSE(valid_receiver_id("RECEIVER9"));
}

TEST_CASE("gsm7 septets") {
  CHECK(gsm7_septets("ABC xyz 019:;/-") == 15u);
  CHECK(gsm7_septets("|") == 2u);
  CHECK(gsm7_septets("T1|RX1|1/1|B-01:1:10") == 23u);
  CHECK_FALSE(gsm7_septets("`").has_value());
  CHECK_FALSE(gsm7_septets("\x7f").has_value());
  CHECK_FALSE(gsm7_septets("\xc3\xa9").has_value());
}

TEST_CASE("encode and decode examples") {
  const std::vector<DetectionRecord> one{{"B-01", 10, 1}};
  const auto enc = encode_sms("RX1", one);
  REQUIRE(enc.size() == 1);
  CHECK(enc[0].wire == "T1|RX1|1/1|B-01:1:10");
  const auto dec = decode_sms({enc[0].wire});
  CHECK(dec.receiver_id == "RX1");
  CHECK(dec.records == one);
  CHECK(dec.complete());
  CHECK(dec.diagnostics.empty());

  // 40 records of maximal width
  std::vector<DetectionRecord> wide;
  for (int i = 0; i < 40; ++i)
    wide.push_back({fmt::format("WIDEBEACON{:02}", i), std::numeric_limits<std::uint32_t>::max(),
                    std::numeric_limits<std::uint32_t>::max()});
  const auto parts = encode_sms("RX123456", wide);
  CHECK(parts.size() > 1);
  for (const auto& p : parts) {
    // brute-force length: every char is one septet except '|', which is two
    std::size_t septets = 0;
    for (char c : p.wire) septets += c == '|' ? 2 : 1;
    CHECK(septets <= 160);
    CHECK(gsm7_septets(p.wire) == septets);
    CHECK(p.segment_total == static_cast<int>(parts.size()));
  }

  auto w = wires(parts);
  std::reverse(w.begin(), w.end());
  CHECK(decode_sms(w).records == wide);
  w.push_back(w.front());
  w.push_back(w.back());
  CHECK(decode_sms(w).records == wide);

  const auto two = decode_sms({parts[0].wire});
  CHECK_FALSE(two.complete());
  CHECK(two.missing_segments.size() == parts.size() - 1);
  CHECK(two.missing_segments.front() == 2);
  CHECK(two.records == parts[0].records);

  CHECK_THROWS_AS(encode_sms("RX1", {}), std::invalid_argument);
  CHECK_THROWS_AS(encode_sms("rx1", one), std::invalid_argument);
  CHECK_THROWS_AS(encode_sms("RX1", {{"B-01", 10, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(encode_sms("RX1", {{"b 01", 10, 1}}), std::invalid_argument);
}

TEST_CASE("decode diagnostics") {
  const auto r = decode_sms({"T1|RX1|1/1|B-01:1:10;B-02:x:5;B-03:0:7;B-04:2:007;B-05:3:30"});
  CHECK(r.records == std::vector<DetectionRecord>{{"B-01", 10, 1}, {"B-05", 30, 3}});
  CHECK(r.diagnostics.size() == 3);
  CHECK(r.complete());

  const auto junk = decode_sms({"hello", "T2|RX1|1/1|B-01:1:10", "T1|RX1|2/1|B-01:1:10"});
  CHECK(junk.segment_total == 0);
  CHECK(junk.diagnostics.size() == 4);

  const auto mixed = decode_sms({"T1|RX1|1/2|B-01:1:10", "T1|RX2|2/2|B-02:1:11"});
  CHECK(mixed.missing_segments == std::vector<int>{2});
  CHECK(mixed.diagnostics.size() == 1);

  const auto conflict = decode_sms({"T1|RX1|1/1|B-01:1:10", "T1|RX1|1/1|B-01:2:10"});
  CHECK(conflict.records == std::vector<DetectionRecord>{{"B-01", 10, 1}});
  CHECK(conflict.diagnostics.size() == 1);
}

TEST_CASE("codec round trip property") {
  std::mt19937_64 gen(20190401);
  std::uniform_int_distribution<int> nrec(1, 60);
  std::size_t failures = 0, segments = 0;
  for (int c = 0; c < 10000; ++c) {
    const std::string rx = random_id(gen, 8);
    std::vector<DetectionRecord> recs(nrec(gen));
    for (auto& r : recs) r = {random_id(gen, 12), random_u32(gen), random_u32(gen)};
    const auto enc = encode_sms(rx, recs);
    auto w = wires(enc);
    for (const auto& p : enc) {
      ++segments;
      const auto septets = gsm7_septets(p.wire);
      if (!septets || *septets > kSegmentSeptets) ++failures;
    }
    std::shuffle(w.begin(), w.end(), gen);
    if (w.size() > 1) w.push_back(w[gen() % w.size()]);
    const auto dec = decode_sms(w);
    if (dec.receiver_id != rx || dec.records != recs || !dec.complete() || !dec.diagnostics.empty()) ++failures;
  }
  CHECK(failures == 0);
  CHECK(segments > 10000);
}

TEST_CASE("receiver examples") {
  ReceiverState s;
  auto r = receiver_step(s, ReceiverEvent::sighting("B-01", -80, 10));
  CHECK(r.state.buffer == std::vector<DetectionRecord>{{"B-01", 10, 1}});
  CHECK(r.outgoing.empty());
  r = receiver_step(r.state, ReceiverEvent::sighting("B-01", -82, 12));
  CHECK(r.state.buffer == std::vector<DetectionRecord>{{"B-01", 10, 2}});

  const auto up_empty = receiver_step(ReceiverState{}, ReceiverEvent::gsm_up(1));
  CHECK(up_empty.outgoing.empty());
  CHECK(up_empty.state.mode == ReceiverMode::Idle);

  const auto up = receiver_step(r.state, ReceiverEvent::gsm_up(20));
  REQUIRE(up.outgoing.size() == 1);
  CHECK(up.outgoing[0].wire == "T1|RX1|1/1|B-01:2:10");
  CHECK(up.state.buffer.empty());

  // sighting while connected waits for the next tick
  auto rep = receiver_step(up.state, ReceiverEvent::sighting("B-02", -70, 30));
  CHECK(rep.state.mode == ReceiverMode::Reporting);
  rep = receiver_step(rep.state, ReceiverEvent::tick(31));
  CHECK(rep.outgoing.size() == 1);
  CHECK(rep.state.mode == ReceiverMode::Idle);
  const auto down = receiver_step(rep.state, ReceiverEvent::gsm_down(40));
  CHECK(down.state.mode == ReceiverMode::Scanning);

  // beyond the dedup window a new record starts
  auto late = receiver_step(r.state, ReceiverEvent::sighting("B-01", -80, 12 + 301));
  CHECK(late.state.buffer.size() == 2);

  const auto back = receiver_step(r.state, ReceiverEvent::sighting("B-03", -80, 5));
  CHECK(back.diagnostic.has_value());
  CHECK(back.state == r.state);
  const auto bad = receiver_step(r.state, ReceiverEvent::sighting("b3", -80, 50));
  CHECK(bad.diagnostic.has_value());
  CHECK(bad.state == r.state);
}

TEST_CASE("receiver replay oracle") {
  std::mt19937_64 gen(7);
  CHECK(testing::replay_mismatches(gen, 1000) == 0);
}

namespace {

BeaconRegistry sample_registry() {
  std::istringstream in("beacon_id,lat,lon,interval_ms,preset\nB-01,5.41,118.03,700,hm10-bt4\nB-02,5.42,118.04,1200,hm10-bt4\n");
  return read_registry_csv(in);
}

}  // namespace

TEST_CASE("registry csv") {
  const auto reg = sample_registry();
  REQUIRE(reg.size() == 2);
  CHECK(reg.at("B-01").position == LatLon{5.41, 118.03});
  CHECK(reg.at("B-02").interval_ms == 1200.0);
  std::ostringstream out;
  write_registry_csv(out, reg);
  std::istringstream back(out.str());
  const auto again = read_registry_csv(back);
  CHECK(again.at("B-01").position == reg.at("B-01").position);

  for (const char* text : {"", "id,lat\n", "beacon_id,lat,lon,interval_ms,preset\nb1,1,2,700,x\n",
                           "beacon_id,lat,lon,interval_ms,preset\nB1,91,2,700,x\n",
                           "beacon_id,lat,lon,interval_ms,preset\nB1,1,2,0,x\n",
                           "beacon_id,lat,lon,interval_ms,preset\nB1,1,2,700,x\nB1,1,2,700,x\n"}) {
    std::istringstream in(text);
    CHECK_THROWS_AS(read_registry_csv(in), ConfigError);
  }
}

TEST_CASE("merge_detections") {
  const auto reg = sample_registry();
  DetectionStore store;
  const auto payload = decode_sms({"T1|RX1|1/1|B-01:1:10;B-99:1:40"});
  const auto first = merge_detections(store, payload, reg, "2019-04-01T10:00:00Z");
  CHECK(first.appended == 2);
  CHECK(first.quarantined == 1);
  const auto events = store.events();
  REQUIRE(events.size() == 2);
  CHECK(events[0].beacon_id == "B-01");
  CHECK(events[0].position == LatLon{5.41, 118.03});
  CHECK(events[1].beacon_id == "B-99");
  CHECK(events[1].quarantined());
  CHECK(events[1].count == 1);

  const auto again = merge_detections(store, payload, reg, "2019-04-01T10:00:00Z");
  CHECK(again.duplicate);
  CHECK(store.events() == events);
  // a later receipt of the same text is a separate report
  CHECK(merge_detections(store, payload, reg, "2019-04-02T10:00:00Z").appended == 2);
}

TEST_CASE("store is merge-order insensitive and linearizable") {
  const auto reg = sample_registry();
  std::mt19937_64 gen(4);
  std::vector<std::tuple<std::string, std::vector<DetectionRecord>, std::string>> payloads;
  for (int i = 0; i < 60; ++i) {
    std::vector<DetectionRecord> recs;
    for (int k = 0; k < 3; ++k) recs.push_back({gen() % 3 ? "B-01" : "B-77", random_u32(gen), 1 + static_cast<std::uint32_t>(gen() % 5)});
    payloads.push_back({"RX" + std::to_string(gen() % 3), recs, "2019-04-0" + std::to_string(1 + gen() % 5) + "T00:00:00Z"});
  }
  DetectionStore sequential;
  for (const auto& [rx, recs, at] : payloads) sequential.merge(rx, recs, reg, at);

  auto shuffled = payloads;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  DetectionStore reordered;
  for (const auto& [rx, recs, at] : shuffled) reordered.merge(rx, recs, reg, at);
  for (const auto& [rx, recs, at] : payloads) reordered.merge(rx, recs, reg, at);
  CHECK(reordered.events() == sequential.events());

  DetectionStore concurrent;
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < 4; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < payloads.size(); i += 4) {
          const auto& [rx, recs, at] = payloads[i];
          concurrent.merge(rx, recs, reg, at);
          (void)concurrent.size();
        }
      });
  }
  CHECK(concurrent.events() == sequential.events());

  std::stringstream file;
  append_events_ndjson(file, sequential.events());
  const auto loaded = read_store_ndjson(file);
  CHECK(loaded.events() == sequential.events());
  const auto& [rx0, recs0, at0] = payloads[0];
  CHECK(loaded.contains_key(merge_key(rx0, recs0, at0)));

  std::istringstream broken("{\"receiver_id\":1}\n");
  CHECK_THROWS_AS(read_store_ndjson(broken), ConfigError);
}

TEST_CASE("detections geojson") {
  DetectionStore store;
  store.merge("RX1", {{"B-01", 10, 2}, {"B-99", 11, 1}}, sample_registry(), "2019-04-01T10:00:00Z");
  std::ostringstream out;
  write_detections_geojson(out, store.events());
  const auto doc = nlohmann::json::parse(out.str());
  REQUIRE(doc["features"].size() == 2);
  const auto& f = doc["features"][0];
  CHECK(f["geometry"]["coordinates"][0] == 118.03);
  CHECK(f["properties"]["count"] == 2);
  CHECK(f["properties"]["receiver_id"] == "RX1");
  CHECK(doc["features"][1]["geometry"].is_null());
  CHECK(doc["features"][1]["properties"]["quarantined"] == true);
}

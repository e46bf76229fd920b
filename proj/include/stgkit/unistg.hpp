#pragma once

#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "stgkit/errors.hpp"
#include "stgkit/geometry.hpp"
#include "stgkit/log.hpp"
#include "stgkit/records.hpp"
#include "stgkit/sequencing.hpp"

namespace stgkit::unistg {

using json = nlohmann::json;

// Source caption with the dataset's (possibly sloppy) time annotation.
struct CaptionRecord {
  std::string id;
  std::string video_ref;
  double duration_s = 0.0;
  std::string caption;
  TimeSpan raw_span;
};

struct Detection {
  int frame_index = 0;
  BBox box;
  double score = 0.0;
  std::string label;
};

struct SynthesisConfig {
  double conf_threshold = 0.3;
  int max_boxes_per_frame = 3;
  double area_ratio_low = 0.5;
  double area_ratio_high = 2.0;
  double min_duration_s = 2.0;
  double max_duration_s = 120.0;
  int n_frames = 64;
  int max_in_flight_requests = 1;
  int request_retries = 2;
  std::string analyzer_url;
  std::string detector_url;
  std::optional<std::string> mock_fixture_path;
};

enum class RejectReason {
  NoObject,
  NoDetections,
  DurationTooShort,
  DurationTooLong,
  ComplexScene,
  AreaInstability,
};

inline const char* reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::NoObject: return "NoObject";
    case RejectReason::NoDetections: return "NoDetections";
    case RejectReason::DurationTooShort: return "DurationTooShort";
    case RejectReason::DurationTooLong: return "DurationTooLong";
    case RejectReason::ComplexScene: return "ComplexScene";
    case RejectReason::AreaInstability: return "AreaInstability";
  }
  return "?";
}

inline constexpr RejectReason kAllReasons[] = {
    RejectReason::NoObject,        RejectReason::NoDetections,
    RejectReason::DurationTooShort, RejectReason::DurationTooLong,
    RejectReason::ComplexScene,    RejectReason::AreaInstability,
};

struct Rejection {
  RejectReason reason;
  std::string detail;
};

// A finished training record.
struct SynthRecord {
  std::string id;
  std::string video_ref;
  double duration_s = 0.0;
  std::string caption;
  TimeSpan span;
  Tube tube;
  std::string instruction;
};

using SynthesisOutcome = std::variant<SynthRecord, Rejection>;

struct SynthesisStats {
  std::size_t total = 0;
  std::size_t emitted = 0;
  std::map<RejectReason, std::size_t> reasons;

  std::size_t rejected() const { return total - emitted; }
  double rejection_rate() const {
    return total == 0 ? 0.0 : static_cast<double>(rejected()) / static_cast<double>(total);
  }
};

struct SynthesisResult {
  std::vector<SynthRecord> records;
  std::vector<std::pair<std::string, Rejection>> rejections;  // (record id, why)
  SynthesisStats stats;
};

// Canonical request bodies. Mock fixtures are keyed on the compact dump of
// these objects, so both sides must build them through here.
inline json analyze_request(const std::string& caption) { return {{"caption", caption}}; }

inline json detect_request(const std::string& video_ref, int frame_index,
                           const std::string& prompt) {
  return {{"frame_index", frame_index}, {"prompt", prompt}, {"video_ref", video_ref}};
}

// Implementations must tolerate concurrent calls from multiple threads.
class ServiceClient {
 public:
  virtual ~ServiceClient() = default;
  virtual json analyze(const json& request) = 0;
  virtual json detect(const json& request) = 0;
};

class HttpServiceClient : public ServiceClient {
 public:
  HttpServiceClient(std::string analyzer_base, std::string detector_base, int retries = 2,
                    int timeout_s = 10)
      : analyzer_base_(std::move(analyzer_base)),
        detector_base_(std::move(detector_base)),
        retries_(retries),
        timeout_s_(timeout_s) {}

  json analyze(const json& request) override { return post(analyzer_base_, "/analyze", request); }
  json detect(const json& request) override { return post(detector_base_, "/detect", request); }

 private:
  json post(const std::string& base, const std::string& path, const json& body) {
    std::string transport_error;
    for (int attempt = 0; attempt <= retries_; ++attempt) {
      httplib::Client client(base);
      client.set_connection_timeout(timeout_s_, 0);
      client.set_read_timeout(timeout_s_, 0);
      auto res = client.Post(path, body.dump(), "application/json");
      if (!res) {
        transport_error = httplib::to_string(res.error());
        log_debug("POST " + base + path + " failed (" + transport_error + "), attempt " +
                  std::to_string(attempt + 1));
        continue;
      }
      if (res->status != 200)
        throw service_error("service protocol: " + base + path + " returned status " +
                            std::to_string(res->status));
      json parsed = json::parse(res->body, nullptr, false);
      if (parsed.is_discarded())
        throw service_error("service protocol: " + base + path + " returned invalid JSON");
      return parsed;
    }
    throw service_error("service unreachable: " + base + path + " after " +
                        std::to_string(retries_ + 1) + " attempts (" + transport_error + ")");
  }

  std::string analyzer_base_;
  std::string detector_base_;
  int retries_;
  int timeout_s_;
};

// Replays canned responses from a fixture file:
//   {"analyze": {"<request dump>": <response>},
//    "detect":  {"<request dump>": <response>}}
class MockServiceClient : public ServiceClient {
 public:
  explicit MockServiceClient(const std::string& fixture_path) {
    std::ifstream in(fixture_path);
    if (!in) throw service_error("mock fixtures: cannot open " + fixture_path);
    fixtures_ = json::parse(in, nullptr, false);
    if (fixtures_.is_discarded() || !fixtures_.is_object())
      throw service_error("mock fixtures: " + fixture_path + " is not a JSON object");
  }

  json analyze(const json& request) override { return lookup("analyze", request); }
  json detect(const json& request) override { return lookup("detect", request); }

 private:
  json lookup(const char* section, const json& request) const {
    const std::string key = request.dump();
    const auto sec = fixtures_.find(section);
    if (sec == fixtures_.end() || !sec->is_object())
      throw service_error(std::string("mock fixtures: missing '") + section + "' section");
    const auto it = sec->find(key);
    if (it == sec->end())
      throw service_error(std::string("mock fixtures: no '") + section + "' entry for " + key);
    return *it;
  }

  json fixtures_;
};

// Analyzer call: object phrases in priority order, subject first. An empty
// list means the caption has nothing localizable.
inline std::vector<std::string> extract_objects(ServiceClient& client,
                                                const std::string& caption) {
  if (caption.empty()) throw std::invalid_argument("extract_objects: empty caption");
  const json response = client.analyze(analyze_request(caption));
  if (!response.is_object() || !response.contains("objects") || !response["objects"].is_array())
    throw service_error("analyzer protocol: expected {\"objects\": [...]}");
  std::vector<std::string> objects;
  for (const auto& v : response["objects"]) {
    if (!v.is_string()) throw service_error("analyzer protocol: objects must be strings");
    objects.push_back(v.get<std::string>());
  }
  return objects;
}

namespace detail {

inline Detection parse_detection(const json& j, int frame_index) {
  if (!j.is_object() || !j.contains("box_xyxy") || !j.contains("score"))
    throw service_error("detector protocol: detection needs box_xyxy and score");
  const json& corners_json = j["box_xyxy"];
  if (!corners_json.is_array() || corners_json.size() != 4)
    throw service_error("detector protocol: box_xyxy must have 4 entries");
  for (const auto& v : corners_json)
    if (!v.is_number()) throw service_error("detector protocol: box_xyxy entries must be numbers");
  const Corners corners{corners_json[0].get<double>(), corners_json[1].get<double>(),
                        corners_json[2].get<double>(), corners_json[3].get<double>()};
  if (corners.x2 < corners.x1 || corners.y2 < corners.y1)
    throw service_error("detector protocol: box_xyxy corners out of order");
  if (!j["score"].is_number())
    throw service_error("detector protocol: score must be a number");
  const double score = j["score"].get<double>();
  if (!(score >= 0.0 && score <= 1.0))
    throw service_error("detector protocol: score outside [0, 1]");
  Detection d;
  d.frame_index = frame_index;
  d.box = clamp_box(from_corners(corners));
  d.score = score;
  d.label = j.contains("label") && j["label"].is_string() ? j["label"].get<std::string>() : "";
  return d;
}

}  // namespace detail

// Per-frame detector calls for the prompt; detections scoring below the
// confidence threshold are dropped ("below" is strict, a score equal to the
// threshold stays).
inline std::map<int, std::vector<Detection>> annotate_boxes(ServiceClient& client,
                                                            const std::string& video_ref,
                                                            const std::vector<int>& frame_indices,
                                                            const std::string& prompt,
                                                            const SynthesisConfig& cfg) {
  if (prompt.empty()) throw std::invalid_argument("annotate_boxes: empty prompt");
  std::map<int, std::vector<Detection>> out;
  for (int frame : frame_indices) {
    const json response = client.detect(detect_request(video_ref, frame, prompt));
    if (!response.is_object() || !response.contains("detections") ||
        !response["detections"].is_array())
      throw service_error("detector protocol: expected {\"detections\": [...]}");
    std::vector<Detection> kept;
    for (const auto& dj : response["detections"]) {
      Detection d = detail::parse_detection(dj, frame);
      if (d.score < cfg.conf_threshold) continue;
      kept.push_back(std::move(d));
    }
    out.emplace(frame, std::move(kept));
  }
  return out;
}

// New span = [first, last] frame timestamps that still carry a detection,
// gated to [min_duration_s, max_duration_s].
inline std::variant<TimeSpan, Rejection> refine_time_boundary(
    const std::map<int, std::vector<Detection>>& detections, const TimeSpan& raw_span,
    const FrameGrid& grid, const SynthesisConfig& cfg) {
  int first = -1;
  int last = -1;
  for (const auto& [frame, dets] : detections) {
    if (dets.empty()) continue;
    if (first < 0) first = frame;
    last = frame;
  }
  if (first < 0)
    return Rejection{RejectReason::NoDetections, "no detections within the raw span"};
  const TimeSpan refined{grid.timestamps[static_cast<std::size_t>(first)],
                         grid.timestamps[static_cast<std::size_t>(last)]};
  if (refined.length() < cfg.min_duration_s)
    return Rejection{RejectReason::DurationTooShort,
                     "refined span lasts " + format_seconds_2dp(refined.length()) + "s"};
  if (refined.length() > cfg.max_duration_s)
    return Rejection{RejectReason::DurationTooLong,
                     "refined span lasts " + format_seconds_2dp(refined.length()) + "s"};
  (void)raw_span;
  return refined;
}

// Multi-step box filter. Frames with more detections than the complex-scene
// cap are dropped (frame-level, not sample-level); each surviving frame keeps
// its highest-scoring detection (score ties: larger area, then earlier listing
// order); adjacent kept frames whose area ratio leaves
// [area_ratio_low, area_ratio_high] reject the whole sample. Gap frames in
// the output tube carry the most recent kept box forward.
inline std::variant<Tube, Rejection> filter_boxes(
    const std::map<int, std::vector<Detection>>& per_frame, const SynthesisConfig& cfg) {
  std::vector<std::pair<int, const Detection*>> kept;
  for (const auto& [frame, dets] : per_frame) {
    if (dets.empty()) continue;
    if (static_cast<int>(dets.size()) > cfg.max_boxes_per_frame) continue;  // complex scene
    const Detection* best = &dets[0];
    for (std::size_t i = 1; i < dets.size(); ++i) {
      const Detection& d = dets[i];
      if (d.score > best->score ||
          (d.score == best->score && box_area(d.box) > box_area(best->box)))
        best = &d;
    }
    kept.emplace_back(frame, best);
  }
  if (kept.empty())
    return Rejection{RejectReason::ComplexScene, "every frame failed the complex-scene filter"};
  for (std::size_t i = 1; i < kept.size(); ++i) {
    const double prev = box_area(kept[i - 1].second->box);
    const double cur = box_area(kept[i].second->box);
    bool unstable;
    if (prev == 0.0)
      unstable = cur != 0.0;
    else {
      const double ratio = cur / prev;
      unstable = ratio < cfg.area_ratio_low || ratio > cfg.area_ratio_high;
    }
    if (unstable)
      return Rejection{RejectReason::AreaInstability,
                       "area ratio between frames " + std::to_string(kept[i - 1].first) + " and " +
                           std::to_string(kept[i].first) + " outside bounds"};
  }
  Tube tube;
  tube.start_frame = kept.front().first;
  std::size_t ki = 0;
  for (int frame = kept.front().first; frame <= kept.back().first; ++frame) {
    if (ki + 1 < kept.size() && kept[ki + 1].first == frame) ++ki;
    tube.boxes.push_back(kept[ki].second->box);
  }
  return tube;
}

// Full per-record pipeline: analyzer -> annotator -> refiner -> filter ->
// instruction text.
inline SynthesisOutcome synthesize_record(ServiceClient& client, const CaptionRecord& record,
                                          const SynthesisConfig& cfg) {
  const FrameGrid grid = sample_frames(record.duration_s, cfg.n_frames);
  const std::vector<std::string> objects = extract_objects(client, record.caption);
  if (objects.empty())
    return Rejection{RejectReason::NoObject, "analyzer found no localizable object"};
  const std::string& prompt = objects.front();

  std::vector<int> frames_in_span;
  for (int i = 0; i < grid.n_frames(); ++i) {
    const double t = grid.timestamps[static_cast<std::size_t>(i)];
    if (t >= record.raw_span.start_s && t <= record.raw_span.end_s) frames_in_span.push_back(i);
  }
  if (frames_in_span.empty())
    return Rejection{RejectReason::NoDetections, "raw span contains no sampled frame"};

  const auto detections =
      annotate_boxes(client, record.video_ref, frames_in_span, prompt, cfg);

  const auto refined_or = refine_time_boundary(detections, record.raw_span, grid, cfg);
  if (std::holds_alternative<Rejection>(refined_or)) return std::get<Rejection>(refined_or);
  const TimeSpan refined = std::get<TimeSpan>(refined_or);

  std::map<int, std::vector<Detection>> in_range;
  for (const auto& [frame, dets] : detections) {
    const double t = grid.timestamps[static_cast<std::size_t>(frame)];
    if (t >= refined.start_s && t <= refined.end_s) in_range.emplace(frame, dets);
  }
  auto tube_or = filter_boxes(in_range, cfg);
  if (std::holds_alternative<Rejection>(tube_or)) return std::get<Rejection>(tube_or);

  SynthRecord out;
  out.id = record.id;
  out.video_ref = record.video_ref;
  out.duration_s = record.duration_s;
  out.caption = record.caption;
  out.span = snap_span(refined, grid);
  out.tube = std::get<Tube>(std::move(tube_or));
  out.instruction = time_instruction(grid);
  return out;
}

// Runs the pipeline over the corpus. Records are processed in windows of
// max_in_flight_requests and assembled by input index, so the output is
// independent of the concurrency level.
inline SynthesisResult synthesize_dataset(ServiceClient& client,
                                          const std::vector<CaptionRecord>& corpus,
                                          const SynthesisConfig& cfg) {
  std::vector<SynthesisOutcome> outcomes;
  outcomes.reserve(corpus.size());
  const int window = std::max(1, cfg.max_in_flight_requests);
  if (window == 1) {
    for (const CaptionRecord& record : corpus)
      outcomes.push_back(synthesize_record(client, record, cfg));
  } else {
    for (std::size_t base = 0; base < corpus.size(); base += static_cast<std::size_t>(window)) {
      const std::size_t end = std::min(corpus.size(), base + static_cast<std::size_t>(window));
      std::vector<std::future<SynthesisOutcome>> batch;
      for (std::size_t i = base; i < end; ++i)
        batch.push_back(std::async(std::launch::async, [&client, &corpus, &cfg, i] {
          return synthesize_record(client, corpus[i], cfg);
        }));
      for (auto& f : batch) outcomes.push_back(f.get());
    }
  }

  SynthesisResult result;
  result.stats.total = corpus.size();
  for (RejectReason r : kAllReasons) result.stats.reasons[r] = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (std::holds_alternative<SynthRecord>(outcomes[i])) {
      result.records.push_back(std::get<SynthRecord>(std::move(outcomes[i])));
      ++result.stats.emitted;
    } else {
      const Rejection& rej = std::get<Rejection>(outcomes[i]);
      ++result.stats.reasons[rej.reason];
      result.rejections.emplace_back(corpus[i].id, rej);
      log_info("rejected " + corpus[i].id + " (" + reason_name(rej.reason) + "): " + rej.detail);
    }
  }
  return result;
}

inline CaptionRecord caption_record_from_json(const json& j) {
  CaptionRecord r;
  r.id = stgkit::detail::require_string(j, "id");
  r.video_ref = stgkit::detail::require_string(j, "video_ref");
  r.duration_s = stgkit::detail::require_number(j, "duration_s");
  if (!(r.duration_s > 0.0)) throw schema_error("record " + r.id + ": duration_s must be > 0");
  r.caption = stgkit::detail::require_string(j, "caption");
  r.raw_span = span_from_json(stgkit::detail::require_field(j, "span"));
  if (r.raw_span.end_s > r.duration_s)
    throw schema_error("record " + r.id + ": span exceeds duration");
  return r;
}

inline json synth_record_to_json(const SynthRecord& r) {
  return {{"id", r.id},
          {"video_ref", r.video_ref},
          {"duration_s", r.duration_s},
          {"caption", r.caption},
          {"span", span_to_json(r.span)},
          {"tube", tube_to_json(r.tube)},
          {"instruction", r.instruction}};
}

inline json stats_to_json(const SynthesisStats& s) {
  json reasons = json::object();
  for (RejectReason r : kAllReasons) {
    const auto it = s.reasons.find(r);
    reasons[reason_name(r)] = it == s.reasons.end() ? 0 : it->second;
  }
  return {{"total", s.total},
          {"emitted", s.emitted},
          {"rejected", s.rejected()},
          {"rejection_rate", s.rejection_rate()},
          {"reasons", reasons}};
}

inline void write_synth_records(const std::vector<SynthRecord>& records,
                                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_synth_records: cannot open " + path);
  for (const SynthRecord& r : records) out << synth_record_to_json(r).dump() << '\n';
  if (!out) throw std::runtime_error("write_synth_records: write failed for " + path);
}

}  // namespace stgkit::unistg

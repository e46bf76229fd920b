#pragma once

#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgkit/errors.hpp"
#include "stgkit/geometry.hpp"
#include "stgkit/metrics.hpp"

namespace stgkit {

using json = nlohmann::json;

// JSONL schemas. A span is {"start_s", "end_s"}; a tube is {"start_frame",
// "boxes"} with boxes as [cx, cy, w, h] rows. STVG ground truth adds
// "duration_s", "caption" and "frame_timestamps"; predictions carry "span"
// and optionally "tube".

inline json span_to_json(const TimeSpan& s) { return {{"start_s", s.start_s}, {"end_s", s.end_s}}; }

inline json tube_to_json(const Tube& t) {
  json boxes = json::array();
  for (const BBox& b : t.boxes) boxes.push_back({b.cx, b.cy, b.w, b.h});
  return {{"start_frame", t.start_frame}, {"boxes", boxes}};
}

namespace detail {

inline const json& require_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw schema_error(std::string("missing field '") + key + "'");
  return *it;
}

inline double require_number(const json& j, const char* key) {
  const json& v = require_field(j, key);
  if (!v.is_number()) throw schema_error(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

inline std::string require_string(const json& j, const char* key) {
  const json& v = require_field(j, key);
  if (!v.is_string()) throw schema_error(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline TimeSpan span_from_json(const json& j) {
  TimeSpan s{detail::require_number(j, "start_s"), detail::require_number(j, "end_s")};
  if (s.end_s < s.start_s) throw schema_error("span: end_s < start_s");
  if (s.start_s < 0.0) throw schema_error("span: start_s < 0");
  return s;
}

inline BBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw schema_error("box must be [cx, cy, w, h]");
  for (const auto& v : j)
    if (!v.is_number()) throw schema_error("box coordinates must be numbers");
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!box_finite(b)) throw schema_error("box has non-finite coordinates");
  if (b.cx < 0.0 || b.cx > 1.0 || b.cy < 0.0 || b.cy > 1.0 || b.w < 0.0 || b.w > 1.0 ||
      b.h < 0.0 || b.h > 1.0)
    throw schema_error("box coordinates must lie in [0, 1]");
  return b;
}

inline Tube tube_from_json(const json& j) {
  Tube t;
  const json& start = detail::require_field(j, "start_frame");
  if (!start.is_number_integer()) throw schema_error("tube: start_frame must be an integer");
  t.start_frame = start.get<int>();
  if (t.start_frame < 0) throw schema_error("tube: start_frame < 0");
  const json& boxes = detail::require_field(j, "boxes");
  if (!boxes.is_array() || boxes.empty()) throw schema_error("tube: boxes must be a non-empty array");
  for (const auto& b : boxes) t.boxes.push_back(box_from_json(b));
  return t;
}

inline GroundingSample grounding_sample_from_json(const json& j) {
  GroundingSample s;
  s.id = detail::require_string(j, "id");
  s.duration_s = detail::require_number(j, "duration_s");
  if (!(s.duration_s > 0.0)) throw schema_error("sample " + s.id + ": duration_s must be > 0");
  s.caption = j.contains("caption") ? detail::require_string(j, "caption") : "";
  s.gt_span = span_from_json(detail::require_field(j, "span"));
  if (s.gt_span.end_s > s.duration_s)
    throw schema_error("sample " + s.id + ": span exceeds duration");
  s.gt_tube = tube_from_json(detail::require_field(j, "tube"));
  const json& ts = detail::require_field(j, "frame_timestamps");
  if (!ts.is_array() || ts.empty())
    throw schema_error("sample " + s.id + ": frame_timestamps must be a non-empty array");
  for (const auto& v : ts) {
    if (!v.is_number()) throw schema_error("sample " + s.id + ": frame_timestamps entries must be numbers");
    s.frame_timestamps.push_back(v.get<double>());
  }
  for (std::size_t i = 1; i < s.frame_timestamps.size(); ++i)
    if (!(s.frame_timestamps[i] > s.frame_timestamps[i - 1]))
      throw schema_error("sample " + s.id + ": frame_timestamps must be strictly increasing");
  if (s.frame_timestamps.back() > s.duration_s)
    throw schema_error("sample " + s.id + ": frame timestamps exceed duration");
  if (s.gt_tube.start_frame < 0 ||
      static_cast<std::size_t>(s.gt_tube.end_frame()) >= s.frame_timestamps.size())
    throw schema_error("sample " + s.id + ": tube frames outside frame grid");
  return s;
}

inline Prediction prediction_from_json(const json& j) {
  Prediction p;
  p.id = detail::require_string(j, "id");
  p.span = span_from_json(detail::require_field(j, "span"));
  if (j.contains("tube")) p.tube = tube_from_json(j["tube"]);
  return p;
}

// Parses one JSON object per line; errors carry the 1-based line number.
template <typename T>
std::vector<T> read_jsonl(const std::string& path, const std::function<T(const json&)>& parse) {
  std::ifstream in(path);
  if (!in) throw schema_error("cannot open " + path);
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw schema_error(path + ":" + std::to_string(line_no) + ": invalid JSON");
    try {
      out.push_back(parse(j));
    } catch (const schema_error& e) {
      throw schema_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace stgkit

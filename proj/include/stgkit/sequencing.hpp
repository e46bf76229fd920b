#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stgkit/errors.hpp"
#include "stgkit/geometry.hpp"

namespace stgkit {

// Uniformly sampled frame timestamps, rounded to hundredths of a second.
struct FrameGrid {
  double duration_s = 0.0;
  std::vector<double> timestamps;

  int n_frames() const { return static_cast<int>(timestamps.size()); }
};

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

inline FrameGrid sample_frames(double duration_s, int n_frames) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("sample_frames: duration must be > 0");
  if (n_frames < 1) throw std::invalid_argument("sample_frames: n_frames must be >= 1");
  FrameGrid grid{duration_s, {}};
  grid.timestamps.reserve(static_cast<std::size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i)
    grid.timestamps.push_back(round2(i * duration_s / n_frames));
  for (int i = 1; i < n_frames; ++i)
    if (!(grid.timestamps[i] > grid.timestamps[i - 1]))
      throw std::invalid_argument(
          "sample_frames: timestamps collapse at 0.01s resolution (duration too short for n_frames)");
  return grid;
}

inline std::string format_seconds_2dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Whole seconds print without a decimal point ("20"), fractional durations
// with up to two decimals ("12.5").
inline std::string format_duration(double v) {
  if (v == std::floor(v)) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  std::string s = format_seconds_2dp(v);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

// Instruction text embedded in training records. The template is fixed; the
// timestamps are always fully enumerated.
inline std::string time_instruction(const FrameGrid& grid) {
  std::string out = "The video lasts for " + format_duration(grid.duration_s) + " seconds, and " +
                    std::to_string(grid.n_frames()) +
                    " frames are uniformly sampled from it. These frames are located at ";
  for (std::size_t i = 0; i < grid.timestamps.size(); ++i) {
    out += format_seconds_2dp(grid.timestamps[i]);
    out += 's';
    if (i + 1 < grid.timestamps.size()) out += ',';
  }
  out += '.';
  return out;
}

// Nearest grid timestamp; ties go to the earlier one.
inline int nearest_frame_index(double t, const FrameGrid& grid) {
  int best = 0;
  double best_dist = std::abs(t - grid.timestamps[0]);
  for (int i = 1; i < grid.n_frames(); ++i) {
    const double d = std::abs(t - grid.timestamps[static_cast<std::size_t>(i)]);
    if (d < best_dist) {
      best = i;
      best_dist = d;
    }
  }
  return best;
}

inline TimeSpan snap_span(const TimeSpan& span, const FrameGrid& grid) {
  if (grid.timestamps.empty()) throw std::invalid_argument("snap_span: empty grid");
  return {grid.timestamps[static_cast<std::size_t>(nearest_frame_index(span.start_s, grid))],
          grid.timestamps[static_cast<std::size_t>(nearest_frame_index(span.end_s, grid))]};
}

// [f_s, f_e] with f_s the first timestamp >= start and f_e the last <= end.
// When the span falls between two timestamps both collapse to the frame
// nearest the span midpoint.
inline std::pair<int, int> timespan_to_frame_range(const TimeSpan& span, const FrameGrid& grid) {
  if (grid.timestamps.empty())
    throw std::invalid_argument("timespan_to_frame_range: empty grid");
  int fs = -1;
  int fe = -1;
  for (int i = 0; i < grid.n_frames(); ++i) {
    if (fs < 0 && grid.timestamps[static_cast<std::size_t>(i)] >= span.start_s) fs = i;
    if (grid.timestamps[static_cast<std::size_t>(i)] <= span.end_s) fe = i;
  }
  if (fs < 0 || fe < 0 || fs > fe) {
    const int mid = nearest_frame_index(0.5 * (span.start_s + span.end_s), grid);
    return {mid, mid};
  }
  return {fs, fe};
}

// Accepts "from {a}s to {b}s" with non-negative decimals and a <= b.
// Surrounding prose is permitted; the phrase itself is rigid.
inline TimeSpan parse_span_text(std::string_view text) {
  const std::size_t anchor = text.find("from ");
  if (anchor == std::string_view::npos)
    throw parse_error("parse_span_text: no 'from' found at position 0");
  std::size_t pos = anchor + 5;
  const auto parse_number = [&](const char* what) -> double {
    const std::size_t begin = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    if (pos == begin)
      throw parse_error("parse_span_text: expected " + std::string(what) + " at position " +
                        std::to_string(begin));
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      const std::size_t frac = pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
      if (pos == frac)
        throw parse_error("parse_span_text: expected digits after '.' at position " +
                          std::to_string(frac));
    }
    return std::stod(std::string(text.substr(begin, pos - begin)));
  };
  const auto expect = [&](std::string_view token) {
    if (text.substr(pos, token.size()) != token)
      throw parse_error("parse_span_text: expected '" + std::string(token) + "' at position " +
                        std::to_string(pos));
    pos += token.size();
  };
  const double a = parse_number("start seconds");
  expect("s to ");
  const double b = parse_number("end seconds");
  expect("s");
  if (a > b)
    throw parse_error("parse_span_text: start " + std::to_string(a) + " exceeds end " +
                      std::to_string(b) + " at position " + std::to_string(anchor));
  return {a, b};
}

}  // namespace stgkit

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace stgkit {

// Bounding box in center format (cx, cy, w, h), all coordinates fractions of
// the frame size.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Corners {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  friend bool operator==(const Corners&, const Corners&) = default;
};

// Time interval in seconds, end_s >= start_s.
struct TimeSpan {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const { return end_s - start_s; }

  friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

// One box per consecutive frame index, starting at start_frame.
struct Tube {
  int start_frame = 0;
  std::vector<BBox> boxes;

  int end_frame() const { return start_frame + static_cast<int>(boxes.size()) - 1; }
  const BBox& box_at(int frame) const { return boxes[static_cast<std::size_t>(frame - start_frame)]; }
};

inline bool box_finite(const BBox& b) {
  return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) && std::isfinite(b.h);
}

inline double box_area(const BBox& b) { return b.w * b.h; }

inline Corners to_corners(const BBox& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

inline BBox from_corners(const Corners& c) {
  if (c.x2 < c.x1 || c.y2 < c.y1)
    throw std::invalid_argument("from_corners: corners out of order (x2 < x1 or y2 < y1)");
  return {(c.x1 + c.x2) / 2.0, (c.y1 + c.y2) / 2.0, c.x2 - c.x1, c.y2 - c.y1};
}

// Corners clipped to the unit square, re-expressed in center format. Exact
// fixed point: a box whose corners are already in range comes back unchanged.
inline BBox clamp_box(const BBox& b) {
  if (!box_finite(b)) throw std::invalid_argument("clamp_box: non-finite box");
  Corners c = to_corners(b);
  if (c.x2 < c.x1) std::swap(c.x1, c.x2);
  if (c.y2 < c.y1) std::swap(c.y1, c.y2);
  if (c.x1 >= 0.0 && c.y1 >= 0.0 && c.x2 <= 1.0 && c.y2 <= 1.0) return b;
  const auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return from_corners({clip(c.x1), clip(c.y1), clip(c.x2), clip(c.y2)});
}

namespace detail {

// Corner-derived area keeps self-IoU exactly 1 (w*h rounds differently from
// (x2-x1)*(y2-y1)).
inline double corner_area(const Corners& c) { return (c.x2 - c.x1) * (c.y2 - c.y1); }

}  // namespace detail

// Intersection over union. Zero-area boxes match only themselves: an
// identical degenerate pair scores 1, any other degenerate pairing scores 0.
inline double box_iou(const BBox& a, const BBox& b) {
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double iw = std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1);
  const double ih = std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = detail::corner_area(ca) + detail::corner_area(cb) - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

// IoU minus the normalized empty area of the tightest enclosing box.
// Degenerate (zero-area) operands yield 0.
inline double box_giou(const BBox& a, const BBox& b) {
  if (box_area(a) <= 0.0 || box_area(b) <= 0.0) return 0.0;
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double iw = std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1);
  const double ih = std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = detail::corner_area(ca) + detail::corner_area(cb) - inter;
  const double ew = std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1);
  const double eh = std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1);
  const double enclosing = ew * eh;
  return inter / uni - (enclosing - uni) / enclosing;
}

// Interval IoU. Two zero-length spans at the same instant count as identical.
inline double temporal_iou(const TimeSpan& a, const TimeSpan& b) {
  const double inter = std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s);
  const double uni = std::max(a.end_s, b.end_s) - std::min(a.start_s, b.start_s);
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return std::max(inter, 0.0) / uni;
}

// Copy of the [first_frame, last_frame] slice; the tube must cover it.
inline Tube restrict_tube(const Tube& t, int first_frame, int last_frame) {
  if (first_frame > last_frame)
    throw std::invalid_argument("restrict_tube: first_frame > last_frame");
  if (first_frame < t.start_frame || last_frame > t.end_frame())
    throw std::invalid_argument("restrict_tube: requested range not covered by tube");
  Tube out;
  out.start_frame = first_frame;
  out.boxes.assign(t.boxes.begin() + (first_frame - t.start_frame),
                   t.boxes.begin() + (last_frame - t.start_frame + 1));
  return out;
}

}  // namespace stgkit

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "stgkit/geometry.hpp"
#include "stgkit/metrics.hpp"

// Test-only oracles, kept independent of the library's computation paths.
namespace testsupport {

struct TestRng {
  std::uint64_t state;

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return (next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
};

inline stgkit::BBox random_box(TestRng& rng) {
  const double w = rng.uniform(0.0, 1.0);
  const double h = rng.uniform(0.0, 1.0);
  return {rng.uniform(w / 2, 1.0 - w / 2), rng.uniform(h / 2, 1.0 - h / 2), w, h};
}

// IoU computed by decomposing the unit square into an n x n grid and
// accumulating per-cell clipped areas with inclusion-exclusion. Never forms
// the global intersection/union rectangles the library uses.
inline double raster_iou(const stgkit::BBox& a, const stgkit::BBox& b, int n = 64) {
  const stgkit::Corners ca = stgkit::to_corners(a);
  const stgkit::Corners cb = stgkit::to_corners(b);
  const double cell = 1.0 / n;
  const auto seg = [](double lo1, double hi1, double lo2, double hi2) {
    return std::max(0.0, std::min(hi1, hi2) - std::max(lo1, lo2));
  };
  double inter = 0.0;
  double uni = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x0 = i * cell;
    const double x1 = x0 + cell;
    const double ax = seg(ca.x1, ca.x2, x0, x1);
    const double bx = seg(cb.x1, cb.x2, x0, x1);
    const double ix = seg(std::max(ca.x1, cb.x1), std::min(ca.x2, cb.x2), x0, x1);
    if (ax == 0.0 && bx == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      const double y0 = j * cell;
      const double y1 = y0 + cell;
      const double a_in = ax * seg(ca.y1, ca.y2, y0, y1);
      const double b_in = bx * seg(cb.y1, cb.y2, y0, y1);
      const double i_in = ix * seg(std::max(ca.y1, cb.y1), std::min(ca.y2, cb.y2), y0, y1);
      inter += i_in;
      uni += a_in + b_in - i_in;
    }
  }
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

// Frame-by-frame enumeration of the union set, plain summation.
inline double brute_force_viou(const stgkit::Tube& pred, const stgkit::Tube& gt) {
  const int lo = std::min(pred.start_frame, gt.start_frame);
  const int hi = std::max(pred.end_frame(), gt.end_frame());
  double sum = 0.0;
  int union_count = 0;
  for (int f = lo; f <= hi; ++f) {
    const bool in_pred = f >= pred.start_frame && f <= pred.end_frame();
    const bool in_gt = f >= gt.start_frame && f <= gt.end_frame();
    if (!in_pred && !in_gt) continue;
    ++union_count;
    if (in_pred && in_gt)
      sum += stgkit::box_iou(stgkit::clamp_box(pred.box_at(f)), stgkit::clamp_box(gt.box_at(f)));
  }
  return union_count == 0 ? 0.0 : sum / union_count;
}

inline stgkit::Tube random_tube(TestRng& rng, int max_start, int max_len) {
  stgkit::Tube t;
  t.start_frame = rng.uniform_int(0, max_start);
  const int len = rng.uniform_int(1, max_len);
  for (int i = 0; i < len; ++i) t.boxes.push_back(random_box(rng));
  return t;
}

}  // namespace testsupport

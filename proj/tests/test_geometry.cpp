#include <catch2/catch_amalgamated.hpp>

#include "stgkit/geometry.hpp"
#include "support/oracles.hpp"

using Catch::Approx;
using namespace stgkit;

TEST_CASE("box_area") {
  CHECK(box_area({0.5, 0.5, 0.4, 0.4}) == Approx(0.16).margin(1e-12));
  CHECK(box_area({0.5, 0.5, 0.0, 0.3}) == 0.0);
  CHECK(box_area({0.5, 0.5, 1.0, 1.0}) == 1.0);
}

TEST_CASE("corner conversions") {
  const Corners c = to_corners({0.5, 0.5, 0.4, 0.4});
  CHECK(c.x1 == Approx(0.3).margin(1e-12));
  CHECK(c.y1 == Approx(0.3).margin(1e-12));
  CHECK(c.x2 == Approx(0.7).margin(1e-12));
  CHECK(c.y2 == Approx(0.7).margin(1e-12));

  CHECK(to_corners({0, 0, 0, 0}) == Corners{0, 0, 0, 0});

  const BBox round_trip = from_corners(to_corners({0.6, 0.6, 0.4, 0.4}));
  CHECK(round_trip.cx == Approx(0.6).margin(1e-12));
  CHECK(round_trip.cy == Approx(0.6).margin(1e-12));
  CHECK(round_trip.w == Approx(0.4).margin(1e-12));
  CHECK(round_trip.h == Approx(0.4).margin(1e-12));

  CHECK_THROWS_AS(from_corners({0.5, 0.1, 0.4, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(from_corners({0.1, 0.5, 0.2, 0.4}), std::invalid_argument);
}

TEST_CASE("box_iou examples") {
  const BBox a{0.5, 0.5, 0.4, 0.4};
  const BBox b{0.6, 0.6, 0.4, 0.4};
  CHECK(box_iou(a, b) == Approx(0.09 / 0.23).margin(1e-12));
  CHECK(box_iou(a, b) == Approx(0.391304).margin(1e-6));
  CHECK(box_iou(a, a) == 1.0);
  const BBox lo = from_corners({0.0, 0.0, 0.1, 0.1});
  const BBox hi = from_corners({0.9, 0.9, 1.0, 1.0});
  CHECK(box_iou(lo, hi) == 0.0);
}

TEST_CASE("box_giou examples") {
  const BBox a{0.5, 0.5, 0.4, 0.4};
  const BBox b{0.6, 0.6, 0.4, 0.4};
  CHECK(box_giou(a, b) == Approx(0.09 / 0.23 - 0.02 / 0.25).margin(1e-12));
  CHECK(box_giou(a, b) == Approx(0.311304).margin(1e-6));
  CHECK(box_giou(a, a) == Approx(1.0).margin(1e-12));
  const BBox lo = from_corners({0.0, 0.0, 0.1, 0.1});
  const BBox hi = from_corners({0.9, 0.9, 1.0, 1.0});
  CHECK(box_giou(lo, hi) == Approx(-0.98).margin(1e-12));
}

TEST_CASE("degenerate box conventions") {
  const BBox point{0.5, 0.5, 0.0, 0.0};
  const BBox line{0.5, 0.5, 0.0, 0.3};
  const BBox solid{0.5, 0.5, 0.4, 0.4};
  CHECK(box_iou(point, point) == 1.0);
  CHECK(box_iou(point, line) == 0.0);
  CHECK(box_iou(line, solid) == 0.0);
  CHECK(box_giou(point, point) == 0.0);
  CHECK(box_giou(line, solid) == 0.0);
}

TEST_CASE("temporal_iou") {
  CHECK(temporal_iou({2, 6}, {4, 8}) == Approx(1.0 / 3.0).margin(1e-12));
  CHECK(temporal_iou({2, 6}, {2, 6}) == 1.0);
  CHECK(temporal_iou({0, 1}, {5, 6}) == 0.0);
  CHECK(temporal_iou({3, 3}, {3, 3}) == 1.0);
  CHECK(temporal_iou({3, 3}, {1, 5}) == 0.0);
}

TEST_CASE("clamp_box") {
  const BBox clamped = clamp_box({0.95, 0.5, 0.2, 0.2});
  const Corners c = to_corners(clamped);
  CHECK(c.x1 == Approx(0.85).margin(1e-12));
  CHECK(c.y1 == Approx(0.4).margin(1e-12));
  CHECK(c.x2 == Approx(1.0).margin(1e-12));
  CHECK(c.y2 == Approx(0.6).margin(1e-12));
  CHECK(clamped.cx == Approx(0.925).margin(1e-12));
  CHECK(clamped.w == Approx(0.15).margin(1e-12));

  const BBox inside{0.5, 0.5, 0.4, 0.4};
  CHECK(clamp_box(inside) == inside);

  const BBox far = clamp_box({1.2, 1.2, 0.1, 0.1});
  CHECK(far == BBox{1.0, 1.0, 0.0, 0.0});

  CHECK_THROWS_AS(clamp_box({std::nan(""), 0.5, 0.1, 0.1}), std::invalid_argument);
  CHECK_THROWS_AS(clamp_box({0.5, 0.5, std::numeric_limits<double>::infinity(), 0.1}),
                  std::invalid_argument);
}

TEST_CASE("restrict_tube") {
  Tube t;
  t.start_frame = 3;
  t.boxes = {{0.1, 0.1, 0.1, 0.1}, {0.2, 0.2, 0.1, 0.1}, {0.3, 0.3, 0.1, 0.1}};
  const Tube r = restrict_tube(t, 4, 5);
  CHECK(r.start_frame == 4);
  REQUIRE(r.boxes.size() == 2);
  CHECK(r.boxes[0] == t.boxes[1]);
  CHECK_THROWS_AS(restrict_tube(t, 2, 4), std::invalid_argument);
  CHECK_THROWS_AS(restrict_tube(t, 4, 6), std::invalid_argument);
}

TEST_CASE("iou properties on random pairs") {
  testsupport::TestRng rng{2024};
  for (int i = 0; i < 300; ++i) {
    const BBox a = testsupport::random_box(rng);
    const BBox b = testsupport::random_box(rng);
    const double iou = box_iou(a, b);
    const double giou = box_giou(a, b);
    CAPTURE(a.cx, a.cy, a.w, a.h, b.cx, b.cy, b.w, b.h);
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    CHECK(giou >= -1.0);
    CHECK(giou <= iou + 1e-12);
    CHECK(box_iou(a, b) == box_iou(b, a));
    CHECK(box_giou(a, b) == box_giou(b, a));
    if (box_area(a) > 0.0) {
      CHECK(box_iou(a, a) == 1.0);
      CHECK(box_giou(a, a) == Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("iou agrees with the raster oracle") {
  testsupport::TestRng rng{77};
  for (int i = 0; i < 200; ++i) {
    const BBox a = testsupport::random_box(rng);
    const BBox b = testsupport::random_box(rng);
    CAPTURE(a.cx, a.cy, a.w, a.h, b.cx, b.cy, b.w, b.h);
    CHECK(box_iou(a, b) == Approx(testsupport::raster_iou(a, b)).margin(0.01));
  }
}

TEST_CASE("temporal_iou symmetry on random spans") {
  testsupport::TestRng rng{5150};
  for (int i = 0; i < 200; ++i) {
    const double a0 = rng.uniform(0, 50);
    const double b0 = rng.uniform(0, 50);
    const TimeSpan a{a0, a0 + rng.uniform(0, 20)};
    const TimeSpan b{b0, b0 + rng.uniform(0, 20)};
    CHECK(temporal_iou(a, b) == temporal_iou(b, a));
    CHECK(temporal_iou(a, b) >= 0.0);
    CHECK(temporal_iou(a, b) <= 1.0);
  }
}

TEST_CASE("clamp_box is exactly idempotent") {
  testsupport::TestRng rng{31337};
  for (int i = 0; i < 1000; ++i) {
    BBox b;
    switch (i % 3) {
      case 0:
        b = {rng.uniform(-1, 2), rng.uniform(-1, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
        break;
      case 1:  // near the unit-square boundary
        b = {1.0 - rng.uniform(0, 1e-14), rng.uniform(0, 1e-14), rng.uniform(0, 1),
             rng.uniform(0, 1)};
        break;
      default:
        b = testsupport::random_box(rng);
        break;
    }
    const BBox once = clamp_box(b);
    const BBox twice = clamp_box(once);
    CAPTURE(b.cx, b.cy, b.w, b.h);
    CHECK(once == twice);
    const Corners c = to_corners(once);
    CHECK(c.x1 >= 0.0);
    CHECK(c.y1 >= 0.0);
    CHECK(c.x2 <= 1.0);
    CHECK(c.y2 <= 1.0);
  }
}

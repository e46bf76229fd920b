#include <catch2/catch_amalgamated.hpp>

#include "stgkit/sequencing.hpp"
#include "support/oracles.hpp"

using Catch::Approx;
using namespace stgkit;

TEST_CASE("sample_frames") {
  const FrameGrid g = sample_frames(20.0, 64);
  REQUIRE(g.n_frames() == 64);
  CHECK(g.timestamps[0] == 0.0);
  CHECK(g.timestamps[1] == Approx(0.31).margin(1e-12));
  CHECK(g.timestamps[63] == Approx(19.69).margin(1e-12));

  const FrameGrid single = sample_frames(10.0, 1);
  REQUIRE(single.n_frames() == 1);
  CHECK(single.timestamps[0] == 0.0);

  const FrameGrid five = sample_frames(5.0, 5);
  const std::vector<double> expected{0.0, 1.0, 2.0, 3.0, 4.0};
  CHECK(five.timestamps == expected);

  CHECK_THROWS_AS(sample_frames(0.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(sample_frames(-3.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(sample_frames(10.0, 0), std::invalid_argument);
  // 0.001s spacing collapses at two-decimal resolution
  CHECK_THROWS_AS(sample_frames(0.01, 10), std::invalid_argument);
}

TEST_CASE("time_instruction") {
  CHECK(time_instruction(sample_frames(5.0, 3)) ==
        "The video lasts for 5 seconds, and 3 frames are uniformly sampled from it. "
        "These frames are located at 0.00s,1.67s,3.33s.");
  CHECK(time_instruction(sample_frames(7.0, 1)) ==
        "The video lasts for 7 seconds, and 1 frames are uniformly sampled from it. "
        "These frames are located at 0.00s.");

  const std::string text = time_instruction(sample_frames(20.0, 64));
  CHECK(text.rfind("The video lasts for 20 seconds, and 64 frames are uniformly sampled "
                   "from it. These frames are located at 0.00s,0.31s,",
                   0) == 0);
  CHECK(text.substr(text.size() - 7) == "19.69s.");
}

TEST_CASE("time_instruction round-trips the grid") {
  testsupport::TestRng rng{99};
  for (int i = 0; i < 50; ++i) {
    const FrameGrid grid = sample_frames(rng.uniform(1.0, 300.0), rng.uniform_int(1, 80));
    const std::string text = time_instruction(grid);
    const std::string list = text.substr(text.find("located at ") + 11);
    std::vector<double> parsed;
    std::size_t pos = 0;
    while (pos < list.size()) {
      const std::size_t s_pos = list.find('s', pos);
      REQUIRE(s_pos != std::string::npos);
      parsed.push_back(std::stod(list.substr(pos, s_pos - pos)));
      pos = s_pos + 2;  // past "s," (or the final "s.")
    }
    REQUIRE(parsed.size() == grid.timestamps.size());
    for (std::size_t k = 0; k < parsed.size(); ++k)
      CHECK(parsed[k] == Approx(grid.timestamps[k]).margin(1e-9));
  }
}

TEST_CASE("snap_span") {
  const FrameGrid g = sample_frames(5.0, 5);  // 0,1,2,3,4
  CHECK(snap_span({1.4, 3.6}, g) == TimeSpan{1.0, 4.0});
  CHECK(snap_span({2.0, 3.0}, g) == TimeSpan{2.0, 3.0});
  CHECK(snap_span({0.49, 0.51}, g) == TimeSpan{0.0, 1.0});
  // exact ties snap to the earlier timestamp
  CHECK(snap_span({0.5, 2.5}, g) == TimeSpan{0.0, 2.0});
}

TEST_CASE("snap_span properties") {
  testsupport::TestRng rng{4242};
  for (int i = 0; i < 100; ++i) {
    const FrameGrid grid = sample_frames(rng.uniform(2.0, 100.0), rng.uniform_int(2, 40));
    const double a = rng.uniform(0.0, grid.duration_s);
    const double b = rng.uniform(a, grid.duration_s);
    const TimeSpan snapped = snap_span({a, b}, grid);
    CHECK(snap_span(snapped, grid) == snapped);
    const auto is_member = [&](double t) {
      for (double ts : grid.timestamps)
        if (ts == t) return true;
      return false;
    };
    CHECK(is_member(snapped.start_s));
    CHECK(is_member(snapped.end_s));
    CHECK(snapped.start_s <= snapped.end_s);
  }
}

TEST_CASE("timespan_to_frame_range") {
  const FrameGrid g = sample_frames(10.0, 10);  // 0..9
  CHECK(timespan_to_frame_range({2.4, 5.6}, g) == std::pair{3, 5});
  CHECK(timespan_to_frame_range({0.0, 10.0}, g) == std::pair{0, 9});
  // span between two timestamps collapses to the frame nearest its midpoint
  CHECK(timespan_to_frame_range({2.1, 2.2}, g) == std::pair{2, 2});
  CHECK(timespan_to_frame_range({2.8, 2.9}, g) == std::pair{3, 3});
}

TEST_CASE("frame range stays within the snapped span") {
  testsupport::TestRng rng{808};
  for (int i = 0; i < 100; ++i) {
    const FrameGrid grid = sample_frames(rng.uniform(2.0, 100.0), rng.uniform_int(2, 40));
    const double a = rng.uniform(0.0, grid.duration_s);
    const double b = rng.uniform(a, grid.duration_s);
    const auto [fs, fe] = timespan_to_frame_range({a, b}, grid);
    REQUIRE(fs >= 0);
    REQUIRE(fe < grid.n_frames());
    REQUIRE(fs <= fe);
    const bool collapsed =
        !(grid.timestamps[static_cast<std::size_t>(fs)] >= a &&
          grid.timestamps[static_cast<std::size_t>(fe)] <= b);
    if (!collapsed) {
      const TimeSpan snapped = snap_span({a, b}, grid);
      CHECK(grid.timestamps[static_cast<std::size_t>(fs)] >= snapped.start_s);
      CHECK(grid.timestamps[static_cast<std::size_t>(fe)] <= snapped.end_s);
    }
  }
}

TEST_CASE("parse_span_text") {
  CHECK(parse_span_text("from 2.40s to 5.60s") == TimeSpan{2.4, 5.6});
  CHECK(parse_span_text("from 0s to 0s") == TimeSpan{0.0, 0.0});
  CHECK(parse_span_text("The moment happens from 12s to 31.5s in the clip.") ==
        TimeSpan{12.0, 31.5});

  CHECK_THROWS_AS(parse_span_text("between 2 and 5"), parse_error);
  CHECK_THROWS_AS(parse_span_text("from s to 5s"), parse_error);
  CHECK_THROWS_AS(parse_span_text("from 2s until 5s"), parse_error);
  CHECK_THROWS_AS(parse_span_text("from 7s to 5s"), parse_error);
  CHECK_THROWS_AS(parse_span_text("from 2.s to 5s"), parse_error);

  try {
    parse_span_text("between 2 and 5");
    FAIL("expected parse_error");
  } catch (const parse_error& e) {
    CHECK(std::string(e.what()).find("position") != std::string::npos);
  }
}

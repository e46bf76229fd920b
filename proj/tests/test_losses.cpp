#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "stgkit/losses.hpp"
#include "support/oracles.hpp"

using Catch::Approx;
using namespace stgkit;

namespace {

Tube one_frame(const BBox& b) { return Tube{0, {b}}; }

const BBox kPred{0.5, 0.5, 0.4, 0.4};
const BBox kGt{0.6, 0.6, 0.4, 0.4};
// hand-derived for the pair above: IoU 9/23, enclosing box 0.5 x 0.5
const double kPairGiou = 0.09 / 0.23 - 0.02 / 0.25;

}  // namespace

TEST_CASE("l1_loss") {
  CHECK(l1_loss(one_frame(kPred), one_frame(kGt)) == Approx(0.2).margin(1e-12));
  CHECK(l1_loss(one_frame(kGt), one_frame(kGt)) == 0.0);

  // per-frame sums 0.2 and 0.4 average to 0.3
  Tube pred{0, {kPred, {0.5, 0.5, 0.4, 0.4}}};
  Tube gt{0, {kGt, {0.6, 0.7, 0.5, 0.4}}};
  CHECK(l1_loss(pred, gt) == Approx(0.3).margin(1e-12));

  Tube shifted{1, {kPred}};
  CHECK_THROWS_AS(l1_loss(shifted, one_frame(kGt)), std::invalid_argument);
  Tube longer{0, {kPred, kPred}};
  CHECK_THROWS_AS(l1_loss(longer, one_frame(kGt)), std::invalid_argument);
}

TEST_CASE("giou_loss") {
  CHECK(giou_loss(one_frame(kGt), one_frame(kGt)) == 0.0);
  CHECK(giou_loss(one_frame(kPred), one_frame(kGt)) == Approx(1.0 - kPairGiou).margin(1e-12));
  CHECK(giou_loss(one_frame(kPred), one_frame(kGt)) == Approx(0.688696).margin(1e-6));

  const BBox lo = from_corners({0.0, 0.0, 0.1, 0.1});
  const BBox hi = from_corners({0.9, 0.9, 1.0, 1.0});
  CHECK(giou_loss(one_frame(lo), one_frame(hi)) == Approx(1.98).margin(1e-12));

  // identical zero-area pairs are excluded from the mean
  const BBox point{0.3, 0.3, 0.0, 0.0};
  Tube pred{0, {point, kPred}};
  Tube gt{0, {point, kGt}};
  CHECK(giou_loss(pred, gt) == Approx(1.0 - kPairGiou).margin(1e-12));
  CHECK(giou_loss(one_frame(point), one_frame(point)) == 0.0);
}

TEST_CASE("space_loss") {
  const LossWeights w;
  CHECK(w.lambda_l1 == 3.0);
  CHECK(w.lambda_giou == 1.0);
  CHECK(space_loss(one_frame(kGt), one_frame(kGt), w) == 0.0);
  CHECK(space_loss(one_frame(kPred), one_frame(kGt), w) ==
        Approx(3.0 * 0.2 + (1.0 - kPairGiou)).margin(1e-12));
  CHECK(space_loss(one_frame(kPred), one_frame(kGt), w) == Approx(1.288696).margin(1e-6));

  LossWeights giou_only;
  giou_only.lambda_l1 = 0.0;
  CHECK(space_loss(one_frame(kPred), one_frame(kGt), giou_only) ==
        giou_loss(one_frame(kPred), one_frame(kGt)));
}

TEST_CASE("space_loss symmetry") {
  testsupport::TestRng rng{11};
  for (int i = 0; i < 50; ++i) {
    Tube a{0, {}}, b{0, {}};
    const int frames = rng.uniform_int(1, 4);
    for (int f = 0; f < frames; ++f) {
      a.boxes.push_back(testsupport::random_box(rng));
      b.boxes.push_back(testsupport::random_box(rng));
    }
    CHECK(space_loss(a, b, LossWeights{}) == Approx(space_loss(b, a, LossWeights{})).margin(1e-12));
  }
}

TEST_CASE("losses ignore frames outside the ground-truth range") {
  testsupport::TestRng rng{22};
  Tube gt{5, {}};
  Tube pred{5, {}};
  for (int f = 0; f < 4; ++f) {
    gt.boxes.push_back(testsupport::random_box(rng));
    pred.boxes.push_back(testsupport::random_box(rng));
  }
  const LossWeights w;
  const double base = space_loss(pred, gt, w);

  Tube padded{3, {}};
  padded.boxes.push_back({0.9, 0.9, 0.05, 0.05});  // garbage outside [5, 8]
  padded.boxes.push_back({0.1, 0.1, 0.9, 0.9});
  padded.boxes.insert(padded.boxes.end(), pred.boxes.begin(), pred.boxes.end());
  padded.boxes.push_back({0.5, 0.5, 1.0, 1.0});
  CHECK(space_loss(restrict_tube(padded, 5, 8), gt, w) == base);
}

TEST_CASE("time_loss") {
  TokenBatch uniform{Tensor({1, 4}), {2}};
  CHECK(time_loss(uniform) == Approx(std::log(4.0)).margin(1e-12));

  TokenBatch saturated{Tensor({1, 4}), {1}};
  saturated.logits(0, 1) = 30.0;
  CHECK(time_loss(saturated) < 1e-12);
  CHECK(time_loss(saturated) >= 0.0);

  // per-step cross entropies {ln 4, ~0} average to ln(4)/2
  TokenBatch two{Tensor({2, 4}), {2, 1}};
  two.logits(1, 1) = 50.0;
  CHECK(time_loss(two) == Approx(std::log(4.0) / 2.0).margin(1e-9));

  CHECK_THROWS_AS(time_loss(TokenBatch{Tensor({1, 4}), {}}), std::invalid_argument);
  CHECK_THROWS_AS(time_loss(TokenBatch{Tensor({1, 4}), {4}}), std::invalid_argument);
  CHECK_THROWS_AS(time_loss(TokenBatch{Tensor({1, 4}), {-1}}), std::invalid_argument);
  CHECK_THROWS_AS(time_loss(TokenBatch{Tensor({4}), {0}}), std::invalid_argument);
}

TEST_CASE("time_loss is non-negative") {
  testsupport::TestRng rng{33};
  for (int i = 0; i < 100; ++i) {
    const std::size_t steps = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const std::size_t vocab = static_cast<std::size_t>(rng.uniform_int(2, 12));
    TokenBatch batch{Tensor({steps, vocab}), {}};
    for (double& v : batch.logits.flat()) v = rng.uniform(-40.0, 40.0);
    for (std::size_t t = 0; t < steps; ++t)
      batch.targets.push_back(rng.uniform_int(0, static_cast<int>(vocab) - 1));
    CHECK(time_loss(batch) >= 0.0);
  }
}

TEST_CASE("total_loss") {
  const LossWeights w;
  CHECK(w.lambda_time == 1.0);
  CHECK(w.lambda_space == 1.0);
  CHECK(total_loss(1.386294, 1.288696, w) == Approx(2.674990).margin(1e-9));
  CHECK(total_loss(0.0, 0.0, w) == 0.0);

  LossWeights scaled;
  scaled.lambda_time = 2.0;
  scaled.lambda_space = 0.0;
  CHECK(total_loss(0.5, 123.0, scaled) == Approx(1.0).margin(1e-12));

  CHECK_THROWS_AS(total_loss(std::nan(""), 0.0, w), std::invalid_argument);
  CHECK_THROWS_AS(total_loss(0.0, std::numeric_limits<double>::infinity(), w),
                  std::invalid_argument);
}

TEST_CASE("numeric_gradient") {
  const auto sum_sq = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  const std::vector<double> x{1.0, 2.0};
  const auto grad = numeric_gradient(sum_sq, x, 1e-5);
  CHECK(grad[0] == Approx(2.0).margin(1e-6));
  CHECK(grad[1] == Approx(4.0).margin(1e-6));

  const auto constant = [](std::span<const double>) { return 3.5; };
  for (double g : numeric_gradient(constant, x, 1e-5)) CHECK(g == 0.0);

  CHECK_THROWS_AS(numeric_gradient(sum_sq, x, 0.0), std::invalid_argument);
  const auto bad = [](std::span<const double>) { return std::nan(""); };
  CHECK_THROWS_AS(numeric_gradient(bad, x, 1e-5), std::runtime_error);

  // l1 gradient away from kinks is a +-weight pattern given by the signs
  const Tube pred = one_frame(kPred);
  const Tube gt = one_frame(kGt);
  std::vector<double> coords{kPred.cx, kPred.cy, kPred.w, kPred.h};
  const auto l1_of = [&](std::span<const double> c) {
    return l1_loss(one_frame({c[0], c[1], c[2], c[3]}), gt);
  };
  const auto l1_grad = numeric_gradient(l1_of, coords, 1e-6);
  CHECK(l1_grad[0] == Approx(-1.0).margin(1e-6));  // pred.cx below gt.cx
  CHECK(l1_grad[1] == Approx(-1.0).margin(1e-6));
  // w and h sit exactly on the kink; the analytic convention there is 0
  CHECK(l1_loss_grad(pred, gt)[0][2] == 0.0);
  CHECK(l1_loss_grad(pred, gt)[0][3] == 0.0);
}

TEST_CASE("analytic space_loss gradient matches central differences") {
  testsupport::TestRng rng{44};
  const LossWeights w;
  int done = 0;
  while (done < 25) {
    Tube pred{0, {testsupport::random_box(rng)}};
    Tube gt{0, {testsupport::random_box(rng)}};
    // keep away from kinks and branch ties
    const Corners p = to_corners(pred.boxes[0]);
    const Corners g = to_corners(gt.boxes[0]);
    const double margin = 1e-3;
    if (std::abs(pred.boxes[0].cx - gt.boxes[0].cx) < margin ||
        std::abs(pred.boxes[0].cy - gt.boxes[0].cy) < margin ||
        std::abs(pred.boxes[0].w - gt.boxes[0].w) < margin ||
        std::abs(pred.boxes[0].h - gt.boxes[0].h) < margin ||
        std::abs(p.x1 - g.x1) < margin || std::abs(p.x2 - g.x2) < margin ||
        std::abs(p.y1 - g.y1) < margin || std::abs(p.y2 - g.y2) < margin ||
        box_area(pred.boxes[0]) < 0.01 || box_area(gt.boxes[0]) < 0.01)
      continue;
    const double iw = std::min(p.x2, g.x2) - std::max(p.x1, g.x1);
    const double ih = std::min(p.y2, g.y2) - std::max(p.y1, g.y1);
    if (std::abs(iw) < margin || std::abs(ih) < margin) continue;
    ++done;

    std::vector<double> flat{pred.boxes[0].cx, pred.boxes[0].cy, pred.boxes[0].w,
                             pred.boxes[0].h};
    const auto numeric = numeric_gradient(
        [&](std::span<const double> c) {
          return space_loss(Tube{0, {{c[0], c[1], c[2], c[3]}}}, gt, w);
        },
        flat, 1e-6);
    const auto analytic = space_loss_grad(pred, gt, w)[0];
    for (int c = 0; c < 4; ++c)
      CHECK(analytic[static_cast<std::size_t>(c)] ==
            Approx(numeric[static_cast<std::size_t>(c)]).margin(1e-5));
  }
}

TEST_CASE("analytic time_loss gradient matches central differences") {
  testsupport::TestRng rng{55};
  for (int i = 0; i < 20; ++i) {
    const std::size_t steps = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const std::size_t vocab = static_cast<std::size_t>(rng.uniform_int(2, 6));
    TokenBatch batch{Tensor({steps, vocab}), {}};
    for (double& v : batch.logits.flat()) v = rng.uniform(-2.0, 2.0);
    for (std::size_t t = 0; t < steps; ++t)
      batch.targets.push_back(rng.uniform_int(0, static_cast<int>(vocab) - 1));

    const Tensor analytic = time_loss_grad(batch);
    const std::vector<double> flat(batch.logits.flat().begin(), batch.logits.flat().end());
    const auto numeric = numeric_gradient(
        [&](std::span<const double> x) {
          return time_loss(TokenBatch{Tensor({steps, vocab}, {x.begin(), x.end()}),
                           batch.targets});
        },
        flat, 1e-6);
    for (std::size_t k = 0; k < numeric.size(); ++k)
      CHECK(analytic.flat()[k] == Approx(numeric[k]).margin(1e-7));
  }
}

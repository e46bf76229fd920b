#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stgkit/decoder.hpp"
#include "stgkit/losses.hpp"

namespace stgkit {

struct GradCheckResult {
  std::size_t checks = 0;
  double worst_rel_error = 0.0;
  std::string worst_case;

  bool passed(double tolerance) const { return checks > 0 && worst_rel_error < tolerance; }
};

inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

namespace detail {

struct GradRng {
  std::uint64_t state;
  double uniform(double lo, double hi) { return lo + (hi - lo) * (symmetric_unit(state) + 1.0) / 2.0; }
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(splitmix64(state) % static_cast<std::uint64_t>(hi - lo + 1));
  }
};

// Boxes kept away from L1 kinks and min/max branch ties so central
// differences see a smooth function.
inline bool boxes_gradcheck_safe(const BBox& pred, const BBox& gt) {
  constexpr double kMargin = 1e-3;
  if (std::abs(pred.cx - gt.cx) < kMargin || std::abs(pred.cy - gt.cy) < kMargin ||
      std::abs(pred.w - gt.w) < kMargin || std::abs(pred.h - gt.h) < kMargin)
    return false;
  const Corners p = to_corners(pred);
  const Corners g = to_corners(gt);
  if (std::abs(p.x1 - g.x1) < kMargin || std::abs(p.x2 - g.x2) < kMargin ||
      std::abs(p.y1 - g.y1) < kMargin || std::abs(p.y2 - g.y2) < kMargin)
    return false;
  const double iw = std::min(p.x2, g.x2) - std::max(p.x1, g.x1);
  const double ih = std::min(p.y2, g.y2) - std::max(p.y1, g.y1);
  return std::abs(iw) > kMargin && std::abs(ih) > kMargin;
}

inline BBox random_safe_box(GradRng& rng) {
  return {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75), rng.uniform(0.12, 0.45),
          rng.uniform(0.12, 0.45)};
}

inline void flatten_tube(const Tube& t, std::vector<double>& out) {
  out.clear();
  for (const BBox& b : t.boxes) {
    out.push_back(b.cx);
    out.push_back(b.cy);
    out.push_back(b.w);
    out.push_back(b.h);
  }
}

inline Tube tube_from_flat(int start_frame, std::span<const double> flat) {
  Tube t;
  t.start_frame = start_frame;
  for (std::size_t i = 0; i + 3 < flat.size(); i += 4)
    t.boxes.push_back({flat[i], flat[i + 1], flat[i + 2], flat[i + 3]});
  return t;
}

inline void observe(GradCheckResult& result, double rel, const std::string& label) {
  ++result.checks;
  if (rel > result.worst_rel_error) {
    result.worst_rel_error = rel;
    result.worst_case = label;
  }
}

}  // namespace detail

// Randomized analytic-vs-numeric gradient suite over space_loss, time_loss,
// and the decode path. corrupt_analytic perturbs one analytic component and
// exists as a negative control for the harness itself.
inline GradCheckResult run_gradient_suite(std::uint64_t seed, int trials,
                                          bool corrupt_analytic = false) {
  GradCheckResult result;
  const LossWeights weights;
  constexpr double kEps = 1e-6;

  const auto corrupt = [&](std::vector<double>& grad) {
    if (corrupt_analytic && !grad.empty()) grad[0] = grad[0] * 1.5 + 1e-3;
  };

  for (int trial = 0; trial < trials; ++trial) {
    detail::GradRng rng{seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(trial) + 1};

    // space_loss with respect to predicted box coordinates
    {
      const int n_frames = rng.uniform_int(1, 4);
      Tube pred, gt;
      pred.start_frame = gt.start_frame = 0;
      for (int f = 0; f < n_frames; ++f) {
        BBox p, g;
        do {
          p = detail::random_safe_box(rng);
          g = detail::random_safe_box(rng);
        } while (!detail::boxes_gradcheck_safe(p, g));
        pred.boxes.push_back(p);
        gt.boxes.push_back(g);
      }
      std::vector<double> analytic;
      for (const BoxGrad& bg : space_loss_grad(pred, gt, weights))
        analytic.insert(analytic.end(), bg.begin(), bg.end());
      corrupt(analytic);
      std::vector<double> flat;
      detail::flatten_tube(pred, flat);
      const auto numeric = numeric_gradient(
          [&](std::span<const double> x) {
            return space_loss(detail::tube_from_flat(0, x), gt, weights);
          },
          flat, kEps);
      detail::observe(result, relative_error(analytic, numeric),
                      "space_loss trial " + std::to_string(trial));
    }

    // time_loss with respect to logits
    {
      const std::size_t steps = static_cast<std::size_t>(rng.uniform_int(1, 4));
      const std::size_t vocab = static_cast<std::size_t>(rng.uniform_int(2, 9));
      TokenBatch batch{Tensor({steps, vocab}), {}};
      for (double& v : batch.logits.flat()) v = rng.uniform(-2.0, 2.0);
      for (std::size_t t = 0; t < steps; ++t)
        batch.targets.push_back(rng.uniform_int(0, static_cast<int>(vocab) - 1));
      const Tensor analytic_grad = time_loss_grad(batch);
      std::vector<double> analytic(analytic_grad.flat().begin(), analytic_grad.flat().end());
      corrupt(analytic);
      const std::vector<double> flat(batch.logits.flat().begin(), batch.logits.flat().end());
      const auto numeric = numeric_gradient(
          [&](std::span<const double> x) {
            TokenBatch b{Tensor({steps, vocab}, {x.begin(), x.end()}), batch.targets};
            return time_loss(b);
          },
          flat, kEps);
      detail::observe(result, relative_error(analytic, numeric),
                      "time_loss trial " + std::to_string(trial));
    }

    // space_loss(decode_tube(...)) with respect to the space head parameters
    {
      const int n_frames = rng.uniform_int(1, 4);
      const int tokens = rng.uniform_int(1, 4);
      const int dim = rng.uniform_int(2, 8);
      const int caption_len = rng.uniform_int(1, 5);
      const QueryLayout layout{n_frames, tokens, dim};
      std::map<int, FrameFeatures> features;
      for (int f = 0; f < n_frames; ++f)
        features[f] = FrameFeatures{stub_vision_embed(f, layout, rng.state),
                                    stub_text_embed({f + 1000}, dim, rng.state)};
      std::vector<int> caption_tokens;
      for (int i = 0; i < caption_len; ++i) caption_tokens.push_back(rng.uniform_int(0, 499));
      const Tensor kt = stub_text_embed(caption_tokens, dim, rng.state ^ 0xabcdefULL);
      const Tensor& vt = kt;
      SpaceHeadParams params =
          SpaceHeadParams::seeded(static_cast<std::size_t>(dim), rng.state ^ 0x5eedULL);

      const Tube pred = decode_tube(0, n_frames - 1, features, kt, vt, params);
      Tube gt;
      gt.start_frame = 0;
      for (const BBox& p : pred.boxes) {
        const double s1 = rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        const double s2 = rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        BBox g{p.cx + s1 * rng.uniform(0.05, 0.12), p.cy + s2 * rng.uniform(0.05, 0.12),
               p.w + s1 * rng.uniform(0.12, 0.2), p.h + s2 * rng.uniform(0.12, 0.2)};
        g.w = std::max(g.w, 0.05);
        g.h = std::max(g.h, 0.05);
        if (!detail::boxes_gradcheck_safe(p, g)) {
          // drift further apart; the margins above make this rare
          g.cx = p.cx + 0.07;
          g.cy = p.cy - 0.07;
          g.w = p.w + 0.15;
          g.h = p.h + 0.11;
        }
        gt.boxes.push_back(g);
      }

      std::vector<double> analytic =
          decode_space_loss_param_grad(0, n_frames - 1, features, kt, vt, params, gt, weights);
      corrupt(analytic);
      const std::vector<double> flat = params.flatten();
      const auto numeric = numeric_gradient(
          [&](std::span<const double> x) {
            const SpaceHeadParams p = SpaceHeadParams::from_flat(
                static_cast<std::size_t>(dim), x, params.activation);
            return space_loss(decode_tube(0, n_frames - 1, features, kt, vt, p), gt, weights);
          },
          flat, kEps);
      detail::observe(result, relative_error(analytic, numeric),
                      "decode_tube/space_loss trial " + std::to_string(trial));
    }
  }
  return result;
}

}  // namespace stgkit

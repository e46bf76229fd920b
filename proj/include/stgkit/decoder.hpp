#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgkit/geometry.hpp"
#include "stgkit/losses.hpp"
#include "stgkit/tensor.hpp"

namespace stgkit {

struct QueryLayout {
  int n_frames = 1;
  int tokens_per_frame = 1;
  int dim = 1;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [-1, 1), identical across platforms.
inline double symmetric_unit(std::uint64_t& state) {
  return (splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
}

inline void fill_unit_norm_row(std::span<double> row, std::uint64_t stream) {
  double norm_sq = 0.0;
  do {
    std::uint64_t state = stream;
    norm_sq = 0.0;
    for (double& v : row) {
      v = symmetric_unit(state);
      norm_sq += v * v;
    }
    ++stream;  // all-zero draw is astronomically unlikely; resample anyway
  } while (norm_sq == 0.0);
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& v : row) v *= inv;
}

}  // namespace detail

// Deterministic stand-in for the frozen vision encoder + projector: one
// unit-norm pseudo-random row per visual token of the frame.
inline Tensor stub_vision_embed(int frame_id, const QueryLayout& layout, std::uint64_t seed) {
  if (layout.tokens_per_frame < 1 || layout.dim < 1)
    throw std::invalid_argument("stub_vision_embed: invalid layout");
  Tensor out({static_cast<std::size_t>(layout.tokens_per_frame),
              static_cast<std::size_t>(layout.dim)});
  for (int r = 0; r < layout.tokens_per_frame; ++r) {
    std::uint64_t stream = seed;
    stream = stream * 0x100000001b3ULL ^ static_cast<std::uint64_t>(frame_id + 1);
    stream = stream * 0x100000001b3ULL ^ static_cast<std::uint64_t>(r + 1);
    detail::fill_unit_norm_row(out.row(static_cast<std::size_t>(r)), stream);
  }
  return out;
}

// Deterministic stand-in for the text tokenizer's embedding lookup.
inline Tensor stub_text_embed(const std::vector<int>& tokens, int dim, std::uint64_t seed) {
  if (tokens.empty()) throw std::invalid_argument("stub_text_embed: empty token list");
  if (dim < 1) throw std::invalid_argument("stub_text_embed: dim must be >= 1");
  Tensor out({tokens.size(), static_cast<std::size_t>(dim)});
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    std::uint64_t stream = seed * 0x100000001b3ULL ^ (0x7f4a7c15ULL + static_cast<std::uint64_t>(tokens[r]));
    detail::fill_unit_norm_row(out.row(r), stream);
  }
  return out;
}

// H[i] = rows of V[i] followed by the frame's query row, so the query for
// frame i lands at flat position (i+1)(S+1)-1.
inline Tensor interleave_queries(const Tensor& visual, const Tensor& queries) {
  if (visual.rank() != 3 || queries.rank() != 3)
    throw std::invalid_argument("interleave_queries: expected rank-3 inputs");
  if (queries.dim(1) != 1)
    throw std::invalid_argument("interleave_queries: queries must be N_v x 1 x D");
  if (visual.dim(0) != queries.dim(0) || visual.dim(2) != queries.dim(2))
    throw std::invalid_argument("interleave_queries: N_v or D mismatch");
  const std::size_t n_frames = visual.dim(0);
  const std::size_t tokens = visual.dim(1);
  const std::size_t dim = visual.dim(2);
  Tensor out({n_frames, tokens + 1, dim});
  for (std::size_t i = 0; i < n_frames; ++i) {
    for (std::size_t s = 0; s < tokens; ++s)
      for (std::size_t d = 0; d < dim; ++d) out(i, s, d) = visual(i, s, d);
    for (std::size_t d = 0; d < dim; ++d) out(i, tokens, d) = queries(i, 0, d);
  }
  return out;
}

struct Deinterleaved {
  Tensor visual;   // N_v x S x D
  Tensor queries;  // N_v x 1 x D
};

inline Deinterleaved deinterleave_queries(const Tensor& interleaved) {
  if (interleaved.rank() != 3 || interleaved.dim(1) < 2)
    throw std::invalid_argument("deinterleave_queries: expected N_v x (S+1) x D with S >= 1");
  const std::size_t n_frames = interleaved.dim(0);
  const std::size_t tokens = interleaved.dim(1) - 1;
  const std::size_t dim = interleaved.dim(2);
  Deinterleaved out{Tensor({n_frames, tokens, dim}), Tensor({n_frames, 1, dim})};
  for (std::size_t i = 0; i < n_frames; ++i) {
    for (std::size_t s = 0; s < tokens; ++s)
      for (std::size_t d = 0; d < dim; ++d) out.visual(i, s, d) = interleaved(i, s, d);
    for (std::size_t d = 0; d < dim; ++d) out.queries(i, 0, d) = interleaved(i, tokens, d);
  }
  return out;
}

// Row-wise softmax(q k^T / sqrt(D)), exposed so tests can audit the weights.
inline Tensor attention_weights(const Tensor& queries, const Tensor& keys) {
  if (queries.rank() != 2 || keys.rank() != 2 || queries.dim(1) != keys.dim(1))
    throw std::invalid_argument("attention: query/key dimension mismatch");
  const std::size_t n = queries.dim(0);
  const std::size_t m = keys.dim(0);
  const std::size_t dim = queries.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Tensor weights({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) s += queries(i, d) * keys(j, d);
      weights(i, j) = s * scale;
      max_score = std::max(max_score, weights(i, j));
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      weights(i, j) = std::exp(weights(i, j) - max_score);
      denom += weights(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) weights(i, j) /= denom;
  }
  return weights;
}

// Scaled dot-product attention with no learned projections.
inline Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values) {
  if (values.rank() != 2 || values.dim(0) != keys.dim(0))
    throw std::invalid_argument("attention: key/value row count mismatch");
  if (values.dim(1) != keys.dim(1))
    throw std::invalid_argument("attention: key/value dimension mismatch");
  const Tensor weights = attention_weights(queries, keys);
  const std::size_t n = weights.dim(0);
  const std::size_t m = weights.dim(1);
  const std::size_t dim = values.dim(1);
  Tensor out({n, dim});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double w = weights(i, j);
      for (std::size_t d = 0; d < dim; ++d) out(i, d) += w * values(j, d);
    }
  return out;
}

// Text-enhanced visual tokens, then query-over-features attention. Introduces
// no parameters of its own.
inline Tensor dual_cross_attention(const Tensor& frame_visual, const Tensor& frame_query,
                                   const Tensor& caption_keys, const Tensor& caption_values) {
  if (frame_query.rank() != 2 || frame_query.dim(0) != 1)
    throw std::invalid_argument("dual_cross_attention: frame query must be 1 x D");
  const Tensor enhanced = attention(frame_visual, caption_keys, caption_values);
  return attention(frame_query, enhanced, enhanced);
}

enum class Activation { gelu, tanh };

namespace detail {

inline double activate(Activation a, double x) {
  if (a == Activation::tanh) return std::tanh(x);
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

inline double activate_grad(Activation a, double x) {
  if (a == Activation::tanh) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  }
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
  return cdf + x * pdf;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// Two affine layers with a smooth nonlinearity between and a sigmoid squash
// on the four outputs. The only trainable parameters on the decode path.
struct SpaceHeadParams {
  std::size_t dim = 0;
  Tensor w1;  // D x D
  Tensor b1;  // D
  Tensor w2;  // 4 x D
  Tensor b2;  // 4
  Activation activation = Activation::gelu;

  static SpaceHeadParams zeros(std::size_t dim) {
    SpaceHeadParams p;
    p.dim = dim;
    p.w1 = Tensor({dim, dim});
    p.b1 = Tensor({dim});
    p.w2 = Tensor({4, dim});
    p.b2 = Tensor({4});
    return p;
  }

  static SpaceHeadParams seeded(std::size_t dim, std::uint64_t seed) {
    SpaceHeadParams p = zeros(dim);
    std::uint64_t state = seed ^ 0x5370616365486400ULL;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& v : p.w1.flat()) v = detail::symmetric_unit(state) * scale;
    for (double& v : p.b1.flat()) v = detail::symmetric_unit(state) * 0.1;
    for (double& v : p.w2.flat()) v = detail::symmetric_unit(state) * scale;
    for (double& v : p.b2.flat()) v = detail::symmetric_unit(state) * 0.1;
    return p;
  }

  std::size_t parameter_count() const { return dim * dim + dim + 4 * dim + 4; }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    out.insert(out.end(), w1.flat().begin(), w1.flat().end());
    out.insert(out.end(), b1.flat().begin(), b1.flat().end());
    out.insert(out.end(), w2.flat().begin(), w2.flat().end());
    out.insert(out.end(), b2.flat().begin(), b2.flat().end());
    return out;
  }

  static SpaceHeadParams from_flat(std::size_t dim, std::span<const double> flat,
                                   Activation activation = Activation::gelu) {
    SpaceHeadParams p = zeros(dim);
    p.activation = activation;
    if (flat.size() != p.parameter_count())
      throw std::invalid_argument("SpaceHeadParams::from_flat: length mismatch");
    std::size_t pos = 0;
    for (double& v : p.w1.flat()) v = flat[pos++];
    for (double& v : p.b1.flat()) v = flat[pos++];
    for (double& v : p.w2.flat()) v = flat[pos++];
    for (double& v : p.b2.flat()) v = flat[pos++];
    return p;
  }
};

// Cached forward pass, kept around for backpropagation.
struct SpaceHeadTrace {
  std::vector<double> input;    // D
  std::vector<double> z1;       // D, pre-activation
  std::vector<double> hidden;   // D
  std::array<double, 4> z2{};   // pre-sigmoid
  BBox box;
};

inline SpaceHeadTrace space_head_forward(const Tensor& spatial, const SpaceHeadParams& params) {
  if (spatial.size() != params.dim)
    throw std::invalid_argument("space_head: input dimension mismatch");
  SpaceHeadTrace trace;
  trace.input.assign(spatial.flat().begin(), spatial.flat().end());
  const std::size_t dim = params.dim;
  trace.z1.assign(dim, 0.0);
  trace.hidden.assign(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    double acc = params.b1(i);
    for (std::size_t j = 0; j < dim; ++j) acc += params.w1(i, j) * trace.input[j];
    trace.z1[i] = acc;
    trace.hidden[i] = detail::activate(params.activation, acc);
  }
  std::array<double, 4> logit{};
  for (std::size_t o = 0; o < 4; ++o) {
    double acc = params.b2(o);
    for (std::size_t j = 0; j < dim; ++j) acc += params.w2(o, j) * trace.hidden[j];
    logit[o] = acc;
    if (!std::isfinite(acc)) throw std::runtime_error("space_head: non-finite activation");
  }
  trace.z2 = logit;
  trace.box = {detail::sigmoid(logit[0]), detail::sigmoid(logit[1]), detail::sigmoid(logit[2]),
               detail::sigmoid(logit[3])};
  return trace;
}

inline BBox space_head(const Tensor& spatial, const SpaceHeadParams& params) {
  return space_head_forward(spatial, params).box;
}

// Accumulates d(loss)/d(params) into grad_flat (layout of flatten()) given
// d(loss)/d(box) for one decoded frame.
inline void space_head_backward(const SpaceHeadTrace& trace, const SpaceHeadParams& params,
                                const BoxGrad& dbox, std::span<double> grad_flat) {
  const std::size_t dim = params.dim;
  if (grad_flat.size() != params.parameter_count())
    throw std::invalid_argument("space_head_backward: gradient buffer size mismatch");
  std::array<double, 4> dz2{};
  for (std::size_t o = 0; o < 4; ++o) {
    const double s = detail::sigmoid(trace.z2[o]);
    dz2[o] = dbox[o] * s * (1.0 - s);
  }
  const std::size_t off_b1 = dim * dim;
  const std::size_t off_w2 = off_b1 + dim;
  const std::size_t off_b2 = off_w2 + 4 * dim;
  std::vector<double> dhidden(dim, 0.0);
  for (std::size_t o = 0; o < 4; ++o) {
    for (std::size_t j = 0; j < dim; ++j) {
      grad_flat[off_w2 + o * dim + j] += dz2[o] * trace.hidden[j];
      dhidden[j] += dz2[o] * params.w2(o, j);
    }
    grad_flat[off_b2 + o] += dz2[o];
  }
  for (std::size_t i = 0; i < dim; ++i) {
    const double dz1 = dhidden[i] * detail::activate_grad(params.activation, trace.z1[i]);
    for (std::size_t j = 0; j < dim; ++j) grad_flat[i * dim + j] += dz1 * trace.input[j];
    grad_flat[off_b1 + i] += dz1;
  }
}

// Per-frame inputs to the decoder: LLM last-layer stand-ins for the frame's
// visual tokens (S x D) and its spatio-temporal aware query (1 x D).
struct FrameFeatures {
  Tensor visual;
  Tensor query;
};

inline Tube decode_tube(int start_frame, int end_frame,
                        const std::map<int, FrameFeatures>& features, const Tensor& caption_keys,
                        const Tensor& caption_values, const SpaceHeadParams& params) {
  if (start_frame > end_frame)
    throw std::invalid_argument("decode_tube: start_frame > end_frame");
  Tube tube;
  tube.start_frame = start_frame;
  tube.boxes.reserve(static_cast<std::size_t>(end_frame - start_frame + 1));
  for (int frame = start_frame; frame <= end_frame; ++frame) {
    const auto it = features.find(frame);
    if (it == features.end())
      throw std::invalid_argument("decode_tube: missing features for frame " +
                                  std::to_string(frame));
    const Tensor spatial = dual_cross_attention(it->second.visual, it->second.query,
                                                caption_keys, caption_values);
    tube.boxes.push_back(space_head(spatial, params));
  }
  return tube;
}

// Analytic gradient of space_loss(decode_tube(...), gt) with respect to the
// flattened SpaceHeadParams. The attention stage carries no parameters, so
// the only gradient path runs through the head.
inline std::vector<double> decode_space_loss_param_grad(
    int start_frame, int end_frame, const std::map<int, FrameFeatures>& features,
    const Tensor& caption_keys, const Tensor& caption_values, const SpaceHeadParams& params,
    const Tube& gt, const LossWeights& weights) {
  Tube pred;
  pred.start_frame = start_frame;
  std::vector<SpaceHeadTrace> traces;
  for (int frame = start_frame; frame <= end_frame; ++frame) {
    const auto it = features.find(frame);
    if (it == features.end())
      throw std::invalid_argument("decode_tube: missing features for frame " +
                                  std::to_string(frame));
    const Tensor spatial = dual_cross_attention(it->second.visual, it->second.query,
                                                caption_keys, caption_values);
    traces.push_back(space_head_forward(spatial, params));
    pred.boxes.push_back(traces.back().box);
  }
  const std::vector<BoxGrad> dboxes = space_loss_grad(pred, gt, weights);
  std::vector<double> grad(params.parameter_count(), 0.0);
  for (std::size_t i = 0; i < traces.size(); ++i)
    space_head_backward(traces[i], params, dboxes[i], grad);
  return grad;
}

}  // namespace stgkit

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stgkit/errors.hpp"
#include "stgkit/geometry.hpp"
#include "stgkit/sequencing.hpp"

namespace stgkit {

struct GroundingSample {
  std::string id;
  double duration_s = 0.0;
  std::string caption;
  TimeSpan gt_span;
  Tube gt_tube;
  std::vector<double> frame_timestamps;
};

// Tube is optional so temporal-only systems can still be scored; they get
// viou = 0 instead of being dropped from the denominator.
struct Prediction {
  std::string id;
  TimeSpan span;
  std::optional<Tube> tube;
};

struct StvgReport {
  double m_tiou = 0.0;   // percent
  double m_viou = 0.0;   // percent
  std::map<double, double> viou_at;
  std::size_t n_samples = 0;
};

namespace detail {

// Neumaier-compensated sum, applied in input order.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline void check_tube_on_grid(const Tube& tube, std::size_t n_frames, const std::string& id) {
  if (tube.boxes.empty()) throw schema_error("sample " + id + ": empty tube");
  if (tube.start_frame < 0 || static_cast<std::size_t>(tube.end_frame()) >= n_frames)
    throw schema_error("sample " + id + ": tube frames [" + std::to_string(tube.start_frame) +
                       ", " + std::to_string(tube.end_frame()) +
                       "] fall outside the frame grid of size " + std::to_string(n_frames));
}

inline TimeSpan clip_span(const TimeSpan& span, double duration_s) {
  return {std::clamp(span.start_s, 0.0, duration_s), std::clamp(span.end_s, 0.0, duration_s)};
}

}  // namespace detail

// Mean per-frame IoU over the union of the two frame sets; frames present in
// only one tube contribute zero. Boxes are clamped to the unit square first.
inline double viou(const Prediction& pred, const GroundingSample& gt) {
  if (pred.id != gt.id)
    throw id_mismatch_error("viou: prediction id '" + pred.id + "' does not match sample id '" +
                            gt.id + "'");
  detail::check_tube_on_grid(gt.gt_tube, gt.frame_timestamps.size(), gt.id);
  if (!pred.tube.has_value()) return 0.0;
  const Tube& pt = *pred.tube;
  detail::check_tube_on_grid(pt, gt.frame_timestamps.size(), gt.id);
  const Tube& gtt = gt.gt_tube;
  const int inter_first = std::max(pt.start_frame, gtt.start_frame);
  const int inter_last = std::min(pt.end_frame(), gtt.end_frame());
  const int inter_count = std::max(0, inter_last - inter_first + 1);
  const int union_count = static_cast<int>(pt.boxes.size()) +
                          static_cast<int>(gtt.boxes.size()) - inter_count;
  if (union_count <= 0) return 0.0;
  detail::CompensatedSum sum;
  for (int f = inter_first; f <= inter_last; ++f)
    sum.add(box_iou(clamp_box(pt.box_at(f)), clamp_box(gtt.box_at(f))));
  return sum.value() / static_cast<double>(union_count);
}

inline StvgReport evaluate_stvg(const std::vector<Prediction>& preds,
                                const std::vector<GroundingSample>& gts,
                                const std::vector<double>& thresholds = {0.3, 0.5}) {
  if (gts.empty()) throw std::invalid_argument("evaluate_stvg: no samples");
  std::map<std::string, const Prediction*> by_id;
  std::vector<std::string> duplicates;
  for (const Prediction& p : preds)
    if (!by_id.emplace(p.id, &p).second) duplicates.push_back(p.id);
  std::vector<std::string> missing;
  std::set<std::string> gt_ids;
  for (const GroundingSample& g : gts) {
    if (!gt_ids.insert(g.id).second) duplicates.push_back(g.id);
    if (by_id.find(g.id) == by_id.end()) missing.push_back(g.id);
  }
  std::vector<std::string> extras;
  for (const auto& [id, p] : by_id)
    if (gt_ids.find(id) == gt_ids.end()) extras.push_back(id);
  if (!duplicates.empty() || !missing.empty() || !extras.empty()) {
    std::string msg = "evaluate_stvg: prediction/ground-truth mismatch;";
    const auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& e : v) s += (s.empty() ? " " : ", ") + e;
      return s;
    };
    if (!missing.empty()) msg += " missing:" + join(missing) + ";";
    if (!duplicates.empty()) msg += " duplicate:" + join(duplicates) + ";";
    if (!extras.empty()) msg += " unmatched:" + join(extras) + ";";
    throw id_mismatch_error(msg);
  }

  StvgReport report;
  report.n_samples = gts.size();
  detail::CompensatedSum tiou_sum;
  detail::CompensatedSum viou_sum;
  std::map<double, std::size_t> above;
  for (double t : thresholds) above[t] = 0;
  for (const GroundingSample& gt : gts) {
    const Prediction& pred = *by_id.at(gt.id);
    const TimeSpan clipped = detail::clip_span(pred.span, gt.duration_s);
    if (pred.tube.has_value()) {
      // Prediction invariant: the tube covers exactly the frame range the
      // span implies on this sample's grid.
      const FrameGrid grid{gt.duration_s, gt.frame_timestamps};
      const auto [fs, fe] = timespan_to_frame_range(clipped, grid);
      if (pred.tube->start_frame != fs || pred.tube->end_frame() != fe)
        throw schema_error("sample " + gt.id + ": tube frames [" +
                           std::to_string(pred.tube->start_frame) + ", " +
                           std::to_string(pred.tube->end_frame()) +
                           "] do not match the span's frame range [" + std::to_string(fs) + ", " +
                           std::to_string(fe) + "]");
    }
    tiou_sum.add(temporal_iou(clipped, gt.gt_span));
    const double v = viou(pred, gt);
    viou_sum.add(v);
    for (auto& [threshold, count] : above)
      if (v > threshold) ++count;
  }
  const double n = static_cast<double>(gts.size());
  report.m_tiou = tiou_sum.value() / n * 100.0;
  report.m_viou = viou_sum.value() / n * 100.0;
  for (const auto& [threshold, count] : above)
    report.viou_at[threshold] = static_cast<double>(count) / n * 100.0;
  return report;
}

// REC accuracy: fraction of pairs with IoU >= threshold, as a percentage.
inline double rec_accuracy(const std::vector<BBox>& pred_boxes, const std::vector<BBox>& gt_boxes,
                           double threshold) {
  if (pred_boxes.size() != gt_boxes.size())
    throw std::invalid_argument("rec_accuracy: length mismatch");
  if (pred_boxes.empty()) throw std::invalid_argument("rec_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred_boxes.size(); ++i)
    if (box_iou(clamp_box(pred_boxes[i]), clamp_box(gt_boxes[i])) >= threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred_boxes.size()) * 100.0;
}

// R@1 at each IoU threshold, as percentages.
inline std::map<double, double> recall_at_1(const std::vector<TimeSpan>& pred_spans,
                                            const std::vector<TimeSpan>& gt_spans,
                                            const std::vector<double>& thresholds = {0.5, 0.7}) {
  if (pred_spans.size() != gt_spans.size())
    throw std::invalid_argument("recall_at_1: length mismatch");
  if (pred_spans.empty()) throw std::invalid_argument("recall_at_1: empty input");
  std::map<double, double> out;
  for (double threshold : thresholds) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred_spans.size(); ++i)
      if (temporal_iou(pred_spans[i], gt_spans[i]) >= threshold) ++hits;
    out[threshold] = static_cast<double>(hits) / static_cast<double>(pred_spans.size()) * 100.0;
  }
  return out;
}

}  // namespace stgkit

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stgkit/decoder.hpp"
#include "stgkit/errors.hpp"
#include "stgkit/gradcheck.hpp"
#include "stgkit/log.hpp"
#include "stgkit/metrics.hpp"
#include "stgkit/records.hpp"
#include "stgkit/sequencing.hpp"
#include "stgkit/unistg.hpp"

namespace {

using stgkit::json;

double round1(double v) { return std::round(v * 10.0) / 10.0; }

std::string threshold_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

// Pairs (id, value) lists by id, in ground-truth order.
template <typename T>
std::vector<T> align_by_id(const std::vector<std::pair<std::string, T>>& preds,
                           const std::vector<std::pair<std::string, T>>& gts) {
  std::map<std::string, const T*> by_id;
  std::string problems;
  for (const auto& [id, value] : preds)
    if (!by_id.emplace(id, &value).second) problems += " duplicate:" + id;
  std::vector<T> aligned;
  std::map<std::string, int> gt_seen;
  for (const auto& [id, value] : gts) {
    if (++gt_seen[id] > 1) problems += " duplicate:" + id;
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      problems += " missing:" + id;
      continue;
    }
    aligned.push_back(*it->second);
  }
  for (const auto& [id, value] : preds)
    if (gt_seen.find(id) == gt_seen.end()) problems += " unmatched:" + id;
  if (!problems.empty())
    throw stgkit::id_mismatch_error("prediction/ground-truth id mismatch;" + problems);
  return aligned;
}

int run_eval_stvg(const std::string& gt_path, const std::string& pred_path,
                  const std::string& out_path, const std::vector<double>& thresholds) {
  const auto gts = stgkit::read_jsonl<stgkit::GroundingSample>(
      gt_path, stgkit::grounding_sample_from_json);
  const auto preds =
      stgkit::read_jsonl<stgkit::Prediction>(pred_path, stgkit::prediction_from_json);
  const stgkit::StvgReport report = stgkit::evaluate_stvg(preds, gts, thresholds);

  json out{{"n_samples", report.n_samples},
           {"m_tIoU", round1(report.m_tiou)},
           {"m_vIoU", round1(report.m_viou)}};
  std::string header = "n_samples  m_tIoU  m_vIoU";
  char row[256];
  int pos = std::snprintf(row, sizeof(row), "%-9zu  %6.1f  %6.1f", report.n_samples,
                          round1(report.m_tiou), round1(report.m_viou));
  for (const auto& [threshold, value] : report.viou_at) {
    const std::string label = "vIoU@" + threshold_label(threshold);
    out[label] = round1(value);
    header += "  " + label;
    pos += std::snprintf(row + pos, sizeof(row) - static_cast<std::size_t>(pos), "  %*.1f",
                         static_cast<int>(label.size()), round1(value));
  }
  std::printf("%s\n%s\n", header.c_str(), row);
  if (!out_path.empty()) write_json_file(out, out_path);
  return 0;
}

std::pair<std::string, stgkit::TimeSpan> span_line_from_json(const json& j) {
  return {stgkit::detail::require_string(j, "id"),
          stgkit::span_from_json(stgkit::detail::require_field(j, "span"))};
}

std::pair<std::string, stgkit::BBox> box_line_from_json(const json& j) {
  return {stgkit::detail::require_string(j, "id"),
          stgkit::box_from_json(stgkit::detail::require_field(j, "box"))};
}

int run_eval_vtg(const std::string& gt_path, const std::string& pred_path,
                 const std::string& out_path, const std::vector<double>& thresholds) {
  using SpanLine = std::pair<std::string, stgkit::TimeSpan>;
  const auto gts = stgkit::read_jsonl<SpanLine>(gt_path, span_line_from_json);
  const auto preds = stgkit::read_jsonl<SpanLine>(pred_path, span_line_from_json);
  std::vector<stgkit::TimeSpan> gt_spans;
  for (const auto& [id, span] : gts) gt_spans.push_back(span);
  const std::vector<stgkit::TimeSpan> pred_spans = align_by_id(preds, gts);
  const auto recall = stgkit::recall_at_1(pred_spans, gt_spans, thresholds);

  json out{{"n_samples", gt_spans.size()}};
  std::string header = "n_samples";
  std::string row = std::to_string(gt_spans.size());
  row.resize(header.size(), ' ');
  for (const auto& [threshold, value] : recall) {
    const std::string label = "R@1_IoU=" + threshold_label(threshold);
    out[label] = round1(value);
    char cell[64];
    std::snprintf(cell, sizeof(cell), "  %*.1f", static_cast<int>(label.size()), round1(value));
    header += "  " + label;
    row += cell;
  }
  std::printf("%s\n%s\n", header.c_str(), row.c_str());
  if (!out_path.empty()) write_json_file(out, out_path);
  return 0;
}

int run_eval_rec(const std::string& gt_path, const std::string& pred_path,
                 const std::string& out_path, const std::vector<double>& thresholds) {
  using BoxLine = std::pair<std::string, stgkit::BBox>;
  const auto gts = stgkit::read_jsonl<BoxLine>(gt_path, box_line_from_json);
  const auto preds = stgkit::read_jsonl<BoxLine>(pred_path, box_line_from_json);
  std::vector<stgkit::BBox> gt_boxes;
  for (const auto& [id, box] : gts) gt_boxes.push_back(box);
  const std::vector<stgkit::BBox> pred_boxes = align_by_id(preds, gts);

  json out{{"n_samples", gt_boxes.size()}};
  std::string header = "n_samples";
  std::string row = std::to_string(gt_boxes.size());
  row.resize(header.size(), ' ');
  for (double threshold : thresholds) {
    const double acc = stgkit::rec_accuracy(pred_boxes, gt_boxes, threshold);
    const std::string label = "accuracy@" + threshold_label(threshold);
    out[label] = round1(acc);
    char cell[64];
    std::snprintf(cell, sizeof(cell), "  %*.1f", static_cast<int>(label.size()), round1(acc));
    header += "  " + label;
    row += cell;
  }
  std::printf("%s\n%s\n", header.c_str(), row.c_str());
  if (!out_path.empty()) write_json_file(out, out_path);
  return 0;
}

void apply_synth_config_file(stgkit::unistg::SynthesisConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw stgkit::schema_error("cannot open config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw stgkit::schema_error("config " + path + " is not a JSON object");
  const auto num = [&](const char* key, double& slot) {
    if (j.contains(key)) slot = j[key].get<double>();
  };
  const auto integer = [&](const char* key, int& slot) {
    if (j.contains(key)) slot = j[key].get<int>();
  };
  num("conf_threshold", cfg.conf_threshold);
  integer("max_boxes_per_frame", cfg.max_boxes_per_frame);
  num("area_ratio_low", cfg.area_ratio_low);
  num("area_ratio_high", cfg.area_ratio_high);
  num("min_duration_s", cfg.min_duration_s);
  num("max_duration_s", cfg.max_duration_s);
  integer("n_frames", cfg.n_frames);
  integer("max_in_flight_requests", cfg.max_in_flight_requests);
  integer("request_retries", cfg.request_retries);
  if (j.contains("analyzer_url")) cfg.analyzer_url = j["analyzer_url"].get<std::string>();
  if (j.contains("detector_url")) cfg.detector_url = j["detector_url"].get<std::string>();
  if (j.contains("mock_fixture_path"))
    cfg.mock_fixture_path = j["mock_fixture_path"].get<std::string>();
}

int run_synth(const std::string& corpus_path, const stgkit::unistg::SynthesisConfig& cfg,
              const std::string& out_path, const std::string& stats_path) {
  namespace unistg = stgkit::unistg;
  const auto corpus = stgkit::read_jsonl<unistg::CaptionRecord>(
      corpus_path, unistg::caption_record_from_json);
  std::unique_ptr<unistg::ServiceClient> client;
  if (cfg.mock_fixture_path.has_value()) {
    client = std::make_unique<unistg::MockServiceClient>(*cfg.mock_fixture_path);
  } else {
    if (cfg.analyzer_url.empty() || cfg.detector_url.empty())
      throw stgkit::service_error(
          "no analyzer/detector endpoints configured and no mock fixtures given");
    client = std::make_unique<unistg::HttpServiceClient>(cfg.analyzer_url, cfg.detector_url,
                                                         cfg.request_retries);
  }
  const unistg::SynthesisResult result = unistg::synthesize_dataset(*client, corpus, cfg);
  unistg::write_synth_records(result.records, out_path);
  write_json_file(unistg::stats_to_json(result.stats), stats_path);
  std::printf("emitted %zu/%zu records (rejection rate %.1f%%)\n", result.stats.emitted,
              result.stats.total, result.stats.rejection_rate() * 100.0);
  return 0;
}

int run_decode_demo(std::uint64_t seed, int n_frames, int tokens_per_frame, int dim,
                    double duration_s, const std::string& span_text) {
  const stgkit::FrameGrid grid = stgkit::sample_frames(duration_s, n_frames);
  const stgkit::TimeSpan span = stgkit::parse_span_text(span_text);
  const auto [fs, fe] = stgkit::timespan_to_frame_range(span, grid);

  const stgkit::QueryLayout layout{n_frames, tokens_per_frame, dim};
  std::map<int, stgkit::FrameFeatures> features;
  for (int f = fs; f <= fe; ++f)
    features[f] = stgkit::FrameFeatures{
        stgkit::stub_vision_embed(f, layout, seed),
        stgkit::stub_text_embed({f}, dim, seed ^ 0x71a5ULL)};
  // caption stand-in: one token per character of the span text
  std::vector<int> caption_tokens;
  for (char c : span_text) caption_tokens.push_back(static_cast<unsigned char>(c));
  const stgkit::Tensor caption = stgkit::stub_text_embed(caption_tokens, dim, seed ^ 0xca97ULL);
  const stgkit::SpaceHeadParams params =
      stgkit::SpaceHeadParams::seeded(static_cast<std::size_t>(dim), seed);

  const stgkit::Tube tube = stgkit::decode_tube(fs, fe, features, caption, caption, params);
  const json out{{"span", stgkit::span_to_json(span)},
                 {"frame_range", {fs, fe}},
                 {"tube", stgkit::tube_to_json(tube)}};
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int run_gradcheck(std::uint64_t seed, int trials, double tolerance, bool corrupt) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("gradcheck: tolerance must be > 0");
  const stgkit::GradCheckResult result = stgkit::run_gradient_suite(seed, trials, corrupt);
  std::printf("gradient checks: %zu (%d trials)\n", result.checks, trials);
  std::printf("worst relative error: %.3e (%s)\n", result.worst_rel_error,
              result.worst_case.c_str());
  const bool ok = result.passed(tolerance);
  std::printf("tolerance %.1e -> %s\n", tolerance, ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatio-temporal grounding toolkit"};
  app.require_subcommand(1);

  std::string gt_path, pred_path, out_path;
  std::vector<double> stvg_thresholds{0.3, 0.5};
  std::vector<double> vtg_thresholds{0.5, 0.7};
  std::vector<double> rec_thresholds{0.5};

  auto* eval_stvg = app.add_subcommand("eval-stvg", "score spatio-temporal grounding predictions");
  eval_stvg->add_option("--gt", gt_path, "ground-truth JSONL")->required();
  eval_stvg->add_option("--pred", pred_path, "prediction JSONL")->required();
  eval_stvg->add_option("--out", out_path, "write the report as JSON");
  eval_stvg->add_option("--thresholds", stvg_thresholds, "vIoU@R thresholds");

  auto* eval_vtg = app.add_subcommand("eval-vtg", "score temporal grounding predictions");
  eval_vtg->add_option("--gt", gt_path, "ground-truth JSONL")->required();
  eval_vtg->add_option("--pred", pred_path, "prediction JSONL")->required();
  eval_vtg->add_option("--out", out_path, "write the report as JSON");
  eval_vtg->add_option("--thresholds", vtg_thresholds, "R@1 IoU thresholds");

  auto* eval_rec = app.add_subcommand("eval-rec", "score referring-expression predictions");
  eval_rec->add_option("--gt", gt_path, "ground-truth JSONL")->required();
  eval_rec->add_option("--pred", pred_path, "prediction JSONL")->required();
  eval_rec->add_option("--out", out_path, "write the report as JSON");
  eval_rec->add_option("--thresholds", rec_thresholds, "accuracy IoU thresholds");

  stgkit::unistg::SynthesisConfig synth_cfg;
  std::string corpus_path, config_path, stats_path, mock_fixtures;
  int synth_frames = 0;
  auto* synth = app.add_subcommand("synth", "synthesize grounding records from captions");
  synth->add_option("corpus", corpus_path, "caption corpus JSONL")->required();
  synth->add_option("--out", out_path, "output records JSONL")->required();
  synth->add_option("--stats", stats_path, "output stats JSON")->required();
  synth->add_option("--config", config_path, "synthesis config JSON");
  synth->add_option("--mock-fixtures", mock_fixtures, "service fixture file (mock mode)");
  synth->add_option("--frames", synth_frames, "frames sampled per video");
  synth->add_option("--analyzer-url", synth_cfg.analyzer_url, "analyzer service base URL");
  synth->add_option("--detector-url", synth_cfg.detector_url, "detector service base URL");
  synth->add_option("--max-in-flight", synth_cfg.max_in_flight_requests,
                    "concurrent service requests");

  std::uint64_t seed = 0;
  int demo_frames = 64;
  int tokens_per_frame = 4;
  int dim = 16;
  double demo_duration = 20.0;
  std::string span_text;
  auto* demo = app.add_subcommand("decode-demo", "decode a tube from stub features");
  demo->add_option("span", span_text, "time range, e.g. \"from 2.40s to 5.60s\"")->required();
  demo->add_option("--seed", seed, "rng seed");
  demo->add_option("--frames", demo_frames, "frames sampled from the video");
  demo->add_option("--tokens-per-frame", tokens_per_frame, "visual tokens per frame");
  demo->add_option("--dim", dim, "embedding dimension");
  demo->add_option("--duration", demo_duration, "video duration in seconds");

  int trials = 100;
  double tolerance = 1e-4;
  bool corrupt = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "verify analytic gradients");
  gradcheck->add_option("--seed", seed, "rng seed");
  gradcheck->add_option("--trials", trials, "random trials per check");
  gradcheck->add_option("--tolerance", tolerance, "relative-error bound");
  gradcheck->add_flag("--corrupt-analytic", corrupt, "negative control: break one gradient")
      ->group("");

  try {
    app.parse(argc, argv);
    if (eval_stvg->parsed()) return run_eval_stvg(gt_path, pred_path, out_path, stvg_thresholds);
    if (eval_vtg->parsed()) return run_eval_vtg(gt_path, pred_path, out_path, vtg_thresholds);
    if (eval_rec->parsed()) return run_eval_rec(gt_path, pred_path, out_path, rec_thresholds);
    if (synth->parsed()) {
      if (!config_path.empty()) apply_synth_config_file(synth_cfg, config_path);
      if (!mock_fixtures.empty()) synth_cfg.mock_fixture_path = mock_fixtures;
      if (synth_frames > 0) synth_cfg.n_frames = synth_frames;
      return run_synth(corpus_path, synth_cfg, out_path, stats_path);
    }
    if (demo->parsed())
      return run_decode_demo(seed, demo_frames, tokens_per_frame, dim, demo_duration, span_text);
    if (gradcheck->parsed()) return run_gradcheck(seed, trials, tolerance, corrupt);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const stgkit::parse_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const stgkit::service_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const stgkit::id_mismatch_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const stgkit::schema_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#pragma once

#include <json.hpp>

#include "pmseg/metrics.hpp"
#include "pmseg/pmdd.hpp"
#include "pmseg/trajectory.hpp"

namespace pmseg {

inline nlohmann::ordered_json to_json(const Segmentation& seg) {
  auto arr = nlohmann::ordered_json::array();
  for (const Segment& s : seg) arr.push_back({s.start, s.end, s.label});
  return arr;
}

namespace pmdd {

inline nlohmann::ordered_json to_json(const SimilarityRecord& r) {
  return {{"pair", {r.pair, r.pair + 1}},
          {"sm_pca", r.sm_pca},
          {"sm_mi", r.sm_mi},
          {"sm_da", r.sm_da},
          {"sm_dtw", r.sm_dtw},
          {"y_pca", r.y_pca},
          {"y_mi", r.y_mi},
          {"y_da", r.y_da},
          {"y_dtw", r.y_dtw},
          {"o", r.o},
          {"pca_fallback", r.pca_fallback},
          {"dtw_subsampled", r.dtw_subsampled}};
}

/// One trace line. Callers may add keys (e.g. the demonstration id).
inline nlohmann::ordered_json to_json(const IterationTrace& t) {
  nlohmann::ordered_json j;
  j["iteration"] = t.iteration;
  j["segments"] = t.segments;
  j["max_o"] = t.max_o;
  j["merged"] = t.merged ? nlohmann::ordered_json({*t.merged, *t.merged + 1})
                         : nlohmann::ordered_json(nullptr);
  auto recs = nlohmann::ordered_json::array();
  for (const auto& r : t.records) recs.push_back(to_json(r));
  j["records"] = std::move(recs);
  return j;
}

/// JSON lines, one iteration per line.
inline std::string trace_jsonl(const std::vector<IterationTrace>& trace) {
  std::string out;
  for (const auto& t : trace) out += to_json(t).dump() + '\n';
  return out;
}

}  // namespace pmdd

namespace metrics {

inline nlohmann::ordered_json to_json(const Match& m, const Segmentation& pred,
                                      const Segmentation& truth) {
  const Segment& g = truth[m.truth_index];
  nlohmann::ordered_json j;
  j["truth"] = {g.start, g.end, g.label};
  if (m.pred_index) {
    const Segment& s = pred[*m.pred_index];
    j["pred"] = {s.start, s.end, s.label};
  } else {
    j["pred"] = nullptr;
  }
  j["overlap"] = m.overlap;
  j["iou"] = m.iou;
  j["true_positive"] = m.true_positive;
  return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& r, const Segmentation& pred,
                                      const Segmentation& truth) {
  nlohmann::ordered_json j;
  j["nmi"] = r.nmi;
  j["seg_acc"] = r.seg_acc;
  j["total_frames"] = r.total_frames;
  if (r.segments_before) j["segments_before"] = *r.segments_before;
  if (r.segments_after) j["segments_after"] = *r.segments_after;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : r.matches) arr.push_back(to_json(m, pred, truth));
  j["matches"] = std::move(arr);
  return j;
}

}  // namespace metrics

}  // namespace pmseg

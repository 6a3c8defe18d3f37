#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pmseg/error.hpp"
#include "pmseg/trajectory.hpp"

namespace pmseg::metrics {

namespace detail {

inline double entropy(std::vector<Index> counts, double total) {
  std::sort(counts.begin(), counts.end());
  double h = 0.0;
  for (Index c : counts) {
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

template <typename Key>
std::vector<Index> tally(const std::vector<Key>& keys) {
  std::map<Key, Index> t;
  for (const auto& k : keys) ++t[k];
  std::vector<Index> out;
  for (const auto& [k, c] : t) out.push_back(c);
  return out;
}

}  // namespace detail

/// Normalized mutual information I(A,B) / sqrt(H(A) H(B)), natural log.
/// Two single-label labelings score 1; exactly one single-label scores 0.
inline double nmi(std::span<const Label> a, std::span<const Label> b) {
  if (a.empty() || b.empty()) throw Error("NMI of an empty labeling");
  if (a.size() != b.size())
    throw Error("NMI of labelings with " + std::to_string(a.size()) + " and " +
                std::to_string(b.size()) + " frames");
  const std::vector<Label> va(a.begin(), a.end()), vb(b.begin(), b.end());
  std::vector<std::pair<Label, Label>> joint;
  joint.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) joint.emplace_back(a[i], b[i]);
  const auto ca = detail::tally(va);
  const auto cb = detail::tally(vb);
  const bool single_a = ca.size() == 1, single_b = cb.size() == 1;
  if (single_a && single_b) return 1.0;
  if (single_a || single_b) return 0.0;
  const auto n = static_cast<double>(a.size());
  const double ha = detail::entropy(ca, n);
  const double hb = detail::entropy(cb, n);
  const double hab = detail::entropy(detail::tally(joint), n);
  const double mi = (ha + hb) - hab;
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

/// A ground-truth segment paired with its maximum-overlap prediction.
struct Match {
  std::size_t truth_index = 0;
  std::optional<std::size_t> pred_index;
  Index overlap = 0;  // frames shared, inclusive convention
  double iou = 0.0;
  bool true_positive = false;
};

inline Index overlap_frames(const Segment& s, const Segment& g) {
  return std::max<Index>(0, std::min(s.end, g.end) - std::max(s.start, g.start) + 1);
}

struct MatchOptions {
  bool skip_background = true;  // background truth segments are not matched
};

/// Matches each ground-truth segment independently to the predicted segment
/// overlapping it most (earliest on ties). A prediction may serve several.
inline std::vector<Match> match_segments(const Segmentation& pred, const Segmentation& truth,
                                         MatchOptions opts = {}) {
  if (pred.frames() != truth.frames())
    throw Error("prediction covers " + std::to_string(pred.frames()) + " frames, truth " +
                std::to_string(truth.frames()));
  check_segmentation(pred, pred.frames());
  check_segmentation(truth, truth.frames());
  std::vector<Match> out;
  std::size_t first = 0;  // predictions are sorted; skip those ending before g
  for (std::size_t gi = 0; gi < truth.size(); ++gi) {
    const Segment& g = truth[gi];
    if (opts.skip_background && g.label == kBackgroundLabel) continue;
    while (first < pred.size() && pred[first].end < g.start) ++first;
    Match m;
    m.truth_index = gi;
    for (std::size_t si = first; si < pred.size() && pred[si].start <= g.end; ++si) {
      const Index ov = overlap_frames(pred[si], g);
      if (ov > m.overlap) {
        m.overlap = ov;
        m.pred_index = si;
      }
    }
    if (m.pred_index) {
      const Segment& s = pred[*m.pred_index];
      m.iou = static_cast<double>(m.overlap) /
              static_cast<double>(s.length() + g.length() - m.overlap);
    }
    out.push_back(m);
  }
  return out;
}

struct SegAccOptions {
  double iou_threshold = 0.40;
  bool include_background = false;  // when false, background frames are excluded from L
};

struct SegAccResult {
  double value = 0.0;
  Index total_frames = 0;  // L
  std::vector<Match> matches;
};

/// Sum of overlaps of true-positive matches (IOU strictly above threshold) over L.
inline SegAccResult seg_acc(const Segmentation& pred, const Segmentation& truth,
                            SegAccOptions opts = {}) {
  if (!(opts.iou_threshold > 0.0 && opts.iou_threshold <= 1.0))
    throw Error("IOU threshold must lie in (0, 1]");
  SegAccResult r;
  r.matches = match_segments(pred, truth, {.skip_background = !opts.include_background});
  for (const Segment& g : truth)
    if (opts.include_background || g.label != kBackgroundLabel) r.total_frames += g.length();
  Index covered = 0;
  for (auto& m : r.matches) {
    m.true_positive = m.pred_index && m.iou > opts.iou_threshold;
    if (m.true_positive) covered += m.overlap;
  }
  r.value = r.total_frames > 0 ? static_cast<double>(covered) / static_cast<double>(r.total_frames)
                               : 0.0;
  return r;
}

/// Evaluation of one prediction against ground truth.
struct EvalReport {
  double nmi = 0.0;
  double seg_acc = 0.0;
  std::vector<Match> matches;
  Index total_frames = 0;
  std::optional<Index> segments_before;
  std::optional<Index> segments_after;
};

/// NMI over the frames that count toward L, plus seg-acc.
inline EvalReport evaluate(const Segmentation& pred, const Segmentation& truth,
                           SegAccOptions opts = {}) {
  EvalReport rep;
  const auto sa = seg_acc(pred, truth, opts);
  rep.seg_acc = sa.value;
  rep.matches = sa.matches;
  rep.total_frames = sa.total_frames;
  const auto pl = segmentation_to_labels(pred, pred.frames());
  const auto tl = segmentation_to_labels(truth, truth.frames());
  if (opts.include_background) {
    rep.nmi = nmi(pl, tl);
  } else {
    std::vector<Label> p, t;
    for (std::size_t i = 0; i < tl.size(); ++i)
      if (tl[i] != kBackgroundLabel) {
        p.push_back(pl[i]);
        t.push_back(tl[i]);
      }
    rep.nmi = t.empty() ? 0.0 : nmi(p, t);
  }
  rep.segments_after = static_cast<Index>(pred.size());
  return rep;
}

}  // namespace pmseg::metrics

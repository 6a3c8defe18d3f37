#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pmseg/error.hpp"
#include "pmseg/gmm.hpp"
#include "pmseg/trajectory.hpp"

namespace pmseg::clustering {

/// Transition state clustering settings. The frame-level mixture sees each
/// frame augmented with its successor `window` frames ahead; the transition
/// mixture sees the state at each detected transition plus normalized time.
struct TscConfig {
  KRange frame_k{3, 10};
  KRange transition_k{3, 10};
  int window = 1;
  double time_weight = 1.0;
  double prune_fraction = 0.6;  // minimum share of demos a transition cluster must reach
  std::uint64_t seed = 0;
  int em_restarts = 5;
  double em_tol = 1e-6;
  int em_max_iter = 300;
  Index min_segment_frames = 3;  // boundaries closer than this to the previous one are dropped

  EmOptions em(std::uint64_t salt = 0) const {
    return {seed ^ salt, em_restarts, em_tol, em_max_iter};
  }

  void validate() const {
    if (frame_k.min < 1 || frame_k.max < frame_k.min) throw Error("empty frame k range");
    if (transition_k.min < 1 || transition_k.max < transition_k.min)
      throw Error("empty transition k range");
    if (window < 1) throw Error("augmentation window must be >= 1");
    if (!(prune_fraction >= 0.0 && prune_fraction <= 1.0))
      throw Error("prune_fraction must lie in [0, 1]");
    if (min_segment_frames < 1) throw Error("min_segment_frames must be >= 1");
  }
};

struct TransitionReport {
  int frame_components = 0;
  int transition_components = 0;
  std::vector<Index> detected_transitions;   // per demo
  std::vector<Index> surviving_boundaries;   // per demo
  std::vector<int> cluster_demo_counts;      // per transition cluster
  std::vector<int> pruned_clusters;
  std::vector<std::string> warnings;
};

struct TscResult {
  std::vector<Segmentation> segmentations;
  std::vector<FrameLabeling> frame_labels;  // frame-level mixture component per frame
  TransitionReport report;
};

namespace detail {

// At most one component per D+1 samples, and fewer components than samples.
inline KRange clamp_range(KRange r, Index samples, Index dims) {
  const int cap = static_cast<int>(std::max<Index>(1, std::min(samples - 1, samples / (dims + 1))));
  r.max = std::min(r.max, cap);
  r.min = std::min(r.min, r.max);
  return r;
}

inline Label modal_label(const FrameLabeling& labels, Index start, Index end) {
  if (end - start + 1 >= 3) {
    ++start;
    --end;
  }
  std::map<Label, Index> counts;
  for (Index t = start; t <= end; ++t) ++counts[labels[static_cast<std::size_t>(t)]];
  Label best = counts.begin()->first;
  Index best_count = 0;
  for (const auto& [label, count] : counts)
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  return best;
}

}  // namespace detail

/// Segments every demonstration using mixtures pooled across all of them.
inline TscResult tsc_segment(const std::vector<Matrix>& demos, const TscConfig& cfg) {
  cfg.validate();
  if (demos.empty()) throw Error("transition state clustering needs at least one demonstration");
  const Index dims = demos.front().cols();
  Index total = 0;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (demos[i].cols() != dims) throw Error("demonstrations differ in dimension");
    if (demos[i].rows() < cfg.window + 2)
      throw Error("demonstration " + std::to_string(i) + " has " +
                  std::to_string(demos[i].rows()) + " frames; needs at least " +
                  std::to_string(cfg.window + 2));
    if (!demos[i].allFinite())
      throw Error("demonstration " + std::to_string(i) + " contains non-finite values");
    total += demos[i].rows();
  }

  // (1) Pooled column standardization.
  Vector mean = Vector::Zero(dims);
  for (const auto& d : demos) mean += d.colwise().sum().transpose();
  mean /= static_cast<double>(total);
  Vector var = Vector::Zero(dims);
  for (const auto& d : demos)
    var += (d.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  var /= static_cast<double>(total);
  Vector inv_sd(dims);
  for (Index c = 0; c < dims; ++c) inv_sd[c] = var[c] > 0.0 ? 1.0 / std::sqrt(var[c]) : 0.0;
  std::vector<Matrix> z;
  z.reserve(demos.size());
  for (const auto& d : demos)
    z.push_back(((d.rowwise() - mean.transpose()).array().rowwise() * inv_sd.transpose().array())
                    .matrix());

  // (2) Augment each frame with its successor.
  const Index lag = cfg.window;
  Index aug_rows = 0;
  for (const auto& d : z) aug_rows += d.rows() - lag;
  Matrix pooled(aug_rows, 2 * dims);
  {
    Index r = 0;
    for (const auto& d : z) {
      const Index n = d.rows() - lag;
      pooled.block(r, 0, n, dims) = d.topRows(n);
      pooled.block(r, dims, n, dims) = d.middleRows(lag, n);
      r += n;
    }
  }

  TscResult result;
  auto& report = result.report;

  // (3) Frame-level mixture and (4) per-demo labels and transitions.
  const GmmModel frame_model =
      select_gmm(pooled, detail::clamp_range(cfg.frame_k, aug_rows, pooled.cols()), cfg.em(0));
  report.frame_components = frame_model.k;
  const std::vector<Label> pooled_labels = frame_model.predict(pooled);

  struct Transition {
    std::size_t demo;
    Index t;
  };
  std::vector<Transition> transitions;
  {
    Index r = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const Index frames = z[i].rows();
      const Index n = frames - lag;
      FrameLabeling labels(static_cast<std::size_t>(frames));
      for (Index t = 0; t < frames; ++t)
        labels[static_cast<std::size_t>(t)] = pooled_labels[static_cast<std::size_t>(r + std::min(t, n - 1))];
      r += n;
      Index count = 0;
      for (Index t = 0; t + 1 < frames; ++t)
        if (labels[static_cast<std::size_t>(t)] != labels[static_cast<std::size_t>(t + 1)]) {
          transitions.push_back({i, t});
          ++count;
        }
      report.detected_transitions.push_back(count);
      result.frame_labels.push_back(std::move(labels));
    }
  }

  auto single_segments = [&] {
    for (std::size_t i = 0; i < z.size(); ++i) {
      const Index frames = z[i].rows();
      Segmentation seg;
      seg.segments.push_back({0, frames - 1, detail::modal_label(result.frame_labels[i], 0, frames - 1)});
      result.segmentations.push_back(std::move(seg));
      report.surviving_boundaries.push_back(0);
    }
  };

  if (transitions.empty()) {
    report.warnings.push_back("no transitions found; every demonstration is a single segment");
    single_segments();
    return result;
  }

  // (5) Transition-level mixture over [state, normalized time].
  const auto m = static_cast<Index>(transitions.size());
  Matrix tvec(m, dims + 1);
  for (Index r = 0; r < m; ++r) {
    const auto& tr = transitions[static_cast<std::size_t>(r)];
    const Matrix& d = z[tr.demo];
    tvec.block(r, 0, 1, dims) = d.row(tr.t);
    tvec(r, dims) = cfg.time_weight * static_cast<double>(tr.t) / static_cast<double>(d.rows());
  }
  std::vector<Label> tlabels(static_cast<std::size_t>(m), 0);
  if (m >= 2) {
    const GmmModel tmodel =
        select_gmm(tvec, detail::clamp_range(cfg.transition_k, m, tvec.cols()), cfg.em(0x5eed));
    report.transition_components = tmodel.k;
    tlabels = tmodel.predict(tvec);
  } else {
    report.transition_components = 1;
  }

  // (6) Prune clusters seen in too few demonstrations.
  std::vector<std::set<std::size_t>> seen(static_cast<std::size_t>(report.transition_components));
  for (Index r = 0; r < m; ++r)
    seen[static_cast<std::size_t>(tlabels[static_cast<std::size_t>(r)])].insert(
        transitions[static_cast<std::size_t>(r)].demo);
  std::vector<bool> keep(seen.size());
  const double need = cfg.prune_fraction * static_cast<double>(demos.size());
  for (std::size_t c = 0; c < seen.size(); ++c) {
    report.cluster_demo_counts.push_back(static_cast<int>(seen[c].size()));
    keep[c] = !seen[c].empty() && static_cast<double>(seen[c].size()) >= need - 1e-9;
    if (!seen[c].empty() && !keep[c]) report.pruned_clusters.push_back(static_cast<int>(c));
  }

  // (7) Surviving transitions become boundaries; label by modal interior state.
  std::vector<std::vector<Index>> starts(z.size());
  for (Index r = 0; r < m; ++r) {
    const auto& tr = transitions[static_cast<std::size_t>(r)];
    if (keep[static_cast<std::size_t>(tlabels[static_cast<std::size_t>(r)])])
      starts[tr.demo].push_back(tr.t + 1);
  }
  for (std::size_t i = 0; i < z.size(); ++i) {
    const Index frames = z[i].rows();
    std::vector<Index> kept;
    Index prev = 0;
    for (Index b : starts[i]) {
      if (b - prev >= cfg.min_segment_frames && frames - b >= cfg.min_segment_frames) {
        kept.push_back(b);
        prev = b;
      }
    }
    Segmentation seg;
    Index s = 0;
    for (std::size_t j = 0; j <= kept.size(); ++j) {
      const Index e = j < kept.size() ? kept[j] - 1 : frames - 1;
      seg.segments.push_back({s, e, detail::modal_label(result.frame_labels[i], s, e)});
      s = e + 1;
    }
    report.surviving_boundaries.push_back(static_cast<Index>(kept.size()));
    result.segmentations.push_back(std::move(seg));
  }
  return result;
}

}  // namespace pmseg::clustering

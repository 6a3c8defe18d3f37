#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmseg/error.hpp"

namespace pmseg {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Label = int;

/// Label given to frames that no annotation covers.
inline constexpr Label kBackgroundLabel = -1;

/// One integer label per frame.
using FrameLabeling = std::vector<Label>;

enum class Skill { Expert, Intermediate, Novice, Unknown };

/// Closed frame interval [start, end] carrying a cluster or gesture label.
struct Segment {
  Index start = 0;
  Index end = 0;
  Label label = 0;

  Index length() const noexcept { return end - start + 1; }
  bool operator==(const Segment&) const = default;
};

/// Ordered, contiguous, exhaustive list of segments over a demonstration.
struct Segmentation {
  std::vector<Segment> segments;

  std::size_t size() const noexcept { return segments.size(); }
  bool empty() const noexcept { return segments.empty(); }
  const Segment& operator[](std::size_t i) const { return segments[i]; }
  auto begin() const noexcept { return segments.begin(); }
  auto end() const noexcept { return segments.end(); }

  /// Frame count covered (last end + 1), 0 when empty.
  Index frames() const noexcept {
    return segments.empty() ? 0 : segments.back().end + 1;
  }

  /// Start frames of every segment but the first.
  std::vector<Index> boundaries() const {
    std::vector<Index> out;
    for (std::size_t i = 1; i < segments.size(); ++i)
      out.push_back(segments[i].start);
    return out;
  }

  bool operator==(const Segmentation&) const = default;
};

/// Throws Error unless `seg` covers [0, frames) contiguously without overlap.
inline void check_segmentation(const Segmentation& seg, Index frames) {
  if (seg.empty()) throw Error("segmentation is empty");
  Index next = 0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const Segment& s = seg[i];
    if (s.start > s.end)
      throw Error("segment " + std::to_string(i) + " has start > end");
    if (s.start < next)
      throw Error("segment " + std::to_string(i) + " overlaps its predecessor");
    if (s.start > next)
      throw Error("gap before segment " + std::to_string(i) + " at frame " +
                  std::to_string(next));
    next = s.end + 1;
  }
  if (next != frames)
    throw Error("segmentation covers " + std::to_string(next) +
                " frames, expected " + std::to_string(frames));
}

inline bool is_valid_segmentation(const Segmentation& seg, Index frames) noexcept {
  try {
    check_segmentation(seg, frames);
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// Maximal runs of equal labels become segments.
inline Segmentation segmentation_from_labels(std::span<const Label> labels) {
  if (labels.empty()) throw Error("cannot build a segmentation from empty labels");
  Segmentation seg;
  Index start = 0;
  const auto n = static_cast<Index>(labels.size());
  for (Index t = 1; t <= n; ++t) {
    if (t == n || labels[t] != labels[start]) {
      seg.segments.push_back({start, t - 1, labels[start]});
      start = t;
    }
  }
  return seg;
}

inline FrameLabeling segmentation_to_labels(const Segmentation& seg, Index frames) {
  check_segmentation(seg, frames);
  FrameLabeling labels(static_cast<std::size_t>(frames));
  for (const Segment& s : seg)
    for (Index t = s.start; t <= s.end; ++t) labels[t] = s.label;
  return labels;
}

/// One recorded execution: kinematics plus optional synchronized visual features.
struct Demonstration {
  std::string id;
  double rate_hz = 30.0;
  Matrix kinematic;
  std::optional<Matrix> visual;
  Skill skill = Skill::Unknown;

  Index frames() const noexcept { return kinematic.rows(); }

  void validate() const {
    if (kinematic.rows() < 2)
      throw Error("demonstration '" + id + "' needs at least 2 frames");
    if (!(rate_hz > 0)) throw Error("demonstration '" + id + "' has rate_hz <= 0");
    if (!kinematic.allFinite())
      throw Error("demonstration '" + id + "' has non-finite kinematics");
    if (visual) {
      if (visual->rows() != kinematic.rows())
        throw Error("demonstration '" + id + "': visual has " +
                    std::to_string(visual->rows()) + " rows, kinematics " +
                    std::to_string(kinematic.rows()));
      if (!visual->allFinite())
        throw Error("demonstration '" + id + "' has non-finite visual features");
    }
  }
};

}  // namespace pmseg

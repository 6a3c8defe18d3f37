#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "pmseg/error.hpp"
#include "pmseg/trajectory.hpp"

namespace pmseg::pmdd {

/// How the double sum of principal angles is scaled. `DivideByQ` divides by q;
/// `MeanOverQSquared` averages over all q*q direction pairs.
enum class PcaNormalization { DivideByQ, MeanOverQSquared };

struct PmddConfig {
  int q = 3;
  int mi_bins = 16;
  double tau = 0.5;
  std::optional<int> max_iterations;  // defaults to (initial segment count - 1)
  PcaNormalization pca_normalization = PcaNormalization::DivideByQ;
  Index dtw_max_length = 2000;  // longer segments are stride-subsampled for DTW

  void validate() const {
    if (q < 1) throw Error("q must be >= 1");
    if (mi_bins < 2) throw Error("mi_bins must be >= 2");
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error("tau must lie in [0, 1]");
    if (max_iterations && *max_iterations < 0) throw Error("max_iterations must be >= 0");
    if (dtw_max_length < 1) throw Error("dtw_max_length must be >= 1");
  }
};

/// A raw measure plus whether a fallback path produced it.
struct Measurement {
  double value = 0.0;
  bool fallback = false;
};

// ---------------------------------------------------------------------------
// Principal-subspace angles

namespace detail {

struct PrincipalDirections {
  Matrix directions;  // D x rank, columns ordered by decreasing variance
  Index rank = 0;
};

inline PrincipalDirections principal_directions(const Matrix& segment) {
  PrincipalDirections out;
  if (segment.rows() < 2) {
    out.directions.resize(segment.cols(), 0);
    return out;
  }
  const Matrix centered = segment.rowwise() - segment.colwise().mean();
  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = static_cast<double>(std::max(centered.rows(), centered.cols())) *
                     std::numeric_limits<double>::epsilon() * (sv.size() ? sv[0] : 0.0);
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > tol && sv[rank] > 0.0) ++rank;
  out.rank = rank;
  out.directions = svd.matrixV().leftCols(rank);
  return out;
}

}  // namespace detail

/// Sum of angles arccos|u_i . v_j| over the top-q principal directions of
/// each segment, scaled per `norm`. When either segment has fewer than q
/// non-degenerate directions q shrinks to what is available (flagged); with
/// none at all the result is the maximum, q * pi/2 (pi/2 for MeanOverQSquared).
inline Measurement sm_pca(const Matrix& a, const Matrix& b, int q,
                          PcaNormalization norm = PcaNormalization::DivideByQ) {
  if (q < 1) throw Error("q must be >= 1");
  if (a.cols() != b.cols()) throw Error("segments differ in dimension");
  const auto pa = detail::principal_directions(a);
  const auto pb = detail::principal_directions(b);
  const Index qe = std::min<Index>({q, pa.rank, pb.rank});
  if (qe == 0) {
    const double worst = norm == PcaNormalization::DivideByQ ? q * std::numbers::pi / 2
                                                           : std::numbers::pi / 2;
    return {worst, true};
  }
  double sum = 0.0;
  for (Index i = 0; i < qe; ++i)
    for (Index j = 0; j < qe; ++j) {
      const double c = std::min(1.0, std::abs(pa.directions.col(i).dot(pb.directions.col(j))));
      sum += std::acos(c);
    }
  const double denom = norm == PcaNormalization::DivideByQ ? static_cast<double>(qe)
                                                         : static_cast<double>(qe * qe);
  return {sum / denom, qe < q};
}

// ---------------------------------------------------------------------------
// Histogram entropy and mutual information

namespace detail {

using Symbol = std::vector<std::uint16_t>;

// Per-column quantile edges over the rows of every matrix in `parts`.
inline std::vector<std::vector<double>> quantile_edges(std::span<const Matrix* const> parts,
                                                       int bins) {
  const Index dims = parts.front()->cols();
  std::vector<std::vector<double>> edges(static_cast<std::size_t>(dims));
  std::vector<double> pooled;
  for (Index c = 0; c < dims; ++c) {
    pooled.clear();
    for (const Matrix* m : parts)
      for (Index r = 0; r < m->rows(); ++r) pooled.push_back((*m)(r, c));
    std::sort(pooled.begin(), pooled.end());
    auto& e = edges[static_cast<std::size_t>(c)];
    const auto n = pooled.size();
    for (int k = 1; k < bins; ++k)
      e.push_back(pooled[(static_cast<std::size_t>(k) * n) / static_cast<std::size_t>(bins)]);
  }
  return edges;
}

inline Symbol symbol_of(const Matrix& m, Index row, const std::vector<std::vector<double>>& edges) {
  Symbol s(static_cast<std::size_t>(m.cols()));
  for (Index c = 0; c < m.cols(); ++c) {
    const auto& e = edges[static_cast<std::size_t>(c)];
    s[static_cast<std::size_t>(c)] =
        static_cast<std::uint16_t>(std::upper_bound(e.begin(), e.end(), m(row, c)) - e.begin());
  }
  return s;
}

// Entropy (nats) of an empirical distribution; counts are summed in sorted
// order so the value depends only on the multiset of counts.
inline double entropy_of_counts(std::vector<Index> counts) {
  std::sort(counts.begin(), counts.end());
  double total = 0.0;
  for (Index c : counts) total += static_cast<double>(c);
  double h = 0.0;
  for (Index c : counts) {
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

template <typename Key>
std::vector<Index> counts_of(const std::vector<Key>& items) {
  std::map<Key, Index> table;
  for (const auto& it : items) ++table[it];
  std::vector<Index> out;
  out.reserve(table.size());
  for (const auto& [key, count] : table) out.push_back(count);
  return out;
}

// Nearest-index resampling of n rows onto `length` rows.
inline std::vector<Index> resample_rows(Index n, Index length) {
  std::vector<Index> idx(static_cast<std::size_t>(length));
  if (length == 1) {
    idx[0] = (n - 1) / 2;
    return idx;
  }
  for (Index i = 0; i < length; ++i)
    idx[static_cast<std::size_t>(i)] = static_cast<Index>(
        std::llround(static_cast<double>(i) * static_cast<double>(n - 1) /
                     static_cast<double>(length - 1)));
  return idx;
}

}  // namespace detail

/// Entropy (nats) of a segment's frames after per-column quantile binning.
inline double segment_entropy(const Matrix& s, int bins) {
  if (bins < 2) throw Error("mi_bins must be >= 2");
  if (s.rows() == 0) throw Error("segment is empty");
  const Matrix* parts[] = {&s};
  const auto edges = detail::quantile_edges(parts, bins);
  std::vector<detail::Symbol> symbols;
  for (Index r = 0; r < s.rows(); ++r) symbols.push_back(detail::symbol_of(s, r, edges));
  return detail::entropy_of_counts(detail::counts_of(symbols));
}

/// H(Sa) + H(Sb) - H(Sa, Sb). Frames are binned on edges shared by both
/// segments, both segments are resampled to the shorter length, and the
/// joint entropy is taken over index-aligned frame pairs.
inline double sm_mi(const Matrix& a, const Matrix& b, int bins) {
  if (bins < 2) throw Error("mi_bins must be >= 2");
  if (a.rows() == 0 || b.rows() == 0) throw Error("segment is empty");
  if (a.cols() != b.cols()) throw Error("segments differ in dimension");
  const Matrix* parts[] = {&a, &b};
  const auto edges = detail::quantile_edges(parts, bins);
  const Index length = std::min(a.rows(), b.rows());
  const auto ia = detail::resample_rows(a.rows(), length);
  const auto ib = detail::resample_rows(b.rows(), length);
  std::vector<detail::Symbol> sa, sb;
  std::vector<std::pair<detail::Symbol, detail::Symbol>> joint;
  for (Index i = 0; i < length; ++i) {
    sa.push_back(detail::symbol_of(a, ia[static_cast<std::size_t>(i)], edges));
    sb.push_back(detail::symbol_of(b, ib[static_cast<std::size_t>(i)], edges));
    joint.emplace_back(sa.back(), sb.back());
  }
  const double ha = detail::entropy_of_counts(detail::counts_of(sa));
  const double hb = detail::entropy_of_counts(detail::counts_of(sb));
  const double hab = detail::entropy_of_counts(detail::counts_of(joint));
  return (ha + hb) - hab;
}

// ---------------------------------------------------------------------------
// Data average

/// Euclidean distance between segment means.
inline double sm_da(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw Error("segment is empty");
  if (a.cols() != b.cols()) throw Error("segments differ in dimension");
  return (a.colwise().mean() - b.colwise().mean()).norm();
}

// ---------------------------------------------------------------------------
// Dynamic time warping

struct DtwAlignment {
  double cost = 0.0;                            // sum of frame distances on the path
  std::vector<std::pair<Index, Index>> path;    // (row in a, row in b), start to end
};

/// Minimum-cost monotone alignment under Euclidean frame distance. Among
/// equal-cost paths the shortest wins, then diagonal, vertical, horizontal.
inline DtwAlignment dtw_align(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw Error("segment is empty");
  if (a.cols() != b.cols()) throw Error("segments differ in dimension");
  const Index n = a.rows();
  const Index m = b.rows();
  enum : std::uint8_t { kStart, kDiag, kUp, kLeft };
  std::vector<std::uint8_t> from(static_cast<std::size_t>(n * m));
  std::vector<double> cost_prev(static_cast<std::size_t>(m)), cost_cur(static_cast<std::size_t>(m));
  std::vector<Index> len_prev(static_cast<std::size_t>(m)), len_cur(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double d = (a.row(i) - b.row(j)).norm();
      double best_cost = 0.0;
      Index best_len = 0;
      std::uint8_t dir = kStart;
      auto consider = [&](double c, Index l, std::uint8_t tag) {
        if (dir == kStart || c < best_cost || (c == best_cost && l < best_len)) {
          best_cost = c;
          best_len = l;
          dir = tag;
        }
      };
      const auto ju = static_cast<std::size_t>(j);
      if (i > 0 && j > 0) consider(cost_prev[ju - 1], len_prev[ju - 1], kDiag);
      if (i > 0) consider(cost_prev[ju], len_prev[ju], kUp);
      if (j > 0) consider(cost_cur[ju - 1], len_cur[ju - 1], kLeft);
      cost_cur[ju] = best_cost + d;
      len_cur[ju] = best_len + 1;
      from[static_cast<std::size_t>(i * m + j)] = dir;
    }
    std::swap(cost_prev, cost_cur);
    std::swap(len_prev, len_cur);
  }
  DtwAlignment out;
  out.cost = cost_prev[static_cast<std::size_t>(m - 1)];
  Index i = n - 1, j = m - 1;
  while (true) {
    out.path.emplace_back(i, j);
    const auto dir = from[static_cast<std::size_t>(i * m + j)];
    if (dir == kStart) break;
    if (dir == kDiag) {
      --i;
      --j;
    } else if (dir == kUp) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

namespace detail {

inline Matrix stride_subsample(const Matrix& s, Index max_length) {
  if (s.rows() <= max_length) return s;
  const Index stride = (s.rows() + max_length - 1) / max_length;
  const Index rows = (s.rows() + stride - 1) / stride;
  Matrix out(rows, s.cols());
  for (Index r = 0; r < rows; ++r) out.row(r) = s.row(r * stride);
  return out;
}

}  // namespace detail

/// sqrt(sum of path distances) / path length for the optimal warping path.
/// Segments longer than `max_length` are stride-subsampled first (flagged).
inline Measurement sm_dtw(const Matrix& a, const Matrix& b, Index max_length = 2000) {
  if (a.rows() == 0 || b.rows() == 0) throw Error("segment is empty");
  const bool sub = a.rows() > max_length || b.rows() > max_length;
  const DtwAlignment al = sub ? dtw_align(detail::stride_subsample(a, max_length),
                                          detail::stride_subsample(b, max_length))
                              : dtw_align(a, b);
  return {std::sqrt(al.cost) / static_cast<double>(al.path.size()), sub};
}

// ---------------------------------------------------------------------------
// Normalization and fusion

enum class Polarity { SmallerIsSimilar, LargerIsSimilar };

/// Maps one measure's values over all current adjacent pairs into [0, 1].
/// Only values on the similar side of the population mean score above zero;
/// the most similar scores 1. A population with no spread scores all zeros.
inline std::vector<double> normalize_similarities(std::span<const double> values,
                                                  Polarity polarity) {
  if (values.empty()) throw Error("cannot normalize an empty population");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  std::vector<double> y(values.size(), 0.0);
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  if (!(hi - lo > 1e-12 * scale)) return y;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    double r = 0.0;
    if (polarity == Polarity::SmallerIsSimilar) {
      if (v < mean) r = (mean - v) / (mean - lo);
    } else {
      if (v > mean) r = (v - mean) / (hi - mean);
    }
    y[i] = std::clamp(r, 0.0, 1.0);
  }
  return y;
}

/// Root mean square of the four normalized scores.
inline double fuse(double y_pca, double y_mi, double y_da, double y_dtw) {
  for (double y : {y_pca, y_mi, y_da, y_dtw})
    if (!(y >= 0.0 && y <= 1.0)) throw Error("normalized similarity outside [0, 1]");
  return std::sqrt((y_pca * y_pca + y_da * y_da + y_dtw * y_dtw + y_mi * y_mi) / 4.0);
}

// ---------------------------------------------------------------------------
// Promoting

/// Measures for the adjacent pair (pair, pair + 1).
struct SimilarityRecord {
  Index pair = 0;
  double sm_pca = 0.0, sm_mi = 0.0, sm_da = 0.0, sm_dtw = 0.0;
  double y_pca = 0.0, y_mi = 0.0, y_da = 0.0, y_dtw = 0.0;
  double o = 0.0;
  bool pca_fallback = false;
  bool dtw_subsampled = false;
};

struct IterationTrace {
  int iteration = 0;
  Index segments = 0;
  std::vector<SimilarityRecord> records;
  double max_o = 0.0;
  std::optional<Index> merged;  // left index of the merged pair
};

struct PromoteResult {
  Segmentation segmentation;
  std::vector<IterationTrace> trace;
  Index merges = 0;
};

/// Raw, normalized and fused similarity for every adjacent pair of `seg`.
inline std::vector<SimilarityRecord> similarity_records(const Segmentation& seg,
                                                        const Matrix& data,
                                                        const PmddConfig& cfg) {
  std::vector<SimilarityRecord> rec;
  if (seg.size() < 2) return rec;
  const std::size_t pairs = seg.size() - 1;
  rec.resize(pairs);
  std::vector<double> pca(pairs), mi(pairs), da(pairs), dtw(pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    const Segment& l = seg[p];
    const Segment& r = seg[p + 1];
    const Matrix a = data.middleRows(l.start, l.length());
    const Matrix b = data.middleRows(r.start, r.length());
    const Measurement mp = sm_pca(a, b, cfg.q, cfg.pca_normalization);
    const Measurement md = sm_dtw(a, b, cfg.dtw_max_length);
    auto& x = rec[p];
    x.pair = static_cast<Index>(p);
    x.sm_pca = pca[p] = mp.value;
    x.sm_mi = mi[p] = sm_mi(a, b, cfg.mi_bins);
    x.sm_da = da[p] = sm_da(a, b);
    x.sm_dtw = dtw[p] = md.value;
    x.pca_fallback = mp.fallback;
    x.dtw_subsampled = md.fallback;
  }
  const auto ypca = normalize_similarities(pca, Polarity::SmallerIsSimilar);
  const auto ymi = normalize_similarities(mi, Polarity::LargerIsSimilar);
  const auto yda = normalize_similarities(da, Polarity::SmallerIsSimilar);
  const auto ydtw = normalize_similarities(dtw, Polarity::SmallerIsSimilar);
  for (std::size_t p = 0; p < pairs; ++p) {
    auto& x = rec[p];
    x.y_pca = ypca[p];
    x.y_mi = ymi[p];
    x.y_da = yda[p];
    x.y_dtw = ydtw[p];
    x.o = fuse(x.y_pca, x.y_mi, x.y_da, x.y_dtw);
  }
  return rec;
}

/// Repeatedly merges the most similar adjacent pair until no fused score
/// exceeds tau. The merged segment keeps the earlier segment's label.
inline PromoteResult promote(const Segmentation& seg, const Matrix& data,
                             const PmddConfig& cfg = {}) {
  cfg.validate();
  check_segmentation(seg, data.rows());
  PromoteResult out;
  out.segmentation = seg;
  auto& segs = out.segmentation.segments;
  const int cap = cfg.max_iterations.value_or(static_cast<int>(seg.size()) - 1);
  for (int it = 0; segs.size() >= 2; ++it) {
    IterationTrace step;
    step.iteration = it;
    step.segments = static_cast<Index>(segs.size());
    step.records = similarity_records(out.segmentation, data, cfg);
    std::size_t best = 0;
    for (std::size_t p = 1; p < step.records.size(); ++p)
      if (step.records[p].o > step.records[best].o) best = p;
    step.max_o = step.records[best].o;
    if (!(step.max_o > cfg.tau) || it >= cap) {
      out.trace.push_back(std::move(step));
      break;
    }
    step.merged = static_cast<Index>(best);
    segs[best].end = segs[best + 1].end;
    segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    ++out.merges;
    out.trace.push_back(std::move(step));
  }
  return out;
}

}  // namespace pmseg::pmdd

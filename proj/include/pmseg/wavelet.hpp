#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmseg/detail/daubechies.hpp"
#include "pmseg/error.hpp"
#include "pmseg/trajectory.hpp"

namespace pmseg::wavelet {

/// Orthogonal Daubechies filter bank. The high-pass and reconstruction
/// filters follow from the decomposition low-pass by quadrature mirroring.
class WaveletBasis {
 public:
  static WaveletBasis daubechies(int order) {
    if (order < 1 || order > detail::kMaxDaubechiesOrder)
      throw Error("unsupported Daubechies order " + std::to_string(order));
    const auto taps = static_cast<std::size_t>(2 * order);
    const double* h = detail::kDaubechiesLowpass[order - 1];
    WaveletBasis b;
    b.name_ = "db" + std::to_string(order);
    b.dec_lo_.assign(h, h + taps);
    b.rec_lo_.assign(b.dec_lo_.rbegin(), b.dec_lo_.rend());
    b.rec_hi_.resize(taps);
    for (std::size_t i = 0; i < taps; ++i)
      b.rec_hi_[i] = (i % 2 == 0 ? 1.0 : -1.0) * b.dec_lo_[i];
    b.dec_hi_.assign(b.rec_hi_.rbegin(), b.rec_hi_.rend());
    return b;
  }

  /// Accepts "dbN" (also "haar" for db1).
  static WaveletBasis from_name(std::string_view name) {
    if (name == "haar") return daubechies(1);
    if (name.size() > 2 && name.substr(0, 2) == "db") {
      int order = 0;
      for (char c : name.substr(2)) {
        if (c < '0' || c > '9') throw Error("unknown wavelet '" + std::string(name) + "'");
        order = order * 10 + (c - '0');
      }
      return daubechies(order);
    }
    throw Error("unknown wavelet '" + std::string(name) + "'");
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t length() const noexcept { return dec_lo_.size(); }
  std::span<const double> dec_lo() const noexcept { return dec_lo_; }
  std::span<const double> dec_hi() const noexcept { return dec_hi_; }
  std::span<const double> rec_lo() const noexcept { return rec_lo_; }
  std::span<const double> rec_hi() const noexcept { return rec_hi_; }

 private:
  std::string name_;
  std::vector<double> dec_lo_, dec_hi_, rec_lo_, rec_hi_;
};

/// Multi-level coefficients: the deepest approximation plus one detail band
/// per level, `details[0]` being the finest (level 1).
struct Pyramid {
  Vector approximation;
  std::vector<Vector> details;

  int levels() const noexcept { return static_cast<int>(details.size()); }
};

/// Deepest level at which every band still spans at least one filter length
/// worth of input: floor(log2(n / (L - 1))).
inline int max_level(Index n, const WaveletBasis& basis) {
  const auto span = static_cast<Index>(basis.length()) - 1;
  if (span <= 0) return 0;
  int level = 0;
  while ((span << (level + 1)) <= n) ++level;
  return level;
}

namespace detail {

// Half-point symmetric extension: ... x1 x0 | x0 x1 ... x(n-1) | x(n-1) x(n-2) ...
inline Index reflect(Index i, Index n) {
  const Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

inline Index band_length(Index n, std::size_t taps) {
  return (n + static_cast<Index>(taps) - 1) / 2;
}

inline void analysis_step(const Vector& x, const WaveletBasis& basis, Vector& approx,
                          Vector& detail) {
  const Index n = x.size();
  const auto lo = basis.dec_lo();
  const auto hi = basis.dec_hi();
  const auto taps = static_cast<Index>(lo.size());
  const Index m = band_length(n, lo.size());
  approx.resize(m);
  detail.resize(m);
  for (Index i = 0; i < m; ++i) {
    double a = 0.0, d = 0.0;
    for (Index j = 0; j < taps; ++j) {
      const double v = x[reflect(2 * i + 1 - j, n)];
      a += lo[j] * v;
      d += hi[j] * v;
    }
    approx[i] = a;
    detail[i] = d;
  }
}

inline Vector synthesis_step(const Vector& approx, const Vector& detail,
                             const WaveletBasis& basis, Index out_length) {
  const auto lo = basis.rec_lo();
  const auto hi = basis.rec_hi();
  const auto taps = static_cast<Index>(lo.size());
  const Index m = approx.size();
  Vector out(out_length);
  for (Index n = 0; n < out_length; ++n) {
    const Index shift = n + taps - 2;
    const Index k_lo = std::max<Index>(0, (shift - taps + 2) / 2);
    const Index k_hi = std::min<Index>(m - 1, shift / 2);
    double acc = 0.0;
    for (Index k = k_lo; k <= k_hi; ++k) {
      const Index j = shift - 2 * k;
      if (j < 0 || j >= taps) continue;
      acc += approx[k] * lo[j] + detail[k] * hi[j];
    }
    out[n] = acc;
  }
  return out;
}

// Input length entering each level: lengths[0] = n, lengths[l] = band length at level l.
inline std::vector<Index> level_lengths(Index n, const WaveletBasis& basis, int levels) {
  std::vector<Index> lengths{n};
  for (int l = 0; l < levels; ++l)
    lengths.push_back(band_length(lengths.back(), basis.length()));
  return lengths;
}

}  // namespace detail

inline Pyramid dwt_multilevel(const Vector& signal, const WaveletBasis& basis, int levels) {
  if (levels < 1) throw Error("wavelet decomposition needs at least one level");
  if (signal.size() < static_cast<Index>(basis.length()))
    throw Error("signal of length " + std::to_string(signal.size()) +
                " is shorter than the " + basis.name() + " filter");
  if (levels > max_level(signal.size(), basis))
    throw Error("signal of length " + std::to_string(signal.size()) + " supports at most " +
                std::to_string(max_level(signal.size(), basis)) + " " + basis.name() +
                " levels, " + std::to_string(levels) + " requested");
  Pyramid p;
  Vector current = signal;
  for (int l = 0; l < levels; ++l) {
    Vector approx, detail;
    detail::analysis_step(current, basis, approx, detail);
    p.details.push_back(std::move(detail));
    current = std::move(approx);
  }
  p.approximation = std::move(current);
  return p;
}

inline Vector idwt_multilevel(const Pyramid& pyramid, const WaveletBasis& basis,
                              Index original_length) {
  const int levels = pyramid.levels();
  if (levels < 1) throw Error("pyramid has no detail levels");
  const auto lengths = detail::level_lengths(original_length, basis, levels);
  if (pyramid.approximation.size() != lengths[levels])
    throw Error("approximation band has " + std::to_string(pyramid.approximation.size()) +
                " coefficients, expected " + std::to_string(lengths[levels]));
  for (int l = 0; l < levels; ++l)
    if (pyramid.details[l].size() != lengths[l + 1])
      throw Error("detail band " + std::to_string(l + 1) + " has " +
                  std::to_string(pyramid.details[l].size()) + " coefficients, expected " +
                  std::to_string(lengths[l + 1]));
  Vector current = pyramid.approximation;
  for (int l = levels - 1; l >= 0; --l)
    current = detail::synthesis_step(current, pyramid.details[l], basis, lengths[l]);
  return current;
}

enum class DenoiseMode { ZeroDetails, SoftThreshold };
enum class ThresholdRule { Universal };

struct DenoiseConfig {
  WaveletBasis basis = WaveletBasis::daubechies(10);
  int levels = 5;
  DenoiseMode mode = DenoiseMode::ZeroDetails;
  ThresholdRule threshold_rule = ThresholdRule::Universal;
};

namespace detail {

inline double median(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline void soft_threshold(Vector& band, double lambda) {
  for (Index i = 0; i < band.size(); ++i) {
    const double mag = std::abs(band[i]) - lambda;
    band[i] = mag > 0.0 ? std::copysign(mag, band[i]) : 0.0;
  }
}

}  // namespace detail

namespace detail {

// Depth actually used for a signal of length n, or 0 when none is feasible.
inline int effective_levels(Index n, const DenoiseConfig& cfg) {
  if (cfg.levels < 1) throw Error("denoise needs at least one level");
  const int feasible = max_level(n, cfg.basis);
  if (feasible >= cfg.levels) return cfg.levels;
  if (feasible < 1) {
    warn("signal of length " + std::to_string(n) + " is too short for " + cfg.basis.name() +
         "; left unfiltered");
    return 0;
  }
  warn("reducing " + cfg.basis.name() + " depth from " + std::to_string(cfg.levels) + " to " +
       std::to_string(feasible) + " for signal of length " + std::to_string(n));
  return feasible;
}

inline Vector denoise_at(const Vector& signal, const DenoiseConfig& cfg, int levels) {
  if (levels < 1) return signal;
  Pyramid p = dwt_multilevel(signal, cfg.basis, levels);
  switch (cfg.mode) {
    case DenoiseMode::ZeroDetails:
      for (auto& band : p.details) band.setZero();
      break;
    case DenoiseMode::SoftThreshold: {
      const Vector& finest = p.details.front();
      std::vector<double> mags(static_cast<std::size_t>(finest.size()));
      for (Index i = 0; i < finest.size(); ++i) mags[i] = std::abs(finest[i]);
      const double sigma = median(std::move(mags)) / 0.6745;
      const double lambda =
          sigma * std::sqrt(2.0 * std::log(static_cast<double>(signal.size())));
      for (auto& band : p.details) soft_threshold(band, lambda);
      break;
    }
  }
  return idwt_multilevel(p, cfg.basis, signal.size());
}

}  // namespace detail

/// Low-pass wavelet filter. Requests deeper than the signal supports are
/// reduced to the deepest feasible level with a warning; a signal too short
/// for even one level is returned unchanged.
inline Vector denoise(const Vector& signal, const DenoiseConfig& cfg) {
  return detail::denoise_at(signal, cfg, detail::effective_levels(signal.size(), cfg));
}

/// Applies `denoise` to each column independently.
inline Matrix denoise_matrix(const Matrix& data, const DenoiseConfig& cfg) {
  const int levels = detail::effective_levels(data.rows(), cfg);
  Matrix out(data.rows(), data.cols());
  for (Index c = 0; c < data.cols(); ++c)
    out.col(c) = detail::denoise_at(data.col(c), cfg, levels);
  return out;
}

}  // namespace pmseg::wavelet

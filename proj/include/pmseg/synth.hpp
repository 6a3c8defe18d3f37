#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pmseg/error.hpp"
#include "pmseg/ingest.hpp"
#include "pmseg/trajectory.hpp"

namespace pmseg::synth {

/// Each gesture is a smooth path through `anchors_per_gesture` random points
/// scattered around a gesture center; one anchor gives a plateau. Prototypes
/// are shared by every demonstration of a `generate` call.
struct SynthConfig {
  int n_gestures = 4;
  int dims = 3;
  Index frames_min = 60;   // prototype length range per gesture, inclusive
  Index frames_max = 120;
  double noise_sigma = 0.05;
  double skill_jitter = 0.0;  // 0 = identical timing in every demo
  std::uint64_t seed = 0;
  int anchors_per_gesture = 3;
  double center_spread = 3.0;  // minimum distance between gesture centers
  double anchor_spread = 0.6;  // anchor scatter around its center

  void validate() const {
    if (n_gestures < 1 || dims < 1 || anchors_per_gesture < 1)
      throw Error("synthetic counts must be >= 1");
    if (frames_min < 2 || frames_max < frames_min) throw Error("bad frames_per_gesture range");
    if (!(noise_sigma >= 0.0)) throw Error("noise_sigma must be >= 0");
    if (!(skill_jitter >= 0.0 && skill_jitter < 1.0)) throw Error("skill_jitter must lie in [0, 1)");
    if (!(center_spread >= 0.0 && anchor_spread >= 0.0)) throw Error("spreads must be >= 0");
  }
};

struct SynthDemo {
  Demonstration demo;
  Segmentation truth;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose, std::uint32_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    purpose, index};
  return std::mt19937_64(seq);
}

inline double smoothstep(double f) { return f * f * (3.0 - 2.0 * f); }

inline Vector path_point(const std::vector<Vector>& anchors, double s) {
  if (anchors.size() == 1) return anchors.front();
  const double u = s * static_cast<double>(anchors.size() - 1);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(u), anchors.size() - 2);
  const double f = smoothstep(u - static_cast<double>(k));
  return (1.0 - f) * anchors[k] + f * anchors[k + 1];
}

}  // namespace detail

/// Deterministic demonstrations with exact ground truth.
inline std::vector<SynthDemo> generate(const SynthConfig& cfg, int n_demos) {
  cfg.validate();
  if (n_demos < 1) throw Error("n_demos must be >= 1");
  auto proto_rng = detail::stream(cfg.seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<Index> proto_len(cfg.frames_min, cfg.frames_max);

  std::vector<Vector> centers;
  for (int g = 0; g < cfg.n_gestures; ++g) {
    Vector c(cfg.dims);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (int d = 0; d < cfg.dims; ++d) c[d] = cfg.center_spread * normal(proto_rng);
      const bool clear = std::all_of(centers.begin(), centers.end(), [&](const Vector& o) {
        return (o - c).norm() >= cfg.center_spread;
      });
      if (clear) break;
    }
    centers.push_back(c);
  }
  std::vector<std::vector<Vector>> anchors(static_cast<std::size_t>(cfg.n_gestures));
  std::vector<Index> lengths;
  for (int g = 0; g < cfg.n_gestures; ++g) {
    for (int a = 0; a < cfg.anchors_per_gesture; ++a) {
      Vector p = centers[static_cast<std::size_t>(g)];
      if (cfg.anchors_per_gesture > 1)
        for (int d = 0; d < cfg.dims; ++d) p[d] += cfg.anchor_spread * normal(proto_rng);
      anchors[static_cast<std::size_t>(g)].push_back(p);
    }
    lengths.push_back(proto_len(proto_rng));
  }

  std::vector<SynthDemo> out;
  for (int i = 0; i < n_demos; ++i) {
    auto warp_rng = detail::stream(cfg.seed, 2, static_cast<std::uint32_t>(i));
    auto noise_rng = detail::stream(cfg.seed, 3, static_cast<std::uint32_t>(i));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Index> demo_len;
    std::vector<double> exponent;
    for (int g = 0; g < cfg.n_gestures; ++g) {
      const double stretch = 1.0 + cfg.skill_jitter * unit(warp_rng);
      const double bend = std::exp(cfg.skill_jitter * unit(warp_rng));
      demo_len.push_back(std::max<Index>(
          2, static_cast<Index>(std::llround(static_cast<double>(lengths[static_cast<std::size_t>(g)]) * stretch))));
      exponent.push_back(bend);
    }
    Index total = 0;
    for (Index l : demo_len) total += l;

    SynthDemo sd;
    sd.demo.id = "synth_" + std::string(i < 10 ? "00" : i < 100 ? "0" : "") + std::to_string(i);
    sd.demo.rate_hz = 30.0;
    sd.demo.kinematic.resize(total, cfg.dims);
    Index t = 0;
    for (int g = 0; g < cfg.n_gestures; ++g) {
      const Index len = demo_len[static_cast<std::size_t>(g)];
      for (Index k = 0; k < len; ++k, ++t) {
        const double tau = static_cast<double>(k) / static_cast<double>(len - 1);
        const double s = std::pow(tau, exponent[static_cast<std::size_t>(g)]);
        sd.demo.kinematic.row(t) = detail::path_point(anchors[static_cast<std::size_t>(g)], s).transpose();
      }
      sd.truth.segments.push_back({t - len, t - 1, g});
    }
    for (Index r = 0; r < total; ++r)
      for (int d = 0; d < cfg.dims; ++d) sd.demo.kinematic(r, d) += cfg.noise_sigma * normal(noise_rng);
    out.push_back(std::move(sd));
  }
  return out;
}

/// Writes `<dir>/kinematics/<id>.txt` and `<dir>/transcriptions/<id>.txt` in
/// the formats `ingest` reads. Gesture g is named "G<g+1>".
inline void write_dataset(const std::filesystem::path& dir, const std::vector<SynthDemo>& demos) {
  for (const auto& d : demos) {
    ingest::write_kinematics(dir / "kinematics" / (d.demo.id + ".txt"), d.demo.kinematic);
    ingest::write_transcription(dir / "transcriptions" / (d.demo.id + ".txt"), d.truth);
  }
}

}  // namespace pmseg::synth

// Acceptance checks. `pmseg_acceptance NAME` runs one criterion, no argument
// runs all. Each prints one PASS/FAIL line; exit status is non-zero on FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "pmseg/pmseg.hpp"

using namespace pmseg;

namespace {

// Tolerances and runtime limits.
constexpr double kRoundTripTol = 1e-8;
constexpr double kOrthoTol = 1e-10;
constexpr double kSnrGainDb = 6.0;
constexpr double kIdentityTol = 1e-9;
constexpr double kIndependentNmi = 0.05;
constexpr double kSpuriousRemoved = 0.90;
constexpr Index kBoundaryTol = 5;
constexpr double kTscNmi = 0.7;
constexpr int kTscSeedsNeeded = 8;

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) ok = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (cond ? "" : " [X]");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Criterion {
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

// --- wavelet ---------------------------------------------------------------

Outcome wavelet_criterion() {
  Outcome o;
  const auto basis = wavelet::WaveletBasis::daubechies(10);
  std::mt19937_64 rng(1001);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Vector x(1024);
    for (auto& v : x) v = g(rng);
    const auto pyr = wavelet::dwt_multilevel(x, basis, wavelet::max_level(1024, basis));
    const Vector y = wavelet::idwt_multilevel(pyr, basis, 1024);
    worst = std::max(worst, (y - x).norm() / x.norm());
  }
  o.require(worst < kRoundTripTol, "round-trip rel err " + fmt("%.2e", worst));

  const auto h = basis.dec_lo();
  const auto hi = basis.dec_hi();
  double energy = 0.0, sum = 0.0, hsum = 0.0, shift = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    energy += h[i] * h[i];
    sum += h[i];
    hsum += hi[i];
  }
  for (std::size_t m = 1; 2 * m < h.size(); ++m) {
    double s = 0.0;
    for (std::size_t i = 0; i + 2 * m < h.size(); ++i) s += h[i] * h[i + 2 * m];
    shift = std::max(shift, std::abs(s));
  }
  for (std::size_t m = 0; 2 * m < h.size(); ++m) {
    double s = 0.0, t = 0.0;
    for (std::size_t i = 0; i + 2 * m < h.size(); ++i) {
      s += h[i] * hi[i + 2 * m];
      t += hi[i] * h[i + 2 * m];
    }
    cross = std::max({cross, std::abs(s), std::abs(t)});
  }
  const double err = std::max({std::abs(energy - 1.0), std::abs(sum - std::numbers::sqrt2),
                               std::abs(hsum), shift, cross});
  o.require(err < kOrthoTol, "db10 orthonormality err " + fmt("%.2e", err));
  return o;
}

// --- denoise ---------------------------------------------------------------

Outcome denoise_criterion() {
  Outcome o;
  std::mt19937_64 rng(1002);
  std::normal_distribution<double> noise(0.0, 0.1);
  const Index n = 1024;
  Vector clean(n), noisy(n);
  for (Index t = 0; t < n; ++t) {
    clean[t] = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 256.0);
    noisy[t] = clean[t] + noise(rng);
  }
  auto snr = [&](const Vector& e) {
    return 10.0 * std::log10(clean.squaredNorm() / (e - clean).squaredNorm());
  };
  wavelet::DenoiseConfig cfg;
  cfg.mode = wavelet::DenoiseMode::ZeroDetails;
  const double gain = snr(wavelet::denoise(noisy, cfg)) - snr(noisy);
  o.require(gain >= kSnrGainDb, "SNR gain " + fmt("%.2f", gain) + " dB");
  return o;
}

// --- dtw -------------------------------------------------------------------

using Path = std::vector<int>;  // flattened cell indices i*6+j

void enumerate_paths(int i, int j, int n, int m, Path& cur, std::vector<Path>& out) {
  cur.push_back(i * 6 + j);
  if (i == n - 1 && j == m - 1) {
    out.push_back(cur);
  } else {
    if (i + 1 < n && j + 1 < m) enumerate_paths(i + 1, j + 1, n, m, cur, out);
    if (i + 1 < n) enumerate_paths(i + 1, j, n, m, cur, out);
    if (j + 1 < m) enumerate_paths(i, j + 1, n, m, cur, out);
  }
  cur.pop_back();
}

std::vector<std::vector<int>> all_sequences(int max_len) {
  std::vector<std::vector<int>> out;
  for (int len = 1; len <= max_len; ++len) {
    std::vector<int> s(static_cast<std::size_t>(len), 0);
    while (true) {
      out.push_back(s);
      std::size_t k = 0;
      while (k < s.size() && s[k] == 2) s[k++] = 0;
      if (k == s.size()) break;
      ++s[k];
    }
  }
  return out;
}

Outcome dtw_criterion() {
  Outcome o;
  std::vector<Path> paths[7][7];
  for (int n = 1; n <= 6; ++n)
    for (int m = 1; m <= 6; ++m) {
      Path cur;
      enumerate_paths(0, 0, n, m, cur, paths[n][m]);
    }
  const auto seqs = all_sequences(6);
  std::vector<Matrix> mats;
  for (const auto& s : seqs) {
    Matrix x(static_cast<Index>(s.size()), 1);
    for (std::size_t i = 0; i < s.size(); ++i) x(static_cast<Index>(i), 0) = s[i];
    mats.push_back(x);
  }
  long pairs = 0, mismatches = 0;
  int dist[36];
  for (std::size_t a = 0; a < seqs.size(); ++a)
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      const auto& sa = seqs[a];
      const auto& sb = seqs[b];
      for (std::size_t i = 0; i < sa.size(); ++i)
        for (std::size_t j = 0; j < sb.size(); ++j) dist[i * 6 + j] = std::abs(sa[i] - sb[j]);
      int best_cost = -1;
      std::size_t best_len = 0;
      for (const Path& p : paths[sa.size()][sb.size()]) {
        int c = 0;
        for (int cell : p) c += dist[cell];
        if (best_cost < 0 || c < best_cost || (c == best_cost && p.size() < best_len)) {
          best_cost = c;
          best_len = p.size();
        }
      }
      const double expect = std::sqrt(static_cast<double>(best_cost)) / static_cast<double>(best_len);
      const auto got = pmdd::sm_dtw(mats[a], mats[b]);
      ++pairs;
      if (got.value != expect || got.fallback) ++mismatches;
    }
  o.require(mismatches == 0, std::to_string(pairs) + " pairs, " + std::to_string(mismatches) +
                                 " mismatches");
  return o;
}

// --- similarity identities -------------------------------------------------

Matrix random_segment(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> len(8, 80);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix s(len(rng), 3);
  Vector drift(3);
  for (auto& v : drift) v = g(rng);
  for (Index r = 0; r < s.rows(); ++r)
    for (Index c = 0; c < 3; ++c) s(r, c) = g(rng) + drift[c] * static_cast<double>(r) / 20.0;
  return s;
}

Outcome similarity_criterion() {
  Outcome o;
  std::mt19937_64 rng(1004);
  std::vector<Matrix> segs;
  for (int k = 0; k < 200; ++k) segs.push_back(random_segment(rng));
  double self_da = 0.0, self_dtw = 0.0, self_mi = 0.0, asym = 0.0;
  for (const auto& s : segs) {
    self_da = std::max(self_da, pmdd::sm_da(s, s));
    self_dtw = std::max(self_dtw, pmdd::sm_dtw(s, s).value);
    self_mi = std::max(self_mi, std::abs(pmdd::sm_mi(s, s, 16) - pmdd::segment_entropy(s, 16)));
  }
  for (std::size_t k = 0; k + 1 < segs.size(); ++k) {
    const auto& a = segs[k];
    const auto& b = segs[k + 1];
    asym = std::max({asym,
                     std::abs(pmdd::sm_pca(a, b, 3).value - pmdd::sm_pca(b, a, 3).value),
                     std::abs(pmdd::sm_mi(a, b, 16) - pmdd::sm_mi(b, a, 16)),
                     std::abs(pmdd::sm_da(a, b) - pmdd::sm_da(b, a)),
                     std::abs(pmdd::sm_dtw(a, b).value - pmdd::sm_dtw(b, a).value)});
  }
  o.require(self_da == 0.0, "sm_da(S,S) max " + fmt("%.1e", self_da));
  o.require(self_dtw == 0.0, "sm_dtw(S,S) max " + fmt("%.1e", self_dtw));
  o.require(self_mi <= kIdentityTol, "|sm_mi(S,S)-H(S)| max " + fmt("%.1e", self_mi));
  o.require(asym <= kIdentityTol, "asymmetry max " + fmt("%.1e", asym));

  // fuse bounds over normalized populations drawn from the random pairs
  bool bounded = true;
  std::vector<double> pca, mi, da, dtw;
  for (std::size_t k = 0; k + 1 < segs.size(); ++k) {
    pca.push_back(pmdd::sm_pca(segs[k], segs[k + 1], 3).value);
    mi.push_back(pmdd::sm_mi(segs[k], segs[k + 1], 16));
    da.push_back(pmdd::sm_da(segs[k], segs[k + 1]));
    dtw.push_back(pmdd::sm_dtw(segs[k], segs[k + 1]).value);
  }
  using pmdd::Polarity;
  const auto yp = pmdd::normalize_similarities(pca, Polarity::SmallerIsSimilar);
  const auto ym = pmdd::normalize_similarities(mi, Polarity::LargerIsSimilar);
  const auto yd = pmdd::normalize_similarities(da, Polarity::SmallerIsSimilar);
  const auto yw = pmdd::normalize_similarities(dtw, Polarity::SmallerIsSimilar);
  for (std::size_t k = 0; k < yp.size(); ++k) {
    const double f = pmdd::fuse(yp[k], ym[k], yd[k], yw[k]);
    const double lo = std::max({yp[k], ym[k], yd[k], yw[k]}) / 2.0;
    const double hi = std::max({yp[k], ym[k], yd[k], yw[k]});
    bounded = bounded && f >= 0.0 && f <= 1.0 && f >= lo - 1e-15 && f <= hi + 1e-15;
  }
  bounded = bounded && pmdd::fuse(0, 0, 0, 0) == 0.0 && pmdd::fuse(1, 1, 1, 1) == 1.0;
  o.require(bounded, "fuse bounds");
  return o;
}

// --- metrics ---------------------------------------------------------------

Outcome metrics_criterion() {
  Outcome o;
  std::mt19937_64 rng(1005);
  std::uniform_int_distribution<Label> four(0, 3), two(0, 1);
  std::vector<Label> a(1000), b(1000);
  for (auto& v : a) v = four(rng);
  for (auto& v : b) v = two(rng);
  const double self = metrics::nmi(a, a);
  const double indep = metrics::nmi(a, b);
  o.require(std::abs(self - 1.0) < 1e-12, "nmi(A,A) " + fmt("%.12f", self));
  o.require(indep < kIndependentNmi, "nmi(A,indep) " + fmt("%.4f", indep));

  const Segmentation truth{{{0, 99, 0}}};
  const Segmentation pred{{{0, 39, 0}, {40, 99, 1}}};
  const double hand = metrics::seg_acc(pred, truth, {0.4}).value;
  o.require(hand == 0.6, "hand example " + fmt("%.17g", hand));

  bool identity = true, monotone = true;
  std::uniform_int_distribution<Index> cut(1, 199);
  for (int trial = 0; trial < 200; ++trial) {
    auto random_seg = [&] {
      std::vector<Index> cuts;
      for (int c = 0; c < 5; ++c) cuts.push_back(cut(rng));
      std::sort(cuts.begin(), cuts.end());
      cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
      Segmentation s;
      Index start = 0;
      Label l = 0;
      for (Index c : cuts) {
        s.segments.push_back({start, c - 1, l++});
        start = c;
      }
      s.segments.push_back({start, 199, l});
      return s;
    };
    const auto x = random_seg();
    const auto y = random_seg();
    identity = identity && metrics::seg_acc(x, x).value == 1.0;
    double prev = 2.0;
    for (int k = 2; k <= 8; ++k) {
      const double v = metrics::seg_acc(y, x, {k / 10.0}).value;
      monotone = monotone && v <= prev;
      prev = v;
    }
  }
  o.require(identity, "seg_acc(x,x)=1");
  o.require(monotone, "gate monotone over 0.2..0.8");
  return o;
}

// --- promoting efficacy ----------------------------------------------------

std::vector<pipeline::DemoInput> synth_inputs(const synth::SynthConfig& s, int demos) {
  std::vector<pipeline::DemoInput> in;
  for (auto& d : synth::generate(s, demos))
    in.push_back({d.demo.id, d.demo.kinematic, std::nullopt, d.truth});
  return in;
}

bool near_any(Index b, const std::vector<Index>& set) {
  for (Index x : set)
    if (std::abs(x - b) <= kBoundaryTol) return true;
  return false;
}

Outcome promoting_criterion() {
  Outcome o;
  long spurious = 0, spurious_removed = 0, true_detected = 0, true_removed = 0;
  double before = 0.0, after = 0.0, segs_initial = 0.0, segs_final = 0.0;
  int runs = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    synth::SynthConfig s;
    s.n_gestures = 4;
    s.skill_jitter = 0.2;
    s.seed = 500 + seed;
    pipeline::PipelineConfig cfg;
    cfg.seed = seed;
    cfg.pmdd.tau = 0.5;
    // Raw channels: default smoothing smears the jumps between the short
    // concatenated prototypes by more than the boundary tolerance.
    cfg.denoise = false;
    cfg.tsc.frame_k = {5, 10};  // sensitive: at least five frame states for four gestures
    const auto res = pipeline::run_stages(synth_inputs(s, 5), cfg);
    for (const auto& d : res.demos) {
      const auto tb = d.truth->boundaries();
      const auto ib = d.initial.boundaries();
      const auto pb = d.promoted.boundaries();
      for (Index b : ib)
        if (!near_any(b, tb)) {
          ++spurious;
          spurious_removed += !near_any(b, pb);
        }
      for (Index b : tb)
        if (near_any(b, ib)) {
          ++true_detected;
          true_removed += !near_any(b, pb);
        }
      segs_initial += static_cast<double>(d.initial.size());
      segs_final += static_cast<double>(d.promoted.size());
      ++runs;
    }
    before += res.aggregate.mean_seg_acc_initial;
    after += res.aggregate.mean_seg_acc;
  }
  const double frac = spurious ? static_cast<double>(spurious_removed) / static_cast<double>(spurious) : 1.0;
  o.detail = "segments/demo " + fmt("%.1f", segs_initial / runs) + " -> " + fmt("%.1f", segs_final / runs);
  o.require(frac >= kSpuriousRemoved, "spurious removed " + std::to_string(spurious_removed) + "/" +
                                          std::to_string(spurious) + " = " + fmt("%.3f", frac));
  o.require(true_removed == 0, "true removed " + std::to_string(true_removed) + "/" +
                                   std::to_string(true_detected));
  o.require(after > before, "mean seg-acc " + fmt("%.4f", before / 10) + " -> " + fmt("%.4f", after / 10));
  return o;
}

// --- determinism -----------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism_criterion() {
  Outcome o;
  const auto root = std::filesystem::temp_directory_path() /
                    ("pmseg_accept_" + std::to_string(::getpid()));
  std::filesystem::remove_all(root);
  synth::SynthConfig s;
  s.seed = 77;
  s.skill_jitter = 0.2;
  synth::write_dataset(root / "data", synth::generate(s, 5));
  pipeline::PipelineConfig cfg;
  cfg.kinematics = (root / "data/kinematics/*.txt").string();
  cfg.transcriptions = (root / "data/transcriptions/*.txt").string();
  cfg.seed = 9;
  cfg.output_dir = (root / "a").string();
  pipeline::run_pipeline(cfg);
  cfg.output_dir = (root / "b").string();
  pipeline::run_pipeline(cfg);
  const auto ra = slurp(root / "a/report.json");
  const auto rb = slurp(root / "b/report.json");
  o.require(!ra.empty() && ra == rb, "report.json " + std::to_string(ra.size()) + " bytes, identical");
  o.require(slurp(root / "a/trace.jsonl") == slurp(root / "b/trace.jsonl"), "trace.jsonl identical");
  std::filesystem::remove_all(root);
  return o;
}

// --- tsc sanity ------------------------------------------------------------

Outcome tsc_criterion() {
  Outcome o;
  int good = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    synth::SynthConfig s;
    s.n_gestures = 3;
    s.anchors_per_gesture = 1;
    s.noise_sigma = 0.05;
    s.skill_jitter = 0.2;
    s.seed = 800 + seed;
    const auto demos = synth::generate(s, 5);
    std::vector<Matrix> data;
    for (const auto& d : demos) data.push_back(d.demo.kinematic);
    clustering::TscConfig cfg;
    cfg.seed = seed;
    const auto res = clustering::tsc_segment(data, cfg);
    double mean = 0.0;
    for (std::size_t i = 0; i < demos.size(); ++i) {
      const Index n = demos[i].demo.frames();
      mean += metrics::nmi(segmentation_to_labels(res.segmentations[i], n),
                           segmentation_to_labels(demos[i].truth, n));
    }
    mean /= static_cast<double>(demos.size());
    good += mean >= kTscNmi;
    per_seed += (per_seed.empty() ? "" : " ") + fmt("%.2f", mean);
  }
  o.require(good >= kTscSeedsNeeded, std::to_string(good) + "/10 seeds with NMI >= 0.7 (" + per_seed + ")");
  return o;
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"wavelet", 1.0, wavelet_criterion},
      {"denoise", 1.0, denoise_criterion},
      {"dtw", 30.0, dtw_criterion},
      {"similarity", 10.0, similarity_criterion},
      {"metrics", 5.0, metrics_criterion},
      {"promoting", 120.0, promoting_criterion},
      {"determinism", 60.0, determinism_criterion},
      {"tsc", 120.0, tsc_criterion},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  warning_sink() = [](std::string_view) {};
  const std::string only = argc > 1 ? argv[1] : "";
  int failures = 0, ran = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && only != c.name) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs < c.limit_s, fmt("%.2f s", secs) + " < " + fmt("%g s", c.limit_s));
    std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", c.name, o.detail.c_str());
    failures += !o.ok;
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  return failures == 0 ? 0 : 1;
}

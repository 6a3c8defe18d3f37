#pragma once

#include <glob.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmseg/error.hpp"
#include "pmseg/ingest.hpp"
#include "pmseg/metrics.hpp"
#include "pmseg/pmdd.hpp"
#include "pmseg/serialize.hpp"
#include "pmseg/trajectory.hpp"
#include "pmseg/tsc.hpp"
#include "pmseg/wavelet.hpp"

namespace pmseg::pipeline {

/// Every knob of a segment run. Serialized with all defaults materialized.
struct PipelineConfig {
  std::string kinematics;      // glob
  std::string transcriptions;  // glob; paired to kinematics by file stem
  std::string features;        // optional glob; paired by file stem
  std::string columns = "all";
  bool standardize = true;

  bool denoise = true;
  std::string wavelet = "db10";
  int wavelet_levels = 5;
  wavelet::DenoiseMode denoise_mode = wavelet::DenoiseMode::ZeroDetails;

  clustering::TscConfig tsc;

  bool promote = true;
  pmdd::PmddConfig pmdd;

  double iou_threshold = 0.40;
  bool include_background = false;

  std::string output_dir = "out";
  std::uint64_t seed = 0;

  wavelet::DenoiseConfig denoise_config() const {
    return {wavelet::WaveletBasis::from_name(wavelet), wavelet_levels, denoise_mode,
            wavelet::ThresholdRule::Universal};
  }

  clustering::TscConfig tsc_config() const {
    auto c = tsc;
    c.seed = seed;
    return c;
  }

  metrics::SegAccOptions eval_options() const { return {iou_threshold, include_background}; }
};

// ---------------------------------------------------------------------------
// Config (de)serialization

namespace detail {

inline const char* mode_name(wavelet::DenoiseMode m) {
  return m == wavelet::DenoiseMode::ZeroDetails ? "zero-details" : "soft-threshold";
}

inline wavelet::DenoiseMode parse_mode(const std::string& s) {
  if (s == "zero-details") return wavelet::DenoiseMode::ZeroDetails;
  if (s == "soft-threshold") return wavelet::DenoiseMode::SoftThreshold;
  throw Error("unknown denoise mode '" + s + "'");
}

inline const char* pca_name(pmdd::PcaNormalization n) {
  return n == pmdd::PcaNormalization::DivideByQ ? "divide-by-q" : "mean-over-q-squared";
}

inline pmdd::PcaNormalization parse_pca(const std::string& s) {
  if (s == "divide-by-q") return pmdd::PcaNormalization::DivideByQ;
  if (s == "mean-over-q-squared") return pmdd::PcaNormalization::MeanOverQSquared;
  throw Error("unknown pca normalization '" + s + "'");
}

using Json = nlohmann::ordered_json;

// Reads `key` from `obj` into `out` when present; records the key as used.
template <typename T>
void read(const Json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->template get<T>();
}

inline void check_keys(const Json& obj, std::initializer_list<const char*> known,
                       const std::string& where) {
  if (!obj.is_object()) throw Error("config section '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw Error("unknown config key '" + where + it.key() + "'");
  }
}

inline clustering::KRange read_range(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw Error("k range must be [min, max]");
  return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  detail::Json j;
  j["data"] = {{"kinematics", c.kinematics},
               {"transcriptions", c.transcriptions},
               {"features", c.features}};
  j["columns"] = c.columns;
  j["standardize"] = c.standardize;
  j["denoise"] = {{"enabled", c.denoise},
                  {"wavelet", c.wavelet},
                  {"levels", c.wavelet_levels},
                  {"mode", detail::mode_name(c.denoise_mode)}};
  j["tsc"] = {{"frame_k", {c.tsc.frame_k.min, c.tsc.frame_k.max}},
              {"transition_k", {c.tsc.transition_k.min, c.tsc.transition_k.max}},
              {"window", c.tsc.window},
              {"time_weight", c.tsc.time_weight},
              {"prune_fraction", c.tsc.prune_fraction},
              {"em_restarts", c.tsc.em_restarts},
              {"em_tol", c.tsc.em_tol},
              {"em_max_iter", c.tsc.em_max_iter},
              {"min_segment_frames", c.tsc.min_segment_frames}};
  j["promote"] = {{"enabled", c.promote},
                  {"q", c.pmdd.q},
                  {"mi_bins", c.pmdd.mi_bins},
                  {"tau", c.pmdd.tau},
                  {"max_iterations", c.pmdd.max_iterations ? detail::Json(*c.pmdd.max_iterations)
                                                           : detail::Json(nullptr)},
                  {"pca_normalization", detail::pca_name(c.pmdd.pca_normalization)},
                  {"dtw_max_length", c.pmdd.dtw_max_length}};
  j["evaluation"] = {{"iou_threshold", c.iou_threshold},
                     {"include_background", c.include_background}};
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  return j;
}

/// Overlays the keys present in `j` onto `c`; unknown keys are errors.
inline void apply_json(const nlohmann::ordered_json& j, PipelineConfig& c) {
  using detail::read;
  detail::check_keys(j,
                     {"data", "columns", "standardize", "denoise", "tsc", "promote",
                      "evaluation", "output_dir", "seed"},
                     "");
  if (auto it = j.find("data"); it != j.end()) {
    detail::check_keys(*it, {"kinematics", "transcriptions", "features"}, "data.");
    read(*it, "kinematics", c.kinematics);
    read(*it, "transcriptions", c.transcriptions);
    read(*it, "features", c.features);
  }
  read(j, "columns", c.columns);
  read(j, "standardize", c.standardize);
  if (auto it = j.find("denoise"); it != j.end()) {
    detail::check_keys(*it, {"enabled", "wavelet", "levels", "mode"}, "denoise.");
    read(*it, "enabled", c.denoise);
    read(*it, "wavelet", c.wavelet);
    read(*it, "levels", c.wavelet_levels);
    if (it->contains("mode")) c.denoise_mode = detail::parse_mode((*it)["mode"].get<std::string>());
  }
  if (auto it = j.find("tsc"); it != j.end()) {
    detail::check_keys(*it,
                       {"frame_k", "transition_k", "window", "time_weight", "prune_fraction",
                        "em_restarts", "em_tol", "em_max_iter", "min_segment_frames"},
                       "tsc.");
    if (it->contains("frame_k")) c.tsc.frame_k = detail::read_range((*it)["frame_k"]);
    if (it->contains("transition_k")) c.tsc.transition_k = detail::read_range((*it)["transition_k"]);
    read(*it, "window", c.tsc.window);
    read(*it, "time_weight", c.tsc.time_weight);
    read(*it, "prune_fraction", c.tsc.prune_fraction);
    read(*it, "em_restarts", c.tsc.em_restarts);
    read(*it, "em_tol", c.tsc.em_tol);
    read(*it, "em_max_iter", c.tsc.em_max_iter);
    read(*it, "min_segment_frames", c.tsc.min_segment_frames);
  }
  if (auto it = j.find("promote"); it != j.end()) {
    detail::check_keys(*it,
                       {"enabled", "q", "mi_bins", "tau", "max_iterations", "pca_normalization",
                        "dtw_max_length"},
                       "promote.");
    read(*it, "enabled", c.promote);
    read(*it, "q", c.pmdd.q);
    read(*it, "mi_bins", c.pmdd.mi_bins);
    read(*it, "tau", c.pmdd.tau);
    if (auto m = it->find("max_iterations"); m != it->end())
      c.pmdd.max_iterations = m->is_null() ? std::nullopt : std::optional<int>(m->get<int>());
    if (it->contains("pca_normalization"))
      c.pmdd.pca_normalization = detail::parse_pca((*it)["pca_normalization"].get<std::string>());
    read(*it, "dtw_max_length", c.pmdd.dtw_max_length);
  }
  if (auto it = j.find("evaluation"); it != j.end()) {
    detail::check_keys(*it, {"iou_threshold", "include_background"}, "evaluation.");
    read(*it, "iou_threshold", c.iou_threshold);
    read(*it, "include_background", c.include_background);
  }
  read(j, "output_dir", c.output_dir);
  read(j, "seed", c.seed);
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  PipelineConfig c;
  try {
    apply_json(nlohmann::ordered_json::parse(in), c);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config '" + path.string() + "': " + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Stages

/// Error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct DemoInput {
  std::string id;
  Matrix kinematic;
  std::optional<Matrix> visual;
  std::optional<Segmentation> truth;
};

struct DemoResult {
  std::string id;
  Index frames = 0;
  Segmentation initial;
  Segmentation promoted;
  std::vector<pmdd::IterationTrace> trace;
  std::optional<Segmentation> truth;
  std::optional<metrics::EvalReport> eval_initial;
  std::optional<metrics::EvalReport> eval_promoted;
};

struct Aggregate {
  Index evaluated = 0;
  double mean_nmi_initial = 0.0;
  double mean_seg_acc_initial = 0.0;
  double mean_nmi = 0.0;
  double mean_seg_acc = 0.0;
  double mean_segments_initial = 0.0;
  double mean_segments = 0.0;
};

struct PipelineResult {
  std::vector<DemoResult> demos;
  clustering::TransitionReport tsc_report;
  Aggregate aggregate;
};

namespace detail {

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace detail

/// Denoise, fuse, cluster, promote and evaluate in-memory demonstrations.
inline PipelineResult run_stages(const std::vector<DemoInput>& inputs, const PipelineConfig& cfg) {
  if (inputs.empty()) throw StageError("ingest", "no demonstrations");
  std::vector<Matrix> features;
  detail::stage("denoise", [&] {
    const auto dcfg = cfg.denoise_config();
    for (const auto& in : inputs) {
      Matrix kin = cfg.denoise ? wavelet::denoise_matrix(in.kinematic, dcfg) : in.kinematic;
      std::optional<Matrix> vis;
      if (in.visual) vis = cfg.denoise ? wavelet::denoise_matrix(*in.visual, dcfg) : *in.visual;
      features.push_back(ingest::fuse(kin, vis, cfg.standardize));
    }
    return 0;
  });

  auto tsc = detail::stage("tsc", [&] { return clustering::tsc_segment(features, cfg.tsc_config()); });

  PipelineResult res;
  res.tsc_report = tsc.report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    DemoResult d;
    d.id = inputs[i].id;
    d.frames = features[i].rows();
    d.initial = tsc.segmentations[i];
    d.truth = inputs[i].truth;
    if (cfg.promote) {
      auto pr = detail::stage("promote", [&] { return pmdd::promote(d.initial, features[i], cfg.pmdd); });
      d.promoted = std::move(pr.segmentation);
      d.trace = std::move(pr.trace);
    } else {
      d.promoted = d.initial;
    }
    if (d.truth) {
      detail::stage("evaluate", [&] {
        if (d.truth->frames() != d.frames)
          throw Error("ground truth for '" + d.id + "' covers " +
                      std::to_string(d.truth->frames()) + " frames, data has " +
                      std::to_string(d.frames));
        d.eval_initial = metrics::evaluate(d.initial, *d.truth, cfg.eval_options());
        d.eval_promoted = metrics::evaluate(d.promoted, *d.truth, cfg.eval_options());
        d.eval_promoted->segments_before = static_cast<Index>(d.initial.size());
        return 0;
      });
    }
    res.demos.push_back(std::move(d));
  }
  auto& agg = res.aggregate;
  for (const auto& d : res.demos) {
    agg.mean_segments_initial += static_cast<double>(d.initial.size());
    agg.mean_segments += static_cast<double>(d.promoted.size());
    if (!d.eval_promoted) continue;
    ++agg.evaluated;
    agg.mean_nmi_initial += d.eval_initial->nmi;
    agg.mean_seg_acc_initial += d.eval_initial->seg_acc;
    agg.mean_nmi += d.eval_promoted->nmi;
    agg.mean_seg_acc += d.eval_promoted->seg_acc;
  }
  const auto n = static_cast<double>(res.demos.size());
  agg.mean_segments_initial /= n;
  agg.mean_segments /= n;
  if (agg.evaluated > 0) {
    const auto e = static_cast<double>(agg.evaluated);
    agg.mean_nmi_initial /= e;
    agg.mean_seg_acc_initial /= e;
    agg.mean_nmi /= e;
    agg.mean_seg_acc /= e;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Files

inline std::vector<std::filesystem::path> expand_glob(const std::string& pattern) {
  std::vector<std::filesystem::path> out;
  if (pattern.empty()) return out;
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  if (rc == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw Error("cannot expand '" + pattern + "'");
  std::sort(out.begin(), out.end());
  return out;
}

/// Loads every kinematics file and, by matching file stem, its
/// transcription and feature file.
inline std::vector<DemoInput> load_inputs(const PipelineConfig& cfg) {
  const auto kin = expand_glob(cfg.kinematics);
  if (kin.empty()) throw Error("no kinematics files match '" + cfg.kinematics + "'");
  auto by_stem = [](const std::vector<std::filesystem::path>& paths) {
    std::map<std::string, std::filesystem::path> m;
    for (const auto& p : paths) m[p.stem().string()] = p;
    return m;
  };
  const auto trans = by_stem(expand_glob(cfg.transcriptions));
  const auto feats = by_stem(expand_glob(cfg.features));
  const auto cols = ingest::parse_column_selection(cfg.columns);
  std::vector<DemoInput> out;
  for (const auto& path : kin) {
    DemoInput in;
    in.id = path.stem().string();
    in.kinematic = ingest::load_kinematics(path, cols);
    if (auto it = feats.find(in.id); it != feats.end()) {
      in.visual = ingest::load_features(it->second);
    } else if (!cfg.features.empty()) {
      throw Error("no feature file for demonstration '" + in.id + "'");
    }
    if (auto it = trans.find(in.id); it != trans.end()) {
      in.truth = ingest::load_transcription(it->second, in.kinematic.rows()).segmentation;
    } else if (!cfg.transcriptions.empty()) {
      throw Error("no transcription for demonstration '" + in.id + "'");
    }
    Demonstration{in.id, 30.0, in.kinematic, in.visual, Skill::Unknown}.validate();
    out.push_back(std::move(in));
  }
  return out;
}

inline nlohmann::ordered_json report_json(const PipelineResult& res) {
  using Json = nlohmann::ordered_json;
  Json j;
  auto demos = Json::array();
  for (const auto& d : res.demos) {
    Json dj;
    dj["id"] = d.id;
    dj["frames"] = d.frames;
    dj["segments_initial"] = d.initial.size();
    dj["segments_promoted"] = d.promoted.size();
    dj["merges"] = d.initial.size() - d.promoted.size();
    dj["initial_segmentation"] = to_json(d.initial);
    dj["promoted_segmentation"] = to_json(d.promoted);
    if (d.eval_initial) {
      dj["initial"] = metrics::to_json(*d.eval_initial, d.initial, *d.truth);
      dj["promoted"] = metrics::to_json(*d.eval_promoted, d.promoted, *d.truth);
    }
    demos.push_back(std::move(dj));
  }
  const auto& a = res.aggregate;
  j["aggregate"] = {{"demonstrations", res.demos.size()},
                    {"evaluated", a.evaluated},
                    {"mean_nmi_initial", a.mean_nmi_initial},
                    {"mean_seg_acc_initial", a.mean_seg_acc_initial},
                    {"mean_nmi", a.mean_nmi},
                    {"mean_seg_acc", a.mean_seg_acc},
                    {"mean_segments_initial", a.mean_segments_initial},
                    {"mean_segments", a.mean_segments}};
  const auto& t = res.tsc_report;
  j["tsc"] = {{"frame_components", t.frame_components},
              {"transition_components", t.transition_components},
              {"detected_transitions", t.detected_transitions},
              {"surviving_boundaries", t.surviving_boundaries},
              {"cluster_demo_counts", t.cluster_demo_counts},
              {"pruned_clusters", t.pruned_clusters},
              {"warnings", t.warnings}};
  j["demonstrations"] = std::move(demos);
  return j;
}

/// Writes report.json, trace.jsonl, bars_<id>.csv and resolved_config.json.
inline void write_outputs(const PipelineResult& res, const PipelineConfig& cfg,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write '" + (dir / name).string() + "'");
    return out;
  };
  open("resolved_config.json") << to_json(cfg).dump(2) << '\n';
  open("report.json") << report_json(res).dump(2) << '\n';
  {
    auto out = open("trace.jsonl");
    for (const auto& d : res.demos)
      for (const auto& t : d.trace) {
        auto line = pmdd::to_json(t);
        nlohmann::ordered_json tagged;
        tagged["demo"] = d.id;
        for (auto it = line.begin(); it != line.end(); ++it) tagged[it.key()] = it.value();
        out << tagged.dump() << '\n';
      }
  }
  for (const auto& d : res.demos) {
    auto out = open("bars_" + d.id + ".csv");
    const auto init = segmentation_to_labels(d.initial, d.frames);
    const auto prom = segmentation_to_labels(d.promoted, d.frames);
    const auto truth = d.truth ? segmentation_to_labels(*d.truth, d.frames) : FrameLabeling{};
    out << "frame,truth,initial,promoted\n";
    for (Index t = 0; t < d.frames; ++t) {
      out << t << ',';
      if (d.truth) out << truth[static_cast<std::size_t>(t)];
      out << ',' << init[static_cast<std::size_t>(t)] << ',' << prom[static_cast<std::size_t>(t)]
          << '\n';
    }
  }
}

/// Full file-to-file run.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  const auto inputs = detail::stage("ingest", [&] { return load_inputs(cfg); });
  auto res = run_stages(inputs, cfg);
  write_outputs(res, cfg, cfg.output_dir);
  return res;
}

/// Evaluates a predicted labeling file against a ground-truth labeling file.
struct EvalOnlyResult {
  metrics::EvalReport report;
  Segmentation pred;
  Segmentation truth;
};

inline EvalOnlyResult eval_only(const std::filesystem::path& pred_labels,
                                const std::filesystem::path& truth_labels,
                                double iou_threshold = 0.40) {
  const auto p = ingest::load_labels(pred_labels);
  const auto t = ingest::load_labels(truth_labels);
  if (p.size() != t.size())
    throw Error("label files differ in length: " + std::to_string(p.size()) + " vs " +
                std::to_string(t.size()));
  EvalOnlyResult r;
  r.pred = segmentation_from_labels(p);
  r.truth = segmentation_from_labels(t);
  r.report = metrics::evaluate(r.pred, r.truth, {iou_threshold, false});
  return r;
}

}  // namespace pmseg::pipeline

// pmseg: segment, promote, evaluate, synthesize and inspect demonstrations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pmseg/pmseg.hpp"

namespace fs = std::filesystem;
using namespace pmseg;

namespace {

// Flags that mirror PipelineConfig. Unset flags leave the config file value.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> kinematics, transcriptions, features, columns;
  std::optional<bool> standardize, denoise, promote, include_background;
  std::optional<std::string> wavelet, denoise_mode, pca_normalization;
  std::optional<int> levels, window, em_restarts, em_max_iter, min_segment_frames;
  std::vector<int> frame_k, transition_k;
  std::optional<double> time_weight, prune_fraction, em_tol;
  std::optional<int> q, mi_bins, max_iterations, dtw_max_length;
  std::optional<double> tau, iou;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;

  void data_flags(CLI::App* app) {
    app->add_option("--kinematics", kinematics, "kinematics file glob");
    app->add_option("--transcriptions", transcriptions, "transcription file glob");
    app->add_option("--features", features, "visual feature CSV glob");
  }

  void preprocess_flags(CLI::App* app) {
    app->add_option("--columns", columns, "all | jigsaws-slave | list such as 0,2,5-9");
    app->add_option("--standardize", standardize, "z-score fused columns");
    app->add_option("--denoise", denoise, "wavelet denoising on/off");
    app->add_option("--wavelet", wavelet, "db1..db10 or haar");
    app->add_option("--levels", levels, "decomposition depth");
    app->add_option("--denoise-mode", denoise_mode, "zero-details | soft-threshold");
  }

  void tsc_flags(CLI::App* app) {
    app->add_option("--frame-k", frame_k, "frame GMM component range MIN MAX")->expected(2);
    app->add_option("--transition-k", transition_k, "transition GMM range MIN MAX")->expected(2);
    app->add_option("--window", window, "augmentation lag in frames");
    app->add_option("--time-weight", time_weight, "weight of normalized time in transition clustering");
    app->add_option("--prune-fraction", prune_fraction, "keep transition clusters seen in this fraction of demos");
    app->add_option("--em-restarts", em_restarts);
    app->add_option("--em-tol", em_tol);
    app->add_option("--em-max-iter", em_max_iter);
    app->add_option("--min-segment-frames", min_segment_frames);
  }

  void promote_flags(CLI::App* app, bool toggle) {
    if (toggle) app->add_option("--promote", promote, "promoting on/off");
    app->add_option("--tau", tau, "merge threshold on the fused similarity");
    app->add_option("--q", q, "principal directions compared");
    app->add_option("--mi-bins", mi_bins, "quantile bins per dimension");
    app->add_option("--max-iterations", max_iterations);
    app->add_option("--pca-normalization", pca_normalization, "divide-by-q | mean-over-q-squared");
    app->add_option("--dtw-max-length", dtw_max_length);
  }

  void common_flags(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON config file");
    app->add_option("-o,--out", out, "output directory");
    app->add_option("--seed", seed);
    app->add_option("--iou", iou, "IOU threshold for seg-acc");
    app->add_option("--include-background", include_background);
  }

  pipeline::PipelineConfig resolve() const {
    auto c = config ? pipeline::load_config(*config) : pipeline::PipelineConfig{};
    auto set = [](auto& dst, const auto& src) {
      if (src) dst = *src;
    };
    set(c.kinematics, kinematics);
    set(c.transcriptions, transcriptions);
    set(c.features, features);
    set(c.columns, columns);
    set(c.standardize, standardize);
    set(c.denoise, denoise);
    set(c.wavelet, wavelet);
    set(c.wavelet_levels, levels);
    if (denoise_mode) c.denoise_mode = pipeline::detail::parse_mode(*denoise_mode);
    if (!frame_k.empty()) c.tsc.frame_k = {frame_k[0], frame_k[1]};
    if (!transition_k.empty()) c.tsc.transition_k = {transition_k[0], transition_k[1]};
    set(c.tsc.window, window);
    set(c.tsc.time_weight, time_weight);
    set(c.tsc.prune_fraction, prune_fraction);
    set(c.tsc.em_restarts, em_restarts);
    set(c.tsc.em_tol, em_tol);
    set(c.tsc.em_max_iter, em_max_iter);
    set(c.tsc.min_segment_frames, min_segment_frames);
    set(c.promote, promote);
    set(c.pmdd.tau, tau);
    set(c.pmdd.q, q);
    set(c.pmdd.mi_bins, mi_bins);
    if (max_iterations) c.pmdd.max_iterations = *max_iterations;
    if (pca_normalization) c.pmdd.pca_normalization = pipeline::detail::parse_pca(*pca_normalization);
    set(c.pmdd.dtw_max_length, dtw_max_length);
    set(c.iou_threshold, iou);
    set(c.include_background, include_background);
    set(c.output_dir, out);
    set(c.seed, seed);
    c.denoise_config();  // rejects unknown wavelet names early
    c.tsc_config().validate();
    c.pmdd.validate();
    return c;
  }
};

void print_eval(const std::string& name, const metrics::EvalReport& r) {
  std::printf("%-24s  nmi %.4f  seg-acc %.4f  segments %lld  L %lld\n", name.c_str(), r.nmi,
              r.seg_acc, static_cast<long long>(r.segments_after.value_or(0)),
              static_cast<long long>(r.total_frames));
}

int cmd_segment(const Overrides& ov) {
  const auto cfg = ov.resolve();
  const auto res = pipeline::run_pipeline(cfg);
  for (const auto& t : res.tsc_report.warnings) warn(t);
  std::printf("%-24s  %8s  %8s  %10s  %10s\n", "demo", "initial", "promoted", "nmi", "seg-acc");
  for (const auto& d : res.demos) {
    std::printf("%-24s  %8zu  %8zu", d.id.c_str(), d.initial.size(), d.promoted.size());
    if (d.eval_promoted)
      std::printf("  %10.4f  %10.4f", d.eval_promoted->nmi, d.eval_promoted->seg_acc);
    std::printf("\n");
  }
  const auto& a = res.aggregate;
  if (a.evaluated > 0)
    std::printf("mean nmi %.4f -> %.4f  mean seg-acc %.4f -> %.4f  segments %.2f -> %.2f\n",
                a.mean_nmi_initial, a.mean_nmi, a.mean_seg_acc_initial, a.mean_seg_acc,
                a.mean_segments_initial, a.mean_segments);
  std::printf("wrote %s\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_promote(const Overrides& ov, const std::string& kin_file, const std::string& labels_file) {
  auto cfg = ov.resolve();
  const Matrix raw = ingest::load_kinematics(kin_file, ingest::parse_column_selection(cfg.columns));
  const Matrix denoised = cfg.denoise ? wavelet::denoise_matrix(raw, cfg.denoise_config()) : raw;
  const Matrix data = ingest::fuse(denoised, std::nullopt, cfg.standardize);
  const auto labels = ingest::load_labels(labels_file);
  if (static_cast<Index>(labels.size()) != data.rows())
    throw Error("labeling has " + std::to_string(labels.size()) + " frames, kinematics " +
                std::to_string(data.rows()));
  const auto seg = segmentation_from_labels(labels);
  const auto res = pmdd::promote(seg, data, cfg.pmdd);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  ingest::write_labels(dir / "promoted_labels.txt",
                       segmentation_to_labels(res.segmentation, data.rows()));
  std::ofstream(dir / "trace.jsonl", std::ios::binary) << pmdd::trace_jsonl(res.trace);
  std::ofstream(dir / "resolved_config.json", std::ios::binary)
      << pipeline::to_json(cfg).dump(2) << '\n';
  std::printf("segments %zu -> %zu after %lld merges\n", seg.size(), res.segmentation.size(),
              static_cast<long long>(res.merges));
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& truth, double iou,
             const std::optional<std::string>& json_out) {
  const auto r = pipeline::eval_only(pred, truth, iou);
  print_eval(fs::path(pred).filename().string(), r.report);
  for (const auto& m : r.report.matches) {
    const Segment& g = r.truth[m.truth_index];
    std::printf("  truth [%lld,%lld] label %d", static_cast<long long>(g.start),
                static_cast<long long>(g.end), g.label);
    if (m.pred_index) {
      const Segment& s = r.pred[*m.pred_index];
      std::printf("  pred [%lld,%lld]  overlap %lld  iou %.4f%s", static_cast<long long>(s.start),
                  static_cast<long long>(s.end), static_cast<long long>(m.overlap), m.iou,
                  m.true_positive ? "  TP" : "");
    }
    std::printf("\n");
  }
  if (json_out) {
    std::ofstream out(*json_out, std::ios::binary);
    if (!out) throw Error("cannot write '" + *json_out + "'");
    out << metrics::to_json(r.report, r.pred, r.truth).dump(2) << '\n';
  }
  return 0;
}

int cmd_inspect(const Overrides& ov, const std::string& kin_file, const std::string& out_file) {
  const auto cfg = ov.resolve();
  const Matrix raw = ingest::load_kinematics(kin_file, ingest::parse_column_selection(cfg.columns));
  const Matrix den = wavelet::denoise_matrix(raw, cfg.denoise_config());
  std::ofstream out(out_file, std::ios::binary);
  if (!out) throw Error("cannot write '" + out_file + "'");
  out << "frame";
  for (Index c = 0; c < raw.cols(); ++c) out << ",raw_" << c << ",denoised_" << c;
  out << '\n';
  for (Index t = 0; t < raw.rows(); ++t) {
    out << t;
    for (Index c = 0; c < raw.cols(); ++c)
      out << ',' << ingest::detail::format_double(raw(t, c)) << ','
          << ingest::detail::format_double(den(t, c));
    out << '\n';
  }
  std::printf("%lld frames x %lld channels -> %s\n", static_cast<long long>(raw.rows()),
              static_cast<long long>(raw.cols()), out_file.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised demonstration segmentation with similarity-based promoting"};
  app.require_subcommand(1);

  Overrides ov;

  auto* segment = app.add_subcommand("segment", "full pipeline: denoise, cluster, promote, evaluate");
  ov.common_flags(segment);
  ov.data_flags(segment);
  ov.preprocess_flags(segment);
  ov.tsc_flags(segment);
  ov.promote_flags(segment, true);

  std::string kin_file, labels_file, out_file;
  auto* promote = app.add_subcommand("promote", "merge segments of an existing labeling");
  ov.common_flags(promote);
  ov.preprocess_flags(promote);
  ov.promote_flags(promote, false);
  promote->add_option("--input", kin_file, "kinematics file")->required();
  promote->add_option("--labels", labels_file, "one integer label per frame")->required();

  std::string pred, truth;
  double eval_iou = 0.40;
  std::optional<std::string> eval_json;
  auto* eval = app.add_subcommand("eval", "NMI and seg-acc of a labeling file against truth");
  eval->add_option("--pred", pred)->required();
  eval->add_option("--truth", truth)->required();
  eval->add_option("--iou", eval_iou)->check(CLI::Range(0.0, 1.0));
  eval->add_option("--json", eval_json, "write the report as JSON");

  synth::SynthConfig scfg;
  int n_demos = 5;
  std::string synth_out = "synth";
  auto* syn = app.add_subcommand("synth", "write a synthetic dataset with ground truth");
  syn->add_option("-o,--out", synth_out);
  syn->add_option("--demos", n_demos);
  syn->add_option("--gestures", scfg.n_gestures);
  syn->add_option("--dims", scfg.dims);
  syn->add_option("--frames-min", scfg.frames_min);
  syn->add_option("--frames-max", scfg.frames_max);
  syn->add_option("--noise", scfg.noise_sigma);
  syn->add_option("--jitter", scfg.skill_jitter);
  syn->add_option("--anchors", scfg.anchors_per_gesture);
  syn->add_option("--center-spread", scfg.center_spread);
  syn->add_option("--anchor-spread", scfg.anchor_spread);
  syn->add_option("--seed", scfg.seed);

  auto* inspect = app.add_subcommand("inspect", "dump raw and denoised channels as CSV");
  inspect->add_option("-c,--config", ov.config, "JSON config file");
  inspect->add_option("--input", kin_file, "kinematics file")->required();
  inspect->add_option("--csv", out_file, "output CSV")->required();
  ov.preprocess_flags(inspect);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*segment) return cmd_segment(ov);
    if (*promote) return cmd_promote(ov, kin_file, labels_file);
    if (*eval) return cmd_eval(pred, truth, eval_iou, eval_json);
    if (*inspect) return cmd_inspect(ov, kin_file, out_file);
    if (*syn) {
      const auto demos = synth::generate(scfg, n_demos);
      synth::write_dataset(synth_out, demos);
      std::printf("%d demonstrations -> %s\n", n_demos, synth_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pmseg: %s\n", e.what());
    return 1;
  }
  return 1;
}

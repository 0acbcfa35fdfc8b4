// repeval: command line front end for the repeatability benchmark.
//
//   repeval eval      --ref A.kp --test B.kp --homography H --ref-dims WxH --test-dims WxH
//   repeval sequence  --manifest dataset.json --out report.json
//   repeval correlate --report a.json --report b.json
//   repeval summary   --reports a.json b.json ... --criterion c2
//   repeval synth     --out-dir DIR [generator flags]
//
// Exit codes: 0 success, 2 input or parse error, 3 results with undefined
// metrics (output is still written).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "repeval/repeval.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitUndefined = 3;

struct MetricFlags {
  double eps = 1.5;
  double max_overlap_error = 0.4;
  std::string normalize_radius = "30";
  std::optional<double> grid_step;
  std::string eq1_population = "common";
  std::string matcher = "nn";
  double ratio = 0.8;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--eps", eps, "Center distance threshold in px")->capture_default_str();
    cmd.add_option("--max-overlap-error", max_overlap_error, "Overlap error threshold")
        ->capture_default_str();
    cmd.add_option("--normalize-radius", normalize_radius,
                   "Reference region radius after normalization, or 'off'")
        ->capture_default_str();
    cmd.add_option("--grid-step", grid_step, "Overlap sampling pitch in px (default: automatic)");
    cmd.add_option("--eq1-population", eq1_population, "Points counted by eq1")
        ->check(CLI::IsMember({"common", "whole"}))
        ->capture_default_str();
    cmd.add_option("--matcher", matcher, "Descriptor matcher")
        ->check(CLI::IsMember({"nn", "ratio"}))
        ->capture_default_str();
    cmd.add_option("--ratio", ratio, "Ratio-test threshold for --matcher ratio")
        ->capture_default_str();
  }

  repeval::EvalConfig config() const {
    repeval::EvalConfig cfg;
    cfg.epsilon_px = eps;
    cfg.max_overlap_error = max_overlap_error;
    if (normalize_radius == "off") {
      cfg.normalize_radius.reset();
    } else {
      try {
        std::size_t used = 0;
        cfg.normalize_radius = std::stod(normalize_radius, &used);
        if (used != normalize_radius.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw repeval::Error(repeval::ErrorCode::InvalidArgument,
                             "normalize-radius: expected a number or 'off'");
      }
    }
    cfg.grid_step = grid_step;
    cfg.eq1_population = eq1_population == "whole" ? repeval::Eq1Population::Whole
                                                   : repeval::Eq1Population::Common;
    cfg.matcher = matcher == "ratio" ? repeval::MatcherMode::Ratio
                                     : repeval::MatcherMode::NearestNeighbor;
    cfg.ratio_threshold = ratio;
    cfg.validate();
    return cfg;
  }
};

std::pair<int, int> parse_dims(const std::string& text, const std::string& flag) {
  const auto x = text.find_first_of("xX");
  int w = 0;
  int h = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("no separator");
    std::size_t used_w = 0;
    std::size_t used_h = 0;
    w = std::stoi(text.substr(0, x), &used_w);
    h = std::stoi(text.substr(x + 1), &used_h);
    if (used_w != x || used_h != text.size() - x - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw repeval::Error(repeval::ErrorCode::InvalidArgument,
                         flag + ": expected WIDTHxHEIGHT, got '" + text + "'");
  }
  if (w <= 0 || h <= 0) {
    throw repeval::Error(repeval::ErrorCode::InvalidArgument, flag + ": dimensions must be positive");
  }
  return {w, h};
}

void emit(const std::string& content, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
  } else {
    repeval::write_text_file(path, content);
  }
}

std::filesystem::path sibling_csv(const std::filesystem::path& json_path) {
  std::filesystem::path p = json_path;
  p.replace_extension(".csv");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repeatability benchmark for local feature detectors"};
  app.require_subcommand(1);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a single image pair");
  std::string ref_path;
  std::string test_path;
  std::string hom_path;
  std::string ref_dims;
  std::string test_dims;
  std::string eval_format = "csv";
  std::string eval_out;
  MetricFlags eval_flags;
  eval_cmd->add_option("--ref", ref_path, "Reference keypoint file")->required();
  eval_cmd->add_option("--test", test_path, "Test keypoint file")->required();
  eval_cmd->add_option("--homography", hom_path, "Homography file (reference to test)")->required();
  eval_cmd->add_option("--ref-dims", ref_dims, "Reference image size WxH")->required();
  eval_cmd->add_option("--test-dims", test_dims, "Test image size WxH")->required();
  eval_cmd->add_option("--format", eval_format)->check(CLI::IsMember({"csv", "json"}));
  eval_cmd->add_option("--out", eval_out, "Output file (default stdout)");
  eval_flags.add_to(*eval_cmd);

  // sequence
  auto* seq_cmd = app.add_subcommand("sequence", "Evaluate (reference, i) pairs of a dataset");
  std::string manifest_path;
  std::string seq_out;
  std::string seq_csv;
  std::string seq_detector;
  std::size_t threads = 0;
  MetricFlags seq_flags;
  seq_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
  seq_cmd->add_option("--out", seq_out, "Report JSON path")->required();
  seq_cmd->add_option("--csv", seq_csv, "Plot series CSV path (default: report path with .csv)");
  seq_cmd->add_option("--detector", seq_detector, "Detector tag (overrides the manifest)");
  seq_cmd->add_option("--threads", threads, "Worker threads (0: all cores)")->capture_default_str();
  seq_flags.add_to(*seq_cmd);

  // correlate
  auto* corr_cmd = app.add_subcommand("correlate", "Pearson r of each criterion vs true matches");
  std::vector<std::string> corr_reports;
  std::string corr_format = "csv";
  std::string corr_out;
  std::string corr_std = "sample";
  corr_cmd->add_option("--report", corr_reports, "Sequence report JSON (repeatable)")
      ->required()
      ->expected(1, -1);
  corr_cmd->add_option("--format", corr_format)->check(CLI::IsMember({"csv", "json"}));
  corr_cmd->add_option("--out", corr_out, "Output file (default stdout)");
  corr_cmd->add_option("--std", corr_std, "Standard deviation of the aggregate")
      ->check(CLI::IsMember({"sample", "population"}))
      ->capture_default_str();

  // summary
  auto* sum_cmd = app.add_subcommand("summary", "Detector x dataset rating grid");
  std::vector<std::string> sum_reports;
  std::string sum_criterion = "c2";
  std::vector<double> sum_thresholds;
  std::string sum_format = "csv";
  std::string sum_out;
  sum_cmd->add_option("--reports", sum_reports, "Sequence report JSON files")
      ->required()
      ->expected(1, -1);
  sum_cmd->add_option("--criterion", sum_criterion)
      ->check(CLI::IsMember({"eq1", "c1", "c2"}))
      ->capture_default_str();
  sum_cmd->add_option("--thresholds", sum_thresholds,
                      "Absolute ascending thresholds in (0,1) (default: relative 1/3, 2/3)")
      ->delimiter(',');
  sum_cmd->add_option("--format", sum_format)->check(CLI::IsMember({"csv", "json"}));
  sum_cmd->add_option("--out", sum_out, "Output file (default stdout)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  repeval::SynthDatasetOptions synth_opts;
  std::string synth_dir;
  std::string synth_hom;
  std::string synth_detector;
  auto& sc = synth_opts.synth;
  synth_cmd->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth_cmd->add_option("--images", synth_opts.n_images, "Images in the sequence")->capture_default_str();
  synth_cmd->add_option("--seed", sc.seed)->capture_default_str();
  synth_cmd->add_option("--points", sc.n_points)->capture_default_str();
  synth_cmd->add_option("--width", sc.image_width)->capture_default_str();
  synth_cmd->add_option("--height", sc.image_height)->capture_default_str();
  synth_cmd->add_option("--min-radius", sc.min_radius)->capture_default_str();
  synth_cmd->add_option("--max-radius", sc.max_radius)->capture_default_str();
  synth_cmd->add_option("--jitter", sc.jitter_sigma, "Center jitter sigma, px")->capture_default_str();
  synth_cmd->add_option("--jitter-growth", synth_opts.jitter_growth,
                        "Extra jitter per further test image")
      ->capture_default_str();
  synth_cmd->add_option("--dropout", sc.dropout_rate)->capture_default_str();
  synth_cmd->add_option("--distractors", sc.n_distractors)->capture_default_str();
  synth_cmd->add_option("--descriptor-dim", sc.descriptor_dim)->capture_default_str();
  synth_cmd->add_option("--descriptor-noise", sc.descriptor_noise_sigma)->capture_default_str();
  synth_cmd->add_option("--homography", synth_hom, "Per-step homography file");
  synth_cmd->add_option("--name", synth_opts.name)->capture_default_str();
  synth_cmd->add_option("--detector", synth_detector, "Detector tag written to the manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*eval_cmd) {
      const auto cfg = eval_flags.config();
      const auto [rw, rh] = parse_dims(ref_dims, "--ref-dims");
      const auto [tw, th] = parse_dims(test_dims, "--test-dims");
      const auto ref = repeval::load_keypoints(ref_path, "ref", rw, rh);
      const auto test = repeval::load_keypoints(test_path, "test", tw, th);
      const auto h = repeval::load_homography(hom_path);
      const auto ev = repeval::evaluate_pair(ref, test, h, cfg);
      const std::string ref_id = std::filesystem::path(ref_path).filename().string();
      const std::string test_id = std::filesystem::path(test_path).filename().string();
      emit(eval_format == "json" ? repeval::pair_evaluation_json(ref_id, test_id, ev, cfg)
                                 : repeval::pair_evaluation_csv(ref_id, test_id, ev),
           eval_out);
      return ev.all_defined() ? kExitOk : kExitUndefined;
    }

    if (*seq_cmd) {
      const auto cfg = seq_flags.config();
      const std::filesystem::path mpath(manifest_path);
      const auto manifest = repeval::load_manifest(mpath);
      auto seq = repeval::load_sequence(manifest, mpath.parent_path());
      if (!seq_detector.empty()) seq.detector = seq_detector;
      const auto report = repeval::evaluate_sequence(seq, cfg, threads);
      emit(repeval::sequence_report_json(report), seq_out);
      // With the report on stdout the CSV is only written when asked for.
      if (!seq_csv.empty()) {
        emit(repeval::sequence_csv(report), seq_csv);
      } else if (seq_out != "-") {
        emit(repeval::sequence_csv(report), sibling_csv(seq_out).string());
      }
      return report.has_undefined_metric() ? kExitUndefined : kExitOk;
    }

    if (*corr_cmd) {
      std::vector<repeval::SequenceReport> reports;
      for (const auto& p : corr_reports) reports.push_back(repeval::load_sequence_report(p));
      const auto table = repeval::correlation_table(
          reports, corr_std == "population" ? repeval::StdKind::Population
                                            : repeval::StdKind::Sample);
      emit(corr_format == "json" ? repeval::correlation_json(table) : repeval::correlation_csv(table),
           corr_out);
      return table.has_missing_cells() ? kExitUndefined : kExitOk;
    }

    if (*sum_cmd) {
      std::vector<repeval::SequenceReport> reports;
      for (const auto& p : sum_reports) reports.push_back(repeval::load_sequence_report(p));
      std::optional<std::vector<double>> thresholds;
      if (!sum_thresholds.empty()) thresholds = sum_thresholds;
      const auto grid =
          repeval::summary_grid(reports, repeval::parse_criterion(sum_criterion), thresholds);
      emit(sum_format == "json" ? repeval::summary_json(grid) : repeval::summary_csv(grid), sum_out);
      return kExitOk;
    }

    if (*synth_cmd) {
      if (!synth_hom.empty()) synth_opts.step_homography = repeval::load_homography(synth_hom);
      if (!synth_detector.empty()) synth_opts.detector = synth_detector;
      const auto path = repeval::write_synthetic_dataset(synth_opts, synth_dir);
      std::cout << path.string() << "\n";
      return kExitOk;
    }
  } catch (const repeval::Error& e) {
    std::cerr << "repeval: " << e.what() << "\n";
    return e.code() == repeval::ErrorCode::UndefinedMetric ? kExitUndefined : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "repeval: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

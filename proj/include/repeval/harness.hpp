#pragma once

// Benchmark orchestration: evaluates (reference, i) pairs of an image
// sequence, serializes reports and builds correlation and ranking tables
// from them. The CLI in tools/ is a thin layer over these functions.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "repeval/error.hpp"
#include "repeval/evaluate.hpp"
#include "repeval/formats.hpp"
#include "repeval/stats.hpp"
#include "repeval/synth.hpp"

namespace repeval {

inline constexpr const char* kSequenceReportSchema = "repeval.sequence_report/1";
inline constexpr const char* kPairEvaluationSchema = "repeval.pair_evaluation/1";
inline constexpr const char* kCorrelationSchema = "repeval.correlation/1";
inline constexpr const char* kSummarySchema = "repeval.summary/1";

inline constexpr const char* kSequenceCsvHeader = "pair,eq1,c1,c2,true_matches";
inline constexpr const char* kCorrelationCsvHeader = "dataset,criterion,r,p,n";
inline constexpr const char* kPairCsvHeader = "ref,test,n_ref,n_test,n_rep,true_matches,eq1,c1,c2";

enum class Criterion { Eq1, C1, C2 };
inline constexpr Criterion kAllCriteria[] = {Criterion::Eq1, Criterion::C1, Criterion::C2};

inline std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::Eq1: return "eq1";
    case Criterion::C1: return "c1";
    case Criterion::C2: return "c2";
  }
  return "?";
}

inline Criterion parse_criterion(const std::string& s) {
  if (s == "eq1") return Criterion::Eq1;
  if (s == "c1") return Criterion::C1;
  if (s == "c2") return Criterion::C2;
  throw Error(ErrorCode::InvalidArgument, "unknown criterion '" + s + "'");
}

inline std::optional<double> metric(const PairEvaluation& ev, Criterion c) {
  switch (c) {
    case Criterion::Eq1: return ev.eq1;
    case Criterion::C1: return ev.c1;
    case Criterion::C2: return ev.c2;
  }
  return std::nullopt;
}

struct PairRecord {
  std::size_t pair = 0;  // 1-based index of the test image within the sequence
  std::string ref_id;
  std::string test_id;
  std::optional<std::string> label;
  PairEvaluation eval;
};

/// A correlation cell: either a report or the reason it is missing.
struct CorrelationCell {
  std::optional<CorrelationReport> report;
  std::string note;
};

struct SequenceReport {
  std::string dataset;
  std::optional<std::string> detector;
  std::string reference_id;
  EvalConfig config;
  std::vector<PairRecord> pairs;
  std::map<Criterion, CorrelationCell> correlations;

  std::vector<std::optional<double>> series(Criterion c) const {
    std::vector<std::optional<double>> out;
    for (const auto& p : pairs) out.push_back(metric(p.eval, c));
    return out;
  }

  std::vector<std::optional<double>> true_match_series() const {
    std::vector<std::optional<double>> out;
    for (const auto& p : pairs) {
      if (p.eval.true_matches) {
        out.push_back(static_cast<double>(*p.eval.true_matches));
      } else {
        out.push_back(std::nullopt);
      }
    }
    return out;
  }

  bool has_undefined_metric() const {
    return std::any_of(pairs.begin(), pairs.end(),
                       [](const PairRecord& p) { return !p.eval.all_defined(); });
  }
};

/// Pearson correlation of a criterion series against the true-match series.
/// Missing values or degenerate series produce a cell with a note.
inline CorrelationCell correlate_series(const std::vector<std::optional<double>>& metric_series,
                                        const std::vector<std::optional<double>>& true_matches) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < metric_series.size() && i < true_matches.size(); ++i) {
    if (!true_matches[i]) return {std::nullopt, "true matches unavailable"};
    if (!metric_series[i]) return {std::nullopt, "undefined metric in series"};
    xs.push_back(*metric_series[i]);
    ys.push_back(*true_matches[i]);
  }
  try {
    return {correlate(xs, ys), ""};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateSeries || e.code() == ErrorCode::InsufficientData ||
        e.code() == ErrorCode::LengthMismatch) {
      return {std::nullopt, std::string(to_string(e.code()))};
    }
    throw;
  }
}

inline void attach_correlations(SequenceReport& report) {
  report.correlations.clear();
  const auto tm = report.true_match_series();
  for (Criterion c : kAllCriteria) report.correlations[c] = correlate_series(report.series(c), tm);
}

/// Runs `fn(i)` for i in [0, count) on up to `threads` workers. Exceptions
/// are collected per index and the lowest-index one is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  std::vector<std::exception_ptr> errors(count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// In-memory sequence: image 0 is the reference, homographies[i] maps it onto
/// image i (homographies[0] is unused).
struct LoadedSequence {
  std::string name;
  std::optional<std::string> detector;
  std::vector<KeypointSet> images;
  std::vector<Homography> homographies;
  std::vector<std::optional<std::string>> labels;
};

inline LoadedSequence load_sequence(const DatasetManifest& manifest,
                                    const std::filesystem::path& base_dir) {
  LoadedSequence seq;
  seq.name = manifest.name;
  seq.detector = manifest.detector;
  for (std::size_t i = 0; i < manifest.images.size(); ++i) {
    const auto& img = manifest.images[i];
    seq.images.push_back(
        load_keypoints(base_dir / img.keypoint_file_path, img.id, img.width, img.height));
    seq.labels.push_back(img.label);
    seq.homographies.push_back(
        i == 0 ? Homography::identity()
               : load_homography(base_dir / manifest.homography_to(img.id).file_path));
  }
  return seq;
}

inline SequenceReport evaluate_sequence(const LoadedSequence& seq, const EvalConfig& cfg,
                                        std::size_t threads = 0) {
  cfg.validate();
  if (seq.images.empty()) throw Error(ErrorCode::ManifestError, "sequence has no images");
  SequenceReport report;
  report.dataset = seq.name;
  report.detector = seq.detector;
  report.reference_id = seq.images.front().image_id;
  report.config = cfg;
  const std::size_t n_pairs = seq.images.size() - 1;
  report.pairs.resize(n_pairs);
  parallel_for(n_pairs, threads, [&](std::size_t k) {
    const std::size_t i = k + 1;
    PairRecord rec;
    rec.pair = i;
    rec.ref_id = seq.images.front().image_id;
    rec.test_id = seq.images[i].image_id;
    rec.label = i < seq.labels.size() ? seq.labels[i] : std::nullopt;
    rec.eval = evaluate_pair(seq.images.front(), seq.images[i], seq.homographies[i], cfg);
    report.pairs[k] = std::move(rec);
  });
  attach_correlations(report);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json optional_json(const std::optional<std::size_t>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::string csv_cell(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

inline std::string csv_cell(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : std::string();
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::optional<double> json_optional_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number()) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' is not a number");
  return j[key].get<double>();
}

inline std::optional<std::size_t> json_optional_count(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number_unsigned()) {
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "' is not a count");
  }
  return j[key].get<std::size_t>();
}

inline std::size_t json_count(const nlohmann::json& j, const char* key) {
  const auto v = json_optional_count(j, key);
  if (!v) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  return *v;
}

inline std::string json_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(ErrorCode::ParseError, std::string("missing string field '") + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace detail

inline nlohmann::ordered_json config_to_json(const EvalConfig& cfg) {
  nlohmann::ordered_json j;
  j["eps"] = cfg.epsilon_px;
  j["max_overlap_error"] = cfg.max_overlap_error;
  j["normalize_radius"] = detail::optional_json(cfg.normalize_radius);
  j["grid_step"] = detail::optional_json(cfg.grid_step);
  j["eq1_population"] = cfg.eq1_population == Eq1Population::Whole ? "whole" : "common";
  j["matcher"] = cfg.matcher == MatcherMode::Ratio ? "ratio" : "nn";
  j["ratio_threshold"] = cfg.ratio_threshold;
  return j;
}

inline EvalConfig config_from_json(const nlohmann::json& j) {
  EvalConfig cfg;
  if (!j.is_object()) return cfg;
  if (auto v = detail::json_optional_double(j, "eps")) cfg.epsilon_px = *v;
  if (auto v = detail::json_optional_double(j, "max_overlap_error")) cfg.max_overlap_error = *v;
  cfg.normalize_radius = detail::json_optional_double(j, "normalize_radius");
  cfg.grid_step = detail::json_optional_double(j, "grid_step");
  if (j.contains("eq1_population") && j["eq1_population"] == "whole") {
    cfg.eq1_population = Eq1Population::Whole;
  }
  if (j.contains("matcher") && j["matcher"] == "ratio") cfg.matcher = MatcherMode::Ratio;
  if (auto v = detail::json_optional_double(j, "ratio_threshold")) cfg.ratio_threshold = *v;
  return cfg;
}

inline nlohmann::ordered_json evaluation_to_json(const PairEvaluation& ev) {
  nlohmann::ordered_json j;
  j["n_ref"] = ev.n_ref;
  j["n_test"] = ev.n_test;
  j["n_rep"] = ev.n_rep;
  j["n_ref_total"] = ev.n_ref_total;
  j["n_test_total"] = ev.n_test_total;
  j["descriptor_matches"] = detail::optional_json(ev.descriptor_matches);
  j["true_matches"] = detail::optional_json(ev.true_matches);
  j["eq1"] = detail::optional_json(ev.eq1);
  j["c1"] = detail::optional_json(ev.c1);
  j["c2"] = detail::optional_json(ev.c2);
  return j;
}

inline PairEvaluation evaluation_from_json(const nlohmann::json& j) {
  PairEvaluation ev;
  ev.n_ref = detail::json_count(j, "n_ref");
  ev.n_test = detail::json_count(j, "n_test");
  ev.n_rep = detail::json_count(j, "n_rep");
  ev.n_ref_total = detail::json_optional_count(j, "n_ref_total").value_or(ev.n_ref);
  ev.n_test_total = detail::json_optional_count(j, "n_test_total").value_or(ev.n_test);
  ev.descriptor_matches = detail::json_optional_count(j, "descriptor_matches");
  ev.true_matches = detail::json_optional_count(j, "true_matches");
  ev.eq1 = detail::json_optional_double(j, "eq1");
  ev.c1 = detail::json_optional_double(j, "c1");
  ev.c2 = detail::json_optional_double(j, "c2");
  return ev;
}

inline std::string pair_evaluation_json(const std::string& ref_id, const std::string& test_id,
                                        const PairEvaluation& ev, const EvalConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema"] = kPairEvaluationSchema;
  j["ref"] = ref_id;
  j["test"] = test_id;
  j["config"] = config_to_json(cfg);
  const auto fields = evaluation_to_json(ev);
  for (const auto& [k, v] : fields.items()) j[k] = v;
  return j.dump(2) + "\n";
}

inline std::string pair_evaluation_csv(const std::string& ref_id, const std::string& test_id,
                                       const PairEvaluation& ev) {
  std::string out = std::string(kPairCsvHeader) + "\n";
  out += detail::csv_escape(ref_id) + "," + detail::csv_escape(test_id) + "," +
         std::to_string(ev.n_ref) + "," + std::to_string(ev.n_test) + "," +
         std::to_string(ev.n_rep) + "," + detail::csv_cell(ev.true_matches) + "," +
         detail::csv_cell(ev.eq1) + "," + detail::csv_cell(ev.c1) + "," +
         detail::csv_cell(ev.c2) + "\n";
  return out;
}

inline nlohmann::ordered_json correlation_cell_json(const CorrelationCell& cell) {
  nlohmann::ordered_json j;
  if (cell.report) {
    j["r"] = cell.report->r;
    j["p"] = cell.report->p_value;
    j["n"] = cell.report->n;
  } else {
    j["r"] = nullptr;
    j["p"] = nullptr;
    j["note"] = cell.note;
  }
  return j;
}

inline std::string sequence_report_json(const SequenceReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = kSequenceReportSchema;
  j["dataset"] = report.dataset;
  j["detector"] = report.detector ? nlohmann::ordered_json(*report.detector)
                                  : nlohmann::ordered_json(nullptr);
  j["reference"] = report.reference_id;
  j["config"] = config_to_json(report.config);
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : report.pairs) {
    nlohmann::ordered_json pj;
    pj["pair"] = p.pair;
    pj["ref"] = p.ref_id;
    pj["test"] = p.test_id;
    pj["label"] = p.label ? nlohmann::ordered_json(*p.label) : nlohmann::ordered_json(nullptr);
    const auto fields = evaluation_to_json(p.eval);
    for (const auto& [k, v] : fields.items()) pj[k] = v;
    j["pairs"].push_back(std::move(pj));
  }
  nlohmann::ordered_json series;
  for (Criterion c : kAllCriteria) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& v : report.series(c)) arr.push_back(detail::optional_json(v));
    series[to_string(c)] = std::move(arr);
  }
  auto tm = nlohmann::ordered_json::array();
  for (const auto& p : report.pairs) tm.push_back(detail::optional_json(p.eval.true_matches));
  series["true_matches"] = std::move(tm);
  j["series"] = std::move(series);
  nlohmann::ordered_json corr;
  for (const auto& [c, cell] : report.correlations) corr[to_string(c)] = correlation_cell_json(cell);
  j["correlation"] = std::move(corr);
  return j.dump(2) + "\n";
}

/// Plot series, one row per pair: pair,eq1,c1,c2,true_matches. Undefined
/// values are empty cells.
inline std::string sequence_csv(const SequenceReport& report) {
  std::string out = std::string(kSequenceCsvHeader) + "\n";
  for (const auto& p : report.pairs) {
    out += std::to_string(p.pair) + "," + detail::csv_cell(p.eval.eq1) + "," +
           detail::csv_cell(p.eval.c1) + "," + detail::csv_cell(p.eval.c2) + "," +
           detail::csv_cell(p.eval.true_matches) + "\n";
  }
  return out;
}

inline SequenceReport parse_sequence_report(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, "malformed report JSON at byte " + std::to_string(e.byte));
  }
  if (!j.is_object() || !j.contains("schema") || j["schema"] != kSequenceReportSchema) {
    throw Error(ErrorCode::ParseError,
                std::string("not a sequence report (expected schema ") + kSequenceReportSchema + ")");
  }
  SequenceReport report;
  report.dataset = detail::json_string(j, "dataset");
  if (j.contains("detector") && j["detector"].is_string()) {
    report.detector = j["detector"].get<std::string>();
  }
  if (j.contains("reference") && j["reference"].is_string()) {
    report.reference_id = j["reference"].get<std::string>();
  }
  if (j.contains("config")) report.config = config_from_json(j["config"]);
  if (!j.contains("pairs") || !j["pairs"].is_array()) {
    throw Error(ErrorCode::ParseError, "report has no 'pairs' array");
  }
  for (const auto& pj : j["pairs"]) {
    if (!pj.is_object()) throw Error(ErrorCode::ParseError, "pair entry is not an object");
    PairRecord rec;
    rec.pair = detail::json_count(pj, "pair");
    rec.ref_id = pj.contains("ref") && pj["ref"].is_string() ? pj["ref"].get<std::string>() : "";
    rec.test_id = pj.contains("test") && pj["test"].is_string() ? pj["test"].get<std::string>() : "";
    if (pj.contains("label") && pj["label"].is_string()) rec.label = pj["label"].get<std::string>();
    rec.eval = evaluation_from_json(pj);
    report.pairs.push_back(std::move(rec));
  }
  attach_correlations(report);
  return report;
}

inline SequenceReport load_sequence_report(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  return with_file_context(path, [&] { return parse_sequence_report(text); });
}

// ---------------------------------------------------------------------------
// Correlation table

struct CorrelationRow {
  std::string dataset;  // "detector/dataset" when the report names a detector
  Criterion criterion = Criterion::C1;
  std::size_t n = 0;    // series length
  CorrelationCell cell;
};

struct CorrelationTable {
  std::vector<CorrelationRow> rows;
  std::map<Criterion, std::optional<Summary>> aggregate;  // over defined r values

  bool has_missing_cells() const {
    return std::any_of(rows.begin(), rows.end(),
                       [](const CorrelationRow& r) { return !r.cell.report; });
  }
};

inline std::string report_label(const SequenceReport& r) {
  return r.detector ? *r.detector + "/" + r.dataset : r.dataset;
}

inline CorrelationTable correlation_table(const std::vector<SequenceReport>& reports,
                                          StdKind std_kind = StdKind::Sample) {
  CorrelationTable table;
  std::map<Criterion, std::vector<double>> rs;
  for (const auto& report : reports) {
    const auto tm = report.true_match_series();
    for (Criterion c : kAllCriteria) {
      CorrelationRow row;
      row.dataset = report_label(report);
      row.criterion = c;
      row.n = report.pairs.size();
      row.cell = correlate_series(report.series(c), tm);
      if (row.cell.report) rs[c].push_back(row.cell.report->r);
      table.rows.push_back(std::move(row));
    }
  }
  for (Criterion c : kAllCriteria) {
    table.aggregate[c] = rs[c].empty() ? std::nullopt
                                       : std::optional<Summary>(summarize(rs[c], std_kind));
  }
  return table;
}

/// Table rows under `dataset,criterion,r,p,n`, followed by `*mean*` and
/// `*std*` rows per criterion (r holds the statistic, n the number of
/// correlations aggregated).
inline std::string correlation_csv(const CorrelationTable& table) {
  std::string out = std::string(kCorrelationCsvHeader) + "\n";
  for (const auto& row : table.rows) {
    const auto& rep = row.cell.report;
    out += detail::csv_escape(row.dataset) + "," + to_string(row.criterion) + "," +
           (rep ? format_number(rep->r) : "") + "," + (rep ? format_number(rep->p_value) : "") +
           "," + std::to_string(rep ? rep->n : row.n) + "\n";
  }
  for (Criterion c : kAllCriteria) {
    const auto& s = table.aggregate.at(c);
    if (!s) continue;
    out += "*mean*," + to_string(c) + "," + format_number(s->mean) + ",," + std::to_string(s->n) + "\n";
    out += "*std*," + to_string(c) + "," + (s->std ? format_number(*s->std) : "") + ",," +
           std::to_string(s->n) + "\n";
  }
  return out;
}

inline std::string correlation_json(const CorrelationTable& table) {
  nlohmann::ordered_json j;
  j["schema"] = kCorrelationSchema;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json rj;
    rj["dataset"] = row.dataset;
    rj["criterion"] = to_string(row.criterion);
    const auto fields = correlation_cell_json(row.cell);
    for (const auto& [k, v] : fields.items()) rj[k] = v;
    if (!row.cell.report) rj["n"] = row.n;
    j["rows"].push_back(std::move(rj));
  }
  nlohmann::ordered_json agg;
  for (Criterion c : kAllCriteria) {
    const auto& s = table.aggregate.at(c);
    if (!s) {
      agg[to_string(c)] = nullptr;
      continue;
    }
    agg[to_string(c)] = {{"mean", s->mean},
                         {"std", detail::optional_json(s->std)},
                         {"count", s->n}};
  }
  j["aggregate"] = std::move(agg);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Ranking summary

inline constexpr double kRelativeThresholds[] = {1.0 / 3.0, 2.0 / 3.0};

struct SummaryCell {
  std::optional<double> mean;
  std::string rating;  // "+".."+++", or kMissingCell when no data
};

struct SummaryGrid {
  Criterion criterion = Criterion::C2;
  std::optional<std::vector<double>> thresholds;  // unset: relative binning
  std::vector<std::string> detectors;
  std::vector<std::string> datasets;
  std::vector<std::vector<SummaryCell>> cells;  // [dataset][detector]
};

inline constexpr const char* kMissingCell = "\xE2\x80\x94";  // em dash

/// Mean criterion value per (detector, dataset), rated by bin_scores. With
/// explicit thresholds scores are binned as-is; otherwise each dataset row
/// is scaled by its best detector and binned at 1/3 and 2/3. Rows and
/// columns follow first appearance in `reports`.
inline SummaryGrid summary_grid(const std::vector<SequenceReport>& reports, Criterion criterion,
                                const std::optional<std::vector<double>>& thresholds) {
  if (thresholds) validate_thresholds(*thresholds);
  SummaryGrid grid;
  grid.criterion = criterion;
  grid.thresholds = thresholds;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const auto& r : reports) {
    const std::string det = r.detector.value_or("unknown");
    if (std::find(grid.detectors.begin(), grid.detectors.end(), det) == grid.detectors.end()) {
      grid.detectors.push_back(det);
    }
    if (std::find(grid.datasets.begin(), grid.datasets.end(), r.dataset) == grid.datasets.end()) {
      grid.datasets.push_back(r.dataset);
    }
    auto& bucket = values[{r.dataset, det}];
    for (const auto& v : r.series(criterion)) {
      if (v) bucket.push_back(*v);
    }
  }
  for (const auto& ds : grid.datasets) {
    std::vector<SummaryCell> row;
    std::vector<std::pair<std::string, double>> scores;
    double best = 0.0;
    for (const auto& det : grid.detectors) {
      SummaryCell cell{std::nullopt, kMissingCell};
      auto it = values.find({ds, det});
      if (it != values.end() && !it->second.empty()) {
        cell.mean = summarize(it->second).mean;
        best = std::max(best, *cell.mean);
      }
      row.push_back(cell);
    }
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k].mean) continue;
      if (thresholds) {
        row[k].rating = render_rating(rating(*row[k].mean, *thresholds));
      } else {
        const double score = best > 0.0 ? *row[k].mean / best : 0.0;
        row[k].rating = render_rating(rating(score, kRelativeThresholds));
      }
    }
    grid.cells.push_back(std::move(row));
  }
  return grid;
}

inline std::string summary_csv(const SummaryGrid& grid) {
  std::string out = "dataset";
  for (const auto& d : grid.detectors) out += "," + detail::csv_escape(d);
  out += "\n";
  for (std::size_t i = 0; i < grid.datasets.size(); ++i) {
    out += detail::csv_escape(grid.datasets[i]);
    for (const auto& cell : grid.cells[i]) out += "," + cell.rating;
    out += "\n";
  }
  return out;
}

inline std::string summary_json(const SummaryGrid& grid) {
  nlohmann::ordered_json j;
  j["schema"] = kSummarySchema;
  j["criterion"] = to_string(grid.criterion);
  j["thresholds"] = grid.thresholds ? nlohmann::ordered_json(*grid.thresholds)
                                    : nlohmann::ordered_json("relative");
  j["detectors"] = grid.detectors;
  j["datasets"] = grid.datasets;
  j["cells"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < grid.datasets.size(); ++i) {
    for (std::size_t k = 0; k < grid.detectors.size(); ++k) {
      const auto& cell = grid.cells[i][k];
      j["cells"].push_back({{"dataset", grid.datasets[i]},
                            {"detector", grid.detectors[k]},
                            {"mean", detail::optional_json(cell.mean)},
                            {"rating", cell.rating}});
    }
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Synthetic datasets

struct SynthDatasetOptions {
  SynthConfig synth;
  int n_images = 6;
  double jitter_growth = 0.0;  // added to jitter_sigma per further image
  std::optional<Homography> step_homography;  // image i uses step^(i-1)
  std::string name = "synthetic";
  std::optional<std::string> detector;
};

/// Per-image transform used when no step homography is given: rotation by
/// 4 degrees and zoom-out by 0.94 about the image center, plus a slight
/// perspective tilt.
inline Homography default_step_homography(int width, int height) {
  const double cx = 0.5 * width;
  const double cy = 0.5 * height;
  const double angle = 4.0 * std::numbers::pi / 180.0;
  const double s = 0.94;
  Eigen::Matrix3d to_origin = Eigen::Matrix3d::Identity();
  to_origin(0, 2) = -cx;
  to_origin(1, 2) = -cy;
  Eigen::Matrix3d back = Eigen::Matrix3d::Identity();
  back(0, 2) = cx;
  back(1, 2) = cy;
  Eigen::Matrix3d core;
  core << s * std::cos(angle), -s * std::sin(angle), 0.0,
          s * std::sin(angle), s * std::cos(angle), 0.0,
          2e-5, 0.0, 1.0;
  return Homography(Eigen::Matrix3d(back * core * to_origin));
}

inline Homography sequence_homography(const SynthDatasetOptions& opts, int image_index) {
  const Homography step = opts.step_homography.value_or(
      default_step_homography(opts.synth.image_width, opts.synth.image_height));
  Homography h = Homography::identity();
  for (int k = 1; k < image_index; ++k) h = step * h;
  return h;
}

/// Builds the whole sequence in memory. Test image i (1-based, i >= 2) uses
/// random stream i - 1 and jitter jitter_sigma + (i - 2) * jitter_growth.
inline LoadedSequence synthesize_sequence(const SynthDatasetOptions& opts) {
  opts.synth.validate();
  if (opts.n_images < 2) throw Error(ErrorCode::InvalidArgument, "images: need at least 2");
  if (!(opts.jitter_growth >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "jitter-growth: must be non-negative");
  }
  LoadedSequence seq;
  seq.name = opts.name;
  seq.detector = opts.detector;
  seq.images.push_back(generate_reference(opts.synth, "img1"));
  seq.homographies.push_back(Homography::identity());
  seq.labels.push_back(std::nullopt);
  for (int i = 2; i <= opts.n_images; ++i) {
    SynthConfig cfg = opts.synth;
    cfg.jitter_sigma = opts.synth.jitter_sigma + (i - 2) * opts.jitter_growth;
    const Homography h = sequence_homography(opts, i);
    seq.images.push_back(derive_test(seq.images.front(), h, cfg, static_cast<std::uint64_t>(i - 1),
                                     "img" + std::to_string(i)));
    seq.homographies.push_back(h);
    seq.labels.push_back(std::nullopt);
  }
  return seq;
}

/// Writes img<i>.kp, H1to<i>p and manifest.json into `out_dir`; returns the
/// manifest path.
inline std::filesystem::path write_synthetic_dataset(const SynthDatasetOptions& opts,
                                                     const std::filesystem::path& out_dir) {
  const LoadedSequence seq = synthesize_sequence(opts);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string());

  DatasetManifest manifest;
  manifest.name = opts.name;
  manifest.detector = opts.detector;
  for (std::size_t i = 0; i < seq.images.size(); ++i) {
    const auto& set = seq.images[i];
    const std::string kp_file = set.image_id + ".kp";
    write_text_file(out_dir / kp_file, write_keypoints(set));
    manifest.images.push_back({set.image_id, set.width, set.height, kp_file, std::nullopt});
    if (i > 0) {
      const std::string h_file = "H1to" + std::to_string(i + 1) + "p";
      write_text_file(out_dir / h_file, write_homography(seq.homographies[i]));
      manifest.homographies.push_back({seq.images.front().image_id, set.image_id, h_file});
    }
  }
  const auto manifest_path = out_dir / "manifest.json";
  write_text_file(manifest_path, write_manifest(manifest));
  return manifest_path;
}

}  // namespace repeval

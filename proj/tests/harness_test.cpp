#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "repeval/harness.hpp"

namespace repeval {
namespace {

PairRecord record(std::size_t i, std::optional<double> c1, std::optional<std::size_t> tm) {
  PairRecord r;
  r.pair = i;
  r.ref_id = "img1";
  r.test_id = "img" + std::to_string(i + 1);
  r.eval.c1 = c1;
  r.eval.c2 = c1;
  r.eval.eq1 = c1;
  r.eval.true_matches = tm;
  return r;
}

SequenceReport report_with(std::string dataset, std::optional<std::string> detector,
                           std::vector<double> c1, std::vector<std::size_t> tm) {
  SequenceReport rep;
  rep.dataset = std::move(dataset);
  rep.detector = std::move(detector);
  rep.reference_id = "img1";
  for (std::size_t i = 0; i < c1.size(); ++i) rep.pairs.push_back(record(i + 1, c1[i], tm[i]));
  attach_correlations(rep);
  return rep;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

TEST(Correlate, Examples) {
  const auto rep = report_with("d", std::nullopt, {0.1, 0.2, 0.3, 0.4, 0.5}, {2, 1, 4, 3, 5});
  const auto& cell = rep.correlations.at(Criterion::C1);
  ASSERT_TRUE(cell.report.has_value());
  EXPECT_NEAR(cell.report->r, 0.8, 1e-12);
  EXPECT_NEAR(cell.report->p_value, 0.104088038661828, 1e-12);
  EXPECT_EQ(cell.report->n, 5u);
}

TEST(Correlate, ShortSeriesIsInsufficient) {
  const auto rep = report_with("d", std::nullopt, {0.1, 0.2}, {2, 1});
  const auto& cell = rep.correlations.at(Criterion::C2);
  EXPECT_FALSE(cell.report.has_value());
  EXPECT_EQ(cell.note, "InsufficientData");
}

TEST(Correlate, MissingValuesGiveNotes) {
  auto rep = report_with("d", std::nullopt, {0.1, 0.2, 0.3}, {2, 1, 4});
  rep.pairs[1].eval.true_matches.reset();
  attach_correlations(rep);
  EXPECT_FALSE(rep.correlations.at(Criterion::C1).report);
  EXPECT_EQ(rep.correlations.at(Criterion::C1).note, "true matches unavailable");
  rep = report_with("d", std::nullopt, {0.1, 0.2, 0.3}, {2, 1, 4});
  rep.pairs[0].eval.c1.reset();
  attach_correlations(rep);
  EXPECT_EQ(rep.correlations.at(Criterion::C1).note, "undefined metric in series");
  EXPECT_TRUE(rep.has_undefined_metric());
}

TEST(Correlate, TableAggregates) {
  const std::vector<SequenceReport> reports{
      report_with("a", "det", {0.1, 0.2, 0.3, 0.4, 0.5}, {2, 1, 4, 3, 5}),
      report_with("b", "det", {0.1, 0.2, 0.3, 0.4, 0.5}, {1, 2, 3, 4, 5})};
  const auto table = correlation_table(reports);
  ASSERT_EQ(table.rows.size(), 6u);
  EXPECT_EQ(table.rows[0].dataset, "det/a");
  const auto& agg = *table.aggregate.at(Criterion::C1);
  EXPECT_NEAR(agg.mean, 0.9, 1e-12);
  EXPECT_NEAR(*agg.std, std::sqrt(0.02), 1e-12);
  const auto rows = csv_rows(correlation_csv(table));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"dataset", "criterion", "r", "p", "n"}));
  EXPECT_EQ(rows.size(), 1u + 6u + 6u);
  EXPECT_EQ(rows[7][0], "*mean*");
  const auto j = nlohmann::json::parse(correlation_json(table));
  EXPECT_EQ(j["schema"], kCorrelationSchema);
  EXPECT_NEAR(j["aggregate"]["c1"]["mean"].get<double>(), 0.9, 1e-12);
}

TEST(Summary, RelativeBinning) {
  const std::vector<SequenceReport> reports{
      report_with("boat", "weak", {0.2, 0.2, 0.2}, {1, 2, 3}),
      report_with("boat", "strong", {0.9, 0.9, 0.9}, {1, 2, 3})};
  const auto grid = summary_grid(reports, Criterion::C1, std::nullopt);
  ASSERT_EQ(grid.detectors, (std::vector<std::string>{"weak", "strong"}));
  EXPECT_EQ(grid.cells[0][0].rating, "+");
  EXPECT_EQ(grid.cells[0][1].rating, "+++");
  EXPECT_EQ(summary_csv(grid), "dataset,weak,strong\nboat,+,+++\n");
}

TEST(Summary, AbsoluteThresholdsAndSingleCell) {
  const std::vector<SequenceReport> one{report_with("wall", "x", {0.5, 0.5, 0.5}, {1, 2, 3})};
  EXPECT_EQ(summary_grid(one, Criterion::C2, std::nullopt).cells[0][0].rating, "+++");
  const auto grid = summary_grid(one, Criterion::C2, std::vector<double>{0.6, 0.8});
  EXPECT_EQ(grid.cells[0][0].rating, "+");
  EXPECT_THROW(summary_grid(one, Criterion::C2, std::vector<double>{0.8, 0.6}), Error);
}

TEST(Summary, MissingCellsAndOrdering) {
  const std::vector<SequenceReport> reports{
      report_with("trees", "b", {0.5, 0.5, 0.5}, {1, 2, 3}),
      report_with("bark", "a", {0.4, 0.4, 0.4}, {1, 2, 3})};
  const auto grid = summary_grid(reports, Criterion::C1, std::nullopt);
  EXPECT_EQ(grid.datasets, (std::vector<std::string>{"trees", "bark"}));
  EXPECT_EQ(grid.detectors, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(grid.cells[0][1].rating, kMissingCell);
  EXPECT_FALSE(grid.cells[0][1].mean.has_value());
  const auto j = nlohmann::json::parse(summary_json(grid));
  EXPECT_TRUE(j["cells"][1]["mean"].is_null());
}

SynthDatasetOptions small_dataset() {
  SynthDatasetOptions opts;
  opts.synth.n_points = 150;
  opts.synth.descriptor_dim = 16;
  opts.synth.n_distractors = 20;
  opts.jitter_growth = 0.2;
  return opts;
}

TEST(Sequence, JsonAndCsvAgree) {
  const auto report = evaluate_sequence(synthesize_sequence(small_dataset()), EvalConfig{}, 1);
  ASSERT_EQ(report.pairs.size(), 5u);
  const auto j = nlohmann::json::parse(sequence_report_json(report));
  const auto rows = csv_rows(sequence_csv(report));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"pair", "eq1", "c1", "c2", "true_matches"}));
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& pj = j["pairs"][i];
    EXPECT_EQ(std::stoul(rows[i + 1][0]), pj["pair"].get<std::size_t>());
    EXPECT_EQ(std::stod(rows[i + 1][1]), pj["eq1"].get<double>());
    EXPECT_EQ(std::stod(rows[i + 1][2]), pj["c1"].get<double>());
    EXPECT_EQ(std::stod(rows[i + 1][3]), pj["c2"].get<double>());
    EXPECT_EQ(std::stoul(rows[i + 1][4]), pj["true_matches"].get<std::size_t>());
    EXPECT_EQ(j["series"]["c2"][i], pj["c2"]);
  }
}

TEST(Sequence, ReportRoundTrip) {
  const auto report = evaluate_sequence(synthesize_sequence(small_dataset()), EvalConfig{}, 1);
  const std::string text = sequence_report_json(report);
  const auto back = parse_sequence_report(text);
  EXPECT_EQ(sequence_report_json(back), text);
  ASSERT_EQ(back.pairs.size(), report.pairs.size());
  for (std::size_t i = 0; i < back.pairs.size(); ++i) EXPECT_EQ(back.pairs[i].eval, report.pairs[i].eval);
}

TEST(Sequence, RejectsForeignJson) {
  EXPECT_THROW(parse_sequence_report("{\"schema\": \"other\"}"), Error);
  EXPECT_THROW(parse_sequence_report("{oops"), Error);
}

TEST(Sequence, ThreadCountDoesNotChangeOutput) {
  const auto seq = synthesize_sequence(small_dataset());
  const auto one = sequence_report_json(evaluate_sequence(seq, EvalConfig{}, 1));
  EXPECT_EQ(sequence_report_json(evaluate_sequence(seq, EvalConfig{}, 4)), one);
  EXPECT_EQ(sequence_report_json(evaluate_sequence(seq, EvalConfig{}, 0)), one);
}

TEST(Sequence, WrittenDatasetLoadsBack) {
  const auto dir = std::filesystem::temp_directory_path() / "repeval_harness_test";
  std::filesystem::remove_all(dir);
  const auto opts = small_dataset();
  const auto manifest_path = write_synthetic_dataset(opts, dir);
  const auto manifest = load_manifest(manifest_path);
  EXPECT_EQ(manifest.images.size(), 6u);
  const auto loaded = load_sequence(manifest, dir);
  const auto direct = synthesize_sequence(opts);
  EXPECT_EQ(sequence_report_json(evaluate_sequence(loaded, EvalConfig{}, 1)),
            sequence_report_json(evaluate_sequence(direct, EvalConfig{}, 1)));
  std::filesystem::remove_all(dir);
}

TEST(Sequence, DefaultStepHomographyFixesCenter) {
  const auto h = default_step_homography(800, 640);
  const Point2 c = project_point(h, {400, 320});
  EXPECT_NEAR(c.x, 400, 1e-9);
  EXPECT_NEAR(c.y, 320, 1e-9);
}

TEST(ParallelFor, RethrowsLowestIndex) {
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 4 || i == 7) throw Error(ErrorCode::InvalidArgument, std::to_string(i));
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.detail(), "4");
  }
}

TEST(Criteria, Names) {
  for (Criterion c : kAllCriteria) EXPECT_EQ(parse_criterion(to_string(c)), c);
  EXPECT_THROW(parse_criterion("c3"), Error);
}

}  // namespace
}  // namespace repeval

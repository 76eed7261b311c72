#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gacsim/report.hpp"

namespace gacsim {
namespace {

StepRecord make_step(int step, double cosine, Regime regime = Regime::safe) {
  StepRecord r;
  r.step = step;
  r.mean_return = 0.5;
  r.cosine = cosine;
  r.regime = regime;
  r.clip_fraction = 0.25;
  r.grad_norm = 1.0;
  return r;
}

TEST(MetricsCsv, HeaderIsPinned) {
  EXPECT_STREQ(kMetricsHeader,
               "step,mean_return,cosine,regime,clip_fraction,grad_norm,skipped");
}

TEST(MetricsCsv, RoundTripPreservesEveryRecordExactly) {
  RunMetrics metrics;
  StepRecord a = make_step(0, 0.1, Regime::warmup);
  a.mean_return = 1.0 / 3.0;
  a.grad_norm = 7.03e-12;
  StepRecord b = make_step(1, -0.987654321012345678, Regime::projection);
  b.clip_fraction = 1e-17;
  StepRecord c = make_step(2, 0.0, Regime::violation);
  c.skipped = true;
  StepRecord d = make_step(3, 0.05, Regime::safe);
  metrics.steps = {a, b, c, d};

  std::stringstream io;
  write_metrics_csv(metrics, io);
  const RunMetrics back = read_metrics_csv(io);

  ASSERT_EQ(back.steps.size(), metrics.steps.size());
  for (std::size_t i = 0; i < metrics.steps.size(); ++i) {
    const StepRecord& want = metrics.steps[i];
    const StepRecord& got = back.steps[i];
    EXPECT_EQ(got.step, want.step);
    // Floats travel as shortest-exact decimals, so equality is bitwise.
    EXPECT_EQ(got.mean_return, want.mean_return);
    EXPECT_EQ(got.cosine, want.cosine);
    EXPECT_EQ(got.regime, want.regime);
    EXPECT_EQ(got.clip_fraction, want.clip_fraction);
    EXPECT_EQ(got.grad_norm, want.grad_norm);
    EXPECT_EQ(got.skipped, want.skipped);
  }
}

TEST(MetricsCsv, RealRunRoundTripsThroughDisk) {
  RunConfig cfg;
  cfg.steps = 80;
  cfg.schedule.staleness = 2;
  const RunMetrics metrics = run_from_config(cfg);

  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "gacsim_report_test";
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / "metrics.csv";
  write_metrics_csv(metrics, path);
  const RunMetrics back = read_metrics_csv(path);
  std::filesystem::remove_all(dir);

  ASSERT_EQ(back.steps.size(), metrics.steps.size());
  for (std::size_t i = 0; i < metrics.steps.size(); ++i) {
    EXPECT_EQ(back.steps[i].step, metrics.steps[i].step);
    EXPECT_EQ(back.steps[i].mean_return, metrics.steps[i].mean_return);
    EXPECT_EQ(back.steps[i].cosine, metrics.steps[i].cosine);
    EXPECT_EQ(back.steps[i].regime, metrics.steps[i].regime);
    EXPECT_EQ(back.steps[i].clip_fraction, metrics.steps[i].clip_fraction);
    EXPECT_EQ(back.steps[i].grad_norm, metrics.steps[i].grad_norm);
    EXPECT_EQ(back.steps[i].skipped, metrics.steps[i].skipped);
  }

  // The reader recomputes the summary from the records, so the statistics it
  // can derive agree with the live run.
  EXPECT_EQ(back.summary.final_return, metrics.summary.final_return);
  EXPECT_EQ(back.summary.q90_abs_cosine, metrics.summary.q90_abs_cosine);
  EXPECT_EQ(back.summary.max_abs_cosine, metrics.summary.max_abs_cosine);
  EXPECT_EQ(back.summary.frac_low_cosine, metrics.summary.frac_low_cosine);
  EXPECT_EQ(back.summary.collapse_detected, metrics.summary.collapse_detected);
  EXPECT_EQ(back.summary.regime_counts, metrics.summary.regime_counts);
}

TEST(MetricsCsv, ToleratesCarriageReturnsFromForeignTools) {
  std::stringstream io;
  io << kMetricsHeader << "\r\n"
     << "0,0.5,0.1,safe,0,1,0\r\n";
  const RunMetrics back = read_metrics_csv(io);
  ASSERT_EQ(back.steps.size(), 1u);
  EXPECT_EQ(back.steps[0].step, 0);
  EXPECT_DOUBLE_EQ(back.steps[0].cosine, 0.1);
  EXPECT_EQ(back.steps[0].regime, Regime::safe);
}

TEST(MetricsCsv, RejectsMalformedInput) {
  {
    std::stringstream io;
    EXPECT_THROW(read_metrics_csv(io), std::runtime_error);
  }
  {
    std::stringstream io;
    io << "step,reward\n";
    EXPECT_THROW(read_metrics_csv(io), std::runtime_error);
  }
  {
    std::stringstream io;
    io << kMetricsHeader << "\n0,0.5,0.1,safe,0,1\n";  // six fields
    EXPECT_THROW(read_metrics_csv(io), std::runtime_error);
  }
  {
    std::stringstream io;
    io << kMetricsHeader << "\n0,abc,0.1,safe,0,1,0\n";
    EXPECT_THROW(read_metrics_csv(io), std::runtime_error);
  }
  {
    std::stringstream io;
    io << kMetricsHeader << "\n0,0.5,0.1,calm,0,1,0\n";  // bad regime
    EXPECT_THROW(read_metrics_csv(io), std::runtime_error);
  }
}

TEST(SummaryJson, FieldsMirrorTheConfigAndSummary) {
  RunConfig cfg;
  cfg.experiment_name = "probe";
  cfg.seed = 17;
  cfg.schedule.staleness = 4;
  cfg.gac_enabled = true;
  cfg.gac.c_low = 0.02;
  cfg.gac.c_high = 0.12;

  RunMetrics metrics;
  metrics.steps = {make_step(0, 0.0, Regime::warmup),
                   make_step(1, 0.01, Regime::safe),
                   make_step(2, 0.2, Regime::projection)};
  metrics.summary.final_return = 0.75;
  metrics.summary.q90_abs_cosine = 0.03;
  metrics.summary.max_abs_cosine = 0.2;
  metrics.summary.frac_low_cosine = 0.5;
  metrics.summary.collapse_detected = false;
  metrics.summary.collapse_events = 2;
  metrics.summary.regime_counts = {1, 1, 1, 0};

  const nlohmann::ordered_json j = summary_json(cfg, metrics);
  EXPECT_EQ(j["experiment_name"], "probe");
  EXPECT_EQ(j["seed"], 17);
  EXPECT_EQ(j["steps"], 3);
  EXPECT_EQ(j["staleness"], 4);
  EXPECT_EQ(j["gac_enabled"], true);
  EXPECT_DOUBLE_EQ(j["c_low"].get<double>(), 0.02);
  EXPECT_DOUBLE_EQ(j["c_high"].get<double>(), 0.12);
  EXPECT_DOUBLE_EQ(j["final_return"].get<double>(), 0.75);
  EXPECT_DOUBLE_EQ(j["q90_abs_cosine"].get<double>(), 0.03);
  EXPECT_EQ(j["collapse_detected"], false);
  EXPECT_EQ(j["collapse_events"], 2);
  EXPECT_EQ(j["regime_counts"]["warmup"], 1);
  EXPECT_EQ(j["regime_counts"]["safe"], 1);
  EXPECT_EQ(j["regime_counts"]["projection"], 1);
  EXPECT_EQ(j["regime_counts"]["violation"], 0);

  // Key order is part of the format: the name leads.
  EXPECT_EQ(j.dump().rfind("{\"experiment_name\":", 0), 0u);
}

TEST(SummaryJson, ShortRunStatisticsSerializeAsNull) {
  RunMetrics metrics;
  metrics.steps = {make_step(0, 0.0, Regime::warmup)};
  metrics.summary.final_return = 0.25;
  // Quantile fields stay NaN when there is nothing past warmup.
  const nlohmann::ordered_json j = summary_json(RunConfig{}, metrics);
  EXPECT_NE(j.dump().find("\"q90_abs_cosine\":null"), std::string::npos);
  EXPECT_NE(j.dump().find("\"max_abs_cosine\":null"), std::string::npos);
}

TEST(SummaryJson, AppendJsonlWritesOneParseableLinePerRecord) {
  std::stringstream out;
  RunMetrics metrics;
  metrics.steps = {make_step(0, 0.0)};
  metrics.summary.final_return = 1.0;
  RunConfig cfg;
  cfg.experiment_name = "first";
  append_jsonl(summary_json(cfg, metrics), out);
  cfg.experiment_name = "second";
  append_jsonl(summary_json(cfg, metrics), out);

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(out, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(lines[0])["experiment_name"], "first");
  EXPECT_EQ(nlohmann::json::parse(lines[1])["experiment_name"], "second");
}

TEST(PlotData, KindNamesRoundTrip) {
  EXPECT_EQ(plot_kind_from_name("reward"), PlotKind::reward);
  EXPECT_EQ(plot_kind_from_name("cosine"), PlotKind::cosine);
  EXPECT_EQ(plot_kind_from_name("regime_histogram"),
            PlotKind::regime_histogram);
  EXPECT_THROW(plot_kind_from_name("pie"), std::invalid_argument);
}

TEST(PlotData, ExtractsCarryTheExpectedColumns) {
  RunMetrics metrics;
  metrics.steps = {make_step(0, 0.25, Regime::warmup),
                   make_step(1, -0.5, Regime::safe),
                   make_step(2, 0.125, Regime::safe),
                   make_step(3, 0.75, Regime::violation)};
  metrics.steps[0].mean_return = 0.5;
  metrics.steps[1].mean_return = 0.625;
  metrics.steps[2].mean_return = 0.75;
  metrics.steps[3].mean_return = 1.0;

  std::stringstream reward;
  emit_plot_data(metrics, PlotKind::reward, reward);
  EXPECT_EQ(reward.str(),
            "step,mean_return\n0,0.5\n1,0.625\n2,0.75\n3,1\n");

  std::stringstream cosine;
  emit_plot_data(metrics, PlotKind::cosine, cosine);
  EXPECT_EQ(cosine.str(), "step,cosine\n0,0.25\n1,-0.5\n2,0.125\n3,0.75\n");

  std::stringstream hist;
  emit_plot_data(metrics, PlotKind::regime_histogram, hist);
  EXPECT_EQ(hist.str(),
            "regime,count\nwarmup,1\nsafe,2\nprojection,0\nviolation,1\n");
}

// 100 post-warmup samples: 89 at 0.01, ten at 0.0296, one at 0.0645.  The 0.9
// quantile interpolates between two 0.0296 entries, so the suggestion rounds
// up to 0.03.
TEST(Calibration, SuggestsThresholdsFromTheTraceQuantile) {
  RunMetrics metrics;
  for (int step = 1; step <= 50; ++step)
    metrics.steps.push_back(make_step(step, 0.9));  // warmup, ignored
  for (int i = 0; i < 100; ++i) {
    double c = i < 89 ? 0.01 : (i < 99 ? 0.0296 : 0.0645);
    if (i % 2 == 1) c = -c;  // the statistic uses |c|
    metrics.steps.push_back(make_step(51 + i, c));
  }

  const CalibrationResult res = calibrate_thresholds(metrics);
  EXPECT_EQ(res.sample_count, 100);
  EXPECT_NEAR(res.q90_abs_cosine, 0.0296, 1e-12);
  EXPECT_DOUBLE_EQ(res.max_abs_cosine, 0.0645);
  EXPECT_DOUBLE_EQ(res.frac_low_cosine, 0.99);
  EXPECT_DOUBLE_EQ(res.c_low, 0.03);
  EXPECT_DOUBLE_EQ(res.c_high, 0.18);
}

TEST(Calibration, GridValuesAreNotPushedUpACell) {
  RunMetrics metrics;
  for (int i = 0; i < 60; ++i)
    metrics.steps.push_back(make_step(51 + i, 0.03));
  const CalibrationResult res = calibrate_thresholds(metrics);
  EXPECT_DOUBLE_EQ(res.q90_abs_cosine, 0.03);
  EXPECT_DOUBLE_EQ(res.c_low, 0.03);
  EXPECT_DOUBLE_EQ(res.c_high, 0.18);
}

TEST(Calibration, CapsAndFloorsTheSuggestion) {
  RunMetrics high;
  for (int i = 0; i < 60; ++i)
    high.steps.push_back(make_step(51 + i, 0.09));
  const CalibrationResult capped = calibrate_thresholds(high);
  EXPECT_DOUBLE_EQ(capped.c_low, 0.09);
  EXPECT_DOUBLE_EQ(capped.c_high, 0.5);  // 6x would overshoot

  RunMetrics flat;
  for (int i = 0; i < 60; ++i) flat.steps.push_back(make_step(51 + i, 0.0));
  const CalibrationResult floored = calibrate_thresholds(flat);
  EXPECT_DOUBLE_EQ(floored.c_low, 0.01);
  EXPECT_DOUBLE_EQ(floored.c_high, 0.06);
}

TEST(Calibration, RefusesShortTraces) {
  RunMetrics metrics;
  for (int i = 0; i < 49; ++i)
    metrics.steps.push_back(make_step(51 + i, 0.01));
  try {
    calibrate_thresholds(metrics);
    ADD_FAILURE() << "expected a short trace to be rejected";
  } catch (const std::runtime_error& err) {
    EXPECT_NE(std::string(err.what()).find("at least 50"), std::string::npos);
  }
}

}  // namespace
}  // namespace gacsim

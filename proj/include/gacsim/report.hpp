#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gacsim/async_pipeline.hpp"
#include "gacsim/config.hpp"
#include "gacsim/stats.hpp"

// Run artifacts: per-step metrics as CSV, run summaries as JSON lines, plot
// extracts, and the threshold calibration read off a measured cosine trace.
// Floats are written with enough digits to reparse exactly, which is what
// makes byte-identical reruns a meaningful promise.

namespace gacsim {

inline const char* kMetricsHeader =
    "step,mean_return,cosine,regime,clip_fraction,grad_norm,skipped";

inline void write_metrics_csv(const RunMetrics& metrics, std::ostream& out) {
  out << kMetricsHeader << "\n";
  for (const StepRecord& r : metrics.steps) {
    out << r.step << ',' << format_double(r.mean_return) << ','
        << format_double(r.cosine) << ',' << regime_name(r.regime) << ','
        << format_double(r.clip_fraction) << ',' << format_double(r.grad_norm)
        << ',' << (r.skipped ? 1 : 0) << "\n";
  }
}

inline void write_metrics_csv(const RunMetrics& metrics,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write metrics file: " + path.string());
  write_metrics_csv(metrics, out);
}

// Reads a metrics CSV back into records.  The summary is recomputed with
// default reporting options, so round-tripped files still carry one.
inline RunMetrics read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("metrics file is empty");
  // Tolerate a trailing carriage return from foreign tools.
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader)
    throw std::runtime_error("unexpected metrics header: " + line);

  RunMetrics metrics;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(current);
        current.clear();
      } else {
        current += c;
      }
    }
    fields.push_back(current);
    if (fields.size() != 7)
      throw std::runtime_error("metrics line " + std::to_string(line_number) +
                               ": expected 7 fields");
    try {
      StepRecord r;
      r.step = std::stoi(fields[0]);
      r.mean_return = std::stod(fields[1]);
      r.cosine = std::stod(fields[2]);
      r.regime = regime_from_name(fields[3]);
      r.clip_fraction = std::stod(fields[4]);
      r.grad_norm = std::stod(fields[5]);
      r.skipped = fields[6] == "1";
      metrics.steps.push_back(r);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("metrics line " + std::to_string(line_number) +
                               ": malformed field");
    }
  }
  metrics.summary = summarize(metrics.steps, RunOptions{});
  return metrics;
}

inline RunMetrics read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open metrics file: " + path.string());
  return read_metrics_csv(in);
}

// One summary line per run.  NaN statistics (short runs with no post-warmup
// samples) serialize as null.
inline nlohmann::ordered_json summary_json(const RunConfig& cfg,
                                           const RunMetrics& metrics) {
  const RunSummary& s = metrics.summary;
  nlohmann::ordered_json j;
  j["experiment_name"] = cfg.experiment_name;
  j["seed"] = cfg.seed;
  j["steps"] = static_cast<int>(metrics.steps.size());
  j["staleness"] = cfg.schedule.staleness;
  j["gac_enabled"] = cfg.gac_enabled;
  j["c_low"] = cfg.gac.c_low;
  j["c_high"] = cfg.gac.c_high;
  j["final_return"] = s.final_return;
  j["q90_abs_cosine"] = s.q90_abs_cosine;
  j["max_abs_cosine"] = s.max_abs_cosine;
  j["frac_low_cosine"] = s.frac_low_cosine;
  j["collapse_detected"] = s.collapse_detected;
  j["collapse_events"] = s.collapse_events;
  j["regime_counts"] = {
      {"warmup", s.regime_counts[0]},
      {"safe", s.regime_counts[1]},
      {"projection", s.regime_counts[2]},
      {"violation", s.regime_counts[3]},
  };
  return j;
}

inline void append_jsonl(const nlohmann::ordered_json& record,
                         std::ostream& out) {
  out << record.dump() << "\n";
}

enum class PlotKind { reward, cosine, regime_histogram };

inline PlotKind plot_kind_from_name(const std::string& name) {
  if (name == "reward") return PlotKind::reward;
  if (name == "cosine") return PlotKind::cosine;
  if (name == "regime_histogram") return PlotKind::regime_histogram;
  throw std::invalid_argument("unknown plot kind: " + name);
}

// Plot-ready CSV extracts of a metrics file.
inline void emit_plot_data(const RunMetrics& metrics, PlotKind kind,
                           std::ostream& out) {
  switch (kind) {
    case PlotKind::reward:
      out << "step,mean_return\n";
      for (const StepRecord& r : metrics.steps)
        out << r.step << ',' << format_double(r.mean_return) << "\n";
      return;
    case PlotKind::cosine:
      out << "step,cosine\n";
      for (const StepRecord& r : metrics.steps)
        out << r.step << ',' << format_double(r.cosine) << "\n";
      return;
    case PlotKind::regime_histogram: {
      std::array<long, 4> counts{};
      for (const StepRecord& r : metrics.steps)
        ++counts[static_cast<std::size_t>(r.regime)];
      out << "regime,count\n";
      const Regime order[] = {Regime::warmup, Regime::safe, Regime::projection,
                              Regime::violation};
      for (Regime reg : order)
        out << regime_name(reg) << ','
            << counts[static_cast<std::size_t>(reg)] << "\n";
      return;
    }
  }
  throw std::logic_error("emit_plot_data: bad kind");
}

struct CalibrationResult {
  double q90_abs_cosine = 0.0;
  double max_abs_cosine = 0.0;
  double frac_low_cosine = 0.0;
  int sample_count = 0;
  double c_low = 0.0;
  double c_high = 0.0;
};

// Threshold suggestion from a measured synchronous cosine trace: take the
// post-warmup 0.9 quantile of |c_t|, round it up to two decimals for c_low,
// and put c_high at six times that, capped at 0.5.  Needs at least 50
// post-warmup steps to say anything.
inline CalibrationResult calibrate_thresholds(const RunMetrics& metrics,
                                              int warmup_cutoff = 50) {
  std::vector<double> abs_cosine;
  for (const StepRecord& r : metrics.steps)
    if (r.step > warmup_cutoff) abs_cosine.push_back(std::abs(r.cosine));
  if (abs_cosine.size() < 50)
    throw std::runtime_error(
        "calibrate: need at least 50 post-warmup steps, got " +
        std::to_string(abs_cosine.size()));

  CalibrationResult res;
  res.sample_count = static_cast<int>(abs_cosine.size());
  res.q90_abs_cosine = quantile(abs_cosine, 0.9);
  res.max_abs_cosine = 0.0;
  std::size_t low = 0;
  for (double a : abs_cosine) {
    res.max_abs_cosine = std::max(res.max_abs_cosine, a);
    if (a <= kLowCosineReference) ++low;
  }
  res.frac_low_cosine =
      static_cast<double>(low) / static_cast<double>(abs_cosine.size());
  // Round up on a 0.01 grid; the epsilon keeps values already on the grid
  // (like a measured 0.03) from being pushed a whole cell higher.
  res.c_low = std::ceil(res.q90_abs_cosine * 100.0 - 1e-9) / 100.0;
  if (res.c_low <= 0.0) res.c_low = 0.01;
  res.c_high = std::min(6.0 * res.c_low, 0.5);
  return res;
}

}  // namespace gacsim

#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gacsim/config.hpp"
#include "gacsim/report.hpp"

// Orchestration: a single configured run with its artifacts on disk, and the
// one-axis sweep that reruns the base config across a value grid.  A sweep
// cell that fails still produces a summary record (with the error message),
// so a long sweep never loses the cells that did finish.

namespace gacsim {

struct RunArtifacts {
  RunMetrics metrics;
  std::filesystem::path dir;
  std::filesystem::path metrics_path;
  std::filesystem::path summary_path;
};

// Runs one config and writes <output_dir>/<experiment_name>/{config.ini,
// metrics.csv, summary.jsonl}.  All three files are deterministic functions
// of the config, so a rerun reproduces them byte for byte.
inline RunArtifacts execute_run(const RunConfig& cfg) {
  RunArtifacts art;
  art.metrics = run_from_config(cfg);
  art.dir = resolve_output_dir(cfg.output_dir) / cfg.experiment_name;
  std::filesystem::create_directories(art.dir);

  {
    std::ofstream out(art.dir / "config.ini", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write config echo");
    out << serialize_config(cfg);
  }
  art.metrics_path = art.dir / "metrics.csv";
  write_metrics_csv(art.metrics, art.metrics_path);
  art.summary_path = art.dir / "summary.jsonl";
  {
    std::ofstream out(art.summary_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write summary file");
    append_jsonl(summary_json(cfg, art.metrics), out);
  }
  return art;
}

namespace detail {

// Axis values become directory name fragments: '.' and '-' are encoded so
// names stay inside the experiment-name alphabet.
inline std::string encode_axis_value(SweepAxis axis, double value) {
  if (axis == SweepAxis::staleness || axis == SweepAxis::seed)
    return std::to_string(static_cast<long long>(value));
  std::string s = format_double(value);
  std::string out;
  for (char c : s) {
    if (c == '.') out += 'p';
    else if (c == '-') out += 'm';
    else if (c == '+') continue;
    else out += c;
  }
  return out;
}

}  // namespace detail

struct SweepCellResult {
  std::size_t index = 0;
  double axis_value = 0.0;
  std::string name;
  bool ok = false;
  std::string error;
  RunSummary summary;
  std::filesystem::path metrics_path;
};

struct SweepResult {
  std::filesystem::path dir;
  std::filesystem::path summary_path;
  std::vector<SweepCellResult> cells;
};

// Runs every cell of the sweep under <output_dir>/<experiment_name>/ with
// one metrics file per cell and a shared summary.jsonl, one record per cell
// in grid order.
inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.base.validate();
  spec.plan.validate();

  SweepResult result;
  result.dir = resolve_output_dir(spec.base.output_dir) /
               spec.base.experiment_name;
  std::filesystem::create_directories(result.dir);
  result.summary_path = result.dir / "summary.jsonl";
  std::ofstream summary_out(result.summary_path, std::ios::binary);
  if (!summary_out)
    throw std::runtime_error("cannot write sweep summary: " +
                             result.summary_path.string());

  std::set<std::string> used_names;
  for (std::size_t i = 0; i < spec.plan.values.size(); ++i) {
    SweepCellResult cell;
    cell.index = i;
    cell.axis_value = spec.plan.values[i];

    RunConfig cfg = spec.cell_config(i);
    std::string name = spec.base.experiment_name + "_" +
                       sweep_axis_name(spec.plan.axis) + "_" +
                       detail::encode_axis_value(spec.plan.axis, cell.axis_value);
    if (!used_names.insert(name).second)
      name += "_i" + std::to_string(i);  // repeated value; keep cells distinct
    cell.name = name;
    cfg.experiment_name = name;

    nlohmann::ordered_json record;
    try {
      cfg.validate();
      const RunMetrics metrics = run_from_config(cfg);
      const std::filesystem::path cell_dir = result.dir / name;
      std::filesystem::create_directories(cell_dir);
      cell.metrics_path = cell_dir / "metrics.csv";
      write_metrics_csv(metrics, cell.metrics_path);
      cell.summary = metrics.summary;
      cell.ok = true;
      record = summary_json(cfg, metrics);
      record["error"] = nullptr;
    } catch (const std::exception& err) {
      cell.ok = false;
      cell.error = err.what();
      record["experiment_name"] = name;
      record["seed"] = cfg.seed;
      record["error"] = cell.error;
    }
    record["axis"] = sweep_axis_name(spec.plan.axis);
    record["axis_value"] = cell.axis_value;
    record["cell_index"] = i;
    append_jsonl(record, summary_out);
    result.cells.push_back(std::move(cell));
  }
  return result;
}

}  // namespace gacsim

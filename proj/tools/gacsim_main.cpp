// Command-line front end: run one experiment, run a sweep, calibrate
// controller thresholds from a measured trace, re-verify the two analytic
// results on their numerical testbeds, or dump plot-ready CSV columns.
//
// Exit codes: 0 success, 1 bad invocation or invalid config/arguments,
// 2 runtime failure (I/O, failed verification).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gacsim/config.hpp"
#include "gacsim/report.hpp"
#include "gacsim/sweep.hpp"
#include "gacsim/theory.hpp"

namespace {

int cmd_run(const std::string& config_path) {
  gacsim::LoadedConfig loaded = gacsim::load_config_file(config_path);
  if (loaded.sweep)
    throw std::invalid_argument(
        "config has a [sweep] section; use the sweep command");
  const gacsim::RunArtifacts art = gacsim::execute_run(loaded.run);
  const gacsim::RunSummary& s = art.metrics.summary;
  std::printf("wrote %s\n", art.metrics_path.string().c_str());
  std::printf("wrote %s\n", art.summary_path.string().c_str());
  std::printf(
      "final_return=%.6g q90_abs_cosine=%.6g max_abs_cosine=%.6g "
      "collapse=%s skips=%d\n",
      s.final_return, s.q90_abs_cosine, s.max_abs_cosine,
      s.collapse_detected ? "true" : "false",
      s.regime_counts[static_cast<std::size_t>(gacsim::Regime::violation)]);
  return 0;
}

int cmd_sweep(const std::string& spec_path) {
  const gacsim::SweepSpec spec = gacsim::load_sweep_file(spec_path);
  const gacsim::SweepResult result = gacsim::run_sweep(spec);
  bool all_ok = true;
  for (const gacsim::SweepCellResult& cell : result.cells) {
    if (cell.ok) {
      std::printf("cell %zu %s=%s final_return=%.6g q90_abs_cosine=%.6g\n",
                  cell.index, gacsim::sweep_axis_name(spec.plan.axis),
                  gacsim::detail::encode_axis_value(spec.plan.axis,
                                                    cell.axis_value)
                      .c_str(),
                  cell.summary.final_return, cell.summary.q90_abs_cosine);
    } else {
      all_ok = false;
      std::printf("cell %zu failed: %s\n", cell.index, cell.error.c_str());
    }
  }
  std::printf("wrote %s\n", result.summary_path.string().c_str());
  if (!all_ok) throw std::runtime_error("one or more sweep cells failed");
  return 0;
}

int cmd_calibrate(const std::string& metrics_path, int warmup_cutoff) {
  const gacsim::RunMetrics metrics = gacsim::read_metrics_csv(metrics_path);
  const gacsim::CalibrationResult res =
      gacsim::calibrate_thresholds(metrics, warmup_cutoff);
  std::printf("samples=%d (steps > %d)\n", res.sample_count, warmup_cutoff);
  std::printf("q90_abs_cosine=%.6g\n", res.q90_abs_cosine);
  std::printf("max_abs_cosine=%.6g\n", res.max_abs_cosine);
  std::printf("frac_low_cosine=%.6g\n", res.frac_low_cosine);
  std::printf("suggested c_low=%.6g c_high=%.6g\n", res.c_low, res.c_high);
  return 0;
}

int cmd_plot_data(const std::string& metrics_path, const std::string& kind,
                  std::string out_path) {
  const gacsim::RunMetrics metrics = gacsim::read_metrics_csv(metrics_path);
  const gacsim::PlotKind plot_kind = gacsim::plot_kind_from_name(kind);
  if (out_path.empty()) {
    const std::filesystem::path in(metrics_path);
    out_path =
        (in.parent_path() / ("plot_" + kind + ".csv")).string();
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write plot data: " + out_path);
  gacsim::emit_plot_data(metrics, plot_kind, out);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_verify_theory(bool proposition, bool bound, std::uint64_t seed) {
  // No selection means verify everything.
  if (!proposition && !bound) proposition = bound = true;
  bool all_hold = true;

  if (proposition) {
    const auto cases = gacsim::run_proposition_protocol(seed, 1000);
    for (const auto& c : cases) {
      const bool ok = c.held == c.trials;
      all_hold = all_hold && ok;
      std::printf(
          "proposition lambda=%.6g dim=%d remainder=%s held=%d/%d "
          "max_violation=%.3e%s\n",
          c.lambda_min, c.dim, c.remainder_active ? "on" : "off", c.held,
          c.trials, c.max_violation, ok ? "" : "  FAIL");
    }
  }

  if (bound) {
    const int staleness_grid[] = {0, 4, 8, 16};
    const double noise_grid[] = {0.0, 0.1};
    const auto cases = gacsim::run_bound_protocol(seed, 20, 20, 0.2, 60,
                                                  staleness_grid, noise_grid);
    for (const auto& c : cases) {
      all_hold = all_hold && c.check.holds;
      std::printf(
          "bound s=%d sigma=%.3g lhs=%.6e rhs=%.6e bias_penalty=%.6e%s\n",
          c.staleness, c.noise_sigma, c.check.lhs, c.check.rhs,
          c.check.bias_penalty, c.check.holds ? "" : "  FAIL");
    }
  }

  if (!all_hold) throw std::runtime_error("theory verification failed");
  std::printf("all inequalities hold\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic stale-gradient policy training simulator"};
  app.require_subcommand(1);

  std::string run_config;
  CLI::App* run_cmd = app.add_subcommand("run", "execute one configured run");
  run_cmd->add_option("config", run_config, "path to a config file")
      ->required();

  std::string sweep_spec;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "execute a one-axis sweep");
  sweep_cmd->add_option("spec", sweep_spec, "config with a [sweep] section")
      ->required();

  std::string calibrate_metrics;
  int warmup_cutoff = 50;
  CLI::App* calibrate_cmd = app.add_subcommand(
      "calibrate", "suggest controller thresholds from a metrics trace");
  calibrate_cmd
      ->add_option("metrics", calibrate_metrics, "metrics.csv from a sync run")
      ->required();
  calibrate_cmd->add_option("--warmup-cutoff", warmup_cutoff,
                            "ignore steps at or below this index");

  bool verify_proposition = false, verify_bound = false;
  std::uint64_t verify_seed = 7;
  CLI::App* verify_cmd = app.add_subcommand(
      "verify-theory", "re-check the analytic results numerically");
  verify_cmd->add_flag("--proposition", verify_proposition,
                       "only the bias-reduction inequality");
  verify_cmd->add_flag("--bound", verify_bound,
                       "only the convergence bound");
  verify_cmd->add_option("--seed", verify_seed, "protocol seed");

  std::string plot_metrics, plot_kind, plot_out;
  CLI::App* plot_cmd =
      app.add_subcommand("plot-data", "emit plot-ready CSV columns");
  plot_cmd->add_option("metrics", plot_metrics, "metrics.csv to read")
      ->required();
  plot_cmd->add_option("--kind", plot_kind,
                       "reward, cosine, or regime_histogram")
      ->required();
  plot_cmd->add_option("--out", plot_out,
                       "output path (default: plot_<kind>.csv next to input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(run_cmd)) return cmd_run(run_config);
    if (app.got_subcommand(sweep_cmd)) return cmd_sweep(sweep_spec);
    if (app.got_subcommand(calibrate_cmd))
      return cmd_calibrate(calibrate_metrics, warmup_cutoff);
    if (app.got_subcommand(verify_cmd))
      return cmd_verify_theory(verify_proposition, verify_bound, verify_seed);
    if (app.got_subcommand(plot_cmd))
      return cmd_plot_data(plot_metrics, plot_kind, plot_out);
  } catch (const gacsim::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}

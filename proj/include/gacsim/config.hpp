#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gacsim/async_pipeline.hpp"
#include "gacsim/envs.hpp"
#include "gacsim/gac.hpp"
#include "gacsim/grpo.hpp"

// Run configuration and its file format: a small INI dialect with '#'
// comment lines, [section] headers and key = value pairs.  Unknown sections
// and keys are hard errors so a typo cannot silently fall back to a default,
// and every error carries the line it came from.

namespace gacsim {

struct ConfigError : std::runtime_error {
  int line;
  ConfigError(int line_number, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_number) + ": " + what),
        line(line_number) {}
  explicit ConfigError(const std::string& what)
      : std::runtime_error(what), line(0) {}
};

struct RunConfig {
  std::string experiment_name = "run";
  std::uint64_t seed = 0;
  int steps = 500;
  double learning_rate = 0.7;
  std::string output_dir = "runs";
  OptimizerKind optimizer = OptimizerKind::ascent;
  double adamw_weight_decay = 0.01;

  ContextualBanditSpec env = ContextualBanditSpec::defaults();
  int prompts_per_batch = 1;
  GrpoConfig grpo;
  StalenessSchedule schedule;
  bool gac_enabled = true;
  GacConfig gac;

  bool operator==(const RunConfig&) const = default;

  void validate() const {
    if (experiment_name.empty())
      throw std::invalid_argument("config: experiment_name must not be empty");
    for (char c : experiment_name) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '_' || c == '-';
      if (!ok)
        throw std::invalid_argument(
            "config: experiment_name may only contain [A-Za-z0-9_-]");
    }
    if (steps <= 0)
      throw std::invalid_argument("config: steps must be positive");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("config: learning_rate must be positive");
    if (prompts_per_batch <= 0)
      throw std::invalid_argument("config: prompts_per_batch must be positive");
    if (!(adamw_weight_decay >= 0.0))
      throw std::invalid_argument("config: adamw_weight_decay must be nonnegative");
    env.validate();
    grpo.validate();
    schedule.validate();
    if (gac_enabled) gac.validate();
  }
};

enum class SweepAxis { staleness, c_low, c_high, seed };

inline const char* sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::staleness: return "staleness";
    case SweepAxis::c_low: return "c_low";
    case SweepAxis::c_high: return "c_high";
    case SweepAxis::seed: return "seed";
  }
  throw std::logic_error("sweep_axis_name: bad axis");
}

struct SweepPlan {
  SweepAxis axis = SweepAxis::staleness;
  std::vector<double> values;

  bool operator==(const SweepPlan&) const = default;

  void validate() const {
    if (values.empty())
      throw std::invalid_argument("sweep: values must not be empty");
    const bool integral_axis =
        axis == SweepAxis::staleness || axis == SweepAxis::seed;
    for (double v : values) {
      if (integral_axis) {
        if (v < 0.0 || v != std::floor(v))
          throw std::invalid_argument(
              "sweep: values for this axis must be nonnegative integers");
      } else if (!(v > 0.0)) {
        throw std::invalid_argument("sweep: threshold values must be positive");
      }
    }
  }
};

struct SweepSpec {
  RunConfig base;
  SweepPlan plan;

  bool operator==(const SweepSpec&) const = default;

  // Returns the base config with one axis value substituted.
  RunConfig cell_config(std::size_t index) const {
    RunConfig cfg = base;
    const double v = plan.values.at(index);
    switch (plan.axis) {
      case SweepAxis::staleness:
        cfg.schedule.staleness = static_cast<int>(v);
        break;
      case SweepAxis::c_low:
        cfg.gac.c_low = v;
        break;
      case SweepAxis::c_high:
        cfg.gac.c_high = v;
        break;
      case SweepAxis::seed:
        cfg.seed = static_cast<std::uint64_t>(v);
        break;
    }
    return cfg;
  }
};

struct LoadedConfig {
  RunConfig run;
  std::optional<SweepPlan> sweep;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline double parse_double(const std::string& value, int line) {
  double out = 0.0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(line, "expected a number, got '" + value + "'");
  return out;
}

inline long long parse_int(const std::string& value, int line) {
  long long out = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(line, "expected an integer, got '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& value, int line) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError(line, "expected true or false, got '" + value + "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : value) {
    if (c == ',') {
      parts.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(trim(current));
  return parts;
}

}  // namespace detail

// Parses the stream into a run config plus an optional sweep plan.  The
// result is validated before it is returned.
inline LoadedConfig load_config(std::istream& in) {
  LoadedConfig loaded;
  RunConfig& cfg = loaded.run;
  std::string section;
  bool saw_sweep = false;
  SweepPlan sweep;
  bool correct_action_set = false;
  bool distribution_set = false;

  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = detail::trim(raw);
    if (text.empty() || text[0] == '#') continue;

    if (text.front() == '[') {
      if (text.back() != ']')
        throw ConfigError(line, "unterminated section header");
      section = detail::trim(std::string_view(text).substr(1, text.size() - 2));
      if (section != "env" && section != "grpo" && section != "schedule" &&
          section != "gac" && section != "sweep")
        throw ConfigError(line, "unknown section '" + section + "'");
      if (section == "sweep") saw_sweep = true;
      continue;
    }

    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line, "expected key = value");
    const std::string key = detail::trim(std::string_view(text).substr(0, eq));
    const std::string value =
        detail::trim(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "empty key");
    if (value.empty()) throw ConfigError(line, "empty value for '" + key + "'");

    if (section.empty()) {
      if (key == "experiment_name") cfg.experiment_name = value;
      else if (key == "seed")
        cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, line));
      else if (key == "steps")
        cfg.steps = static_cast<int>(detail::parse_int(value, line));
      else if (key == "learning_rate")
        cfg.learning_rate = detail::parse_double(value, line);
      else if (key == "output_dir") cfg.output_dir = value;
      else if (key == "optimizer") {
        if (value == "ascent") cfg.optimizer = OptimizerKind::ascent;
        else if (value == "adamw") cfg.optimizer = OptimizerKind::adamw;
        else throw ConfigError(line, "optimizer must be ascent or adamw");
      } else if (key == "adamw_weight_decay")
        cfg.adamw_weight_decay = detail::parse_double(value, line);
      else
        throw ConfigError(line, "unknown key '" + key + "'");
    } else if (section == "env") {
      if (key == "context_count")
        cfg.env.context_count = static_cast<int>(detail::parse_int(value, line));
      else if (key == "action_count")
        cfg.env.action_count = static_cast<int>(detail::parse_int(value, line));
      else if (key == "correct_action") {
        cfg.env.correct_action.clear();
        for (const std::string& part : detail::split_list(value))
          cfg.env.correct_action.push_back(
              static_cast<int>(detail::parse_int(part, line)));
        correct_action_set = true;
      } else if (key == "context_distribution") {
        cfg.env.context_distribution.clear();
        for (const std::string& part : detail::split_list(value))
          cfg.env.context_distribution.push_back(
              detail::parse_double(part, line));
        distribution_set = true;
      } else if (key == "prompts_per_batch")
        cfg.prompts_per_batch = static_cast<int>(detail::parse_int(value, line));
      else
        throw ConfigError(line, "unknown key '" + key + "' in section [env]");
    } else if (section == "grpo") {
      if (key == "clip_epsilon")
        cfg.grpo.clip_epsilon = detail::parse_double(value, line);
      else if (key == "adv_epsilon")
        cfg.grpo.adv_epsilon = detail::parse_double(value, line);
      else if (key == "entropy_coef")
        cfg.grpo.entropy_coef = detail::parse_double(value, line);
      else if (key == "kl_coef")
        cfg.grpo.kl_coef = detail::parse_double(value, line);
      else if (key == "group_size")
        cfg.grpo.group_size = static_cast<int>(detail::parse_int(value, line));
      else
        throw ConfigError(line, "unknown key '" + key + "' in section [grpo]");
    } else if (section == "schedule") {
      if (key == "staleness")
        cfg.schedule.staleness = static_cast<int>(detail::parse_int(value, line));
      else if (key == "warmup_clamp")
        cfg.schedule.warmup_clamp = detail::parse_bool(value, line);
      else if (key == "random_lag")
        cfg.schedule.random_lag = detail::parse_bool(value, line);
      else
        throw ConfigError(line,
                          "unknown key '" + key + "' in section [schedule]");
    } else if (section == "gac") {
      if (key == "enabled") cfg.gac_enabled = detail::parse_bool(value, line);
      else if (key == "c_low")
        cfg.gac.c_low = detail::parse_double(value, line);
      else if (key == "c_high")
        cfg.gac.c_high = detail::parse_double(value, line);
      else if (key == "cosine_epsilon")
        cfg.gac.cosine_epsilon = detail::parse_double(value, line);
      else if (key == "beta")
        cfg.gac.beta = detail::parse_double(value, line);
      else if (key == "replace_prev_on_skip")
        cfg.gac.replace_prev_on_skip = detail::parse_bool(value, line);
      else
        throw ConfigError(line, "unknown key '" + key + "' in section [gac]");
    } else {  // sweep
      if (key == "axis") {
        if (value == "staleness") sweep.axis = SweepAxis::staleness;
        else if (value == "c_low") sweep.axis = SweepAxis::c_low;
        else if (value == "c_high") sweep.axis = SweepAxis::c_high;
        else if (value == "seed") sweep.axis = SweepAxis::seed;
        else
          throw ConfigError(line, "unknown sweep axis '" + value + "'");
      } else if (key == "values") {
        sweep.values.clear();
        for (const std::string& part : detail::split_list(value))
          sweep.values.push_back(detail::parse_double(part, line));
      } else {
        throw ConfigError(line, "unknown key '" + key + "' in section [sweep]");
      }
    }
  }

  // Table defaults track the table shape unless given explicitly.
  if (!correct_action_set) {
    cfg.env.correct_action.resize(static_cast<std::size_t>(
        std::max(cfg.env.context_count, 0)));
    for (int c = 0; c < cfg.env.context_count; ++c)
      cfg.env.correct_action[static_cast<std::size_t>(c)] =
          cfg.env.action_count > 0 ? c % cfg.env.action_count : 0;
  }
  if (!distribution_set && cfg.env.context_count > 0) {
    cfg.env.context_distribution.assign(
        static_cast<std::size_t>(cfg.env.context_count),
        1.0 / cfg.env.context_count);
  }

  try {
    cfg.validate();
    if (saw_sweep) sweep.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  if (saw_sweep) loaded.sweep = sweep;
  return loaded;
}

inline LoadedConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file: " + path.string());
  return load_config(in);
}

// Reads a sweep spec: a regular config plus a mandatory [sweep] section.
inline SweepSpec load_sweep_file(const std::filesystem::path& path) {
  LoadedConfig loaded = load_config_file(path);
  if (!loaded.sweep)
    throw ConfigError("sweep spec needs a [sweep] section: " + path.string());
  return SweepSpec{loaded.run, *loaded.sweep};
}

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// Canonical text form: every key explicit, defaults included.  Loading the
// output reproduces the config exactly.
inline std::string serialize_config(const RunConfig& cfg,
                                    const std::optional<SweepPlan>& sweep = {}) {
  std::ostringstream out;
  out << "experiment_name = " << cfg.experiment_name << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "steps = " << cfg.steps << "\n";
  out << "learning_rate = " << format_double(cfg.learning_rate) << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  out << "optimizer = "
      << (cfg.optimizer == OptimizerKind::adamw ? "adamw" : "ascent") << "\n";
  out << "adamw_weight_decay = " << format_double(cfg.adamw_weight_decay)
      << "\n";
  out << "\n[env]\n";
  out << "context_count = " << cfg.env.context_count << "\n";
  out << "action_count = " << cfg.env.action_count << "\n";
  out << "correct_action = ";
  for (std::size_t i = 0; i < cfg.env.correct_action.size(); ++i)
    out << (i ? ", " : "") << cfg.env.correct_action[i];
  out << "\n";
  out << "context_distribution = ";
  for (std::size_t i = 0; i < cfg.env.context_distribution.size(); ++i)
    out << (i ? ", " : "") << format_double(cfg.env.context_distribution[i]);
  out << "\n";
  out << "prompts_per_batch = " << cfg.prompts_per_batch << "\n";
  out << "\n[grpo]\n";
  out << "clip_epsilon = " << format_double(cfg.grpo.clip_epsilon) << "\n";
  out << "adv_epsilon = " << format_double(cfg.grpo.adv_epsilon) << "\n";
  out << "entropy_coef = " << format_double(cfg.grpo.entropy_coef) << "\n";
  out << "kl_coef = " << format_double(cfg.grpo.kl_coef) << "\n";
  out << "group_size = " << cfg.grpo.group_size << "\n";
  out << "\n[schedule]\n";
  out << "staleness = " << cfg.schedule.staleness << "\n";
  out << "warmup_clamp = " << (cfg.schedule.warmup_clamp ? "true" : "false")
      << "\n";
  out << "random_lag = " << (cfg.schedule.random_lag ? "true" : "false")
      << "\n";
  out << "\n[gac]\n";
  out << "enabled = " << (cfg.gac_enabled ? "true" : "false") << "\n";
  out << "c_low = " << format_double(cfg.gac.c_low) << "\n";
  out << "c_high = " << format_double(cfg.gac.c_high) << "\n";
  out << "cosine_epsilon = " << format_double(cfg.gac.cosine_epsilon) << "\n";
  out << "beta = " << format_double(cfg.gac.beta) << "\n";
  out << "replace_prev_on_skip = "
      << (cfg.gac.replace_prev_on_skip ? "true" : "false") << "\n";
  if (sweep) {
    out << "\n[sweep]\n";
    out << "axis = " << sweep_axis_name(sweep->axis) << "\n";
    out << "values = ";
    for (std::size_t i = 0; i < sweep->values.size(); ++i)
      out << (i ? ", " : "") << format_double(sweep->values[i]);
    out << "\n";
  }
  return out.str();
}

// Output locations resolve against GACSIM_OUTPUT_ROOT when it is set and the
// configured directory is relative; absolute directories win either way.
inline std::filesystem::path resolve_output_dir(const std::string& output_dir) {
  const std::filesystem::path dir(output_dir);
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv("GACSIM_OUTPUT_ROOT"))
    return std::filesystem::path(root) / dir;
  return dir;
}

// Translates the file-level config into the pipeline's run options.
inline RunOptions make_run_options(const RunConfig& cfg) {
  RunOptions opts;
  opts.steps = cfg.steps;
  opts.learning_rate = cfg.learning_rate;
  opts.seed = cfg.seed;
  opts.prompts_per_batch = cfg.prompts_per_batch;
  opts.optimizer = cfg.optimizer;
  opts.adamw_weight_decay = cfg.adamw_weight_decay;
  return opts;
}

inline RunMetrics run_from_config(const RunConfig& cfg) {
  cfg.validate();
  return run_training(cfg.env, cfg.grpo, cfg.schedule,
                      cfg.gac_enabled ? std::optional<GacConfig>(cfg.gac)
                                      : std::nullopt,
                      make_run_options(cfg));
}

}  // namespace gacsim

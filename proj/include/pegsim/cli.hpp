#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pegsim/agents.hpp"
#include "pegsim/vecenv.hpp"

namespace pegsim {

// Everything a run needs, loadable from one JSON file. Field defaults are the
// library defaults; a config file only lists what it overrides. Unknown keys
// anywhere in the file are rejected, so typos fail loudly instead of silently
// running the default.
struct ExperimentConfig {
  GenConfig generator;
  PhysicsConfig physics;
  EnvConfig env;
  std::string algorithm = "sac";
  SacConfig sac;

  int workers = 64;
  int threads = 1;                   // 0 = all cores; stepping only
  long total_steps = 200000;         // environment steps summed over workers
  double curriculum_fraction = 0.5;  // share of total_steps to reach full spread
  uint64_t seed = 0;
  int eval_modules = 64;
  int eval_attempts = 10;
  long metrics_every = 2000;      // env steps between metric rows
  long checkpoint_every = 50000;  // env steps between checkpoints
  std::string output_dir = "runs/experiment";

  void validate() const;  // throws std::invalid_argument with a reason
};

// Parse / serialize; parse rejects unknown keys recursively and validates.
// Errors surface as std::runtime_error with a "config:"-prefixed message.
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string dump_experiment_config(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

// Output directory for a run: $PEGSIM_OUTPUT_DIR (if set) overrides the
// config value. The only environment override the tool honors.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

// Subcommand entry points. Each returns a process exit code and, on failure,
// writes exactly one line to `err`: "error: <category>: <message>".
// Categories: args, config, io, parse, checkpoint, diverged.

struct GenerateOptions {
  int count = 0;
  uint64_t seed = 0;
  std::filesystem::path out;
  std::optional<double> clearance;
};
int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err);

struct RolloutOptions {
  std::filesystem::path config;
  std::string policy = "scripted";  // scripted | random | <checkpoint path>
  int episodes = 10;
  std::string module_set = "test";  // train | test (disjoint module seeds)
  bool trace = false;
  std::optional<std::filesystem::path> out_dir;  // default: config output dir
};
int cmd_rollout(const RolloutOptions& opt, std::ostream& out, std::ostream& err);

struct TrainOptions {
  std::filesystem::path config;
  std::optional<uint64_t> seed;  // overrides the config seed
  bool resume = false;
  std::optional<std::filesystem::path> out_dir;
};
int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err);

struct ReportOptions {
  std::vector<std::filesystem::path> metrics;  // training metrics JSONL, one per seed
  std::vector<std::filesystem::path> eval;     // rollout/eval episode JSONL
  std::filesystem::path out;
};
int cmd_report(const ReportOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace pegsim

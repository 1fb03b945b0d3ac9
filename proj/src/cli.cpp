#include "pegsim/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pegsim {
namespace {

using nlohmann::json;

// Command failure carrying the machine-parseable category. Every command
// funnels through run_command() below, which turns this into the single
// "error: <category>: <message>" line and an exit code.
struct CliError {
  std::string category;
  std::string message;
};

int exit_code_for(const std::string& category) {
  if (category == "args" || category == "config") return 2;
  if (category == "diverged") return 4;
  return 3;  // io, parse, checkpoint
}

template <typename Fn>
int run_command(std::ostream& err, Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const CliError& e) {
    err << "error: " << e.category << ": " << e.message << "\n";
    return exit_code_for(e.category);
  } catch (const std::exception& e) {
    err << "error: runtime: " << e.what() << "\n";
    return 4;
  }
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CliError{"io", "cannot read " + file.string()};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::ofstream open_for_write(const std::filesystem::path& file, bool append = false) {
  if (!file.parent_path().empty())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, append ? std::ios::app : std::ios::trunc);
  if (!out) throw CliError{"io", "cannot write " + file.string()};
  return out;
}

// ---------------------------------------------------------------------------
// Config schema

// Tracks which keys of a JSON object a section reader consumed; anything
// left over is an unknown key and rejected.
class Keys {
 public:
  Keys(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object())
      throw CliError{"config", where_ + " must be a JSON object"};
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw CliError{"config", where_ + "." + key + ": " + e.what()};
    }
  }

  const json& sub(const char* key) { return j_.at(key); }
  const std::string& where() const { return where_; }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key()))
        throw CliError{"config",
                       "unknown key '" + where_ + "." + item.key() + "'"};
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_noise(Keys& parent, const char* key, NoiseSpec& spec) {
  if (!parent.has(key)) return;
  Keys k(parent.sub(key), parent.where() + "." + std::string(key));
  k.get("sigma_pos", spec.sigma_pos);
  k.get("sigma_rot", spec.sigma_rot);
  k.finish();
}

void read_generator(Keys& parent, GenConfig& g) {
  if (!parent.has("generator")) return;
  Keys k(parent.sub("generator"), "generator");
  k.get("round_vertex_probability", g.round_vertex_probability);
  k.get("vertex_min", g.vertex_min);
  k.get("vertex_max", g.vertex_max);
  k.get("round_vertex_count", g.round_vertex_count);
  k.get("circumradius_min", g.circumradius_min);
  k.get("circumradius_max", g.circumradius_max);
  k.get("aspect_ratio_min", g.aspect_ratio_min);
  k.get("aspect_ratio_max", g.aspect_ratio_max);
  k.get("peg_height_min", g.peg_height_min);
  k.get("peg_height_max", g.peg_height_max);
  k.get("tapering_min", g.tapering_min);
  k.get("tapering_max", g.tapering_max);
  k.get("hole_depth_fraction_min", g.hole_depth_fraction_min);
  k.get("hole_depth_fraction_max", g.hole_depth_fraction_max);
  k.get("hole_tilt_max", g.hole_tilt_max);
  k.get("clearance", g.clearance);
  k.get("plate_side", g.plate_side);
  k.get("plate_extra_thickness", g.plate_extra_thickness);
  k.get("edge_margin", g.edge_margin);
  k.get("arc_segments", g.arc_segments);
  k.finish();
}

void read_physics(Keys& parent, PhysicsConfig& p) {
  if (!parent.has("physics")) return;
  Keys k(parent.sub("physics"), "physics");
  k.get("substep_dt", p.substep_dt);
  k.get("peg_mass", p.peg_mass);
  k.get("velocity_gain", p.velocity_gain);
  k.get("contact_stiffness", p.contact_stiffness);
  k.get("contact_damping", p.contact_damping);
  k.get("friction_regularization", p.friction_regularization);
  k.get("contact_samples", p.contact_samples);
  k.get("solver_iterations", p.solver_iterations);
  k.get("max_linear_speed", p.max_linear_speed);
  k.get("max_angular_speed", p.max_angular_speed);
  k.get("broadphase_margin", p.broadphase_margin);
  k.get("divergence_penetration", p.divergence_penetration);
  k.finish();
}

void read_env(Keys& parent, EnvConfig& e) {
  if (!parent.has("env")) return;
  Keys k(parent.sub("env"), "env");
  k.get("max_steps", e.max_steps);
  k.get("control_hz", e.control_hz);
  k.get("spawn_side_min", e.spawn_side_min);
  k.get("spawn_side_max", e.spawn_side_max);
  k.get("spawn_height_min", e.spawn_height_min);
  k.get("spawn_height_max", e.spawn_height_max);
  k.get("spawn_tilt_min", e.spawn_tilt_min);
  k.get("spawn_tilt_max", e.spawn_tilt_max);
  k.get("spawn_attempts", e.spawn_attempts);
  k.get("spawn_clearance", e.spawn_clearance);
  k.get("friction_min", e.friction_min);
  k.get("friction_max", e.friction_max);
  k.get("restitution_min", e.restitution_min);
  k.get("restitution_max", e.restitution_max);
  read_noise(k, "observation_noise", e.observation_noise);
  read_noise(k, "command_noise", e.command_noise);
  k.get("max_linear_velocity", e.max_linear_velocity);
  k.get("max_angular_velocity", e.max_angular_velocity);
  k.get("reward_pos_weight", e.reward_pos_weight);
  k.get("reward_rot_weight", e.reward_rot_weight);
  k.get("success_pos_tol", e.success_pos_tol);
  k.get("success_axis_tol", e.success_axis_tol);
  k.get("below_surface_depth", e.below_surface_depth);
  k.finish();
}

void read_sac(Keys& parent, SacConfig& s) {
  if (!parent.has("sac")) return;
  Keys k(parent.sub("sac"), "sac");
  k.get("hidden", s.hidden);
  k.get("learning_rate", s.learning_rate);
  k.get("discount", s.discount);
  k.get("batch_size", s.batch_size);
  k.get("entropy_coef", s.entropy_coef);
  k.get("train_ratio", s.train_ratio);
  k.get("tau", s.tau);
  uint64_t capacity = s.replay_capacity, warmup = s.replay_warmup;
  k.get("replay_capacity", capacity);
  k.get("replay_warmup", warmup);
  s.replay_capacity = capacity;
  s.replay_warmup = warmup;
  k.get("stack", s.stack);
  k.get("translation_scale", s.translation_scale);
  k.finish();
}

json dump_noise(const NoiseSpec& n) {
  return json{{"sigma_pos", n.sigma_pos}, {"sigma_rot", n.sigma_rot}};
}

}  // namespace

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw std::invalid_argument("invalid experiment config: " + what);
  };
  if (algorithm != "sac") bad("unsupported algorithm '" + algorithm + "'");
  if (workers < 1) bad("workers must be >= 1");
  if (threads < 0) bad("threads must be >= 0");
  if (total_steps < 1) bad("total_steps must be >= 1");
  if (!(curriculum_fraction > 0.0) || curriculum_fraction > 1.0)
    bad("curriculum_fraction must be in (0, 1]");
  if (eval_modules < 1) bad("eval_modules must be >= 1");
  if (eval_attempts < 1) bad("eval_attempts must be >= 1");
  if (metrics_every < 1) bad("metrics_every must be >= 1");
  if (checkpoint_every < 1) bad("checkpoint_every must be >= 1");
  if (output_dir.empty()) bad("output_dir must not be empty");
  if (env.max_steps < 1) bad("env.max_steps must be >= 1");
  if (!(env.control_hz > 0.0)) bad("env.control_hz must be positive");
  if (env.observation_noise.sigma_pos < 0.0 || env.observation_noise.sigma_rot < 0.0 ||
      env.command_noise.sigma_pos < 0.0 || env.command_noise.sigma_rot < 0.0)
    bad("noise sigmas must be >= 0");
  if (!(physics.substep_dt > 0.0)) bad("physics.substep_dt must be positive");
  generator.validate();
  sac.validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    Keys k(j, "config");
    read_generator(k, cfg.generator);
    read_physics(k, cfg.physics);
    read_env(k, cfg.env);
    k.get("algorithm", cfg.algorithm);
    read_sac(k, cfg.sac);
    k.get("workers", cfg.workers);
    k.get("threads", cfg.threads);
    k.get("total_steps", cfg.total_steps);
    k.get("curriculum_fraction", cfg.curriculum_fraction);
    k.get("seed", cfg.seed);
    k.get("eval_modules", cfg.eval_modules);
    k.get("eval_attempts", cfg.eval_attempts);
    k.get("metrics_every", cfg.metrics_every);
    k.get("checkpoint_every", cfg.checkpoint_every);
    k.get("output_dir", cfg.output_dir);
    k.finish();
    cfg.validate();
  } catch (const CliError& e) {
    throw std::runtime_error(e.category + ": " + e.message);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string dump_experiment_config(const ExperimentConfig& c) {
  json j;
  j["generator"] = {
      {"round_vertex_probability", c.generator.round_vertex_probability},
      {"vertex_min", c.generator.vertex_min},
      {"vertex_max", c.generator.vertex_max},
      {"round_vertex_count", c.generator.round_vertex_count},
      {"circumradius_min", c.generator.circumradius_min},
      {"circumradius_max", c.generator.circumradius_max},
      {"aspect_ratio_min", c.generator.aspect_ratio_min},
      {"aspect_ratio_max", c.generator.aspect_ratio_max},
      {"peg_height_min", c.generator.peg_height_min},
      {"peg_height_max", c.generator.peg_height_max},
      {"tapering_min", c.generator.tapering_min},
      {"tapering_max", c.generator.tapering_max},
      {"hole_depth_fraction_min", c.generator.hole_depth_fraction_min},
      {"hole_depth_fraction_max", c.generator.hole_depth_fraction_max},
      {"hole_tilt_max", c.generator.hole_tilt_max},
      {"clearance", c.generator.clearance},
      {"plate_side", c.generator.plate_side},
      {"plate_extra_thickness", c.generator.plate_extra_thickness},
      {"edge_margin", c.generator.edge_margin},
      {"arc_segments", c.generator.arc_segments},
  };
  j["physics"] = {
      {"substep_dt", c.physics.substep_dt},
      {"peg_mass", c.physics.peg_mass},
      {"velocity_gain", c.physics.velocity_gain},
      {"contact_stiffness", c.physics.contact_stiffness},
      {"contact_damping", c.physics.contact_damping},
      {"friction_regularization", c.physics.friction_regularization},
      {"contact_samples", c.physics.contact_samples},
      {"solver_iterations", c.physics.solver_iterations},
      {"max_linear_speed", c.physics.max_linear_speed},
      {"max_angular_speed", c.physics.max_angular_speed},
      {"broadphase_margin", c.physics.broadphase_margin},
      {"divergence_penetration", c.physics.divergence_penetration},
  };
  j["env"] = {
      {"max_steps", c.env.max_steps},
      {"control_hz", c.env.control_hz},
      {"spawn_side_min", c.env.spawn_side_min},
      {"spawn_side_max", c.env.spawn_side_max},
      {"spawn_height_min", c.env.spawn_height_min},
      {"spawn_height_max", c.env.spawn_height_max},
      {"spawn_tilt_min", c.env.spawn_tilt_min},
      {"spawn_tilt_max", c.env.spawn_tilt_max},
      {"spawn_attempts", c.env.spawn_attempts},
      {"spawn_clearance", c.env.spawn_clearance},
      {"friction_min", c.env.friction_min},
      {"friction_max", c.env.friction_max},
      {"restitution_min", c.env.restitution_min},
      {"restitution_max", c.env.restitution_max},
      {"observation_noise", dump_noise(c.env.observation_noise)},
      {"command_noise", dump_noise(c.env.command_noise)},
      {"max_linear_velocity", c.env.max_linear_velocity},
      {"max_angular_velocity", c.env.max_angular_velocity},
      {"reward_pos_weight", c.env.reward_pos_weight},
      {"reward_rot_weight", c.env.reward_rot_weight},
      {"success_pos_tol", c.env.success_pos_tol},
      {"success_axis_tol", c.env.success_axis_tol},
      {"below_surface_depth", c.env.below_surface_depth},
  };
  j["algorithm"] = c.algorithm;
  j["sac"] = {
      {"hidden", c.sac.hidden},
      {"learning_rate", c.sac.learning_rate},
      {"discount", c.sac.discount},
      {"batch_size", c.sac.batch_size},
      {"entropy_coef", c.sac.entropy_coef},
      {"train_ratio", c.sac.train_ratio},
      {"tau", c.sac.tau},
      {"replay_capacity", static_cast<uint64_t>(c.sac.replay_capacity)},
      {"replay_warmup", static_cast<uint64_t>(c.sac.replay_warmup)},
      {"stack", c.sac.stack},
      {"translation_scale", c.sac.translation_scale},
  };
  j["workers"] = c.workers;
  j["threads"] = c.threads;
  j["total_steps"] = c.total_steps;
  j["curriculum_fraction"] = c.curriculum_fraction;
  j["seed"] = c.seed;
  j["eval_modules"] = c.eval_modules;
  j["eval_attempts"] = c.eval_attempts;
  j["metrics_every"] = c.metrics_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("io: cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config) {
  if (const char* dir = std::getenv("PEGSIM_OUTPUT_DIR"); dir && *dir)
    return std::filesystem::path(dir);
  return std::filesystem::path(config.output_dir);
}

namespace {

ExperimentConfig load_config_or_die(const std::filesystem::path& file) {
  try {
    return load_experiment_config(file);
  } catch (const std::exception& e) {
    const std::string what = e.what();
    const auto colon = what.find(": ");
    if (colon != std::string::npos && what.rfind("io:", 0) == 0)
      throw CliError{"io", what.substr(colon + 2)};
    if (colon != std::string::npos && what.rfind("config:", 0) == 0)
      throw CliError{"config", what.substr(colon + 2)};
    throw CliError{"config", what};
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// generate

}  // namespace

int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err) {
  return run_command(err, [&] {
    if (opt.count < 1) throw CliError{"args", "--count must be >= 1"};
    if (opt.out.empty()) throw CliError{"args", "--out is required"};
    GenConfig gen;
    if (opt.clearance) {
      if (!(*opt.clearance > 0.0))
        throw CliError{"args", "--clearance must be positive"};
      gen.clearance = *opt.clearance;
    }
    std::error_code ec;
    std::filesystem::create_directories(opt.out, ec);
    if (ec) throw CliError{"io", "cannot create " + opt.out.string()};
    for (int i = 0; i < opt.count; ++i) {
      const AssemblyModule module =
          generate_worker_module(gen, worker_module_seed(opt.seed, i));
      char name[32];
      std::snprintf(name, sizeof(name), "module_%05d", i);
      try {
        export_meshes(module, opt.out / name);
      } catch (const std::exception& e) {
        throw CliError{"io", std::string(e.what())};
      }
    }
    out << "generated count=" << opt.count << " seed=" << opt.seed
        << " out=" << opt.out.string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// rollout

namespace {

struct LoadedPolicy {
  std::unique_ptr<SacLearner> learner;  // keeps the checkpoint alive
  std::unique_ptr<EpisodePolicy> policy;
  std::string label;
};

LoadedPolicy make_policy(const std::string& spec, uint64_t seed) {
  LoadedPolicy p;
  if (spec == "scripted") {
    p.policy = std::make_unique<ScriptedPolicy>();
    p.label = "scripted";
  } else if (spec == "random") {
    p.policy = std::make_unique<RandomPolicy>(Rng::derive(seed, 0xbadbeef).next_u64());
    p.label = "random";
  } else {
    std::ifstream in(spec, std::ios::binary);
    if (!in) throw CliError{"checkpoint", "cannot read " + spec};
    try {
      p.learner = std::make_unique<SacLearner>(load_policy(in));
    } catch (const std::exception& e) {
      throw CliError{"checkpoint", spec + ": " + e.what()};
    }
    p.policy = std::make_unique<SacPolicy>(*p.learner, /*deterministic=*/true);
    p.label = "sac";
  }
  return p;
}

json episode_row(const std::string& policy, const std::string& set, uint64_t seed,
                 int episode, uint64_t module_seed, const Env& env) {
  json row;
  row["policy"] = policy;
  row["set"] = set;
  row["seed"] = seed;
  row["episode"] = episode;
  row["module_seed"] = module_seed;
  row["outcome"] = to_string(env.status());
  row["steps"] = env.steps();
  return row;
}

}  // namespace

int cmd_rollout(const RolloutOptions& opt, std::ostream& out, std::ostream& err) {
  return run_command(err, [&] {
    if (opt.episodes < 1) throw CliError{"args", "--episodes must be >= 1"};
    if (opt.module_set != "train" && opt.module_set != "test")
      throw CliError{"args", "--set must be 'train' or 'test'"};
    const ExperimentConfig cfg = load_config_or_die(opt.config);
    const std::filesystem::path dir =
        opt.out_dir ? *opt.out_dir : resolve_output_dir(cfg);

    const int n_modules = std::min(cfg.eval_modules, opt.episodes);
    if (opt.module_set == "train" && n_modules > cfg.workers)
      throw CliError{"args", "train set has only " + std::to_string(cfg.workers) +
                                 " modules (worker count)"};
    const uint64_t stream_base = opt.module_set == "train" ? 0 : cfg.workers;

    LoadedPolicy lp = make_policy(opt.policy, cfg.seed);

    std::vector<AssemblyModule> modules;
    std::vector<uint64_t> seeds;
    for (int m = 0; m < n_modules; ++m) {
      uint64_t used = 0;
      modules.push_back(generate_worker_module(
          cfg.generator, worker_module_seed(cfg.seed, stream_base + m), &used));
      seeds.push_back(used);
    }

    std::ofstream rows =
        open_for_write(dir / ("eval_" + opt.module_set + ".jsonl"));
    int successes = 0;
    std::vector<double> completion;
    for (int e = 0; e < opt.episodes; ++e) {
      const int m = e % n_modules;
      Env env(modules[m], cfg.env, cfg.physics,
              Rng::derive(cfg.seed, 0xe9a10000ULL + e).next_u64());
      ObsVec obs = env.reset(1.0);
      lp.policy->begin_episode(obs);
      std::ofstream trace;
      if (opt.trace) {
        char name[32];
        std::snprintf(name, sizeof(name), "episode_%05d.jsonl", e);
        trace = open_for_write(dir / "traces" / name);
      }
      double cumulative = 0.0;
      while (env.status() == EpisodeStatus::running) {
        const ActionVec action = lp.policy->act(obs);
        const StepResult r = env.step(action);
        cumulative += r.reward;
        if (opt.trace) {
          json t;
          t["step"] = env.steps();
          t["observation"] = std::vector<double>(obs.data(), obs.data() + kObservationDim);
          t["action"] = std::vector<double>(action.data(), action.data() + kActionDim);
          t["reward"] = r.reward;
          t["status"] = to_string(r.status);
          trace << t.dump() << "\n";
        }
        obs = r.observation;
      }
      json row = episode_row(lp.label, opt.module_set, cfg.seed, e, seeds[m], env);
      row["sim_time"] = env.steps() * (1.0 / cfg.env.control_hz);
      row["cumulative_reward"] = cumulative;
      rows << row.dump() << "\n";
      if (env.status() == EpisodeStatus::success) {
        ++successes;
        completion.push_back(env.steps() * (1.0 / cfg.env.control_hz));
      }
    }
    const double rate = static_cast<double>(successes) / opt.episodes;
    out << "policy=" << lp.label << " set=" << opt.module_set
        << " episodes=" << opt.episodes << " success_rate=" << fmt(rate)
        << " median_completion=" << fmt(median_of(completion))
        << " out=" << dir.string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// train

namespace {

struct CheckpointInfo {
  long global_step = 0;
  long episodes = 0;
};

void write_checkpoint(const std::filesystem::path& ckdir, const SacLearner& learner,
                      const CheckpointInfo& info, uint64_t seed) {
  char name[48];
  std::snprintf(name, sizeof(name), "ckpt_%010ld", info.global_step);
  std::ofstream bin = open_for_write(ckdir / (std::string(name) + ".bin"));
  save_policy(learner, bin);
  if (!bin) throw CliError{"io", "short write in " + ckdir.string()};
  json state;
  state["global_step"] = info.global_step;
  state["episodes"] = info.episodes;
  state["seed"] = seed;
  open_for_write(ckdir / (std::string(name) + ".json")) << state.dump(2) << "\n";
  json latest;
  latest["step"] = info.global_step;
  open_for_write(ckdir / "latest.json") << latest.dump(2) << "\n";
}

// Drops metrics rows past the checkpoint the run resumes from, so the
// reappended stream stays gap- and repeat-free.
void truncate_metrics(const std::filesystem::path& file, long keep_until) {
  if (!std::filesystem::exists(file)) return;
  std::ifstream in(file);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      if (json::parse(line).at("step").get<long>() <= keep_until)
        keep.push_back(line);
    } catch (const json::exception&) {
      // Unparseable tail (e.g. a row cut off mid-write): drop it.
    }
  }
  in.close();
  std::ofstream out = open_for_write(file);
  for (const auto& l : keep) out << l << "\n";
}

}  // namespace

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  return run_command(err, [&] {
    ExperimentConfig cfg = load_config_or_die(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.out_dir) cfg.output_dir = opt.out_dir->string();
    const std::filesystem::path dir = resolve_output_dir(cfg);
    const std::filesystem::path ckdir = dir / "checkpoints";
    std::filesystem::create_directories(ckdir);
    open_for_write(dir / "config.json") << dump_experiment_config(cfg);

    const int stacked_dim = cfg.sac.stack * kObservationDim;
    std::unique_ptr<SacLearner> learner;
    CheckpointInfo progress;
    if (opt.resume) {
      const std::filesystem::path latest = ckdir / "latest.json";
      if (!std::filesystem::exists(latest))
        throw CliError{"checkpoint", "nothing to resume in " + ckdir.string()};
      long step = 0;
      try {
        step = json::parse(read_text_file(latest)).at("step").get<long>();
        char name[48];
        std::snprintf(name, sizeof(name), "ckpt_%010ld", step);
        const json state =
            json::parse(read_text_file(ckdir / (std::string(name) + ".json")));
        progress.global_step = state.at("global_step").get<long>();
        progress.episodes = state.at("episodes").get<long>();
        std::ifstream bin(ckdir / (std::string(name) + ".bin"), std::ios::binary);
        if (!bin) throw std::runtime_error("missing checkpoint binary");
        learner = std::make_unique<SacLearner>(load_policy(bin));
      } catch (const std::exception& e) {
        throw CliError{"checkpoint", std::string(e.what())};
      }
      if (learner->obs_dim() != stacked_dim)
        throw CliError{"checkpoint", "checkpoint was trained with a different stack"};
      truncate_metrics(dir / "metrics.jsonl", progress.global_step);
    } else {
      learner = std::make_unique<SacLearner>(
          cfg.sac, stacked_dim, Rng::derive(cfg.seed, 0x5ac).next_u64());
      open_for_write(dir / "metrics.jsonl");  // fresh run starts a fresh stream
    }

    VecEnvConfig vec;
    vec.generator = cfg.generator;
    vec.env = cfg.env;
    vec.physics = cfg.physics;
    vec.n_workers = cfg.workers;
    vec.n_threads = cfg.threads;
    WorkerSet set(vec, cfg.seed, /*stream_offset=*/0);

    ReplayBuffer buffer(cfg.sac.replay_capacity, stacked_dim, cfg.sac.replay_warmup);
    Rng action_rng = Rng::derive(cfg.seed, 0xac710a);
    Rng sample_rng = Rng::derive(cfg.seed, 0x5a3b1e);
    const int updates_per_tick = cfg.sac.train_ratio;

    std::vector<ObservationStacker> stackers(cfg.workers,
                                             ObservationStacker(cfg.sac.stack));
    ObsBatch first = set.reset();
    MatrixXd stacked(cfg.workers, stacked_dim);
    for (int i = 0; i < cfg.workers; ++i)
      stacked.row(i) = stackers[i].push(normalize_observation(
          first.row(i).transpose(), cfg.sac.translation_scale));

    std::ofstream metrics = open_for_write(dir / "metrics.jsonl", /*append=*/true);
    const auto started = std::chrono::steady_clock::now();
    auto wall = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
    };

    const long offset = progress.global_step;
    long global = offset;
    long metrics_bucket = offset / cfg.metrics_every;
    long checkpoint_bucket = offset / cfg.checkpoint_every;
    long last_metrics_step = offset;
    std::vector<EpisodeRecord> window;
    ActionBatch actions(cfg.workers, kActionDim);

    auto write_metrics_row = [&] {
      int succ = 0;
      double reward_sum = 0.0;
      std::vector<double> times;
      for (const auto& r : window) {
        reward_sum += r.cumulative_reward;
        if (r.outcome == EpisodeStatus::success) {
          ++succ;
          times.push_back(r.sim_time);
        }
      }
      json row;
      row["step"] = global;
      row["episodes"] = progress.episodes;
      if (window.empty()) {
        row["success_rate"] = nullptr;
        row["mean_reward"] = nullptr;
      } else {
        row["success_rate"] = static_cast<double>(succ) / window.size();
        row["mean_reward"] = reward_sum / window.size();
      }
      const double med = median_of(times);
      if (std::isnan(med))
        row["median_completion"] = nullptr;
      else
        row["median_completion"] = med;
      row["curriculum"] = std::min(
          1.0, static_cast<double>(global) / (cfg.curriculum_fraction * cfg.total_steps));
      row["wall_clock"] = wall();
      row["seed"] = cfg.seed;
      metrics << row.dump() << "\n";
      metrics.flush();
      window.clear();
      last_metrics_step = global;
    };

    while (global < cfg.total_steps) {
      const double denom = cfg.curriculum_fraction * cfg.total_steps;
      set.set_curriculum(std::min(1.0, static_cast<double>(global) / denom));

      const bool explore = !buffer.ready() && learner->updates() == 0;
      if (explore) {
        for (int i = 0; i < cfg.workers; ++i)
          for (int j = 0; j < kActionDim; ++j)
            actions(i, j) = action_rng.uniform(-1.0, 1.0);
      } else {
        actions = learner->act(stacked, /*deterministic=*/false);
      }

      const BatchStep bs = set.step(actions);
      for (int i = 0; i < cfg.workers; ++i) {
        const VectorXd prev = stacked.row(i).transpose();
        const ActionVec a = actions.row(i).transpose();
        if (bs.reset[i]) {
          const VectorXd terminal_stack = stackers[i].push(normalize_observation(
              bs.final_observations.row(i).transpose(), cfg.sac.translation_scale));
          const bool done = bs.statuses[i] != EpisodeStatus::timeout;
          buffer.add(prev, a, bs.rewards(i), terminal_stack, done);
          stackers[i].reset();
          stacked.row(i) = stackers[i].push(normalize_observation(
              bs.observations.row(i).transpose(), cfg.sac.translation_scale));
        } else {
          const VectorXd next = stackers[i].push(normalize_observation(
              bs.observations.row(i).transpose(), cfg.sac.translation_scale));
          buffer.add(prev, a, bs.rewards(i), next, false);
          stacked.row(i) = next;
        }
      }
      global = offset + static_cast<long>(set.total_env_steps());
      for (const auto& rec : set.drain_episode_records()) {
        ++progress.episodes;
        window.push_back(rec);
      }

      if (buffer.ready()) {
        try {
          for (int u = 0; u < updates_per_tick; ++u)
            learner->update(buffer.sample(cfg.sac.batch_size, sample_rng));
        } catch (const std::exception& e) {
          // Keep the last good checkpoint on disk and bail out.
          throw CliError{"diverged", std::string(e.what())};
        }
      }

      if (global / cfg.metrics_every > metrics_bucket) {
        metrics_bucket = global / cfg.metrics_every;
        write_metrics_row();
      }
      if (global / cfg.checkpoint_every > checkpoint_bucket) {
        checkpoint_bucket = global / cfg.checkpoint_every;
        progress.global_step = global;
        write_checkpoint(ckdir, *learner, progress, cfg.seed);
      }
    }

    progress.global_step = global;
    write_checkpoint(ckdir, *learner, progress, cfg.seed);
    if (global > last_metrics_step) write_metrics_row();
    std::ofstream final_policy = open_for_write(dir / "policy.bin");
    save_policy(*learner, final_policy);

    out << "trained steps=" << global << " episodes=" << progress.episodes
        << " updates=" << learner->updates() << " wall=" << fmt(wall())
        << " out=" << dir.string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// report

namespace {

struct GroupStats {
  std::map<uint64_t, std::pair<int, int>> per_seed;  // seed -> (successes, episodes)
  std::vector<double> success_times;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

int set_rank(const std::string& s) { return s == "train" ? 0 : s == "test" ? 1 : 2; }

json parse_line(const std::filesystem::path& file, int line_no, const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw CliError{"parse", file.string() + ":" + std::to_string(line_no) + ": " + e.what()};
  }
}

}  // namespace

int cmd_report(const ReportOptions& opt, std::ostream& out, std::ostream& err) {
  return run_command(err, [&] {
    if (opt.metrics.empty() && opt.eval.empty())
      throw CliError{"args", "at least one --metrics or --eval file is required"};
    if (opt.out.empty()) throw CliError{"args", "--out is required"};
    std::filesystem::create_directories(opt.out);
    std::vector<std::string> written;

    if (!opt.eval.empty()) {
      std::map<std::pair<std::string, std::string>, GroupStats> groups;
      for (const auto& file : opt.eval) {
        std::ifstream in(file);
        if (!in) throw CliError{"io", "cannot read " + file.string()};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
          ++line_no;
          if (line.empty()) continue;
          const json row = parse_line(file, line_no, line);
          try {
            const auto key = std::make_pair(row.at("policy").get<std::string>(),
                                            row.at("set").get<std::string>());
            auto& g = groups[key];
            auto& counts = g.per_seed[row.at("seed").get<uint64_t>()];
            ++counts.second;
            if (row.at("outcome").get<std::string>() == "success") {
              ++counts.first;
              g.success_times.push_back(row.at("sim_time").get<double>());
            }
          } catch (const json::exception& e) {
            throw CliError{"parse", file.string() + ":" + std::to_string(line_no) +
                                        ": " + e.what()};
          }
        }
      }

      std::vector<std::pair<std::pair<std::string, std::string>, const GroupStats*>> ordered;
      for (const auto& [key, g] : groups) ordered.emplace_back(key, &g);
      std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.first.first != b.first.first) return a.first.first < b.first.first;
        return set_rank(a.first.second) < set_rank(b.first.second);
      });

      std::ofstream table = open_for_write(opt.out / "success_table.csv");
      table << "policy,set,seeds,episodes,success_rate_mean,success_rate_std\n";
      for (const auto& [key, g] : ordered) {
        std::vector<double> rates;
        int episodes = 0;
        for (const auto& [seed, counts] : g->per_seed) {
          rates.push_back(static_cast<double>(counts.first) / counts.second);
          episodes += counts.second;
        }
        table << key.first << "," << key.second << "," << g->per_seed.size() << ","
              << episodes << "," << fmt(mean_of(rates)) << "," << fmt(std_of(rates))
              << "\n";
      }
      written.push_back("success_table.csv");

      std::ofstream hist = open_for_write(opt.out / "completion_histogram.csv");
      hist << "policy,set,bin_start,bin_end,count\n";
      const double bin_width = 0.5;
      for (const auto& [key, g] : ordered) {
        std::map<int, int> bins;
        for (double t : g->success_times)
          ++bins[static_cast<int>(std::floor(t / bin_width))];
        for (const auto& [b, count] : bins)
          hist << key.first << "," << key.second << "," << fmt(b * bin_width) << ","
               << fmt((b + 1) * bin_width) << "," << count << "\n";
      }
      written.push_back("completion_histogram.csv");
    }

    if (!opt.metrics.empty()) {
      // step -> success rates across seed files (null rows skipped).
      std::map<long, std::vector<double>> by_step;
      for (const auto& file : opt.metrics) {
        std::ifstream in(file);
        if (!in) throw CliError{"io", "cannot read " + file.string()};
        std::string line;
        int line_no = 0;
        long prev_step = -1;
        while (std::getline(in, line)) {
          ++line_no;
          if (line.empty()) continue;
          const json row = parse_line(file, line_no, line);
          try {
            const long step = row.at("step").get<long>();
            if (step <= prev_step)
              throw CliError{"parse", file.string() + ":" + std::to_string(line_no) +
                                          ": step not increasing"};
            prev_step = step;
            if (!row.at("success_rate").is_null())
              by_step[step].push_back(row.at("success_rate").get<double>());
          } catch (const json::exception& e) {
            throw CliError{"parse", file.string() + ":" + std::to_string(line_no) +
                                        ": " + e.what()};
          }
        }
      }
      std::ofstream curve = open_for_write(opt.out / "metrics_summary.csv");
      curve << "step,n_seeds,success_rate_mean,success_rate_std\n";
      for (const auto& [step, rates] : by_step)
        curve << step << "," << rates.size() << "," << fmt(mean_of(rates)) << ","
              << fmt(std_of(rates)) << "\n";
      written.push_back("metrics_summary.csv");
    }

    out << "wrote";
    for (const auto& w : written) out << " " << w;
    out << " in " << opt.out.string() << "\n";
  });
}

}  // namespace pegsim

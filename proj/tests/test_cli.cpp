#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pegsim/cli.hpp"

using namespace pegsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pegsim_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<json> read_jsonl(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  out << text;
}

// A configuration small enough that train/rollout finish in well under a
// second: two workers, short episodes, a tiny network.
std::string tiny_config(const fs::path& out_dir, uint64_t seed = 0) {
  json j;
  j["workers"] = 2;
  j["total_steps"] = 400;
  j["eval_modules"] = 2;
  j["metrics_every"] = 100;
  j["checkpoint_every"] = 200;
  j["seed"] = seed;
  j["output_dir"] = out_dir.string();
  j["env"] = {{"max_steps", 50}};
  j["generator"] = {{"round_vertex_probability", 1.0}, {"clearance", 0.003}};
  j["sac"] = {{"hidden", {16, 16}}, {"batch_size", 32},   {"replay_capacity", 10000},
              {"replay_warmup", 100}, {"stack", 2}};
  return j.dump(2);
}

struct Captured {
  int code = 0;
  std::string out, err;
};

template <typename Fn>
Captured run(Fn&& fn) {
  Captured c;
  std::ostringstream out, err;
  c.code = fn(out, err);
  c.out = out.str();
  c.err = err.str();
  return c;
}

}  // namespace

TEST_CASE("config defaults are the library defaults and round-trip") {
  const ExperimentConfig defaults;
  const ExperimentConfig parsed = parse_experiment_config("{}");
  CHECK(dump_experiment_config(parsed) == dump_experiment_config(defaults));

  CHECK(parsed.workers == 64);
  CHECK(parsed.total_steps == 200000);
  CHECK(parsed.curriculum_fraction == 0.5);
  CHECK(parsed.algorithm == "sac");
  CHECK(parsed.sac.learning_rate == 8e-5);
  CHECK(parsed.sac.batch_size == 4096);
  CHECK(parsed.sac.stack == 10);
  CHECK(parsed.generator.clearance == 0.001);
  CHECK(parsed.env.max_steps == 500);
  CHECK(parsed.physics.substep_dt == 1.0 / 200.0);

  // Dumping the effective config and re-parsing it reproduces it exactly.
  ExperimentConfig custom = defaults;
  custom.seed = 1234567890123ULL;
  custom.workers = 16;
  custom.sac.hidden = {64, 32};
  custom.env.observation_noise.sigma_pos = 0.002;
  custom.generator.hole_tilt_max = 0.1;
  const ExperimentConfig again = parse_experiment_config(dump_experiment_config(custom));
  CHECK(dump_experiment_config(again) == dump_experiment_config(custom));
  CHECK(again.seed == custom.seed);
  CHECK(again.sac.hidden == custom.sac.hidden);
}

TEST_CASE("unknown or ill-typed config keys fail loudly") {
  CHECK_THROWS_WITH_AS(parse_experiment_config("{\"wokers\": 3}"),
                       doctest::Contains("unknown key 'config.wokers'"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(
      parse_experiment_config("{\"generator\": {\"plate_sides\": 2}}"),
      doctest::Contains("unknown key 'generator.plate_sides'"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      parse_experiment_config(
          "{\"env\": {\"observation_noise\": {\"sigma\": 1}}}"),
      doctest::Contains("unknown key 'env.observation_noise.sigma'"),
      std::runtime_error);
  CHECK_THROWS_AS(parse_experiment_config("{\"workers\": \"many\"}"),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_experiment_config("{\"sac\": {\"hidden\": \"big\"}}"),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_experiment_config("not json at all"), std::runtime_error);

  CHECK_THROWS_AS(parse_experiment_config("{\"workers\": 0}"), std::runtime_error);
  CHECK_THROWS_AS(parse_experiment_config("{\"algorithm\": \"ppo\"}"),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_experiment_config("{\"curriculum_fraction\": 0.0}"),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_experiment_config("{\"metrics_every\": 0}"),
                  std::runtime_error);
}

TEST_CASE("the output directory honors the environment override") {
  ExperimentConfig cfg;
  cfg.output_dir = "runs/from_config";
  unsetenv("PEGSIM_OUTPUT_DIR");
  CHECK(resolve_output_dir(cfg) == fs::path("runs/from_config"));
  setenv("PEGSIM_OUTPUT_DIR", "/tmp/overridden", 1);
  CHECK(resolve_output_dir(cfg) == fs::path("/tmp/overridden"));
  unsetenv("PEGSIM_OUTPUT_DIR");
}

TEST_CASE("generate writes deterministic module directories") {
  const fs::path dir = fresh_dir("generate");
  GenerateOptions opt;
  opt.count = 2;
  opt.seed = 42;
  opt.out = dir / "a";
  auto r = run([&](auto& o, auto& e) { return cmd_generate(opt, o, e); });
  CHECK(r.code == 0);
  CHECK(r.err.empty());
  CHECK(fs::exists(dir / "a/module_00000/peg.obj"));
  CHECK(fs::exists(dir / "a/module_00000/plate.obj"));
  CHECK(fs::exists(dir / "a/module_00001/module.json"));

  opt.out = dir / "b";
  run([&](auto& o, auto& e) { return cmd_generate(opt, o, e); });
  for (const char* f : {"module_00000/module.json", "module_00000/peg.obj",
                        "module_00001/plate.obj"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  GenerateOptions tight = opt;
  tight.count = 1;
  tight.out = dir / "tight";
  tight.clearance = 0.00025;
  CHECK(run([&](auto& o, auto& e) { return cmd_generate(tight, o, e); }).code == 0);
  const json meta = json::parse(slurp(dir / "tight/module_00000/module.json"));
  CHECK(meta.at("params").at("clearance").get<double>() == 0.00025);

  GenerateOptions bad = opt;
  bad.count = 0;
  auto rb = run([&](auto& o, auto& e) { return cmd_generate(bad, o, e); });
  CHECK(rb.code == 2);
  CHECK(rb.err.rfind("error: args:", 0) == 0);

  bad = opt;
  bad.clearance = -1.0;
  CHECK(run([&](auto& o, auto& e) { return cmd_generate(bad, o, e); }).code == 2);
}

TEST_CASE("rollout records episodes and optional traces") {
  const fs::path dir = fresh_dir("rollout");
  write_file(dir / "cfg.json", tiny_config(dir / "run"));

  RolloutOptions opt;
  opt.config = dir / "cfg.json";
  opt.policy = "scripted";
  opt.episodes = 3;
  opt.module_set = "test";
  opt.trace = true;
  opt.out_dir = dir / "out";
  auto r = run([&](auto& o, auto& e) { return cmd_rollout(opt, o, e); });
  CHECK(r.code == 0);
  CHECK(r.out.find("success_rate=") != std::string::npos);

  const auto rows = read_jsonl(dir / "out/eval_test.jsonl");
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(row.at("policy") == "scripted");
    CHECK(row.at("set") == "test");
    CHECK(row.at("steps").get<int>() <= 50);
    CHECK(row.at("sim_time").get<double>() ==
          row.at("steps").get<int>() * (1.0 / 50.0));
  }
  // Episodes cycle through eval_modules distinct modules.
  CHECK(rows[0].at("module_seed") != rows[1].at("module_seed"));
  CHECK(rows[0].at("module_seed") == rows[2].at("module_seed"));

  for (int e = 0; e < 3; ++e) {
    char name[40];
    std::snprintf(name, sizeof(name), "traces/episode_%05d.jsonl", e);
    const auto trace = read_jsonl(dir / "out" / name);
    REQUIRE(!trace.empty());
    CHECK(trace.size() <= 50);
    CHECK(trace.size() == static_cast<size_t>(rows[e].at("steps").get<int>()));
    CHECK(trace[0].at("observation").size() == 18);
    CHECK(trace[0].at("action").size() == 6);
    CHECK(trace.back().at("status") == rows[e].at("outcome"));
  }

  RolloutOptions missing = opt;
  missing.policy = (dir / "nope.bin").string();
  auto rm = run([&](auto& o, auto& e) { return cmd_rollout(missing, o, e); });
  CHECK(rm.code == 3);
  CHECK(rm.err.rfind("error: checkpoint:", 0) == 0);

  RolloutOptions bad_set = opt;
  bad_set.module_set = "validation";
  CHECK(run([&](auto& o, auto& e) { return cmd_rollout(bad_set, o, e); }).code == 2);
}

TEST_CASE("train runs, checkpoints, resumes and reproduces") {
  const fs::path dir = fresh_dir("train");
  write_file(dir / "cfg.json", tiny_config(dir / "runA", 7));

  TrainOptions opt;
  opt.config = dir / "cfg.json";
  auto r = run([&](auto& o, auto& e) { return cmd_train(opt, o, e); });
  CHECK(r.code == 0);
  CHECK(r.err.empty());
  CHECK(r.out.find("trained steps=400") != std::string::npos);
  CHECK(fs::exists(dir / "runA/policy.bin"));
  CHECK(fs::exists(dir / "runA/config.json"));
  CHECK(fs::exists(dir / "runA/checkpoints/latest.json"));

  const auto rows = read_jsonl(dir / "runA/metrics.jsonl");
  REQUIRE(!rows.empty());
  long prev = 0;
  for (const auto& row : rows) {
    const long step = row.at("step").get<long>();
    CHECK(step > prev);
    prev = step;
    CHECK(row.at("seed").get<uint64_t>() == 7);
    const double expected = std::min(1.0, step / (0.5 * 400));
    CHECK(row.at("curriculum").get<double>() == doctest::Approx(expected));
  }
  CHECK(rows.back().at("step").get<long>() == 400);

  // Same config, fresh directory: identical stream except wall-clock.
  write_file(dir / "cfgB.json", tiny_config(dir / "runB", 7));
  TrainOptions again;
  again.config = dir / "cfgB.json";
  CHECK(run([&](auto& o, auto& e) { return cmd_train(again, o, e); }).code == 0);
  auto strip = [](std::vector<json> rows) {
    for (auto& r : rows) r.erase("wall_clock");
    return rows;
  };
  CHECK(strip(read_jsonl(dir / "runA/metrics.jsonl")) ==
        strip(read_jsonl(dir / "runB/metrics.jsonl")));
  CHECK(slurp(dir / "runA/policy.bin") == slurp(dir / "runB/policy.bin"));

  // Rerunning from the dumped effective config reproduces the run too.
  const fs::path dumped = dir / "runA/config.json";
  {
    json j = json::parse(slurp(dumped));
    j["output_dir"] = (dir / "runC").string();
    write_file(dir / "cfgC.json", j.dump());
  }
  TrainOptions from_dump;
  from_dump.config = dir / "cfgC.json";
  CHECK(run([&](auto& o, auto& e) { return cmd_train(from_dump, o, e); }).code == 0);
  CHECK(strip(read_jsonl(dir / "runA/metrics.jsonl")) ==
        strip(read_jsonl(dir / "runC/metrics.jsonl")));

  // Resume with a higher step budget: steps continue without gaps/repeats.
  {
    json j = json::parse(slurp(dir / "cfg.json"));
    j["total_steps"] = 800;
    write_file(dir / "cfg800.json", j.dump());
  }
  TrainOptions resume;
  resume.config = dir / "cfg800.json";
  resume.resume = true;
  CHECK(run([&](auto& o, auto& e) { return cmd_train(resume, o, e); }).code == 0);
  const auto resumed = read_jsonl(dir / "runA/metrics.jsonl");
  std::vector<long> steps;
  for (const auto& row : resumed) steps.push_back(row.at("step").get<long>());
  std::vector<long> expected;
  for (long s = 100; s <= 800; s += 100) expected.push_back(s);
  CHECK(steps == expected);

  // Resuming an empty directory is an error.
  TrainOptions nothing;
  nothing.config = dir / "cfg.json";
  nothing.resume = true;
  nothing.out_dir = dir / "empty";
  auto rn = run([&](auto& o, auto& e) { return cmd_train(nothing, o, e); });
  CHECK(rn.code == 3);
  CHECK(rn.err.rfind("error: checkpoint:", 0) == 0);
}

TEST_CASE("report aggregates seeds and flags malformed rows") {
  const fs::path dir = fresh_dir("report");
  auto eval_row = [](const std::string& policy, const std::string& set, int seed,
                     int episode, bool success, double t) {
    json j;
    j["policy"] = policy;
    j["set"] = set;
    j["seed"] = seed;
    j["episode"] = episode;
    j["module_seed"] = 1;
    j["outcome"] = success ? "success" : "timeout";
    j["steps"] = 100;
    j["sim_time"] = t;
    j["cumulative_reward"] = 0.5;
    return j.dump();
  };

  {  // seed 1: 2/4 success; seed 2: 4/4 success
    std::ofstream a(dir / "eval1.jsonl"), b(dir / "eval2.jsonl");
    for (int e = 0; e < 4; ++e) {
      a << eval_row("sac", "test", 1, e, e < 2, 2.0 + e) << "\n";
      b << eval_row("sac", "test", 2, e, true, 3.0 + e) << "\n";
    }
    a << eval_row("sac", "train", 1, 0, true, 2.0) << "\n";
    std::ofstream c(dir / "eval_none.jsonl");
    c << eval_row("random", "test", 1, 0, false, 0.0) << "\n";
  }

  ReportOptions opt;
  opt.eval = {dir / "eval1.jsonl", dir / "eval2.jsonl", dir / "eval_none.jsonl"};
  opt.out = dir / "rep";
  auto r = run([&](auto& o, auto& e) { return cmd_report(opt, o, e); });
  CHECK(r.code == 0);

  std::istringstream table(slurp(dir / "rep/success_table.csv"));
  std::string line;
  std::getline(table, line);
  CHECK(line == "policy,set,seeds,episodes,success_rate_mean,success_rate_std");
  std::vector<std::string> body;
  while (std::getline(table, line)) body.push_back(line);
  REQUIRE(body.size() == 3);
  CHECK(body[0] == "random,test,1,1,0,0");
  CHECK(body[1] == "sac,train,1,1,1,0");  // train row precedes test
  CHECK(body[2] == "sac,test,2,8,0.75,0.25");

  // Zero-success groups contribute no histogram bins.
  const std::string hist = slurp(dir / "rep/completion_histogram.csv");
  CHECK(hist.find("random") == std::string::npos);
  CHECK(hist.find("sac,test,2,2.5,1") != std::string::npos);

  // Metrics curves aggregate by step across seed files.
  {
    std::ofstream m1(dir / "m1.jsonl"), m2(dir / "m2.jsonl");
    for (int s = 100; s <= 300; s += 100) {
      m1 << json{{"step", s}, {"success_rate", 0.1 * s / 100}}.dump() << "\n";
      m2 << json{{"step", s}, {"success_rate", 0.3 * s / 100}}.dump() << "\n";
    }
  }
  ReportOptions curves;
  curves.metrics = {dir / "m1.jsonl", dir / "m2.jsonl"};
  curves.out = dir / "rep2";
  CHECK(run([&](auto& o, auto& e) { return cmd_report(curves, o, e); }).code == 0);
  std::istringstream summary(slurp(dir / "rep2/metrics_summary.csv"));
  std::getline(summary, line);
  std::getline(summary, line);
  CHECK(line == "100,2,0.2,0.1");

  // A malformed row is reported with its file and line number.
  write_file(dir / "broken.jsonl", eval_row("x", "test", 1, 0, true, 1.0) +
                                       "\nnot json\n");
  ReportOptions broken;
  broken.eval = {dir / "broken.jsonl"};
  broken.out = dir / "rep3";
  auto rb = run([&](auto& o, auto& e) { return cmd_report(broken, o, e); });
  CHECK(rb.code == 3);
  CHECK(rb.err.find("error: parse: ") != std::string::npos);
  CHECK(rb.err.find("broken.jsonl:2:") != std::string::npos);

  ReportOptions empty;
  empty.out = dir / "rep4";
  CHECK(run([&](auto& o, auto& e) { return cmd_report(empty, o, e); }).code == 2);
}

TEST_CASE("the installed binary wires the subcommands") {
  const fs::path dir = fresh_dir("binary");
  const std::string exe = PEGSIM_CLI_PATH;
  REQUIRE(fs::exists(exe));

  const std::string gen = exe + " generate --count 1 --seed 3 --out " +
                          (dir / "mods").string() + " > " +
                          (dir / "gen.out").string() + " 2>&1";
  CHECK(std::system(gen.c_str()) == 0);
  CHECK(fs::exists(dir / "mods/module_00000/peg.obj"));
  CHECK(slurp(dir / "gen.out").rfind("generated count=1", 0) == 0);

  const std::string bad = exe + " generate --count 1 > /dev/null 2>&1";
  CHECK(std::system(bad.c_str()) != 0);  // missing required --out

  write_file(dir / "cfg.json", tiny_config(dir / "run", 5));
  const std::string roll = exe + " rollout --config " + (dir / "cfg.json").string() +
                           " --policy random --episodes 2 --set test --out " +
                           (dir / "ro").string() + " > " + (dir / "ro.out").string() +
                           " 2>&1";
  CHECK(std::system(roll.c_str()) == 0);
  CHECK(read_jsonl(dir / "ro/eval_test.jsonl").size() == 2);
}

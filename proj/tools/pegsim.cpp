#include <CLI11.hpp>

#include <iostream>

#include "pegsim/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pegsim: procedural peg-in-hole experiments"};
  app.require_subcommand(1);

  pegsim::GenerateOptions gen;
  auto* cmd_gen = app.add_subcommand("generate", "write peg/plate modules to disk");
  cmd_gen->add_option("--count", gen.count, "number of modules")->required();
  cmd_gen->add_option("--seed", gen.seed, "master seed");
  cmd_gen->add_option("--out", gen.out, "output directory")->required();
  double clearance = 0.0;
  auto* cl = cmd_gen->add_option("--clearance", clearance, "radial clearance [m]");

  pegsim::RolloutOptions roll;
  auto* cmd_roll = app.add_subcommand("rollout", "run evaluation episodes");
  cmd_roll->add_option("--config", roll.config, "experiment config JSON")->required();
  cmd_roll->add_option("--policy", roll.policy,
                       "scripted | random | path to a checkpoint");
  cmd_roll->add_option("--episodes", roll.episodes, "episode count");
  cmd_roll->add_option("--set", roll.module_set, "train | test module seeds");
  cmd_roll->add_flag("--trace", roll.trace, "write per-episode step traces");
  std::string roll_out;
  auto* ro = cmd_roll->add_option("--out", roll_out, "output directory override");

  pegsim::TrainOptions train;
  auto* cmd_train = app.add_subcommand("train", "train a policy");
  cmd_train->add_option("--config", train.config, "experiment config JSON")->required();
  uint64_t seed = 0;
  auto* ts = cmd_train->add_option("--seed", seed, "seed override");
  cmd_train->add_flag("--resume", train.resume, "continue from the latest checkpoint");
  std::string train_out;
  auto* to = cmd_train->add_option("--out", train_out, "output directory override");

  pegsim::ReportOptions report;
  auto* cmd_report = app.add_subcommand("report", "aggregate metrics and evaluations");
  cmd_report->add_option("--metrics", report.metrics, "training metrics JSONL files");
  cmd_report->add_option("--eval", report.eval, "evaluation episode JSONL files");
  cmd_report->add_option("--out", report.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (cmd_gen->parsed()) {
    if (cl->count()) gen.clearance = clearance;
    return pegsim::cmd_generate(gen, std::cout, std::cerr);
  }
  if (cmd_roll->parsed()) {
    if (ro->count()) roll.out_dir = roll_out;
    return pegsim::cmd_rollout(roll, std::cout, std::cerr);
  }
  if (cmd_train->parsed()) {
    if (ts->count()) train.seed = seed;
    if (to->count()) train.out_dir = train_out;
    return pegsim::cmd_train(train, std::cout, std::cerr);
  }
  if (cmd_report->parsed())
    return pegsim::cmd_report(report, std::cout, std::cerr);
  return 1;
}

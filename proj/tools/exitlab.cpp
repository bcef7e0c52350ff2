/* Copyright 2026 The exitlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// exitlab command-line entry point.
//
//   exitlab gen      --config cfg.json --out DIR [--create] [--overwrite]
//   exitlab train    --config cfg.json --out DIR [--resume CKPT]
//   exitlab sweep    --config cfg.json --out DIR --checkpoint CKPT
//   exitlab compare  --config cfg.json --out DIR --checkpoint CKPT [--targets 2 3]
//   exitlab diagnose --config cfg.json --out DIR --checkpoint CKPT [--checkpoint-no-pn CKPT]
//   exitlab shift    --config cfg.json --out DIR --checkpoint CKPT [--no-adjust]
//
// Values come from the built-in defaults, then the config file, then flags.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "exitlab/error.hpp"
#include "exitlab/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool overwrite = false;
  bool create = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)");
  cmd->add_option("--out", c.out, "output directory (overrides out_dir)");
  cmd->add_option("--seed", c.seed, "seed for data, model init and batching");
  cmd->add_flag("--overwrite", c.overwrite, "replace existing outputs");
  cmd->add_flag("--create", c.create, "create the output directory if missing");
}

exitlab::ExperimentConfig resolve(const Common& c) {
  exitlab::ExperimentConfig cfg =
      c.config.empty() ? exitlab::default_experiment() : exitlab::load_experiment(c.config);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.seed) {
    cfg.data.seed = *c.seed;
    cfg.model.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  return cfg;
}

exitlab::CommandOptions options(const Common& c) { return {c.overwrite, c.create}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exitlab: distance-enhanced early exiting experiments"};
  app.require_subcommand(1);
  Common common;
  std::string checkpoint, checkpoint_no_pn, resume;
  std::vector<double> targets;
  bool no_adjust = false;

  auto* gen = app.add_subcommand("gen", "generate the synthetic train/dev/test splits");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "train a model; writes best/final checkpoints");
  add_common(train, common);
  train->add_option("--resume", resume, "continue from this checkpoint")->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "threshold sweeps, trade-off and histogram plots");
  add_common(sweep, common);
  sweep->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

  auto* compare = app.add_subcommand("compare", "accuracy at matched speed-ups");
  add_common(compare, common);
  compare->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  compare->add_option("--targets", targets, "target speed-ups (default from config)");

  auto* diagnose = app.add_subcommand("diagnose", "correctness estimation and rank diagnostics");
  add_common(diagnose, common);
  diagnose->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  diagnose->add_option("--checkpoint-no-pn", checkpoint_no_pn,
                       "checkpoint trained without prototypical networks");

  auto* shift = app.add_subcommand("shift", "distribution shift with K-means prototype adjustment");
  add_common(shift, common);
  shift->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  shift->add_flag("--no-adjust", no_adjust, "report only the unadjusted condition");

  CLI11_PARSE(app, argc, argv);

  try {
    exitlab::ExperimentConfig cfg = resolve(common);
    const exitlab::CommandOptions opt = options(common);
    if (gen->parsed()) {
      exitlab::cmd_gen(cfg, opt);
    } else if (train->parsed()) {
      std::optional<std::filesystem::path> from;
      if (!resume.empty()) from = resume;
      const auto res = exitlab::cmd_train(cfg, opt, from);
      std::printf("best step %lld, dev accuracy %.4f\n",
                  static_cast<long long>(res.report.best_step), res.report.best_dev_accuracy);
    } else if (sweep->parsed()) {
      exitlab::cmd_sweep(cfg, checkpoint, opt);
    } else if (compare->parsed()) {
      if (!targets.empty()) cfg.target_speedups = targets;
      for (const auto& e : exitlab::cmd_compare(cfg, checkpoint, opt)) {
        if (e.row) {
          std::printf("%-20s %.1fx  accuracy %.4f (speed-up %.3f)\n", e.policy.c_str(), e.target,
                      e.row->accuracy, e.row->speedup);
        } else {
          std::printf("%-20s %.1fx  unavailable\n", e.policy.c_str(), e.target);
        }
      }
    } else if (diagnose->parsed()) {
      std::optional<std::filesystem::path> plain;
      if (!checkpoint_no_pn.empty()) plain = checkpoint_no_pn;
      const auto res = exitlab::cmd_diagnose(cfg, checkpoint, plain, opt);
      if (res.spearman.empty()) {
        std::fprintf(stderr, "note: rank diagnostic skipped (no --checkpoint-no-pn given)\n");
      }
    } else if (shift->parsed()) {
      if (no_adjust) cfg.shift.adjust = false;
      const auto rep = exitlab::cmd_shift(cfg, checkpoint, opt);
      std::printf("before: accuracy %.4f speed-up %.3f (tau %g)\n", rep.before.accuracy,
                  rep.before.speedup, rep.before.tau);
      if (rep.after) {
        std::printf("after:  accuracy %.4f speed-up %.3f (tau %g)\n", rep.after->accuracy,
                    rep.after->speedup, rep.after->tau);
      }
    }
  } catch (const exitlab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

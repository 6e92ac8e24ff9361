// Copyright (c) 2026 The pcbreid Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "pcb/error.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericAbort = 4 };

void add_common(CLI::App& cmd, pcb::cli::CommonArgs& c) {
  cmd.add_option("--config", c.config, "Run config JSON; flags override it")->check(CLI::ExistingFile);
  cmd.add_option("--out-root", c.out_root, "Output root (default $PCB_OUTPUT_ROOT or ./runs)");
  cmd.add_option("--run-name", c.run_name, "Run directory name instead of a timestamp");
}

void add_train_options(CLI::App& cmd, pcb::cli::TrainArgs& t) {
  add_common(cmd, t.common);
  cmd.add_option("--dataset", t.dataset, "Dataset directory or manifest.json");
  cmd.add_option("--mode", t.mode, "ide | pcb | variant1 | variant2 | rpp | rpp-no-induction");
  cmd.add_option("--p", t.parts, "Number of parts (ignored by ide)");
  cmd.add_option("--reduced-dim", t.reduced_dim, "Reduced part dimension r");
  cmd.add_option("--epochs", t.epochs, "Uniform-partition epochs");
  cmd.add_option("--decay-epoch", t.decay_epoch, "Epoch of the learning-rate decay");
  cmd.add_option("--rpp-classifier-epochs", t.rpp_classifier_epochs, "Part-classifier-only epochs");
  cmd.add_option("--rpp-finetune-epochs", t.rpp_finetune_epochs, "Joint fine-tuning epochs");
  cmd.add_option("--batch-size", t.batch_size, "Mini-batch size");
  cmd.add_option("--lr", t.lr, "Base learning rate");
  cmd.add_option("--rpp-lr", t.rpp_lr, "Learning rate of the refinement phases");
  cmd.add_option("--dropout", t.dropout, "Dropout rate on pooled vectors");
  cmd.add_option("--seed", t.seed, "Training seed");
  cmd.add_option("--from", t.from, "Uniformly trained checkpoint (required for --mode rpp)");
  cmd.add_option("--pretrained", t.pretrained, "Checkpoint whose backbone initializes this run");
  cmd.add_option("--resume", t.resume, "Continue from a checkpoint of an interrupted run");
  cmd.add_flag("--no-induction", t.no_induction, "Train the refined head jointly from scratch");
  cmd.add_flag("--unnormalized-pool", t.unnormalized_pool, "Divide refined pooling by M*N instead of part mass");
  cmd.add_flag("--no-early-stop", t.no_early_stop, "Run every scheduled epoch");
}

void add_eval_options(CLI::App& cmd, pcb::cli::EvalArgs& e) {
  add_common(cmd, e.common);
  cmd.add_option("--checkpoint", e.checkpoint, "Trained checkpoint");
  cmd.add_option("--dataset", e.dataset, "Dataset directory or manifest.json");
  cmd.add_option("--kind", e.kind, "Descriptor kind G or H")->check(CLI::IsMember({"G", "H", "g", "h"}));
  cmd.add_option("--metric", e.metric, "cosine or euclidean")->check(CLI::IsMember({"cosine", "euclidean"}));
  cmd.add_option("--ranks", e.ranks, "CMC ranks, e.g. 1,5,10")->delimiter(',')->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace pcb::cli;
  CLI::App app{"Part-based person retrieval: synthesis, training, extraction, evaluation and diagnostics"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic permuted-band dataset");
  add_common(*synth_cmd, synth.common);
  synth_cmd->add_option("--num-ids", synth.num_ids, "Identities");
  synth_cmd->add_option("--imgs-per-id", synth.imgs_per_id, "Images per identity");
  synth_cmd->add_option("--bands", synth.bands, "Color bands per image (>= 2)");
  synth_cmd->add_option("--shift-rows", synth.shift_rows, "Maximum vertical shift in pixel rows");
  synth_cmd->add_option("--height", synth.height, "Image height");
  synth_cmd->add_option("--width", synth.width, "Image width");
  synth_cmd->add_option("--noise", synth.noise, "Uniform pixel noise half-width");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--dest", synth.dest, "Dataset directory (default <run>/dataset)");
  synth_cmd->add_flag("--force", synth.force, "Replace an existing dataset directory");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint + JSON-lines log");
  add_train_options(*train_cmd, train);

  ExtractArgs extract;
  auto* extract_cmd = app.add_subcommand("extract", "Dump descriptors of a split");
  add_eval_options(*extract_cmd, extract.eval);
  extract_cmd->add_option("--split", extract.split, "query | gallery | train | all")
      ->check(CLI::IsMember({"query", "gallery", "train", "all"}));

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "CMC / mAP under the single-query cross-camera protocol");
  add_eval_options(*eval_cmd, eval);

  DiagnoseArgs diag;
  auto* diag_cmd = app.add_subcommand("diagnose", "Part maps, outlier rate and collapse diagnostics");
  add_common(*diag_cmd, diag.common);
  diag_cmd->add_option("--checkpoint", diag.checkpoint, "Trained checkpoint");
  diag_cmd->add_option("--dataset", diag.dataset, "Dataset directory or manifest.json");
  diag_cmd->add_option("--split", diag.split, "Split to map")->check(CLI::IsMember({"train", "query", "gallery"}));
  diag_cmd->add_option("--limit", diag.limit, "Maximum number of images");
  diag_cmd->add_option("--cell", diag.cell, "PNG pixels per tensor location");
  diag_cmd->add_option("--empty-fraction", diag.empty_fraction, "Empty part threshold as a fraction of M*N");
  diag_cmd->add_option("--duplicate-cosine", diag.duplicate_cosine, "Duplicate part cosine threshold");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a grid of one parameter");
  add_train_options(*sweep_cmd, sweep.train);
  sweep_cmd->add_option("--param", sweep.param, "p | input | downsample")
      ->check(CLI::IsMember({"p", "input", "downsample"}));
  sweep_cmd->add_option("--values", sweep.values, "Comma-separated values, e.g. 1,2,4,6 or 48x16,96x32")
      ->delimiter(',')
      ->required();
  sweep_cmd->add_option("--seeds", sweep.seeds, "Comma-separated training seeds")->delimiter(',');
  sweep_cmd->add_option("--kind", sweep.kind, "Descriptor kind G or H")->check(CLI::IsMember({"G", "H", "g", "h"}));
  sweep_cmd->add_option("--ranks", sweep.ranks, "CMC ranks")->delimiter(',')->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*train_cmd) return cmd_train(train);
    if (*extract_cmd) return cmd_extract(extract);
    if (*eval_cmd) return cmd_eval(eval);
    if (*diag_cmd) return cmd_diagnose(diag);
    if (*sweep_cmd) return cmd_sweep(sweep);
  } catch (const pcb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const pcb::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const pcb::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumericAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

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

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pcb/checkpoint.hpp"
#include "pcb/config.hpp"
#include "pcb/diagnose.hpp"
#include "pcb/retrieval.hpp"
#include "pcb/train.hpp"
#include "run_dir.hpp"

namespace pcb::cli {

namespace fs = std::filesystem;

namespace {

RunConfig base_config(const CommonArgs& common) {
  return common.config ? load_run_config(*common.config) : RunConfig{};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

ingest::DatasetManifest load_dataset(const std::string& location) {
  if (location.empty()) throw ConfigError("a dataset is required (--dataset)");
  const fs::path path(location);
  if (fs::is_regular_file(path)) return ingest::read_manifest(path);
  if (fs::is_regular_file(path / "manifest.json")) return ingest::read_manifest(path / "manifest.json");
  return ingest::load_directory(path);
}

/// Input size and class count follow the dataset.
void fit_to_data(ModelConfig& model, const ingest::DatasetManifest& manifest) {
  const auto train = manifest.split(ingest::Split::kTrain);
  if (train.empty()) throw DataError("dataset has no train split");
  model.backbone.input_height = train.front()->pixels.height;
  model.backbone.input_width = train.front()->pixels.width;
  model.head.num_classes = manifest.train_classes();
}

void apply_train_flags(RunConfig& cfg, const TrainArgs& a) {
  if (a.dataset) cfg.dataset = *a.dataset;
  if (a.mode) cfg.mode = train_mode_from_string(*a.mode);
  if (a.no_induction) {
    if (cfg.mode != TrainMode::kRPP && cfg.mode != TrainMode::kRPPNoInduction) {
      throw ConfigError("--no-induction applies to --mode rpp only");
    }
    cfg.mode = TrainMode::kRPPNoInduction;
  }
  const bool dropout_configured = cfg.model.head.dropout != 0.0;
  cfg.apply_mode();
  auto& s = cfg.train.schedule;
  if (a.parts) cfg.model.head.parts = *a.parts;
  if (a.reduced_dim) cfg.model.head.reduced_dim = *a.reduced_dim;
  if (a.epochs) {
    s.total_epochs = *a.epochs;
    if (!a.decay_epoch) s.decay_epoch = std::max(0, *a.epochs * 2 / 3);
  }
  if (a.decay_epoch) s.decay_epoch = *a.decay_epoch;
  if (a.rpp_classifier_epochs) s.rpp_classifier_epochs = *a.rpp_classifier_epochs;
  if (a.rpp_finetune_epochs) s.rpp_finetune_epochs = *a.rpp_finetune_epochs;
  if (a.batch_size) s.batch_size = *a.batch_size;
  if (a.lr) s.base_lr = *a.lr;
  if (a.rpp_lr) s.rpp_lr = *a.rpp_lr;
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.from) cfg.from = *a.from;
  if (a.unnormalized_pool) cfg.model.rpp.normalize = false;
  if (a.no_early_stop) cfg.train.convergence.enabled = false;
  if (a.dropout) {
    cfg.model.head.dropout = *a.dropout;
  } else if (cfg.mode == TrainMode::kIDE && !dropout_configured) {
    cfg.model.head.dropout = 0.5;
  }
}

struct TrainOutput {
  Model model;
  std::vector<train::EpochRecord> log;
  ingest::ChannelStats stats;
};

/// Trains per cfg.mode inside `dir`: train_log.jsonl gets one line per epoch
/// and checkpoint.ckpt always holds the latest epoch.
TrainOutput run_training(RunConfig& cfg, const ingest::DatasetManifest& manifest, const fs::path& dir,
                         const TrainArgs& args, bool echo, bool full_pipeline) {
  const train::TrainingSet data = train::TrainingSet::from_manifest(manifest);
  const fs::path ckpt = dir / "checkpoint.ckpt";
  std::ofstream log_file(dir / "train_log.jsonl");
  if (!log_file) throw DataError("cannot write " + (dir / "train_log.jsonl").string());
  bool saved = false;
  auto on_epoch = [&](const train::EpochRecord& r, const train::TrainState& state) {
    const std::string line = r.to_json_line();
    log_file << line << '\n' << std::flush;
    if (echo) std::cout << line << '\n' << std::flush;
    checkpoint::save(state, ckpt);
    saved = true;
  };

  std::optional<train::InducedResult> result;
  try {
    if (args.resume) {
      train::TrainState state = checkpoint::restore(*args.resume);
      cfg.model = state.model.config();
      cfg.validate();
      result = train::resume(std::move(state), data, cfg.train, cfg.mode == TrainMode::kRPP, on_epoch);
    } else if (cfg.mode == TrainMode::kRPP && !full_pipeline) {
      if (cfg.from.empty()) throw ConfigError("--mode rpp requires --from <pcb checkpoint> unless --no-induction");
      const train::TrainState source = checkpoint::restore(cfg.from);
      if (source.model.config().rpp.enabled) throw ConfigError("--from must name a uniformly trained model");
      if (args.parts && source.model.parts() != cfg.model.head.effective_parts()) {
        throw ShapeError("--from model has p=" + std::to_string(source.model.parts()) + ", requested p=" +
                         std::to_string(cfg.model.head.effective_parts()));
      }
      cfg.model = source.model.config();
      cfg.apply_mode();
      cfg.validate();
      result = train::refine(source.model, data, cfg.train, on_epoch);
    } else if (cfg.mode == TrainMode::kRPP || cfg.mode == TrainMode::kRPPNoInduction) {
      result = train::induced_training(data, cfg.model, cfg.train, on_epoch);
    } else {
      ModelConfig model = cfg.model;
      Model fresh(model, cfg.train.seed);
      if (args.pretrained) checkpoint::load_pretrained(fresh, *args.pretrained);
      train::TrainState state = train::make_state(std::move(fresh), train::Phase::kPcbUniform, cfg.train, data.stats);
      auto log = train::train_phase(state, data, cfg.train, std::numeric_limits<int>::max(), on_epoch);
      result = train::InducedResult{std::move(state.model), std::move(log)};
    }
  } catch (const NumericError& e) {
    nlohmann::ordered_json abort;
    abort["error"] = e.what();
    abort["last_checkpoint"] = saved ? ckpt.string() : "";
    write_text(dir / "abort.json", abort.dump(2) + "\n");
    throw;
  }
  if (!saved) {
    train::TrainState state =
        train::make_state(std::move(result->model), train::Phase::kRppFinetune, cfg.train, data.stats);
    checkpoint::save(state, ckpt);
    return {std::move(state.model), std::move(result->log), data.stats};
  }
  return {std::move(result->model), std::move(result->log), data.stats};
}

retrieval::EvalResult run_eval(Model& model, const ingest::DatasetManifest& manifest,
                               const ingest::ChannelStats& stats, const EvalConfig& eval) {
  const auto index = retrieval::build_index(manifest, model, eval.kind, stats, eval.metric);
  const auto queries = retrieval::describe_split(manifest, ingest::Split::kQuery, model, eval.kind, stats);
  return retrieval::evaluate(queries, index, eval.ranks);
}

void apply_eval_flags(RunConfig& cfg, const EvalArgs& a) {
  if (a.checkpoint) cfg.checkpoint = *a.checkpoint;
  if (a.dataset) cfg.dataset = *a.dataset;
  if (a.kind) cfg.eval.kind = retrieval::descriptor_kind_from_string(*a.kind);
  if (a.metric) cfg.eval.metric = retrieval::metric_from_string(*a.metric);
  if (a.ranks) cfg.eval.ranks = *a.ranks;
}

/// Restores the checkpoint named in cfg and adopts its model and mode.
train::TrainState load_trained(RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("a checkpoint is required (--checkpoint)");
  if (!fs::exists(cfg.checkpoint)) throw DataError("checkpoint not found: " + cfg.checkpoint);
  train::TrainState state = checkpoint::restore(cfg.checkpoint);
  cfg.model = state.model.config();
  if (cfg.model.rpp.enabled) {
    cfg.mode = cfg.model.rpp.induced ? TrainMode::kRPP : TrainMode::kRPPNoInduction;
  } else {
    switch (cfg.model.head.mode) {
      case partition::HeadMode::kIDE: cfg.mode = TrainMode::kIDE; break;
      case partition::HeadMode::kVariant1: cfg.mode = TrainMode::kVariant1; break;
      case partition::HeadMode::kVariant2: cfg.mode = TrainMode::kVariant2; break;
      case partition::HeadMode::kPCB: cfg.mode = TrainMode::kPCB; break;
    }
  }
  cfg.train.no_induction = cfg.mode == TrainMode::kRPPNoInduction;
  return state;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("bad ") + what + " value '" + item + "'");
    }
  }
  return out;
}

int parse_int(const std::string& text, const char* what) {
  const auto v = parse_int_list(text, what);
  if (v.size() != 1) throw ConfigError(std::string("bad ") + what + " value '" + text + "'");
  return v.front();
}

/// Four 3x3 stages (8, 16, 32, 64 channels) whose stride-2 stages give a
/// total down-sampling factor d.
backbone::BackboneConfig backbone_for_downsample(int d) {
  int k = 0;
  while ((1 << k) < d) ++k;
  if (d < 1 || (1 << k) != d || k > 3) throw ConfigError("downsample sweep values must be 1, 2, 4 or 8");
  backbone::BackboneConfig b;
  b.halve_last_downsample = false;
  const int channels[4] = {8, 16, 32, 64};
  for (int i = 0; i < 4; ++i) b.stages.push_back({channels[i], (i >= 1 && i <= k) ? 2 : 1});
  return b;
}

void print_run(const fs::path& dir) { std::cerr << "run directory: " << dir.string() << '\n'; }

}  // namespace

int cmd_synth(const SynthArgs& a) {
  RunConfig cfg = base_config(a.common);
  auto& o = cfg.synth;
  if (a.num_ids) o.num_ids = *a.num_ids;
  if (a.imgs_per_id) o.imgs_per_id = *a.imgs_per_id;
  if (a.bands) o.bands = *a.bands;
  if (a.shift_rows) o.shift_rows = *a.shift_rows;
  if (a.height) o.height = *a.height;
  if (a.width) o.width = *a.width;
  if (a.noise) o.noise = *a.noise;
  if (a.seed) o.seed = *a.seed;
  cfg.validate();
  const ingest::DatasetManifest manifest = ingest::generate_synthetic(o);

  const fs::path dir = make_run_dir(output_root(a.common.out_root), "synth", a.common.run_name);
  const fs::path dest = a.dest ? fs::path(*a.dest) : dir / "dataset";
  if (fs::exists(dest) && !fs::is_empty(dest)) {
    if (!a.force) throw ConfigError("dataset directory " + dest.string() + " exists; pass --force to overwrite");
    fs::remove_all(dest);
  }
  ingest::write_dataset(manifest, dest);
  cfg.dataset = dest.string();
  save_run_config(cfg, dir / "config.json");
  std::cout << dest.string() << '\n';
  print_run(dir);
  return 0;
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = base_config(a.common);
  apply_train_flags(cfg, a);
  const ingest::DatasetManifest manifest = load_dataset(cfg.dataset);
  fit_to_data(cfg.model, manifest);
  cfg.validate();
  const fs::path dir = make_run_dir(output_root(a.common.out_root), "train", a.common.run_name);
  save_run_config(cfg, dir / "config.json");
  TrainOutput out = run_training(cfg, manifest, dir, a, true, false);
  save_run_config(cfg, dir / "config.json");
  std::cout << (dir / "checkpoint.ckpt").string() << '\n';
  print_run(dir);
  return 0;
}

int cmd_extract(const ExtractArgs& a) {
  RunConfig cfg = base_config(a.eval.common);
  apply_eval_flags(cfg, a.eval);
  train::TrainState state = load_trained(cfg);
  const ingest::DatasetManifest manifest = load_dataset(cfg.dataset);
  cfg.validate();
  std::vector<ingest::Split> splits;
  if (a.split == "all") {
    splits = {ingest::Split::kQuery, ingest::Split::kGallery};
  } else {
    splits = {ingest::split_from_string(a.split)};
  }
  const fs::path dir = make_run_dir(output_root(a.eval.common.out_root), "extract", a.eval.common.run_name);
  save_run_config(cfg, dir / "config.json");
  const std::string hash = checkpoint::file_hash(cfg.checkpoint);
  for (ingest::Split split : splits) {
    const auto rows = retrieval::describe_split(manifest, split, state.model, cfg.eval.kind, state.normalization);
    const std::string stem = "descriptors_" + ingest::to_string(split);
    retrieval::write_descriptors(rows, dir / (stem + ".bin"), dir / (stem + ".json"), hash);
    std::cout << (dir / (stem + ".bin")).string() << '\n';
  }
  print_run(dir);
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = base_config(a.common);
  apply_eval_flags(cfg, a);
  train::TrainState state = load_trained(cfg);
  const ingest::DatasetManifest manifest = load_dataset(cfg.dataset);
  cfg.validate();
  const fs::path dir = make_run_dir(output_root(a.common.out_root), "eval", a.common.run_name);
  save_run_config(cfg, dir / "config.json");
  const retrieval::EvalResult result = run_eval(state.model, manifest, state.normalization, cfg.eval);
  const std::string json = result.to_json(cfg.eval.ranks) + "\n";
  write_text(dir / "metrics.json", json);
  std::cout << json;
  print_run(dir);
  return 0;
}

int cmd_diagnose(const DiagnoseArgs& a) {
  RunConfig cfg = base_config(a.common);
  if (a.checkpoint) cfg.checkpoint = *a.checkpoint;
  if (a.dataset) cfg.dataset = *a.dataset;
  if (a.empty_fraction) cfg.diagnose.empty_fraction = *a.empty_fraction;
  if (a.duplicate_cosine) cfg.diagnose.duplicate_cosine = *a.duplicate_cosine;
  if (a.limit < 1) throw ConfigError("--limit must be positive");
  train::TrainState state = load_trained(cfg);
  const ingest::DatasetManifest manifest = load_dataset(cfg.dataset);
  cfg.validate();
  auto samples = manifest.split(ingest::split_from_string(a.split));
  if (samples.empty()) throw DataError("split " + a.split + " is empty");
  if (static_cast<int>(samples.size()) > a.limit) samples.resize(a.limit);

  const fs::path dir = make_run_dir(output_root(a.common.out_root), "diagnose", a.common.run_name);
  save_run_config(cfg, dir / "config.json");
  const diagnose::ModelDiagnosis diag = diagnose::analyze(state.model, samples, state.normalization, cfg.diagnose);
  const fs::path maps = dir / "maps";
  for (const auto& im : diag.images) {
    const std::string stem = fs::path(im.path).stem().string();
    diagnose::write_grid(im.nearest, maps / (stem + "_nearest.txt"));
    diagnose::write_png(im.nearest, maps / (stem + "_nearest.png"), a.cell);
    if (im.refined) {
      diagnose::write_grid(im.refined->map, maps / (stem + "_rpp.txt"));
      diagnose::write_png(im.refined->map, maps / (stem + "_rpp.png"), a.cell);
    }
  }
  const std::string json = diag.to_json() + "\n";
  write_text(dir / "diagnose.json", json);
  std::cout << "images " << diag.images.size() << ", mean outlier rate " << diag.mean_outlier_rate
            << ", collapsed " << diag.collapsed_images << '\n';
  print_run(dir);
  return 0;
}

int cmd_sweep(const SweepArgs& a) {
  if (a.values.empty()) throw ConfigError("--values must list at least one setting");
  if (a.seeds.empty()) throw ConfigError("--seeds must list at least one seed");
  if (a.param != "p" && a.param != "input" && a.param != "downsample") {
    throw ConfigError("--param must be p, input or downsample");
  }
  RunConfig base = base_config(a.train.common);
  apply_train_flags(base, a.train);
  if (a.kind) base.eval.kind = retrieval::descriptor_kind_from_string(*a.kind);
  if (a.ranks) base.eval.ranks = *a.ranks;
  if (a.param == "input" && !base.dataset.empty()) {
    throw ConfigError("an input-size sweep synthesizes its data; drop --dataset");
  }
  std::optional<ingest::DatasetManifest> fixed;
  if (!base.dataset.empty()) fixed = load_dataset(base.dataset);

  const fs::path dir = make_run_dir(output_root(a.train.common.out_root), "sweep", a.train.common.run_name);
  save_run_config(base, dir / "config.json");
  std::vector<std::string> labels;
  std::vector<retrieval::EvalResult> results;
  std::vector<int> flags;
  for (const std::string& value : a.values) {
    for (std::uint64_t seed : a.seeds) {
      RunConfig cfg = base;
      cfg.train.seed = seed;
      ingest::SyntheticOptions synth = cfg.synth;
      if (a.param == "p") {
        cfg.model.head.parts = parse_int(value, "p");
      } else if (a.param == "downsample") {
        cfg.model.backbone = backbone_for_downsample(parse_int(value, "downsample"));
      } else {
        const auto x = value.find('x');
        if (x == std::string::npos) throw ConfigError("input sweep values look like 96x32, got " + value);
        synth.height = parse_int(value.substr(0, x), "input height");
        synth.width = parse_int(value.substr(x + 1), "input width");
      }
      const ingest::DatasetManifest manifest = fixed ? *fixed : ingest::generate_synthetic(synth);
      fit_to_data(cfg.model, manifest);
      cfg.validate();
      const std::string label = a.seeds.size() > 1 ? value + "/seed" + std::to_string(seed) : value;
      fs::path sub = dir / (a.param + "=" + value);
      if (a.seeds.size() > 1) sub /= "seed" + std::to_string(seed);
      fs::create_directories(sub);
      save_run_config(cfg, sub / "config.json");
      TrainOutput out = run_training(cfg, manifest, sub, a.train, false, true);
      const retrieval::EvalResult result = run_eval(out.model, manifest, out.stats, cfg.eval);
      write_text(sub / "metrics.json", result.to_json(cfg.eval.ranks) + "\n");
      int collapse = 0;
      if (cfg.model.rpp.enabled) {
        const auto queries = manifest.split(ingest::Split::kQuery);
        collapse = diagnose::analyze(out.model, queries, out.stats, cfg.diagnose).collapsed_images;
      }
      std::cout << a.param << "=" << label << " rank1=" << result.cmc_at(1) << " mAP=" << result.map
                << " collapse_flags=" << collapse << '\n';
      labels.push_back(label);
      results.push_back(result);
      flags.push_back(collapse);
    }
  }
  const diagnose::SweepReport report = diagnose::sweep_report(a.param, labels, results, flags);
  diagnose::write_sweep(report, dir);
  std::cout << (dir / "sweep.json").string() << '\n';
  print_run(dir);
  return 0;
}

}  // namespace pcb::cli

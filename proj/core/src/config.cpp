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

#include "pcb/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace pcb {

namespace {

/// Reads optional keys of one JSON object, rejecting keys not in `allowed`.
class Fields {
 public:
  Fields(const Json& j, std::string context, std::initializer_list<const char*> allowed)
      : j_(j), context_(std::move(context)) {
    if (!j.is_object()) throw ConfigError(context_ + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
      if (!known) throw ConfigError("unknown key '" + key + "' in " + context_);
    }
  }

  template <class T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  std::optional<std::string> text(const char* key) const {
    std::string s;
    if (!j_.contains(key)) return std::nullopt;
    get(key, s);
    return s;
  }

 private:
  const Json& j_;
  std::string context_;
};

}  // namespace

namespace backbone {

void to_json(Json& j, const StageSpec& s) { j = Json{{"out_channels", s.out_channels}, {"downsample", s.downsample}}; }

void from_json(const Json& j, StageSpec& s) {
  Fields f(j, "stage", {"out_channels", "downsample"});
  f.get("out_channels", s.out_channels);
  f.get("downsample", s.downsample);
}

void to_json(Json& j, const BackboneConfig& c) {
  j = Json{{"stages", c.stages},
           {"halve_last_downsample", c.halve_last_downsample},
           {"input_height", c.input_height},
           {"input_width", c.input_width},
           {"input_channels", c.input_channels}};
}

void from_json(const Json& j, BackboneConfig& c) {
  c = BackboneConfig::toy();
  Fields f(j, "backbone", {"stages", "halve_last_downsample", "input_height", "input_width", "input_channels"});
  f.get("stages", c.stages);
  f.get("halve_last_downsample", c.halve_last_downsample);
  f.get("input_height", c.input_height);
  f.get("input_width", c.input_width);
  f.get("input_channels", c.input_channels);
}

}  // namespace backbone

namespace partition {

void to_json(Json& j, const HeadConfig& c) {
  j = Json{{"parts", c.parts},
           {"reduced_dim", c.reduced_dim},
           {"mode", to_string(c.mode)},
           {"num_classes", c.num_classes},
           {"dropout", c.dropout},
           {"reduce_norm", c.reduce_norm},
           {"shared_reduction", c.shared_reduction}};
}

void from_json(const Json& j, HeadConfig& c) {
  Fields f(j, "head", {"parts", "reduced_dim", "mode", "num_classes", "dropout", "reduce_norm", "shared_reduction"});
  f.get("parts", c.parts);
  f.get("reduced_dim", c.reduced_dim);
  if (auto mode = f.text("mode")) c.mode = head_mode_from_string(*mode);
  f.get("num_classes", c.num_classes);
  f.get("dropout", c.dropout);
  f.get("reduce_norm", c.reduce_norm);
  f.get("shared_reduction", c.shared_reduction);
}

}  // namespace partition

void to_json(Json& j, const RppConfig& c) {
  j = Json{{"enabled", c.enabled},
           {"normalize", c.normalize},
           {"bias", c.bias},
           {"epsilon", c.epsilon},
           {"induced", c.induced}};
}

void from_json(const Json& j, RppConfig& c) {
  Fields f(j, "rpp", {"enabled", "normalize", "bias", "epsilon", "induced"});
  f.get("enabled", c.enabled);
  f.get("normalize", c.normalize);
  f.get("bias", c.bias);
  f.get("epsilon", c.epsilon);
  f.get("induced", c.induced);
}

void to_json(Json& j, const ModelConfig& c) { j = Json{{"backbone", c.backbone}, {"head", c.head}, {"rpp", c.rpp}}; }

void from_json(const Json& j, ModelConfig& c) {
  Fields f(j, "model", {"backbone", "head", "rpp"});
  f.get("backbone", c.backbone);
  f.get("head", c.head);
  f.get("rpp", c.rpp);
}

namespace train {

void to_json(Json& j, const Schedule& s) {
  j = Json{{"base_lr", s.base_lr},
           {"decay_epoch", s.decay_epoch},
           {"total_epochs", s.total_epochs},
           {"decay_factor", s.decay_factor},
           {"rpp_lr", s.rpp_lr},
           {"rpp_classifier_epochs", s.rpp_classifier_epochs},
           {"rpp_finetune_epochs", s.rpp_finetune_epochs},
           {"pretrained_lr_scale", s.pretrained_lr_scale},
           {"batch_size", s.batch_size}};
}

void from_json(const Json& j, Schedule& s) {
  Fields f(j, "schedule",
           {"base_lr", "decay_epoch", "total_epochs", "decay_factor", "rpp_lr", "rpp_classifier_epochs",
            "rpp_finetune_epochs", "pretrained_lr_scale", "batch_size"});
  f.get("base_lr", s.base_lr);
  f.get("decay_epoch", s.decay_epoch);
  f.get("total_epochs", s.total_epochs);
  f.get("decay_factor", s.decay_factor);
  f.get("rpp_lr", s.rpp_lr);
  f.get("rpp_classifier_epochs", s.rpp_classifier_epochs);
  f.get("rpp_finetune_epochs", s.rpp_finetune_epochs);
  f.get("pretrained_lr_scale", s.pretrained_lr_scale);
  f.get("batch_size", s.batch_size);
}

void to_json(Json& j, const OptimizerConfig& c) {
  j = Json{{"momentum", c.momentum}, {"weight_decay", c.weight_decay}};
}

void from_json(const Json& j, OptimizerConfig& c) {
  Fields f(j, "optimizer", {"momentum", "weight_decay"});
  f.get("momentum", c.momentum);
  f.get("weight_decay", c.weight_decay);
}

void to_json(Json& j, const Convergence& c) {
  j = Json{{"enabled", c.enabled}, {"min_improvement", c.min_improvement}, {"patience", c.patience}};
}

void from_json(const Json& j, Convergence& c) {
  Fields f(j, "convergence", {"enabled", "min_improvement", "patience"});
  f.get("enabled", c.enabled);
  f.get("min_improvement", c.min_improvement);
  f.get("patience", c.patience);
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"schedule", c.schedule},
           {"optimizer", c.optimizer},
           {"convergence", c.convergence},
           {"flip_prob", c.flip_prob},
           {"seed", c.seed},
           {"no_induction", c.no_induction}};
}

void from_json(const Json& j, TrainConfig& c) {
  Fields f(j, "train", {"schedule", "optimizer", "convergence", "flip_prob", "seed", "no_induction"});
  f.get("schedule", c.schedule);
  f.get("optimizer", c.optimizer);
  f.get("convergence", c.convergence);
  f.get("flip_prob", c.flip_prob);
  f.get("seed", c.seed);
  f.get("no_induction", c.no_induction);
}

}  // namespace train

namespace ingest {

void to_json(Json& j, const SyntheticOptions& o) {
  j = Json{{"num_ids", o.num_ids}, {"imgs_per_id", o.imgs_per_id}, {"bands", o.bands}, {"shift_rows", o.shift_rows},
           {"seed", o.seed},       {"height", o.height},           {"width", o.width}, {"noise", o.noise}};
}

void from_json(const Json& j, SyntheticOptions& o) {
  Fields f(j, "synth", {"num_ids", "imgs_per_id", "bands", "shift_rows", "seed", "height", "width", "noise"});
  f.get("num_ids", o.num_ids);
  f.get("imgs_per_id", o.imgs_per_id);
  f.get("bands", o.bands);
  f.get("shift_rows", o.shift_rows);
  f.get("seed", o.seed);
  f.get("height", o.height);
  f.get("width", o.width);
  f.get("noise", o.noise);
}

void to_json(Json& j, const ChannelStats& s) { j = Json{{"mean", s.mean}, {"std", s.std}}; }

void from_json(const Json& j, ChannelStats& s) {
  Fields f(j, "normalization", {"mean", "std"});
  f.get("mean", s.mean);
  f.get("std", s.std);
}

}  // namespace ingest

namespace diagnose {

void to_json(Json& j, const CollapseOptions& o) {
  j = Json{{"empty_fraction", o.empty_fraction}, {"duplicate_cosine", o.duplicate_cosine}};
}

void from_json(const Json& j, CollapseOptions& o) {
  Fields f(j, "diagnose", {"empty_fraction", "duplicate_cosine"});
  f.get("empty_fraction", o.empty_fraction);
  f.get("duplicate_cosine", o.duplicate_cosine);
}

}  // namespace diagnose

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kIDE: return "ide";
    case TrainMode::kPCB: return "pcb";
    case TrainMode::kVariant1: return "variant1";
    case TrainMode::kVariant2: return "variant2";
    case TrainMode::kRPP: return "rpp";
    case TrainMode::kRPPNoInduction: return "rpp-no-induction";
  }
  return "unknown";
}

TrainMode train_mode_from_string(const std::string& name) {
  for (TrainMode m : {TrainMode::kIDE, TrainMode::kPCB, TrainMode::kVariant1, TrainMode::kVariant2, TrainMode::kRPP,
                      TrainMode::kRPPNoInduction}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown train mode: " + name + " (ide|pcb|variant1|variant2|rpp|rpp-no-induction)");
}

void to_json(Json& j, const EvalConfig& c) {
  j = Json{{"ranks", c.ranks}, {"kind", retrieval::to_string(c.kind)}, {"metric", retrieval::to_string(c.metric)}};
}

void from_json(const Json& j, EvalConfig& c) {
  Fields f(j, "eval", {"ranks", "kind", "metric"});
  f.get("ranks", c.ranks);
  if (auto kind = f.text("kind")) c.kind = retrieval::descriptor_kind_from_string(*kind);
  if (auto metric = f.text("metric")) c.metric = retrieval::metric_from_string(*metric);
}

void RunConfig::apply_mode() {
  using partition::HeadMode;
  switch (mode) {
    case TrainMode::kIDE: model.head.mode = HeadMode::kIDE; break;
    case TrainMode::kPCB: model.head.mode = HeadMode::kPCB; break;
    case TrainMode::kVariant1: model.head.mode = HeadMode::kVariant1; break;
    case TrainMode::kVariant2: model.head.mode = HeadMode::kVariant2; break;
    case TrainMode::kRPP:
    case TrainMode::kRPPNoInduction: model.head.mode = HeadMode::kPCB; break;
  }
  const bool refined = mode == TrainMode::kRPP || mode == TrainMode::kRPPNoInduction;
  model.rpp.enabled = refined;
  model.rpp.induced = mode == TrainMode::kRPP;
  train.no_induction = mode == TrainMode::kRPPNoInduction;
}

void RunConfig::validate() const {
  model.validate();
  train.schedule.validate();
  if (train.flip_prob < 0.0 || train.flip_prob > 1.0) throw ConfigError("flip_prob must lie in [0, 1]");
  if (train.optimizer.momentum < 0.0 || train.optimizer.momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (train.optimizer.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (train.convergence.patience < 1) throw ConfigError("convergence patience must be at least 1");
  if (eval.ranks.empty()) throw ConfigError("eval.ranks must not be empty");
  for (int k : eval.ranks) {
    if (k < 1) throw ConfigError("eval.ranks must be positive");
  }
  if (synth.bands < 2) throw ConfigError("synth.bands must be at least 2");
  if (synth.num_ids < 1 || synth.imgs_per_id < 1) throw ConfigError("synth needs positive num_ids and imgs_per_id");
  if (synth.shift_rows < 0) throw ConfigError("synth.shift_rows must be non-negative");
  if (diagnose.empty_fraction < 0.0 || diagnose.duplicate_cosine > 1.0) throw ConfigError("invalid diagnose thresholds");

  const bool refined = mode == TrainMode::kRPP || mode == TrainMode::kRPPNoInduction;
  if (model.rpp.enabled != refined) throw ConfigError("model.rpp.enabled contradicts train mode " + to_string(mode));
  if (train.no_induction != (mode == TrainMode::kRPPNoInduction)) {
    throw ConfigError("train.no_induction contradicts train mode " + to_string(mode));
  }
}

void to_json(Json& j, const RunConfig& c) {
  j = Json{{"mode", to_string(c.mode)}, {"model", c.model},   {"train", c.train},     {"synth", c.synth},
           {"eval", c.eval},            {"diagnose", c.diagnose}, {"dataset", c.dataset}, {"from", c.from},
           {"checkpoint", c.checkpoint}};
}

void from_json(const Json& j, RunConfig& c) {
  Fields f(j, "config", {"mode", "model", "train", "synth", "eval", "diagnose", "dataset", "from", "checkpoint"});
  if (auto mode = f.text("mode")) c.mode = train_mode_from_string(*mode);
  f.get("model", c.model);
  f.get("train", c.train);
  f.get("synth", c.synth);
  f.get("eval", c.eval);
  f.get("diagnose", c.diagnose);
  f.get("dataset", c.dataset);
  f.get("from", c.from);
  f.get("checkpoint", c.checkpoint);
}

RunConfig parse_run_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  from_json(j, c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  Json j;
  to_json(j, config);
  out << j.dump(2) << '\n';
}

ModelConfig parse_model_config(const Json& j) {
  ModelConfig c;
  from_json(j, c);
  return c;
}

}  // namespace pcb

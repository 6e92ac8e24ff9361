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

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "generators.hpp"
#include "pcb/checkpoint.hpp"
#include "pcb/train.hpp"

using namespace pcb;
using namespace pcb::train;
namespace fs = std::filesystem;

namespace {

TrainingSet small_set() {
  ingest::SyntheticOptions o;
  o.num_ids = 8;
  o.imgs_per_id = 8;
  return TrainingSet::from_manifest(ingest::generate_synthetic(o));
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.schedule.total_epochs = epochs;
  c.schedule.decay_epoch = epochs / 2;
  c.schedule.batch_size = 8;
  c.schedule.rpp_classifier_epochs = 2;
  c.schedule.rpp_finetune_epochs = 2;
  c.convergence.enabled = false;
  c.seed = 99;
  return c;
}

ModelConfig model_config(int classes, int parts = 4) {
  ModelConfig m;
  m.head.parts = parts;
  m.head.num_classes = classes;
  m.head.reduced_dim = 16;
  return m;
}

void patch_bytes(const fs::path& path, std::streamoff offset, const std::string& bytes) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(offset);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("save then restore: bit-identical parameters, phase, epoch, seed and forward outputs") {
    const TrainingSet data = small_set();
    const TrainConfig config = quick_config(4);
    TrainState state = make_state(Model(model_config(data.num_classes), 5), Phase::kPcbUniform, config, data.stats);
    train_phase(state, data, config, 2);
    const fs::path dir = testing::scratch_dir("ckpt_roundtrip");
    checkpoint::save(state, dir / "a.ckpt");
    TrainState back = checkpoint::restore(dir / "a.ckpt");

    CHECK(back.phase == state.phase);
    CHECK(back.epoch == 2);
    CHECK(back.rng_seed == 99);
    CHECK(back.lr == state.lr);
    CHECK(back.steps == state.steps);
    CHECK(back.best_loss == state.best_loss);
    CHECK(back.normalization.mean == state.normalization.mean);
    CHECK(back.model.config() == state.model.config());
    for (const auto& [name, p] : state.model.params().params()) {
      const Parameter& q = back.model.params().at(name);
      CHECK(q.value == p.value);
      CHECK(q.velocity == p.velocity);
      CHECK(q.frozen == p.frozen);
    }
    for (const auto& [name, b] : state.model.params().buffers()) CHECK(back.model.params().buffer(name) == b);

    std::vector<const Image*> batch;
    std::vector<Image> normalized;
    for (int i = 0; i < 4; ++i) normalized.push_back(ingest::normalize(data.images[i], data.stats));
    for (const auto& im : normalized) batch.push_back(&im);
    const auto a = state.model.infer(batch);
    const auto b = back.model.infer(batch);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].probs == b[i].probs);
      CHECK(a[i].reduced == b[i].reduced);
    }
    CHECK(checkpoint::file_hash(dir / "a.ckpt").size() == 16);
    CHECK_FALSE(fs::exists(dir / "a.ckpt.tmp"));
  }

  TEST_CASE("refined checkpoints keep the freeze mask and induction flag") {
    const TrainingSet data = small_set();
    const TrainConfig config = quick_config(2);
    Model pcb(model_config(data.num_classes), 6);
    TrainState state = make_state(rpp::build_rpp_head(pcb, true), Phase::kRppClassifierOnly, config, data.stats);
    train_phase(state, data, config, 1);
    const fs::path dir = testing::scratch_dir("ckpt_refined");
    checkpoint::save(state, dir / "r.ckpt");
    const TrainState back = checkpoint::restore(dir / "r.ckpt");
    CHECK(back.phase == Phase::kRppClassifierOnly);
    CHECK(back.model.config().rpp.induced);
    for (const auto& [name, p] : back.model.params().params()) CHECK(p.frozen == !Model::is_part_classifier(name));
    CHECK(checkpoint::peek_config(dir / "r.ckpt") == state.model.config());
  }

  TEST_CASE("restore into a mismatched part count is refused") {
    const TrainingSet data = small_set();
    const TrainState state =
        make_state(Model(model_config(data.num_classes, 4), 1), Phase::kPcbUniform, quick_config(2), data.stats);
    const fs::path dir = testing::scratch_dir("ckpt_mismatch");
    checkpoint::save(state, dir / "p4.ckpt");
    CHECK_THROWS_AS(checkpoint::restore(dir / "p4.ckpt", model_config(data.num_classes, 6)), ShapeError);
    CHECK_NOTHROW(checkpoint::restore(dir / "p4.ckpt", model_config(data.num_classes, 4)));
    ModelConfig other = model_config(data.num_classes, 4);
    other.head.reduced_dim = 8;
    CHECK_THROWS_AS(checkpoint::restore(dir / "p4.ckpt", other), ConfigError);
    Model wrong(model_config(data.num_classes, 6), 1);
    CHECK_THROWS_AS(checkpoint::restore_into(wrong, dir / "p4.ckpt"), ShapeError);
  }

  TEST_CASE("bad magic, unsupported version and truncation are refused") {
    const TrainingSet data = small_set();
    const TrainState state =
        make_state(Model(model_config(data.num_classes), 1), Phase::kPcbUniform, quick_config(2), data.stats);
    const fs::path dir = testing::scratch_dir("ckpt_corrupt");
    checkpoint::save(state, dir / "ok.ckpt");

    fs::copy_file(dir / "ok.ckpt", dir / "magic.ckpt");
    patch_bytes(dir / "magic.ckpt", 0, "XXXX");
    CHECK_THROWS_AS(checkpoint::restore(dir / "magic.ckpt"), DataError);

    fs::copy_file(dir / "ok.ckpt", dir / "version.ckpt");
    patch_bytes(dir / "version.ckpt", 8, std::string("\x07\x00\x00\x00", 4));
    CHECK_THROWS_AS(checkpoint::restore(dir / "version.ckpt"), DataError);

    fs::copy_file(dir / "ok.ckpt", dir / "short.ckpt");
    fs::resize_file(dir / "short.ckpt", fs::file_size(dir / "ok.ckpt") - 8);
    CHECK_THROWS_AS(checkpoint::restore(dir / "short.ckpt"), DataError);

    CHECK_THROWS_AS(checkpoint::restore(dir / "missing.ckpt"), DataError);
  }

  TEST_CASE("resumed training reproduces the uninterrupted loss sequence") {
    const TrainingSet data = small_set();
    const TrainConfig config = quick_config(4);
    const ModelConfig m = model_config(data.num_classes);
    // Uninterrupted: uniform phase then refinement.
    TrainState full = make_state(Model(m, config.seed), Phase::kPcbUniform, config, data.stats);
    std::vector<EpochRecord> expected = train_phase(full, data, config);
    const InducedResult full_refine = refine(full.model, data, config);
    expected.insert(expected.end(), full_refine.log.begin(), full_refine.log.end());

    // Interrupted after two epochs, restored from disk, resumed.
    TrainState part = make_state(Model(m, config.seed), Phase::kPcbUniform, config, data.stats);
    std::vector<EpochRecord> got = train_phase(part, data, config, 2);
    const fs::path dir = testing::scratch_dir("ckpt_resume");
    checkpoint::save(part, dir / "mid.ckpt");
    InducedResult resumed = resume(checkpoint::restore(dir / "mid.ckpt"), data, config, true);
    got.insert(got.end(), resumed.log.begin(), resumed.log.end());

    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i] == expected[i]);
    }
    for (const auto& [name, p] : full_refine.model.params().params()) {
      CHECK(resumed.model.params().at(name).value == p.value);
    }
  }

  TEST_CASE("resume inside the classifier-only phase finishes refinement identically") {
    const TrainingSet data = small_set();
    const TrainConfig config = quick_config(3);
    const InducedResult base = train_uniform(data, model_config(data.num_classes), config);
    const InducedResult full = refine(base.model, data, config);

    TrainState part = make_state(rpp::build_rpp_head(base.model, true), Phase::kRppClassifierOnly, config, data.stats);
    std::vector<EpochRecord> got = train_phase(part, data, config, 1);
    const fs::path dir = testing::scratch_dir("ckpt_resume_rpp");
    checkpoint::save(part, dir / "mid.ckpt");
    const InducedResult rest = resume(checkpoint::restore(dir / "mid.ckpt"), data, config, true);
    got.insert(got.end(), rest.log.begin(), rest.log.end());
    CHECK(got == full.log);
  }

  TEST_CASE("load_pretrained copies backbone arrays and marks them pretrained") {
    const TrainingSet data = small_set();
    const TrainState source =
        make_state(Model(model_config(data.num_classes), 3), Phase::kPcbUniform, quick_config(2), data.stats);
    const fs::path dir = testing::scratch_dir("ckpt_pretrained");
    checkpoint::save(source, dir / "src.ckpt");
    Model target(model_config(data.num_classes + 1), 4);
    const int copied = checkpoint::load_pretrained(target, dir / "src.ckpt");
    CHECK(copied > 0);
    for (const auto& [name, p] : target.params().params()) {
      if (Model::is_backbone(name)) {
        CHECK(p.pretrained);
        CHECK(p.value == source.model.params().at(name).value);
      } else {
        CHECK_FALSE(p.pretrained);
      }
    }
  }
}

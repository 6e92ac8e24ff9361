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

#include "pcb/checkpoint.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "pcb/config.hpp"

namespace pcb::checkpoint {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

constexpr std::array<char, 8> kMagic{'P', 'C', 'B', 'C', 'K', 'P', 'T', '\0'};

struct ArrayRef {
  std::string name;
  std::string kind;
  Eigen::Index rows;
  Eigen::Index cols;
  std::uint64_t offset;
};

struct Archive {
  Json header;
  std::vector<double> payload;
  std::map<std::pair<std::string, std::string>, ArrayRef> arrays;

  const ArrayRef* find(const std::string& name, const std::string& kind) const {
    auto it = arrays.find({name, kind});
    return it == arrays.end() ? nullptr : &it->second;
  }

  Matrix matrix(const ArrayRef& a) const {
    Matrix m(a.rows, a.cols);
    std::memcpy(m.data(), payload.data() + a.offset, static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
  }
};

template <class T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_raw(std::ifstream& in, const fs::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("truncated checkpoint " + path.string());
  return value;
}

Json read_header(std::ifstream& in, const fs::path& path) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError(path.string() + " is not a checkpoint");
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kFormatVersion) {
    throw DataError("checkpoint " + path.string() + " has format version " + std::to_string(version) + ", expected " +
                    std::to_string(kFormatVersion));
  }
  const auto length = read_raw<std::uint64_t>(in, path);
  if (length > fs::file_size(path)) throw DataError("corrupt checkpoint header length in " + path.string());
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw DataError("truncated checkpoint " + path.string());
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
}

Archive read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Archive ar;
  ar.header = read_header(in, path);
  try {
    const auto count = ar.header.at("payload_doubles").get<std::uint64_t>();
    ar.payload.resize(count);
    in.read(reinterpret_cast<char*>(ar.payload.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint payload in " + path.string());
    for (const auto& a : ar.header.at("arrays")) {
      ArrayRef ref{a.at("name").get<std::string>(), a.at("kind").get<std::string>(), a.at("rows").get<Eigen::Index>(),
                   a.at("cols").get<Eigen::Index>(), a.at("offset").get<std::uint64_t>()};
      if (ref.rows < 0 || ref.cols < 0 ||
          ref.offset + static_cast<std::uint64_t>(ref.rows * ref.cols) > ar.payload.size()) {
        throw DataError("checkpoint array " + ref.name + " lies outside the payload");
      }
      ar.arrays.emplace(std::make_pair(ref.name, ref.kind), ref);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  return ar;
}

const ArrayRef& require(const Archive& ar, const std::string& name, const std::string& kind, const Matrix& like) {
  const ArrayRef* a = ar.find(name, kind);
  if (a == nullptr) throw ShapeError("checkpoint lacks " + kind + " array " + name);
  if (a->rows != like.rows() || a->cols != like.cols()) {
    throw ShapeError("checkpoint array " + name + " is " + std::to_string(a->rows) + "x" + std::to_string(a->cols) +
                     ", model expects " + std::to_string(like.rows()) + "x" + std::to_string(like.cols()));
  }
  return *a;
}

void copy_all(const Archive& ar, Model& model) {
  std::size_t expected_arrays = 0;
  for (auto& [name, p] : model.params().params()) {
    p.value = ar.matrix(require(ar, name, "value", p.value));
    p.velocity = ar.matrix(require(ar, name, "velocity", p.velocity));
    p.grad.setZero();
    expected_arrays += 2;
  }
  for (auto& [name, b] : model.params().buffers()) {
    b = ar.matrix(require(ar, name, "buffer", b));
    ++expected_arrays;
  }
  if (expected_arrays != ar.arrays.size()) throw ShapeError("checkpoint holds arrays the model does not have");
  for (const auto& a : ar.header.at("arrays")) {
    if (a.at("kind") != "value") continue;
    Parameter& p = model.params().at(a.at("name").get<std::string>());
    p.frozen = a.at("frozen").get<bool>();
    p.pretrained = a.at("pretrained").get<bool>();
  }
}

}  // namespace

void save(const train::TrainState& state, const fs::path& path) {
  Json header;
  header["format"] = "pcbreid-checkpoint";
  header["model"] = state.model.config();
  header["phase"] = train::to_string(state.phase);
  header["epoch"] = state.epoch;
  header["lr"] = state.lr;
  header["seed"] = state.rng_seed;
  header["steps"] = state.steps;
  header["normalization"] = state.normalization;
  header["progress"] = Json{{"best_loss", std::isfinite(state.best_loss) ? Json(state.best_loss) : Json(nullptr)},
                            {"stale_epochs", state.stale_epochs},
                            {"converged", state.converged},
                            {"joint", state.joint}};
  header["induced"] = state.model.config().rpp.induced;

  std::vector<const Matrix*> blocks;
  Json arrays = Json::array();
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const char* kind, const Matrix& m, bool frozen, bool pretrained) {
    arrays.push_back(Json{{"name", name},
                          {"kind", kind},
                          {"rows", m.rows()},
                          {"cols", m.cols()},
                          {"offset", offset},
                          {"frozen", frozen},
                          {"pretrained", pretrained}});
    blocks.push_back(&m);
    offset += static_cast<std::uint64_t>(m.size());
  };
  for (const auto& [name, p] : state.model.params().params()) {
    add(name, "value", p.value, p.frozen, p.pretrained);
    add(name, "velocity", p.velocity, p.frozen, p.pretrained);
  }
  for (const auto& [name, b] : state.model.params().buffers()) add(name, "buffer", b, false, false);
  header["arrays"] = std::move(arrays);
  header["payload_doubles"] = offset;

  const std::string text = header.dump();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write to a sibling file first so an interrupted save never clobbers a good checkpoint.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    write_raw(out, kFormatVersion);
    write_raw(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Matrix* m : blocks) {
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
    }
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

train::TrainState restore(const fs::path& path) {
  const Archive ar = read_archive(path);
  try {
    const Json& h = ar.header;
    ModelConfig config;
    try {
      config = parse_model_config(h.at("model"));
    } catch (const ConfigError& e) {
      throw DataError("checkpoint model config is invalid: " + std::string(e.what()));
    }
    Model model(config, 0);
    copy_all(ar, model);
    const Json& progress = h.at("progress");
    train::TrainState state{.model = std::move(model),
                            .phase = train::phase_from_string(h.at("phase").get<std::string>()),
                            .epoch = h.at("epoch").get<int>(),
                            .lr = h.at("lr").get<double>(),
                            .rng_seed = h.at("seed").get<std::uint64_t>(),
                            .steps = h.at("steps").get<std::uint64_t>(),
                            .normalization = h.at("normalization").get<ingest::ChannelStats>(),
                            .stale_epochs = progress.at("stale_epochs").get<int>(),
                            .converged = progress.at("converged").get<bool>(),
                            .joint = progress.at("joint").get<bool>()};
    if (!progress.at("best_loss").is_null()) state.best_loss = progress.at("best_loss").get<double>();
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
}

train::TrainState restore(const fs::path& path, const ModelConfig& expected) {
  const ModelConfig stored = peek_config(path);
  if (stored.head.effective_parts() != expected.head.effective_parts()) {
    throw ShapeError("checkpoint has p=" + std::to_string(stored.head.effective_parts()) + ", expected p=" +
                     std::to_string(expected.head.effective_parts()));
  }
  if (stored.tensor_shape() != expected.tensor_shape()) throw ShapeError("checkpoint tensor shape differs from the expected model");
  if (stored != expected) throw ConfigError("checkpoint model config differs from the expected model");
  return restore(path);
}

void restore_into(Model& model, const fs::path& path) {
  const Archive ar = read_archive(path);
  const ModelConfig stored = parse_model_config(ar.header.at("model"));
  if (stored.head.effective_parts() != model.parts()) {
    throw ShapeError("checkpoint has p=" + std::to_string(stored.head.effective_parts()) + ", model has p=" +
                     std::to_string(model.parts()));
  }
  copy_all(ar, model);
}

int load_pretrained(Model& model, const fs::path& path) {
  const Archive ar = read_archive(path);
  int copied = 0;
  for (auto& [name, p] : model.params().params()) {
    if (!Model::is_backbone(name)) continue;
    p.value = ar.matrix(require(ar, name, "value", p.value));
    p.velocity.setZero();
    p.pretrained = true;
    ++copied;
  }
  for (auto& [name, b] : model.params().buffers()) {
    if (!Model::is_backbone(name)) continue;
    b = ar.matrix(require(ar, name, "buffer", b));
    ++copied;
  }
  return copied;
}

ModelConfig peek_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const Json header = read_header(in, path);
  try {
    return parse_model_config(header.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::uint64_t h = fnv1a(std::as_bytes(std::span(bytes)));
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(h));
  return buf.data();
}

}  // namespace pcb::checkpoint

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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pcb/train.hpp"

namespace pcb::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Writes one archive: magic, version, a JSON header (model config, phase,
/// epoch, lr, seed, normalization, array metadata) and raw float64 arrays
/// holding every parameter value, momentum buffer and statistic buffer.
void save(const train::TrainState& state, const std::filesystem::path& path);

/// Restores bit-identical parameters, freeze flags, phase, epoch and seed.
/// Throws DataError on a bad magic, version or truncated payload.
train::TrainState restore(const std::filesystem::path& path);

/// As restore, but refuses a checkpoint whose model config differs from
/// `expected` (ShapeError for part count or tensor shape mismatches).
train::TrainState restore(const std::filesystem::path& path, const ModelConfig& expected);

/// Copies the parameters of a checkpoint into an existing model of the same
/// structure; names and shapes must match exactly.
void restore_into(Model& model, const std::filesystem::path& path);

/// Copies the backbone arrays of a checkpoint into `model` and marks them
/// pretrained (scaled learning rate). Returns the number of arrays copied.
int load_pretrained(Model& model, const std::filesystem::path& path);

/// Model config stored in a checkpoint header, without reading the payload.
ModelConfig peek_config(const std::filesystem::path& path);

/// 16 hex digit FNV-1a hash of the file bytes.
std::string file_hash(const std::filesystem::path& path);

}  // namespace pcb::checkpoint

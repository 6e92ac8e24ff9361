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

#include <filesystem>
#include <optional>
#include <string>

namespace pcb::cli {

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "PCB_OUTPUT_ROOT";

/// Flag value, else $PCB_OUTPUT_ROOT, else ./runs.
std::filesystem::path output_root(const std::optional<std::string>& flag);

/// Creates root/<UTC timestamp>-<command> (or root/<name> when given). A
/// numeric suffix keeps existing directories untouched.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command,
                                   const std::optional<std::string>& name = std::nullopt);

}  // namespace pcb::cli

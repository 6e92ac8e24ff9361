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

#include "run_dir.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "pcb/error.hpp"

namespace pcb::cli {

namespace fs = std::filesystem;

fs::path output_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') return env;
  return "runs";
}

fs::path make_run_dir(const fs::path& root, const std::string& command, const std::optional<std::string>& name) {
  std::string base;
  if (name && !name->empty()) {
    base = *name;
  } else {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::ostringstream os;
    os << std::put_time(&utc, "%Y%m%dT%H%M%SZ") << '-' << command;
    base = os.str();
  }
  fs::path dir = root / base;
  for (int suffix = 1; fs::exists(dir); ++suffix) dir = root / (base + "-" + std::to_string(suffix));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir;
}

}  // namespace pcb::cli

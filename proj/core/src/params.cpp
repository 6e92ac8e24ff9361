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

#include "pcb/params.hpp"

namespace pcb {

Parameter& ParamStore::add(const std::string& name, Matrix value) {
  auto [it, inserted] = params_.try_emplace(name, std::move(value));
  if (!inserted) throw ConfigError("duplicate parameter name: " + name);
  return it->second;
}

Matrix& ParamStore::add_buffer(const std::string& name, Matrix value) {
  auto [it, inserted] = buffers_.try_emplace(name, std::move(value));
  if (!inserted) throw ConfigError("duplicate buffer name: " + name);
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

Matrix& ParamStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ConfigError("unknown buffer: " + name);
  return it->second;
}

const Matrix& ParamStore::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ConfigError("unknown buffer: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.setZero();
}

void ParamStore::freeze_except(const std::function<bool(const std::string&)>& keep_trainable) {
  for (auto& [name, p] : params_) p.frozen = !keep_trainable(name);
}

void ParamStore::unfreeze_all() {
  for (auto& [_, p] : params_) p.frozen = false;
}

void ParamStore::reset_velocity() {
  for (auto& [_, p] : params_) p.velocity.setZero();
}

std::uint64_t ParamStore::checksum(const std::function<bool(const std::string&)>& filter) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& name, const Matrix& m) {
    h = fnv1a(std::as_bytes(std::span<const char>(name.data(), name.size())), h);
    h ^= pcb::checksum(m);
    h *= 0x100000001b3ULL;
  };
  for (const auto& [name, p] : params_) {
    if (filter(name)) mix(name, p.value);
  }
  for (const auto& [name, b] : buffers_) {
    if (filter(name)) mix(name, b);
  }
  return h;
}

}  // namespace pcb

// Copyright 2026 The stackmarl Authors.
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

#ifndef STACKMARL_CHECKPOINT_H_
#define STACKMARL_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "stackmarl/nn.h"

// Binary checkpoint of one or more networks.
//
// Layout (all integers little-endian):
//   8 bytes   magic "SMRLCKPT"
//   u32       format version
//   u64       manifest length n
//   n bytes   JSON manifest: free-form metadata plus, per network, its name,
//             spec, parameter layout and whether a mask follows
//   f64 * P   parameters of every network, in manifest order
//   bytes     masks of the networks that have one, each packed LSB-first and
//             padded to a whole byte
namespace stackmarl::nn {

inline constexpr uint32_t kCheckpointVersion = 1;

struct NetworkRecord {
  std::string name;
  NetSpec spec;
  Vec params;
  // Empty, or one entry (0/1) per parameter.
  std::vector<uint8_t> mask;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NetworkRecord> networks;

  const NetworkRecord& Find(const std::string& name) const;
};

nlohmann::json SpecToJson(const NetSpec& spec);
NetSpec SpecFromJson(const nlohmann::json& j);

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path);
// Throws NnError on a malformed or truncated file, or on a layout that does
// not match the one rebuilt from the stored spec.
Checkpoint LoadCheckpoint(const std::string& path);

}  // namespace stackmarl::nn

#endif  // STACKMARL_CHECKPOINT_H_

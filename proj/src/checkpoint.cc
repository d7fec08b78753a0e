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

#include "stackmarl/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace stackmarl::nn {
namespace {

constexpr char kMagic[8] = {'S', 'M', 'R', 'L', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

const char* KindName(NetKind kind) {
  switch (kind) {
    case NetKind::kBiLstmActor:
      return "bilstm_actor";
    case NetKind::kMlpActor:
      return "mlp_actor";
    case NetKind::kMlpCritic:
      return "mlp_critic";
  }
  return "";
}

NetKind KindFromName(const std::string& name) {
  if (name == "bilstm_actor") return NetKind::kBiLstmActor;
  if (name == "mlp_actor") return NetKind::kMlpActor;
  if (name == "mlp_critic") return NetKind::kMlpCritic;
  throw NnError("unknown network kind " + name);
}

template <typename T>
void Append(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T Take(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw NnError("checkpoint is truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

const NetworkRecord& Checkpoint::Find(const std::string& name) const {
  for (const NetworkRecord& r : networks) {
    if (r.name == name) return r;
  }
  throw NnError("checkpoint has no network named " + name);
}

nlohmann::json SpecToJson(const NetSpec& spec) {
  return {{"kind", KindName(spec.kind)},   {"seq_len", spec.seq_len},
          {"step_dim", spec.step_dim},     {"extra_dim", spec.extra_dim},
          {"hidden_dim", spec.hidden_dim}, {"mlp_widths", spec.mlp_widths},
          {"out_dim", spec.out_dim}};
}

NetSpec SpecFromJson(const nlohmann::json& j) {
  NetSpec spec;
  spec.kind = KindFromName(j.at("kind").get<std::string>());
  spec.seq_len = j.at("seq_len").get<int>();
  spec.step_dim = j.at("step_dim").get<int>();
  spec.extra_dim = j.at("extra_dim").get<int>();
  spec.hidden_dim = j.at("hidden_dim").get<int>();
  spec.mlp_widths = j.at("mlp_widths").get<std::vector<int>>();
  spec.out_dim = j.at("out_dim").get<int>();
  spec.Validate();
  return spec;
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path) {
  nlohmann::json manifest;
  manifest["metadata"] = checkpoint.metadata;
  manifest["networks"] = nlohmann::json::array();
  for (const NetworkRecord& r : checkpoint.networks) {
    const Network net(r.spec);
    if (r.params.size() != net.num_params()) {
      throw NnError("parameter count does not match spec for " + r.name);
    }
    if (!r.mask.empty() &&
        r.mask.size() != static_cast<size_t>(net.num_params())) {
      throw NnError("mask size does not match spec for " + r.name);
    }
    nlohmann::json layout = nlohmann::json::array();
    for (const LayerDescriptor& d : net.layout().entries()) {
      layout.push_back({{"name", d.name},
                        {"rows", d.rows},
                        {"cols", d.cols},
                        {"offset", d.offset}});
    }
    manifest["networks"].push_back({{"name", r.name},
                                    {"spec", SpecToJson(r.spec)},
                                    {"layout", layout},
                                    {"num_params", net.num_params()},
                                    {"has_mask", !r.mask.empty()}});
  }
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof(kMagic));
  Append<uint32_t>(out, kCheckpointVersion);
  Append<uint64_t>(out, text.size());
  out += text;
  for (const NetworkRecord& r : checkpoint.networks) {
    out.append(reinterpret_cast<const char*>(r.params.data()),
               sizeof(double) * r.params.size());
  }
  for (const NetworkRecord& r : checkpoint.networks) {
    if (r.mask.empty()) continue;
    std::string packed((r.mask.size() + 7) / 8, '\0');
    for (size_t i = 0; i < r.mask.size(); ++i) {
      if (r.mask[i]) packed[i / 8] |= static_cast<char>(1u << (i % 8));
    }
    out += packed;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw NnError("cannot open " + path + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw NnError("failed writing " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw NnError("cannot open " + path);
  const std::string in((std::istreambuf_iterator<char>(file)),
                       std::istreambuf_iterator<char>());
  if (in.size() < sizeof(kMagic) ||
      std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw NnError(path + " is not a checkpoint");
  }
  size_t pos = sizeof(kMagic);
  const uint32_t version = Take<uint32_t>(in, pos);
  if (version != kCheckpointVersion) {
    throw NnError("unsupported checkpoint version " + std::to_string(version));
  }
  const uint64_t length = Take<uint64_t>(in, pos);
  if (pos + length > in.size()) throw NnError("checkpoint is truncated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in.substr(pos, length));
  } catch (const nlohmann::json::exception& e) {
    throw NnError(std::string("bad checkpoint manifest: ") + e.what());
  }
  pos += length;

  Checkpoint checkpoint;
  checkpoint.metadata = manifest.value("metadata", nlohmann::json::object());
  std::vector<bool> has_mask;
  for (const nlohmann::json& entry : manifest.at("networks")) {
    NetworkRecord r;
    r.name = entry.at("name").get<std::string>();
    r.spec = SpecFromJson(entry.at("spec"));
    const Network net(r.spec);
    const auto& layout = net.layout().entries();
    const nlohmann::json& stored = entry.at("layout");
    if (stored.size() != layout.size()) {
      throw NnError("layout mismatch for " + r.name);
    }
    for (size_t i = 0; i < layout.size(); ++i) {
      if (stored[i].at("name") != layout[i].name ||
          stored[i].at("rows") != layout[i].rows ||
          stored[i].at("cols") != layout[i].cols ||
          stored[i].at("offset") != layout[i].offset) {
        throw NnError("layout mismatch for " + r.name);
      }
    }
    const size_t count = net.num_params();
    if (pos + count * sizeof(double) > in.size()) {
      throw NnError("checkpoint is truncated");
    }
    r.params.resize(count);
    std::memcpy(r.params.data(), in.data() + pos, count * sizeof(double));
    pos += count * sizeof(double);
    has_mask.push_back(entry.at("has_mask").get<bool>());
    checkpoint.networks.push_back(std::move(r));
  }
  for (size_t n = 0; n < checkpoint.networks.size(); ++n) {
    if (!has_mask[n]) continue;
    NetworkRecord& r = checkpoint.networks[n];
    const size_t count = r.params.size();
    const size_t bytes = (count + 7) / 8;
    if (pos + bytes > in.size()) throw NnError("checkpoint is truncated");
    r.mask.resize(count);
    for (size_t i = 0; i < count; ++i) {
      r.mask[i] = (static_cast<unsigned char>(in[pos + i / 8]) >> (i % 8)) & 1;
    }
    pos += bytes;
  }
  if (pos != in.size()) throw NnError("trailing bytes in checkpoint");
  return checkpoint;
}

}  // namespace stackmarl::nn

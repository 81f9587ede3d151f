#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include <json.hpp>

#include "gmah/mlp.hpp"
#include "gmah/tensor.hpp"

namespace gmah {

inline constexpr const char* kCheckpointVersion = "gmah-ckpt-1";

// On-disk document: {"version": "gmah-ckpt-1", "kind": ..., "spec": {...},
// "params": {name: {"shape": [...], "values": [...]}}}. Doubles are written with
// round-trip precision, so save/load is bit-exact.
struct Checkpoint {
  std::string kind;
  nlohmann::json spec = nlohmann::json::object();
  ParameterSet params;
};

nlohmann::json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ParameterSet& params);
ParameterSet params_from_json(const nlohmann::json& j);

Checkpoint mlp_checkpoint(const MlpSpec& spec, const ParameterSet& params);
std::pair<MlpSpec, ParameterSet> mlp_from_checkpoint(const Checkpoint& ckpt);

// Copies `from` into `into` with every name prefixed by "<prefix>.".
void insert_prefixed(ParameterSet& into, const std::string& prefix, const ParameterSet& from);
// Inverse of insert_prefixed: entries named "<prefix>.*" with the prefix removed.
ParameterSet extract_prefixed(const ParameterSet& from, const std::string& prefix);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gmah

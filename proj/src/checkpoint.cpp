#include "gmah/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "gmah/error.hpp"

namespace gmah {

using nlohmann::json;

json to_json(const ParameterSet& params) {
  json out = json::object();
  for (const auto& [name, t] : params) out[name] = {{"shape", t.shape}, {"values", t.values}};
  return out;
}

ParameterSet params_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("checkpoint params must be an object");
  ParameterSet out;
  for (const auto& [name, entry] : j.items()) {
    if (!entry.contains("shape") || !entry.contains("values"))
      throw SchemaError("parameter '" + name + "' needs shape and values");
    Tensor t(entry.at("shape").get<std::vector<std::size_t>>(),
             entry.at("values").get<std::vector<double>>());
    t.validate(name);
    out.emplace(name, std::move(t));
  }
  return out;
}

json to_json(const MlpSpec& spec) {
  return {{"layer_sizes", spec.layer_sizes},
          {"hidden_activation", to_string(spec.hidden_activation)},
          {"output_head", to_string(spec.output_head)},
          {"init", to_string(spec.init)}};
}

MlpSpec mlp_spec_from_json(const json& j) {
  try {
    MlpSpec spec;
    spec.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    spec.hidden_activation = parse_activation(j.at("hidden_activation").get<std::string>());
    spec.output_head = parse_output_head(j.at("output_head").get<std::string>());
    spec.init = parse_init_scheme(j.at("init").get<std::string>());
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed MlpSpec: ") + e.what());
  }
}

json to_json(const Checkpoint& ckpt) {
  return {{"version", kCheckpointVersion},
          {"kind", ckpt.kind},
          {"spec", ckpt.spec},
          {"params", to_json(ckpt.params)}};
}

Checkpoint checkpoint_from_json(const json& doc) {
  if (!doc.is_object() || doc.value("version", "") != kCheckpointVersion)
    throw SchemaError(std::string("checkpoint version must be ") + kCheckpointVersion);
  Checkpoint ckpt;
  ckpt.kind = doc.value("kind", "");
  ckpt.spec = doc.value("spec", json::object());
  ckpt.params = params_from_json(doc.at("params"));
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, to_json(ckpt).dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

Checkpoint mlp_checkpoint(const MlpSpec& spec, const ParameterSet& params) {
  return Checkpoint{"mlp", to_json(spec), params};
}

std::pair<MlpSpec, ParameterSet> mlp_from_checkpoint(const Checkpoint& ckpt) {
  MlpSpec spec = mlp_spec_from_json(ckpt.spec);
  validate_params(spec, ckpt.params);
  return {spec, ckpt.params};
}

void insert_prefixed(ParameterSet& into, const std::string& prefix, const ParameterSet& from) {
  for (const auto& [name, t] : from) into.insert_or_assign(prefix + "." + name, t);
}

ParameterSet extract_prefixed(const ParameterSet& from, const std::string& prefix) {
  ParameterSet out;
  const std::string head = prefix + ".";
  for (const auto& [name, t] : from)
    if (name.starts_with(head)) out.emplace(name.substr(head.size()), t);
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace gmah

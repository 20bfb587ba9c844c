#include "tavi/numerics/checkpoint.hpp"

#include <fstream>

#include "tavi/errors.hpp"

namespace tavi::numerics {

namespace {

nlohmann::json tensor_values(const Tensor& t) {
  nlohmann::json arr = nlohmann::json::array();
  for (double v : t.values()) arr.push_back(v);
  return arr;
}

std::vector<double> values_from(const nlohmann::json& arr) {
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) out.push_back(v.get<double>());
  return out;
}

}  // namespace

nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json j;
  j["names"] = params.names();
  j["step_count"] = params.step_count();
  nlohmann::json tensors;
  for (const auto& name : params.names()) {
    const Tensor& t = params.value(name);
    nlohmann::json entry;
    entry["shape"] = t.shape();
    entry["values"] = tensor_values(t);
    entry["m"] = tensor_values(params.moment1(name));
    entry["v"] = tensor_values(params.moment2(name));
    tensors[name] = std::move(entry);
  }
  j["tensors"] = std::move(tensors);
  return j;
}

ParamSet params_from_json(const nlohmann::json& j) {
  ParamSet params;
  if (!j.contains("names") || !j.contains("tensors")) {
    throw DataError("checkpoint: missing names/tensors");
  }
  for (const auto& name_j : j.at("names")) {
    std::string name = name_j.get<std::string>();
    const auto& entry = j.at("tensors").at(name);
    std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    params.def(name, Tensor(shape, values_from(entry.at("values"))));
    Tensor m(shape, values_from(entry.at("m")));
    Tensor v(shape, values_from(entry.at("v")));
    params.moment1(name) = std::move(m);
    params.moment2(name) = std::move(v);
  }
  params.set_step_count(j.value("step_count", std::uint64_t{0}));
  return params;
}

nlohmann::json arch_to_json(const MlpArch& arch) {
  nlohmann::json j;
  j["input_dim"] = arch.input_dim;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : arch.layers) {
    layers.push_back({{"width", l.width}, {"act", activation_name(l.act)}});
  }
  j["layers"] = std::move(layers);
  return j;
}

MlpArch arch_from_json(const nlohmann::json& j) {
  MlpArch arch;
  arch.input_dim = j.at("input_dim").get<std::size_t>();
  for (const auto& l : j.at("layers")) {
    arch.layers.push_back({l.at("width").get<std::size_t>(),
                           activation_from_name(l.at("act").get<std::string>())});
  }
  return arch;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json root;
  root["format"] = "tavi.checkpoint";
  root["version"] = 1;
  nlohmann::json sections;
  for (const auto& [name, params] : ckpt.sections) {
    sections[name] = params_to_json(params);
  }
  root["sections"] = std::move(sections);
  root["meta"] = ckpt.meta.is_null() ? nlohmann::json::object() : ckpt.meta;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open for write: " + path);
  out << root.dump(1) << "\n";
  if (!out) throw DataError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open: " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: parse error in " + path + ": " + e.what());
  }
  if (root.value("format", "") != "tavi.checkpoint") {
    throw DataError("checkpoint: unrecognized format in " + path);
  }
  if (root.value("version", 0) != 1) {
    throw DataError("checkpoint: unsupported version in " + path);
  }
  Checkpoint ckpt;
  for (const auto& [name, j] : root.at("sections").items()) {
    ckpt.sections.emplace(name, params_from_json(j));
  }
  ckpt.meta = root.value("meta", nlohmann::json::object());
  return ckpt;
}

}  // namespace tavi::numerics

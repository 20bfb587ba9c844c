#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "tavi/numerics/mlp.hpp"
#include "tavi/numerics/params.hpp"

namespace tavi::numerics {

// JSON checkpoint container. Doubles are serialized with shortest round-trip
// formatting, so save/load reproduces every tensor bit-exactly, including
// Adam moments and the step counter.
//
// Layout:
//   {"format": "tavi.checkpoint", "version": 1,
//    "sections": {"<name>": {"names": [...], "step_count": n,
//                            "tensors": {"<param>": {"shape": [...],
//                                                    "values": [...],
//                                                    "m": [...], "v": [...]}}}},
//    "meta": {...}}

nlohmann::json params_to_json(const ParamSet& params);
ParamSet params_from_json(const nlohmann::json& j);

nlohmann::json arch_to_json(const MlpArch& arch);
MlpArch arch_from_json(const nlohmann::json& j);

struct Checkpoint {
  std::map<std::string, ParamSet> sections;
  nlohmann::json meta;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tavi::numerics

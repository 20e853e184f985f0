#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "abc/model.hpp"
#include "abc/tensor.hpp"

namespace abc {

using Json = nlohmann::json;

// {"shape": [rows, cols], "data": [...row-major...]}
Json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const Json& j);

Json config_to_json(const AbcConfig& c);
// Fills an AbcConfig from the keys present in j. Keys that are not
// AbcConfig fields raise ConfigError when reject_unknown is set.
AbcConfig config_from_json(const Json& j, bool reject_unknown = true, AbcConfig base = {});
// Names of the keys accepted by config_from_json.
const std::vector<std::string>& config_keys();

// {"config": {...}, "arrays": {name: tensor, ...}}
Json model_to_json(const ModelParams& p);
// Rejects missing, extra or misshapen arrays.
ModelParams model_from_json(const Json& j);

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const ModelParams& p);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace abc

#include "abc/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "abc/errors.hpp"
#include "abc/io.hpp"

namespace abc {

Json tensor_to_json(const Tensor& t) {
  Json data = Json::array();
  for (double v : t.values()) data.push_back(v);
  return {{"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}};
}

Tensor tensor_from_json(const Json& j) {
  try {
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 2) throw DataError("array shape must be [rows, cols]");
    const auto rows = shape[0].get<std::size_t>();
    const auto cols = shape[1].get<std::size_t>();
    const auto& data = j.at("data");
    if (!data.is_array() || data.size() != rows * cols)
      throw DataError("array data length does not match shape " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    std::vector<double> values;
    values.reserve(data.size());
    for (const auto& v : data) values.push_back(v.get<double>());
    return Tensor(rows, cols, std::move(values));
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed array: ") + e.what());
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {"input_dim",  "latent_dim", "sab_count",  "heads",
                                                "compat_embed", "compat_sim", "activation", "input_affine"};
  return keys;
}

Json config_to_json(const AbcConfig& c) {
  return {{"input_dim", c.input_dim},
          {"latent_dim", c.latent_dim},
          {"sab_count", c.sab_count},
          {"heads", c.heads},
          {"compat_embed", to_string(c.compat_embed)},
          {"compat_sim", to_string(c.compat_sim)},
          {"activation", to_string(c.activation)},
          {"input_affine", c.input_affine}};
}

AbcConfig config_from_json(const Json& j, bool reject_unknown, AbcConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  if (reject_unknown) {
    std::vector<std::string> bad;
    const auto& keys = config_keys();
    for (const auto& [k, _] : j.items())
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) bad.push_back(k);
    if (!bad.empty()) {
      std::string msg = "unknown model config keys:";
      for (const auto& k : bad) msg += " " + k;
      throw ConfigError(msg);
    }
  }
  try {
    if (j.contains("input_dim")) c.input_dim = j["input_dim"].get<std::size_t>();
    if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<std::size_t>();
    if (j.contains("sab_count")) c.sab_count = j["sab_count"].get<std::size_t>();
    if (j.contains("heads")) c.heads = j["heads"].get<std::size_t>();
    if (j.contains("compat_embed")) c.compat_embed = compat_form_from_string(j["compat_embed"].get<std::string>());
    if (j.contains("compat_sim")) c.compat_sim = compat_form_from_string(j["compat_sim"].get<std::string>());
    if (j.contains("activation")) c.activation = activation_from_string(j["activation"].get<std::string>());
    if (j.contains("input_affine")) c.input_affine = j["input_affine"].get<bool>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid model config value: ") + e.what());
  }
  c.validate();
  return c;
}

Json model_to_json(const ModelParams& p) {
  Json arrays = Json::object();
  visit_parameters(p, [&](const std::string& name, const Tensor& t) { arrays[name] = tensor_to_json(t); });
  return {{"config", config_to_json(p.config)}, {"arrays", std::move(arrays)}};
}

ModelParams model_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("config") || !j.contains("arrays"))
    throw DataError("checkpoint must contain 'config' and 'arrays'");
  const AbcConfig config = config_from_json(j["config"]);
  ModelParams p = init_model(config, 0);
  const Json& arrays = j["arrays"];
  std::set<std::string> seen;
  visit_parameters(p, [&](const std::string& name, Tensor& t) {
    if (!arrays.contains(name)) throw DataError("checkpoint is missing array '" + name + "'");
    Tensor loaded = tensor_from_json(arrays[name]);
    if (!loaded.same_shape(t))
      throw DataError("checkpoint array '" + name + "' has shape " + loaded.shape_string() + ", expected " +
                      t.shape_string());
    t = std::move(loaded);
    seen.insert(name);
  });
  for (const auto& [k, _] : arrays.items())
    if (!seen.count(k)) throw DataError("checkpoint has unexpected array '" + k + "'");
  p.validate();
  return p;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_file_atomic(path, j.dump(1) + "\n");
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelParams& p) { write_json_file(path, model_to_json(p)); }

ModelParams load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

}  // namespace abc

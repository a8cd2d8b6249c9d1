#include "mtbo/config_file.hpp"

#include <fstream>

#include "mtbo/errors.hpp"

namespace mtbo {

FileConfig FileConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config file: expected a JSON object");
  FileConfig config;
  if (doc.contains("space")) {
    const auto& space = doc.at("space");
    if (space.is_string()) {
      config.space = space_by_name(space.get<std::string>());
    } else {
      config.space = space_from_json(space);
    }
  }
  if (doc.contains("tasks")) config.tasks = TaskRegistry::from_json(doc.at("tasks"));
  if (doc.contains("clusters") && !doc.at("clusters").is_null()) {
    config.clusters = ClusterSpec::from_json(doc.at("clusters"));
  }
  if (doc.contains("acquisition")) {
    config.acquisition = AcquisitionSpec::from_json(doc.at("acquisition"));
  }
  if (doc.contains("objective") && !doc.at("objective").is_null()) {
    config.objective = ObjectiveSpec::from_json(doc.at("objective"));
  }
  if (doc.contains("synthetic")) {
    config.synthetic = SyntheticSurrogateSpec::from_json(doc.at("synthetic"));
  }
  return config;
}

FileConfig FileConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  try {
    return from_json(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace mtbo

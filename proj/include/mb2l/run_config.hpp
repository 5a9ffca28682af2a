#ifndef MB2L_RUN_CONFIG_HPP
#define MB2L_RUN_CONFIG_HPP

// Declarative run description (JSON) with a strict schema: unknown keys and
// type mismatches are rejected with the offending field path.

#include "mb2l/datasets.hpp"
#include "mb2l/model.hpp"
#include "mb2l/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace mb2l {

/// Schema violation; `field()` is a dotted path such as "train.batch_size".
class ConfigError : public InvalidParameter {
 public:
  ConfigError(std::string field, const std::string& message)
      : InvalidParameter(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DatasetSource {
  std::string kind = "directory";  // "directory" (on-disk layout) or "synthetic" (generated in memory)
  std::filesystem::path path;
  int subject = -1;
  SyntheticConfig synthetic;
};

struct RunConfig {
  DatasetSource dataset;
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path output = "runs/default";
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
/// Starts from `base` and overrides the keys present in `j`.
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "model", ModelConfig base = {});

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// A "preset" key (default "desk") selects the starting values; a "mode"
/// without an explicit "alpha_high" implies that mode's default weight.
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path = "train");

nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Loads the dataset a run config points at.
Dataset load_dataset(const DatasetSource& source);

/// Relative output paths resolve under $MB2L_OUT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& path);

}  // namespace mb2l

#endif  // MB2L_RUN_CONFIG_HPP

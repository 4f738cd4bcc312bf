#pragma once

// JSON (de)serialization of model and training configurations, and the
// run configuration the command-line tool is driven by. Unknown keys are
// rejected everywhere so a typo never silently falls back to a default.

#include <array>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "scp/model.hpp"
#include "scp/training.hpp"

namespace scp {

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);

// Overlays the keys present in `j` onto `base`. `where` prefixes error messages.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {},
                                   const std::string& where = "model");
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {},
                                   const std::string& where = "train");

struct DataPaths {
  std::array<std::array<std::filesystem::path, 3>, 2> corpora;  // [style][split]
  std::filesystem::path lexicon;
  std::filesystem::path embeddings;
  bool operator==(const DataPaths&) const = default;
};

struct RunConfig {
  // Directory in the layout written by `synth`; individual paths below
  // override single files.
  std::filesystem::path data_dir;
  DataPaths paths;  // empty entries fall back to data_dir
  std::filesystem::path out_dir = "run";
  std::size_t vocab_min_count = 5;
  ModelConfig model;  // vocab_size and noun_dim are filled in from the data
  TrainConfig train;

  // Every path resolved against data_dir; relative paths stay relative.
  DataPaths resolved() const;
  bool operator==(const RunConfig&) const = default;
};

// Relative paths in the file are resolved against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& c);

}  // namespace scp

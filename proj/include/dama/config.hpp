#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dama/trainer.hpp"
#include "json.hpp"

namespace dama {

/// Everything `train` needs: hyperparameters plus input/output locations.
struct RunConfig {
    TrainConfig train;
    std::filesystem::path corpus = "corpus.jsonl";
    std::filesystem::path hardness = "hardness.jsonl";
    std::filesystem::path hardness_summary = "hardness_summary.json";
    std::filesystem::path out_dir = "run";
};

/// Sets one key. Keys may be bare ("keep_k") or section-qualified ("train.keep_k").
/// Throws InputError for unknown keys or unparsable values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Applies "key=value" strings in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

/// Reads a key = value file with optional [sections]. Relative paths resolve
/// against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const RunConfig& config);

/// All accepted bare keys.
const std::vector<std::string>& config_keys();

}  // namespace dama

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "agcn/metrics.hpp"
#include "agcn/model.hpp"
#include "agcn/trainer.hpp"

namespace agcn {

inline constexpr const char* kSoftwareVersion = "0.1.0";

// Field names mirror the struct members.
void to_json(nlohmann::json& j, const AgcnConfig& cfg);
void to_json(nlohmann::json& j, const TrainConfig& cfg);

// Applies the keys present in `j` on top of `cfg`; unknown keys are rejected.
void merge_model_config(const nlohmann::json& j, AgcnConfig& cfg);
void merge_train_config(const nlohmann::json& j, TrainConfig& cfg);

struct RunConfigFile {
  nlohmann::json model;
  nlohmann::json train;
  std::vector<std::uint64_t> seeds;
};

// Accepts either a flat object holding model and training fields (plus an
// optional "seeds" list) or a run manifest with "model_config",
// "train_config" and "seeds".
RunConfigFile read_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const MetricSummary& s);
nlohmann::json to_json(const ClusteringReport& r);
nlohmann::json to_json(const MetricValues& m);

// Parameters and the model configuration that shapes them.
void save_checkpoint(const std::filesystem::path& path, AgcnParams& params,
                     const AgcnConfig& cfg);
AgcnParams load_checkpoint(const std::filesystem::path& path, AgcnConfig* cfg_out = nullptr);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace agcn

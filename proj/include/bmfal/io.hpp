#pragma once

#include <string>

#include <json.hpp>

#include "bmfal/loop.hpp"
#include "bmfal/model.hpp"
#include "bmfal/planner.hpp"

namespace bmfal {

using Json = nlohmann::json;

// -- model checkpoints: config + every parameter tensor with shape headers;
//    round-trips bit-exactly (serialized doubles parse back to the same bits)
Json model_to_json(const MfModel& model);
MfModel model_from_json(const Json& j);
void save_model(const MfModel& model, const std::string& path);
MfModel load_model(const std::string& path);

// -- datasets: one JSON object per line, fidelity 1-based on disk
void write_dataset_jsonl(const Dataset& data, const std::string& path);
Dataset read_dataset_jsonl(const std::string& path);

// -- plans: ordered queries {x, fidelity, cost, score} plus total cost
Json plan_to_json(const Plan& plan);

// -- experiment configs: field names mirror ExperimentConfig
Json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_config(const std::string& path);

Json record_to_json(const RunRecord& record, bool record_walltime);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace bmfal

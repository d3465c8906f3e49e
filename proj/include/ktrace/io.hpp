#pragma once

#include <string>
#include <vector>

#include "ktrace/ability.hpp"
#include "ktrace/clustering.hpp"
#include "ktrace/explain.hpp"
#include "ktrace/model.hpp"
#include "ktrace/training.hpp"
#include "ktrace/types.hpp"

namespace ktrace {

/// Shortest round-trip decimal form of a double (deterministic across runs).
std::string format_double(double value);

// Every JSON artifact carries schema_version = 1 and reloads bit-exactly.

void save_catalog(const std::string& path, const DatasetCatalog& catalog);
DatasetCatalog load_catalog(const std::string& path);

void save_stats(const std::string& path, const ResponseTimeStats& stats);
ResponseTimeStats load_stats(const std::string& path);

void save_cluster_model(const std::string& path, const ClusterModel& model);
ClusterModel load_cluster_model(const std::string& path);

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t seed);
ModelParams load_checkpoint(const std::string& path);

void save_metrics_csv(const std::string& path, const Metrics& metrics);

/// TrainConfig <-> JSON. Unknown or ill-typed keys throw std::runtime_error
/// naming the offending key.
TrainConfig train_config_from_json_file(const std::string& path);
std::string train_config_to_json(const TrainConfig& config);
void apply_config_json(TrainConfig& config, const std::string& json_text);

}  // namespace ktrace

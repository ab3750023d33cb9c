#pragma once

#include "hetfuse/dataset.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace hetfuse {

enum class BlockGranularity { file, label_change };

// Structured description of one domain: what the CSV header must contain and
// how rows are grouped into blocks.
struct SchemaConfig {
  std::string domain_id;
  ChannelSchema schema;
  std::vector<std::string> label_set{"alert", "fatigued"};
  std::optional<double> rate;  // inferred from timestamps when absent
  BlockGranularity granularity = BlockGranularity::file;
};

SchemaConfig schema_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SchemaConfig& cfg);
SchemaConfig load_schema_config(const std::filesystem::path& path);
SchemaConfig schema_config_of(const SensorDataset& ds);

// One CSV per block, header `timestamp,subject_id,<channels...>,label`.
// Files are read in lexicographic order; a header that disagrees with the
// schema is rejected.
SensorDataset load_dataset(const std::filesystem::path& dir, const SchemaConfig& cfg);
// Reads `<dir>/schema.json` as the schema config.
SensorDataset load_dataset(const std::filesystem::path& dir);

// Writes schema.json plus block_NNNN.csv files with shortest round-trip
// number formatting, so identical datasets give identical bytes.
void write_dataset(const std::filesystem::path& dir, const SensorDataset& ds);

std::string format_double(double v);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace hetfuse

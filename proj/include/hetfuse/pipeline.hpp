#pragma once

#include "hetfuse/dataset.hpp"
#include "hetfuse/imputer.hpp"
#include "hetfuse/nn.hpp"
#include "hetfuse/preprocess.hpp"
#include "hetfuse/synth.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hetfuse {

// --- configuration -----------------------------------------------------------

// Either a synthetic generator (re-seeded per run) or CSV directories, each
// holding schema.json and one file per block.
struct DataConfig {
  std::optional<SynthConfig> synth;
  std::string target_dir;
  std::vector<std::pair<std::string, std::string>> source_dirs;  // (domain id, dir)
  std::optional<PreprocessPlan> preprocess;
};

struct ImputerConfig {
  ImputerOptions options;
  TrainConfig train;
  WindowConfig window{128, 32, LabelRule::majority};
};

struct DetectorConfig {
  std::vector<Eigen::Index> hidden{64, 64};
  TrainConfig train;
  double jacobian_coeff = 1e-3;  // used when the Jacobian toggle is on
};

struct ScenarioConfig {
  std::string name = "default";
  DataConfig data;
  std::vector<std::string> sources;  // source domain ids in cascade order
  // Batch norm toggles both the imputer's per-domain input alignment and
  // batch-norm layers in the detector.
  bool use_batchnorm = true;
  bool use_jacobian = false;
  bool normalize = true;  // per-subject normalization, fitted on the train split
  double test_fraction = 0.2;
  bool cascade_feeds_forward = false;
  WindowConfig window;
  ImputerConfig imputer;
  DetectorConfig detector;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

enum class ExperimentKind { scenarios, noise_baseline, ablation, imputer_selection };

std::string_view to_string(ExperimentKind k);

struct NoiseBaselineConfig {
  std::vector<std::string> mask;  // channel names or modality tags
  std::uint64_t noise_seed = 1;
};

struct SelectionEntry {
  std::string name;
  std::string dataset;  // "target" or a source domain id
  std::vector<std::string> mask;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::scenarios;
  ScenarioConfig base;
  std::vector<ScenarioConfig> scenarios;  // base with per-scenario overrides
  NoiseBaselineConfig noise;
  std::vector<SelectionEntry> selection;
};

ScenarioConfig scenario_config_from_json(const nlohmann::json& j, const ScenarioConfig& defaults = {});
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioConfig& cfg);
nlohmann::json to_json(const ExperimentConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults = {});
nlohmann::json to_json(const TrainConfig& cfg);
WindowConfig window_config_from_json(const nlohmann::json& j, const WindowConfig& defaults = {});
nlohmann::json to_json(const WindowConfig& cfg);

// --- data ----------------------------------------------------------------------

struct Datasets {
  SensorDataset target;
  std::vector<SensorDataset> sources;
  std::optional<SensorDataset> hidden_truth;

  const SensorDataset& source(const std::string& id) const;
};

// Synthetic data uses a generator seed derived from the configured seed and
// `run_seed`; CSV data ignores `run_seed`.
Datasets load_data(const DataConfig& cfg, std::uint64_t run_seed);

// --- access log ----------------------------------------------------------------

enum class Access { fit, transform, evaluate };

std::string_view to_string(Access a);

// One entry per (stage, block) touched, in the coordinates of the dataset
// the split was taken from.
struct AccessEntry {
  std::string stage;
  Access kind = Access::fit;
  std::string domain;
  std::size_t block = 0;
  IndexRange range;
};

struct AccessLog {
  std::vector<AccessEntry> entries;

  void record(const std::string& stage, Access kind, const SensorDataset& ds);
};

// Descriptions of every fit access that overlaps a test range.
std::vector<std::string> leakage_violations(const AccessLog& log, const std::string& domain,
                                            const std::vector<BlockAssignment>& manifest);

struct RunTrace {
  AccessLog log;
  std::vector<BlockAssignment> manifest;
  std::string target_domain;
  std::vector<std::string> enhanced_channels;
};

// --- operations ----------------------------------------------------------------

struct EnhanceConfig {
  ImputerConfig imputer;
  bool align = true;
  bool cascade_feeds_forward = false;
  std::uint64_t seed = 0;
};

struct Enhanced {
  std::vector<SensorDataset> parts;  // same order as the input parts
  std::vector<Imputer> imputers;
};

// Folds imputation over `sources` in order. Imputers are fitted on source
// data; target alignment statistics come from parts[0] only, and every part
// is transformed with them. A source adds only channels the current schema
// lacks.
Enhanced enhance_parts(const std::vector<SensorDataset>& parts, const std::vector<SensorDataset>& sources,
                       const EnhanceConfig& cfg, AccessLog* log = nullptr);
SensorDataset enhance_target(const SensorDataset& target, const std::vector<SensorDataset>& sources,
                             const EnhanceConfig& cfg);

struct Detector {
  DenseNet net;
  ChannelSchema schema;
  std::vector<std::string> label_set;
  WindowConfig window;
};

struct DetectorTrainConfig {
  DetectorConfig detector;
  WindowConfig window;
  bool batchnorm = false;
  bool jacobian = false;
  std::uint64_t seed = 0;
};

Detector train_detector(const SensorDataset& enhanced_train, const DetectorTrainConfig& cfg);

struct EvalResult {
  double accuracy = 0.0;
  double cross_entropy = 0.0;
  std::size_t windows = 0;
};

// Throws SchemaMismatch unless `test` has the detector's channels in order.
EvalResult evaluate(const Detector& f, const SensorDataset& test);

void save_detector(const std::filesystem::path& path, const Detector& f);
Detector load_detector(const std::filesystem::path& path);

// --- reports -------------------------------------------------------------------

struct RunRecord {
  std::string scenario;
  std::uint64_t seed = 0;
  std::optional<double> accuracy;
  std::optional<double> cross_entropy;
  std::vector<std::pair<std::string, double>> imputation_mse;  // (source id, standardized holdout MSE)
  std::vector<std::string> channels;                           // detector input channels
};

struct ScenarioSummary {
  std::string scenario;
  std::size_t runs = 0;
  std::optional<double> accuracy_mean, accuracy_std;
  std::optional<double> ce_mean, ce_std;
  std::vector<std::pair<std::string, double>> mse_mean;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<std::string> scenario_order;
  std::vector<RunRecord> runs;  // sorted by (scenario order, seed)

  // Sample standard deviation; 0 for a single run.
  std::vector<ScenarioSummary> summary() const;
  ScenarioSummary scenario(const std::string& name) const;
  std::string runs_csv() const;
  std::string summary_csv() const;
  std::string table() const;  // aligned plain text, accuracy in percent
  nlohmann::json to_json() const;
};

// --- experiments ---------------------------------------------------------------

RunRecord run_scenario(const ScenarioConfig& cfg, const Datasets& data, std::uint64_t seed, RunTrace* trace = nullptr);

// Four detectors (original, imputed, imputed + noise, pure noise) trained on
// the train split and scored on the same untouched test split.
std::vector<RunRecord> run_noise_baseline(const ScenarioConfig& cfg, const NoiseBaselineConfig& noise, const Datasets& data,
                                          std::uint64_t seed, RunTrace* trace = nullptr);

ExperimentReport run_augmentation(const ExperimentConfig& cfg, int jobs = 1);
ExperimentReport run_noise_baseline_experiment(const ExperimentConfig& cfg, int jobs = 1);
ExperimentReport run_ablation(const ExperimentConfig& cfg, int jobs = 1);
ExperimentReport run_imputer_selection(const ExperimentConfig& cfg, int jobs = 1);
ExperimentReport run_experiment(const ExperimentConfig& cfg, int jobs = 1);

inline constexpr const char* kNoiseVariants[4] = {"original", "imputed", "imputed+noise", "pure_noise"};
inline constexpr const char* kAblationVariants[4] = {"Baseline", "BN", "Jacobian", "BN+Jacobian"};

}  // namespace hetfuse

#pragma once

#include "hetfuse/dataset.hpp"
#include "hetfuse/nn.hpp"
#include "hetfuse/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hetfuse {

struct ImputerOptions {
  std::vector<Eigen::Index> hidden{64, 64};
  bool batchnorm = false;  // batch-norm layers inside the regressor
  // Standardize each domain's shared inputs with its own statistics. When
  // false the target is scaled with the source statistics instead.
  bool align = true;
  double holdout_fraction = 0.1;  // tail of each source block
  SetLevel level = SetLevel::channel;
  // Restricts the inputs to these channels (still intersected with the
  // shared set); used so cascaded imputers ignore earlier generated channels.
  std::optional<std::vector<std::string>> input_channels;
  std::uint64_t init_seed = 0;
};

struct Imputer {
  std::string source_domain_id;
  std::vector<std::string> shared_channels;
  std::vector<Channel> generated_channels;
  DenseNet net;
  ChannelStats alignment;  // source statistics of the shared inputs
  ChannelStats output_stats;
  WindowConfig window;
  bool align = true;
  std::vector<double> holdout_mse;  // per generated channel, standardized
  std::optional<double> holdout_mse_total;

  std::vector<std::string> generated_names() const;
};

// Trains on the first (1 - holdout_fraction) of every source block and
// reports the standardized MSE on the remaining tails.
Imputer fit_imputer(const SensorDataset& source, const ChannelSchema& target_schema, const TrainConfig& cfg,
                    const WindowConfig& wcfg, const ImputerOptions& opts = {});

// Appends the generated channels to `target`. Shared inputs are standardized
// with `target_stats` when aligned (default: statistics of `target` itself)
// and with the source statistics otherwise. Overlapping window predictions
// are averaged; a block shorter than the window is edge-padded.
SensorDataset apply_imputer(const Imputer& imputer, const SensorDataset& target,
                            const std::optional<ChannelStats>& target_stats = std::nullopt);

// Fit on `source`, apply to `target`. Identity when the source has no extra
// channels.
SensorDataset sensor_impute(const SensorDataset& target, const SensorDataset& source, const TrainConfig& cfg,
                            const WindowConfig& wcfg, const ImputerOptions& opts = {});

enum class NoiseKind { additive_gaussian, pure_gaussian };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::additive_gaussian;
  std::uint64_t seed = 0;
  // sigma = 2 * max|reference|. The reference is `reference_max_abs` when
  // given, else the named channel, else each noised channel itself.
  std::optional<std::string> reference_channel;
  std::optional<double> reference_max_abs;
};

SensorDataset add_gaussian_noise(const SensorDataset& ds, const std::vector<std::string>& channels,
                                 const NoiseSpec& spec);

struct ImputeReport {
  std::vector<std::string> channels;
  std::vector<double> mse;  // standardized space, per channel
  double total = 0.0;
  std::size_t windows = 0;
};

// `holdout` carries the true generated channels; its shared inputs are
// standardized with the imputer's source statistics.
ImputeReport impute_report(const Imputer& imputer, const SensorDataset& holdout);

void save_imputer(const std::filesystem::path& path, const Imputer& imputer);
Imputer load_imputer(const std::filesystem::path& path);

}  // namespace hetfuse

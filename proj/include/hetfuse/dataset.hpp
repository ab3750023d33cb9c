#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hetfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Modality { PPG, GSR, HR, ST, ACC, EYE, EEG, ECG, OTHER };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view text);

struct Channel {
  std::string name;
  Modality modality = Modality::OTHER;
  double native_rate = 1.0;
  // Empty for recorded channels; "generated_from:<domain>" for imputed ones.
  std::string provenance;

  bool operator==(const Channel&) const = default;
};

// Ordered channel list. Names are unique and rates positive; the constructor
// enforces both.
class ChannelSchema {
 public:
  ChannelSchema() = default;
  explicit ChannelSchema(std::vector<Channel> channels);

  const std::vector<Channel>& channels() const { return channels_; }
  std::size_t size() const { return channels_.size(); }
  bool empty() const { return channels_.empty(); }
  const Channel& operator[](std::size_t i) const { return channels_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws UnknownChannel
  bool contains(std::string_view name) const { return find(name).has_value(); }
  std::vector<std::string> names() const;
  std::vector<std::size_t> indices_of(const std::vector<std::string>& names) const;

  ChannelSchema appended(const std::vector<Channel>& extra) const;
  ChannelSchema subset(const std::vector<std::string>& names) const;

  bool operator==(const ChannelSchema&) const = default;

 private:
  std::vector<Channel> channels_;
};

// Where a block's first sample sits in the dataset it was carved from.
struct SampleOrigin {
  std::size_t block = 0;
  std::size_t offset = 0;

  bool operator==(const SampleOrigin&) const = default;
};

struct Block {
  std::string subject_id;
  Matrix samples;           // T x D, one column per channel
  std::vector<int> labels;  // indices into the owning dataset's label set
  SampleOrigin origin;

  std::size_t length() const { return static_cast<std::size_t>(samples.rows()); }
};

struct SensorDataset {
  std::string domain_id;
  ChannelSchema schema;
  std::vector<std::string> label_set{"alert", "fatigued"};
  std::vector<Block> blocks;
  double rate = 32.0;

  std::size_t total_samples() const;
  int label_index(std::string_view label) const;  // throws UnknownLabel
  // Columns of `names` from one block, in the given order.
  Matrix columns(std::size_t block, const std::vector<std::string>& names) const;
  SensorDataset with_channels(const std::vector<std::string>& names) const;
  SensorDataset without_channels(const std::vector<std::string>& names) const;
};

// --- channel-set algebra ---------------------------------------------------

// Channel-level algebra matches by name; modality level treats every channel
// tagged with a modality as one group, so a modality present on both sides is
// never "extra" or "missing".
enum class SetLevel { channel, modality };

std::vector<std::string> common_channels(const ChannelSchema& a, const ChannelSchema& b);
std::vector<std::string> extra_in_source(const ChannelSchema& target, const ChannelSchema& source,
                                         SetLevel level = SetLevel::channel);
std::vector<std::string> missing_in_source(const ChannelSchema& target, const ChannelSchema& source,
                                           SetLevel level = SetLevel::channel);

// --- block split -----------------------------------------------------------

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool operator==(const IndexRange&) const = default;
};

struct BlockAssignment {
  std::size_t block = 0;
  std::string subject_id;
  std::size_t length = 0;
  IndexRange test_head;
  IndexRange train;
  IndexRange test_tail;
};

struct SplitResult {
  SensorDataset train;
  SensorDataset test;
  std::vector<BlockAssignment> manifest;
};

// Test side takes the first and last floor(edge_fraction * T) samples of each
// block, edge_fraction = test_fraction / 2. Head and tail become separate test
// blocks so windows never bridge the gap.
SplitResult block_split(const SensorDataset& ds, double test_fraction = 0.2);

// --- normalization ---------------------------------------------------------

inline constexpr double kStdEpsilon = 1e-8;

struct ChannelStats {
  Vector mean;
  Vector std;
};

ChannelStats channel_stats(const SensorDataset& ds);
ChannelStats channel_stats(const SensorDataset& ds, const std::vector<std::string>& names);
Matrix standardize(const Matrix& x, const ChannelStats& stats);

SensorDataset normalize_per_subject(const SensorDataset& ds);

// Per-subject statistics fitted on one dataset and applied to another; used
// so test statistics never enter a fit. Unknown subjects fall back to the
// pooled statistics.
class SubjectNormalizer {
 public:
  static SubjectNormalizer fit(const SensorDataset& ds);
  SensorDataset apply(const SensorDataset& ds) const;

 private:
  std::map<std::string, ChannelStats> per_subject_;
  ChannelStats pooled_;
  std::size_t width_ = 0;
};

// --- validation ------------------------------------------------------------

enum class ViolationKind { WidthMismatch, NonFinite, IllegalLabel, LabelLengthMismatch, EmptyBlock, NoBlocks, BadRate };

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::optional<std::size_t> block;
  std::optional<std::string> channel;
  std::string detail;
};

std::vector<Violation> validate(const SensorDataset& ds);

}  // namespace hetfuse

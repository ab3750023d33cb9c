#include "hetfuse/dataset.hpp"

#include "hetfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace hetfuse {

namespace {

constexpr std::string_view kModalityNames[] = {"PPG", "GSR", "HR", "ST", "ACC", "EYE", "EEG", "ECG", "OTHER"};

}  // namespace

std::string_view to_string(Modality m) { return kModalityNames[static_cast<int>(m)]; }

Modality parse_modality(std::string_view text) {
  for (int i = 0; i < static_cast<int>(std::size(kModalityNames)); ++i) {
    if (kModalityNames[i] == text) return static_cast<Modality>(i);
  }
  fail(ErrorKind::Parse, "unknown modality tag '" + std::string(text) + "'");
}

// --- ChannelSchema ---------------------------------------------------------

ChannelSchema::ChannelSchema(std::vector<Channel> channels) : channels_(std::move(channels)) {
  std::unordered_set<std::string> seen;
  for (const auto& c : channels_) {
    require(!c.name.empty(), ErrorKind::InvalidArgument, "channel with empty name");
    require(seen.insert(c.name).second, ErrorKind::InvalidArgument, "duplicate channel name '" + c.name + "'");
    require(c.native_rate > 0.0 && std::isfinite(c.native_rate), ErrorKind::InvalidArgument,
            "channel '" + c.name + "' must have a positive native rate");
  }
}

std::optional<std::size_t> ChannelSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (channels_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ChannelSchema::index_of(std::string_view name) const {
  auto idx = find(name);
  if (!idx) fail(ErrorKind::UnknownChannel, "channel '" + std::string(name) + "' not in schema");
  return *idx;
}

std::vector<std::string> ChannelSchema::names() const {
  std::vector<std::string> out;
  out.reserve(channels_.size());
  for (const auto& c : channels_) out.push_back(c.name);
  return out;
}

std::vector<std::size_t> ChannelSchema::indices_of(const std::vector<std::string>& names) const {
  std::vector<std::size_t> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(index_of(n));
  return out;
}

ChannelSchema ChannelSchema::appended(const std::vector<Channel>& extra) const {
  auto all = channels_;
  all.insert(all.end(), extra.begin(), extra.end());
  return ChannelSchema(std::move(all));
}

ChannelSchema ChannelSchema::subset(const std::vector<std::string>& names) const {
  std::vector<Channel> out;
  for (auto i : indices_of(names)) out.push_back(channels_[i]);
  return ChannelSchema(std::move(out));
}

// --- SensorDataset ---------------------------------------------------------

std::size_t SensorDataset::total_samples() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.length();
  return n;
}

int SensorDataset::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < label_set.size(); ++i) {
    if (label_set[i] == label) return static_cast<int>(i);
  }
  fail(ErrorKind::UnknownLabel, "label '" + std::string(label) + "' not in label set of " + domain_id);
}

Matrix SensorDataset::columns(std::size_t block, const std::vector<std::string>& names) const {
  const auto& b = blocks.at(block);
  const auto idx = schema.indices_of(names);
  Matrix out(b.samples.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = b.samples.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

SensorDataset SensorDataset::with_channels(const std::vector<std::string>& names) const {
  SensorDataset out = *this;
  out.schema = schema.subset(names);
  for (std::size_t b = 0; b < blocks.size(); ++b) out.blocks[b].samples = columns(b, names);
  return out;
}

SensorDataset SensorDataset::without_channels(const std::vector<std::string>& names) const {
  std::set<std::string> drop(names.begin(), names.end());
  for (const auto& n : names) schema.index_of(n);
  std::vector<std::string> keep;
  for (const auto& c : schema.channels()) {
    if (!drop.count(c.name)) keep.push_back(c.name);
  }
  return with_channels(keep);
}

// --- set algebra -----------------------------------------------------------

std::vector<std::string> common_channels(const ChannelSchema& a, const ChannelSchema& b) {
  std::vector<std::string> out;
  for (const auto& c : a.channels()) {
    auto j = b.find(c.name);
    if (!j) continue;
    if (b[*j].modality != c.modality) {
      fail(ErrorKind::ModalityMismatch, "channel '" + c.name + "' tagged " + std::string(to_string(c.modality)) +
                                            " vs " + std::string(to_string(b[*j].modality)));
    }
    out.push_back(c.name);
  }
  return out;
}

namespace {

std::set<Modality> modalities(const ChannelSchema& s) {
  std::set<Modality> out;
  for (const auto& c : s.channels()) out.insert(c.modality);
  return out;
}

// Channels of `from` absent from `other`, by name or by modality group.
std::vector<std::string> difference(const ChannelSchema& from, const ChannelSchema& other, SetLevel level) {
  std::vector<std::string> out;
  const auto other_mods = modalities(other);
  for (const auto& c : from.channels()) {
    const bool present = level == SetLevel::channel ? other.contains(c.name) : other_mods.count(c.modality) > 0;
    if (!present) out.push_back(c.name);
  }
  return out;
}

}  // namespace

std::vector<std::string> extra_in_source(const ChannelSchema& target, const ChannelSchema& source, SetLevel level) {
  return difference(source, target, level);
}

std::vector<std::string> missing_in_source(const ChannelSchema& target, const ChannelSchema& source, SetLevel level) {
  return difference(target, source, level);
}

// --- block split -----------------------------------------------------------

namespace {

Block slice(const Block& b, IndexRange r) {
  Block out;
  out.subject_id = b.subject_id;
  const auto begin = static_cast<Eigen::Index>(r.begin);
  const auto len = static_cast<Eigen::Index>(r.size());
  out.samples = b.samples.middleRows(begin, len);
  out.labels.assign(b.labels.begin() + static_cast<std::ptrdiff_t>(r.begin),
                    b.labels.begin() + static_cast<std::ptrdiff_t>(r.end));
  out.origin = {b.origin.block, b.origin.offset + r.begin};
  return out;
}

}  // namespace

SplitResult block_split(const SensorDataset& ds, double test_fraction) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorKind::InvalidArgument, "test_fraction must lie in (0, 1)");
  const double edge_fraction = test_fraction / 2.0;

  SplitResult result;
  result.train = ds;
  result.test = ds;
  result.train.blocks.clear();
  result.test.blocks.clear();

  for (std::size_t i = 0; i < ds.blocks.size(); ++i) {
    const auto& b = ds.blocks[i];
    const std::size_t T = b.length();
    if (T == 0) fail(ErrorKind::EmptyBlock, "block " + std::to_string(i) + " of " + ds.domain_id + " is empty");
    // The small offset keeps exact products such as 0.1 * 30 from flooring down.
    const auto edge = static_cast<std::size_t>(std::floor(edge_fraction * static_cast<double>(T) + 1e-9));

    BlockAssignment a;
    a.block = i;
    a.subject_id = b.subject_id;
    a.length = T;
    a.test_head = {0, edge};
    a.train = {edge, T - edge};
    a.test_tail = {T - edge, T};

    if (!a.test_head.empty()) result.test.blocks.push_back(slice(b, a.test_head));
    if (!a.train.empty()) result.train.blocks.push_back(slice(b, a.train));
    if (!a.test_tail.empty()) result.test.blocks.push_back(slice(b, a.test_tail));
    result.manifest.push_back(std::move(a));
  }
  return result;
}

// --- normalization ---------------------------------------------------------

namespace {

ChannelStats stats_over(const std::vector<const Block*>& blocks, const std::vector<std::size_t>& cols) {
  const auto D = static_cast<Eigen::Index>(cols.size());
  ChannelStats s{Vector::Zero(D), Vector::Zero(D)};
  double n = 0.0;
  for (const auto* b : blocks) n += static_cast<double>(b->length());
  if (n == 0.0) {
    s.std.setOnes();
    return s;
  }
  for (Eigen::Index j = 0; j < D; ++j) {
    const auto c = static_cast<Eigen::Index>(cols[static_cast<std::size_t>(j)]);
    double sum = 0.0;
    for (const auto* b : blocks) sum += b->samples.col(c).sum();
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto* b : blocks) ss += (b->samples.col(c).array() - mean).square().sum();
    s.mean(j) = mean;
    s.std(j) = std::sqrt(ss / n);
  }
  return s;
}

std::vector<std::size_t> all_columns(std::size_t width) {
  std::vector<std::size_t> cols(width);
  for (std::size_t i = 0; i < width; ++i) cols[i] = i;
  return cols;
}

std::vector<const Block*> block_ptrs(const SensorDataset& ds) {
  std::vector<const Block*> out;
  for (const auto& b : ds.blocks) out.push_back(&b);
  return out;
}

}  // namespace

ChannelStats channel_stats(const SensorDataset& ds) { return stats_over(block_ptrs(ds), all_columns(ds.schema.size())); }

ChannelStats channel_stats(const SensorDataset& ds, const std::vector<std::string>& names) {
  return stats_over(block_ptrs(ds), ds.schema.indices_of(names));
}

Matrix standardize(const Matrix& x, const ChannelStats& stats) {
  require(x.cols() == stats.mean.size(), ErrorKind::ShapeMismatch, "standardize: width differs from statistics");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out.col(j) = (x.col(j).array() - stats.mean(j)) / (stats.std(j) + kStdEpsilon);
  }
  return out;
}

SubjectNormalizer SubjectNormalizer::fit(const SensorDataset& ds) {
  SubjectNormalizer n;
  n.width_ = ds.schema.size();
  const auto cols = all_columns(n.width_);
  std::map<std::string, std::vector<const Block*>> groups;
  for (const auto& b : ds.blocks) groups[b.subject_id].push_back(&b);
  for (const auto& [subject, blocks] : groups) n.per_subject_[subject] = stats_over(blocks, cols);
  n.pooled_ = stats_over(block_ptrs(ds), cols);
  return n;
}

SensorDataset SubjectNormalizer::apply(const SensorDataset& ds) const {
  require(ds.schema.size() == width_, ErrorKind::WidthMismatch, "normalizer fitted on a different width");
  SensorDataset out = ds;
  for (auto& b : out.blocks) {
    auto it = per_subject_.find(b.subject_id);
    const auto& stats = it != per_subject_.end() ? it->second : pooled_;
    b.samples = standardize(b.samples, stats);
  }
  return out;
}

SensorDataset normalize_per_subject(const SensorDataset& ds) { return SubjectNormalizer::fit(ds).apply(ds); }

// --- validation ------------------------------------------------------------

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::WidthMismatch: return "WidthMismatch";
    case ViolationKind::NonFinite: return "NonFinite";
    case ViolationKind::IllegalLabel: return "IllegalLabel";
    case ViolationKind::LabelLengthMismatch: return "LabelLengthMismatch";
    case ViolationKind::EmptyBlock: return "EmptyBlock";
    case ViolationKind::NoBlocks: return "NoBlocks";
    case ViolationKind::BadRate: return "BadRate";
  }
  return "Unknown";
}

std::vector<Violation> validate(const SensorDataset& ds) {
  std::vector<Violation> out;
  if (!(ds.rate > 0.0) || !std::isfinite(ds.rate)) {
    out.push_back({ViolationKind::BadRate, std::nullopt, std::nullopt, "rate must be positive"});
  }
  if (ds.blocks.empty()) out.push_back({ViolationKind::NoBlocks, std::nullopt, std::nullopt, "dataset has no blocks"});

  const auto D = static_cast<Eigen::Index>(ds.schema.size());
  const auto K = static_cast<int>(ds.label_set.size());
  for (std::size_t i = 0; i < ds.blocks.size(); ++i) {
    const auto& b = ds.blocks[i];
    if (b.samples.rows() == 0) out.push_back({ViolationKind::EmptyBlock, i, std::nullopt, "block has no samples"});
    if (b.samples.cols() != D) {
      out.push_back({ViolationKind::WidthMismatch, i, std::nullopt,
                     "width " + std::to_string(b.samples.cols()) + " != schema " + std::to_string(D)});
    }
    for (Eigen::Index c = 0; c < std::min(D, b.samples.cols()); ++c) {
      const auto bad = (!b.samples.col(c).array().isFinite()).count();
      if (bad > 0) {
        out.push_back({ViolationKind::NonFinite, i, ds.schema[static_cast<std::size_t>(c)].name,
                       std::to_string(bad) + " non-finite samples"});
      }
    }
    if (b.labels.size() != b.length()) {
      out.push_back({ViolationKind::LabelLengthMismatch, i, std::nullopt,
                     std::to_string(b.labels.size()) + " labels for " + std::to_string(b.length()) + " samples"});
    }
    const auto illegal = std::count_if(b.labels.begin(), b.labels.end(), [K](int y) { return y < 0 || y >= K; });
    if (illegal > 0) {
      out.push_back({ViolationKind::IllegalLabel, i, std::nullopt, std::to_string(illegal) + " labels outside the label set"});
    }
  }
  return out;
}

}  // namespace hetfuse

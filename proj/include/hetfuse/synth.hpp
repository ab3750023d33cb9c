#pragma once

#include "hetfuse/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hetfuse {

enum class ResponseKind { affine, tanh_mix };

// value = offset + slope * y + sum_j mix[j] * h(value_j) + N(0, noise_std^2)
// with h = identity (affine) or tanh (tanh_mix). `mix` may only name channels
// listed earlier.
struct ChannelSpec {
  std::string name;
  Modality modality = Modality::OTHER;
  double offset = 0.0;
  double slope = 1.0;
  double noise_std = 1.0;
  std::map<std::string, double> mix;
  ResponseKind kind = ResponseKind::affine;
};

// A domain exposes a subset of the channels, each seen through its own
// device gain and offset.
struct DomainLayout {
  std::string id;
  std::vector<std::string> channels;
  std::optional<std::size_t> subjects;
  std::optional<std::size_t> block_length;
  std::map<std::string, double> gain;
  std::map<std::string, double> offset;
};

struct SynthConfig {
  std::size_t label_count = 2;
  std::vector<ChannelSpec> channels;
  std::vector<DomainLayout> domains;  // the first one is the target
  std::size_t subjects = 4;
  std::size_t block_length = 512;
  double persistence = 0.99;  // probability of keeping the label per step
  double rate = 32.0;
  std::uint64_t seed = 0;
};

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthConfig& cfg);
// Throws InvalidLayout / InvalidArgument on an inconsistent config.
void check(const SynthConfig& cfg);

struct MultiDomain {
  SensorDataset target;
  std::vector<SensorDataset> sources;
  // The target's blocks restricted to the channels it does not expose, with
  // the target's device distortion applied.
  SensorDataset hidden_truth;
};

MultiDomain generate_multidomain(const SynthConfig& cfg);

// Bayes accuracy for classifying a window of `window` i.i.d. samples of the
// given channels (default: the target's) whose label is constant, under
// equal class priors. Throws UnsupportedResponse for non-affine channels.
double oracle_bayes_accuracy(const SynthConfig& cfg, std::size_t window = 1,
                             const std::optional<std::vector<std::string>>& channels = std::nullopt);

}  // namespace hetfuse

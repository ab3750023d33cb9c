#pragma once

#include "hetfuse/dataset.hpp"
#include "hetfuse/nn.hpp"
#include "hetfuse/preprocess.hpp"

#include <cstdint>
#include <vector>

namespace hetfuse {

struct MiEstimate {
  double value = 0.0;  // nats
  std::size_t bins = 0;
  std::size_t sample_count = 0;
};

// Equal-width histogram plug-in estimate of I(X; y) with the Miller-Madow
// correction, clamped at 0. Each column is binned over its own range and the
// joint cell is the tuple of column bins. Needs n >= 10 * bins^columns.
MiEstimate mutual_info_binned(const Matrix& x, const std::vector<int>& y, std::size_t bins = 16);

// y ~ Bernoulli(positive_rate); x = x_slope * y + N(0, 1) and
// a = a_slope * y + N(0, 1) drawn independently given y.
struct Theorem1Config {
  std::size_t samples = 50000;
  std::size_t bins = 16;
  double x_slope = 1.0;
  double a_slope = 1.0;
  double positive_rate = 0.5;
  double tolerance = 0.01;
};

struct Theorem1Result {
  double i_x = 0.0;
  double i_xplus = 0.0;
  bool passed = false;
};

// Passes iff I([x, a]; y) >= I(x; y) - tolerance.
Theorem1Result theorem1_direction_check(const Theorem1Config& cfg, std::uint64_t seed);

struct DistanceConfig {
  std::vector<Eigen::Index> hidden{16};
  TrainConfig train{1e-2, 30, 64, 0, 0.0, 1.0, false, Optimizer::adam};
  std::uint64_t seed = 0;
};

struct DistanceEstimate {
  double value = 0.0;  // 2 (1 - 2 error), clamped to [0, 2]
  double classifier_error = 0.0;
};

// Proxy A-distance: a domain classifier trained on a shuffled half of the
// pooled rows (standardized with that half's statistics), scored on the
// other half.
DistanceEstimate proxy_a_distance(const Matrix& a, const Matrix& b, const DistanceConfig& cfg = {});

// Test minus train cross-entropy over windows.
double generalization_gap(const DenseNet& f, const Matrix& train_x, const std::vector<int>& train_y,
                          const Matrix& test_x, const std::vector<int>& test_y);
double generalization_gap(const DenseNet& f, const SensorDataset& train, const SensorDataset& test,
                          const WindowConfig& wcfg);

}  // namespace hetfuse

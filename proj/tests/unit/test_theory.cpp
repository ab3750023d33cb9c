#include "hetfuse/error.hpp"
#include "hetfuse/theory.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hetfuse;
using hetfuse::test::random_matrix;

namespace {

std::vector<int> coin(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(0.5);
  std::vector<int> y(n);
  for (auto& v : y) v = b(rng) ? 1 : 0;
  return y;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double binary_entropy(double p) { return p <= 0.0 || p >= 1.0 ? 0.0 : -p * std::log(p) - (1 - p) * std::log(1 - p); }

// I(x1; 1[x2 > 0]) for standard bivariate Gaussians with correlation rho,
// by trapezoid integration over x1.
double gaussian_threshold_mi(double rho) {
  const double s = std::sqrt(1.0 - rho * rho);
  double cond = 0.0;
  const double h = 1e-3;
  for (double x = -10.0; x <= 10.0; x += h) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    cond += h * pdf * binary_entropy(normal_cdf(rho * x / s));
  }
  return std::log(2.0) - cond;
}

}  // namespace

TEST(MutualInfo, IndependentIsNearZero) {
  const std::size_t n = 100000;
  const auto est = mutual_info_binned(random_matrix(n, 1, 1), coin(n, 2), 16);
  EXPECT_LT(std::abs(est.value), 0.02);
  EXPECT_EQ(est.sample_count, n);
}

TEST(MutualInfo, DeterministicBinaryIsLn2) {
  const std::size_t n = 100000;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(n), 1);
  for (auto& v : x.reshaped()) v = u(rng);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x(static_cast<Eigen::Index>(i), 0) > 0 ? 1 : 0;
  EXPECT_NEAR(mutual_info_binned(x, y, 16).value, std::log(2.0), 0.02);
}

TEST(MutualInfo, CorrelatedGaussianMatchesIntegral) {
  const std::size_t n = 100000;
  const double rho = 0.8;
  const Matrix z = random_matrix(n, 2, 4);
  Matrix x(n, 1);
  std::vector<int> y(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    x(i, 0) = z(i, 0);
    y[static_cast<std::size_t>(i)] = rho * z(i, 0) + std::sqrt(1 - rho * rho) * z(i, 1) > 0 ? 1 : 0;
  }
  EXPECT_NEAR(mutual_info_binned(x, y, 16).value, gaussian_threshold_mi(rho), 0.05);
}

TEST(MutualInfo, InvariantUnderMonotoneTransforms) {
  const std::size_t n = 100000;
  const Matrix z = random_matrix(n, 1, 5);
  std::vector<int> y(n);
  Matrix x(n, 1), ex(n, 1), lx(n, 1);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    const int label = i % 2;
    y[static_cast<std::size_t>(i)] = label;
    // Uniform support keeps equal-width bins informative before and after.
    x(i, 0) = 0.5 * label + normal_cdf(z(i, 0));
    ex(i, 0) = std::exp(x(i, 0));
    lx(i, 0) = std::log(1.0 + x(i, 0));
  }
  const double base = mutual_info_binned(x, y).value;
  EXPECT_NEAR(mutual_info_binned(ex, y).value, base, 0.05);
  EXPECT_NEAR(mutual_info_binned(lx, y).value, base, 0.05);
}

TEST(MutualInfo, Guards) {
  try {
    mutual_info_binned(random_matrix(100, 2, 1), coin(100, 1), 16);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewSamples);
  }
  EXPECT_GE(mutual_info_binned(random_matrix(200, 1, 2), coin(200, 3), 4).value, 0.0);
}

TEST(Theorem1, PassesOnHundredSeeds) {
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Theorem1Config cfg;
    cfg.samples = 20000;
    cfg.x_slope = 0.5 + 0.02 * static_cast<double>(seed);
    cfg.a_slope = 0.02 * static_cast<double>(seed % 50);
    passed += theorem1_direction_check(cfg, seed).passed ? 1 : 0;
  }
  EXPECT_EQ(passed, 100);
}

TEST(Theorem1, InformativeExtraFeatureAddsInformation) {
  Theorem1Config cfg;
  cfg.a_slope = 1.5;
  const auto r = theorem1_direction_check(cfg, 7);
  EXPECT_GT(r.i_xplus, r.i_x);
  EXPECT_TRUE(r.passed);
}

TEST(Theorem1, NoiseFeatureAddsNothing) {
  Theorem1Config cfg;
  cfg.a_slope = 0.0;
  const auto r = theorem1_direction_check(cfg, 8);
  EXPECT_NEAR(r.i_xplus, r.i_x, 0.02);
}

TEST(Theorem1, ConstantLabel) {
  Theorem1Config cfg;
  cfg.positive_rate = 0.0;
  const auto r = theorem1_direction_check(cfg, 9);
  EXPECT_NEAR(r.i_x, 0.0, 1e-3);
  EXPECT_NEAR(r.i_xplus, 0.0, 1e-3);
}

TEST(ProxyA, IdenticalDistributions) {
  const auto d = proxy_a_distance(random_matrix(5000, 2, 10), random_matrix(5000, 2, 11));
  EXPECT_LT(d.value, 0.2);
}

TEST(ProxyA, DisjointSupports) {
  Matrix a = (random_matrix(500, 1, 12).array().abs().min(1.0)).matrix();
  Matrix b = (a.array() + 10.0).matrix();
  const auto d = proxy_a_distance(a, b);
  EXPECT_GT(d.value, 1.8);
  EXPECT_LT(d.classifier_error, 0.05);
}

TEST(ProxyA, MonotoneInShift) {
  double prev = -1.0;
  for (double shift : {0.5, 1.0, 2.0}) {
    const Matrix a = random_matrix(2000, 1, 13);
    const Matrix b = (random_matrix(2000, 1, 14).array() + shift).matrix();
    const double d = proxy_a_distance(a, b).value;
    EXPECT_GT(d, prev) << shift;
    EXPECT_GT(d, 0.0);
    EXPECT_LT(d, 2.0);
    prev = d;
  }
}

TEST(ProxyA, SymmetricWithinNoise) {
  double ab = 0.0, ba = 0.0;
  const int seeds = 10;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const Matrix a = random_matrix(1000, 2, 20 + seed);
    const Matrix b = (random_matrix(1000, 2, 30 + seed).array() + 0.7).matrix();
    DistanceConfig cfg;
    cfg.seed = seed;
    ab += proxy_a_distance(a, b, cfg).value / seeds;
    ba += proxy_a_distance(b, a, cfg).value / seeds;
  }
  EXPECT_LT(std::abs(ab - ba), 0.1);
}

TEST(ProxyA, Guards) {
  try {
    proxy_a_distance(random_matrix(100, 2, 1), random_matrix(100, 3, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WidthMismatch);
  }
  try {
    proxy_a_distance(random_matrix(50, 2, 1), random_matrix(100, 2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewSamples);
  }
}

namespace {

// Noisy labels: y = 1[x0 > 0] flipped with probability 0.3.
void noisy_task(std::size_t n, std::uint64_t seed, Matrix& x, std::vector<int>& y) {
  x = random_matrix(static_cast<Eigen::Index>(n), 4, seed);
  std::mt19937_64 rng(seed + 1);
  std::bernoulli_distribution flip(0.3);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = (x(static_cast<Eigen::Index>(i), 0) > 0) != flip(rng) ? 1 : 0;
}

DenseNet fit(const Matrix& x, const std::vector<int>& y, std::size_t epochs) {
  MlpSpec s;
  s.input_dim = 4;
  s.output_dim = 2;
  s.hidden = {64, 64};
  s.output_activation = Activation::softmax;
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  return train_classifier(make_mlp(s), x, y, cfg).net;
}

}  // namespace

TEST(GeneralizationGap, ConstantClassifierHasNoGap) {
  DenseNet f;
  f.layers.push_back(DenseLayer{Matrix::Zero(2, 4), Vector::Zero(2), Activation::softmax, std::nullopt});
  Matrix xa, xb;
  std::vector<int> ya, yb;
  noisy_task(5000, 1, xa, ya);
  noisy_task(5000, 2, xb, yb);
  EXPECT_NEAR(generalization_gap(f, xa, ya, xb, yb), 0.0, 0.01);
}

TEST(GeneralizationGap, OverfitNetShowsGapThatShrinksWithData) {
  Matrix xs, xl, xt;
  std::vector<int> ys, yl, yt;
  noisy_task(100, 3, xs, ys);
  noisy_task(1000, 4, xl, yl);
  noisy_task(4000, 5, xt, yt);
  const double small = generalization_gap(fit(xs, ys, 300), xs, ys, xt, yt);
  const double large = generalization_gap(fit(xl, yl, 30), xl, yl, xt, yt);
  EXPECT_GT(small, 0.0);
  EXPECT_LT(large, small);
}

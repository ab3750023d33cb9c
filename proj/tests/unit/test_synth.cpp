#include "hetfuse/csv_io.hpp"
#include "hetfuse/error.hpp"
#include "hetfuse/pipeline.hpp"
#include "hetfuse/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace hetfuse;

namespace {

SynthConfig two_channel(double persistence, std::uint64_t seed) {
  SynthConfig c;
  c.channels = {ChannelSpec{"HR", Modality::HR, 1.0, 2.0, 1.0, {}}, ChannelSpec{"GSR", Modality::GSR, -1.0, -1.0, 0.5, {}}};
  c.domains = {DomainLayout{"wear", {"HR"}, std::nullopt, std::nullopt, {}, {}},
               DomainLayout{"lab", {"HR", "GSR"}, std::nullopt, std::nullopt, {}, {}}};
  c.persistence = persistence;
  c.seed = seed;
  return c;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

TEST(Synth, UnitPersistenceHoldsLabel) {
  const auto md = generate_multidomain(two_channel(1.0, 1));
  for (const auto& b : md.target.blocks) {
    for (int l : b.labels) EXPECT_EQ(l, b.labels.front());
  }
}

TEST(Synth, LayoutAndHiddenTruth) {
  const auto md = generate_multidomain(two_channel(0.99, 2));
  EXPECT_EQ(md.target.schema.names(), std::vector<std::string>{"HR"});
  ASSERT_EQ(md.sources.size(), 1u);
  EXPECT_EQ(md.sources[0].domain_id, "lab");
  EXPECT_EQ(md.hidden_truth.schema.names(), std::vector<std::string>{"GSR"});
  ASSERT_EQ(md.hidden_truth.blocks.size(), md.target.blocks.size());
  EXPECT_EQ(md.hidden_truth.blocks[0].labels, md.target.blocks[0].labels);
}

TEST(Synth, NoiseIsConditionallyUncorrelated) {
  auto cfg = two_channel(0.95, 3);
  cfg.subjects = 1;
  cfg.block_length = 100000;
  const auto md = generate_multidomain(cfg);
  const auto& b = md.sources[0].blocks[0];
  Vector y(b.samples.rows());
  for (Eigen::Index t = 0; t < y.size(); ++t) y(t) = b.labels[static_cast<std::size_t>(t)];
  const Vector e0 = b.samples.col(0) - (Vector::Constant(y.size(), 1.0) + 2.0 * y);
  const Vector e1 = b.samples.col(1) - (Vector::Constant(y.size(), -1.0) - y);
  EXPECT_LT(std::abs(test::correlation(e0, e1)), 0.02);
}

TEST(Synth, SameSeedSameBytes) {
  namespace fs = std::filesystem;
  const auto a = fs::temp_directory_path() / "hetfuse_synth_a";
  const auto b = fs::temp_directory_path() / "hetfuse_synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  write_dataset(a, generate_multidomain(two_channel(0.99, 4)).target);
  write_dataset(b, generate_multidomain(two_channel(0.99, 4)).target);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(read_file(e.path()), read_file(b / e.path().filename()));
    ++files;
  }
  EXPECT_GT(files, 1u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Synth, InvalidLayout) {
  auto cfg = two_channel(0.99, 0);
  cfg.channels.push_back(ChannelSpec{"EEG", Modality::EEG, 0.0, 1.0, 1.0, {}});
  cfg.domains.push_back(DomainLayout{"eeg_only", {"EEG"}, std::nullopt, std::nullopt, {}, {}});
  try {
    generate_multidomain(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidLayout);
  }
}

TEST(Synth, JsonRoundTrip) {
  auto cfg = two_channel(0.97, 8);
  cfg.channels[1].mix = {{"HR", 0.25}};
  cfg.domains[0].gain = {{"HR", 2.0}};
  EXPECT_EQ(to_json(synth_config_from_json(to_json(cfg))), to_json(cfg));
}

TEST(Oracle, ZeroSeparationIsChance) {
  auto cfg = two_channel(0.99, 0);
  cfg.channels[0].slope = 0.0;
  EXPECT_NEAR(oracle_bayes_accuracy(cfg), 0.5, 1e-12);
  cfg.label_count = 3;
  EXPECT_NEAR(oracle_bayes_accuracy(cfg), 1.0 / 3.0, 1e-12);
}

TEST(Oracle, UnitSeparationIsPhiOne) {
  auto cfg = two_channel(0.99, 0);
  // Class means 0 and 2 (offset-shifted +-1), unit noise.
  EXPECT_NEAR(oracle_bayes_accuracy(cfg), normal_cdf(1.0), 1e-9);
  EXPECT_NEAR(oracle_bayes_accuracy(cfg), 0.8413, 1e-4);
  // Averaging a window of 4 doubles the separation.
  EXPECT_NEAR(oracle_bayes_accuracy(cfg, 4), normal_cdf(2.0), 1e-9);
}

TEST(Oracle, LargeSeparation) {
  auto cfg = two_channel(0.99, 0);
  cfg.channels[0].slope = 20.0;
  EXPECT_GE(oracle_bayes_accuracy(cfg), 0.999);
}

TEST(Oracle, RejectsNonAffine) {
  auto cfg = two_channel(0.99, 0);
  cfg.channels[1].kind = ResponseKind::tanh_mix;
  try {
    oracle_bayes_accuracy(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedResponse);
  }
}

TEST(Oracle, TrainedDetectorsNeverBeatIt) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto cfg = two_channel(0.995, 10 + seed);
    cfg.channels[0].slope = 1.0;
    cfg.subjects = 4;
    cfg.block_length = 2048;
    const auto md = generate_multidomain(cfg);
    const auto split = block_split(md.target, 0.5);
    DetectorTrainConfig dc;
    dc.detector.hidden = {16};
    dc.detector.train.learning_rate = 3e-3;
    dc.detector.train.epochs = 20;
    dc.detector.train.batch_size = 32;
    dc.window = {4, 4, LabelRule::majority};
    dc.seed = seed;
    const auto f = train_detector(split.train, dc);
    const double acc = evaluate(f, split.test).accuracy;
    EXPECT_LE(acc, oracle_bayes_accuracy(cfg, 4) + 0.02) << "seed " << seed;
    EXPECT_GT(acc, 0.6);
  }
}

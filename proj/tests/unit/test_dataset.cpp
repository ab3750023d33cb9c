#include "hetfuse/dataset.hpp"
#include "hetfuse/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace hetfuse;
using hetfuse::test::make_dataset;
using hetfuse::test::schema_of;

namespace {

const std::vector<std::string> kVpfd{"PPG", "GSR", "HR", "ST", "ACC", "EYE"};
const std::vector<std::string> kMefar{"PPG", "GSR", "HR", "ST", "ACC", "EEG"};
const std::vector<std::string> kFatigueSet{"PPG", "GSR", "HR", "ST", "ACC", "EEG", "ECG"};

using Names = std::vector<std::string>;

}  // namespace

TEST(SetAlgebra, CommonChannelsIntersects) {
  EXPECT_EQ(common_channels(schema_of(Names{"HR", "PPG", "GSR"}), schema_of(Names{"HR", "EEG"})), Names{"HR"});
  EXPECT_EQ(common_channels(schema_of(kVpfd), schema_of(kVpfd)), kVpfd);
  EXPECT_EQ(common_channels(schema_of(kVpfd), schema_of(kMefar)), (Names{"PPG", "GSR", "HR", "ST", "ACC"}));
}

TEST(SetAlgebra, ExtraInSource) {
  EXPECT_EQ(extra_in_source(schema_of(kVpfd), schema_of(kMefar)), Names{"EEG"});
  EXPECT_EQ(extra_in_source(schema_of(kVpfd), schema_of(kFatigueSet)), (Names{"EEG", "ECG"}));
  EXPECT_TRUE(extra_in_source(schema_of(kVpfd), schema_of(kVpfd)).empty());
  EXPECT_EQ(missing_in_source(schema_of(kVpfd), schema_of(kMefar)), Names{"EYE"});
}

TEST(SetAlgebra, ModalityLevelGroupsChannels) {
  auto target = schema_of({{"ACC_x", Modality::ACC}, {"HR", Modality::HR}});
  auto source = schema_of({{"ACC_y", Modality::ACC}, {"HR", Modality::HR}, {"EEG_1", Modality::EEG}, {"EEG_2", Modality::EEG}});
  EXPECT_EQ(extra_in_source(target, source, SetLevel::channel), (Names{"ACC_y", "EEG_1", "EEG_2"}));
  EXPECT_EQ(extra_in_source(target, source, SetLevel::modality), (Names{"EEG_1", "EEG_2"}));
}

TEST(Schema, RejectsDuplicateNames) {
  EXPECT_THROW(schema_of(Names{"HR", "HR"}), Error);
}

class BlockSplitSizes : public ::testing::TestWithParam<std::size_t> {};

TEST_P(BlockSplitSizes, MatchesFloorRuleIndexByIndex) {
  const std::size_t T = GetParam();
  auto ds = make_dataset(schema_of(Names{"HR"}), {T}, [](auto, auto t, auto) { return static_cast<double>(t); });
  auto split = block_split(ds, 0.2);
  // Oracle: e = floor(T / 10) computed in integer arithmetic.
  const std::size_t e = T / 10;
  std::vector<double> want_test, want_train;
  for (std::size_t t = 0; t < T; ++t) (t < e || t >= T - e ? want_test : want_train).push_back(static_cast<double>(t));

  std::vector<double> got_test, got_train;
  for (const auto& b : split.test.blocks) {
    for (Eigen::Index i = 0; i < b.samples.rows(); ++i) got_test.push_back(b.samples(i, 0));
  }
  for (const auto& b : split.train.blocks) {
    for (Eigen::Index i = 0; i < b.samples.rows(); ++i) got_train.push_back(b.samples(i, 0));
  }
  std::sort(got_test.begin(), got_test.end());
  EXPECT_EQ(got_test, want_test);
  EXPECT_EQ(got_train, want_train);
  ASSERT_EQ(split.manifest.size(), 1u);
  EXPECT_EQ(split.manifest[0].test_head, (IndexRange{0, e}));
  EXPECT_EQ(split.manifest[0].train, (IndexRange{e, T - e}));
  EXPECT_EQ(split.manifest[0].test_tail, (IndexRange{T - e, T}));
}

INSTANTIATE_TEST_SUITE_P(Lengths, BlockSplitSizes, ::testing::Values(5, 10, 30, 100, 101));

TEST(BlockSplit, HeadAndTailAreSeparateBlocksWithOrigins) {
  auto ds = make_dataset(schema_of(Names{"HR"}), {100, 50}, [](auto b, auto t, auto) { return 1000.0 * b + t; });
  auto split = block_split(ds);
  ASSERT_EQ(split.test.blocks.size(), 4u);
  EXPECT_EQ(split.test.blocks[1].origin, (SampleOrigin{0, 90}));
  EXPECT_EQ(split.train.blocks[1].origin, (SampleOrigin{1, 5}));
  EXPECT_DOUBLE_EQ(split.train.blocks[1].samples(0, 0), 1005.0);
}

TEST(BlockSplit, RejectsEmptyBlock) {
  auto ds = make_dataset(schema_of(Names{"HR"}), {10, 0}, [](auto, auto, auto) { return 0.0; });
  try {
    block_split(ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyBlock);
  }
}

TEST(Normalize, ZeroVarianceGuard) {
  auto ds = make_dataset(schema_of(Names{"HR"}), {3}, [](auto, auto, auto) { return 5.0; });
  auto out = normalize_per_subject(ds);
  EXPECT_TRUE(out.blocks[0].samples.isZero(0.0));
}

TEST(Normalize, TwoPointChannel) {
  auto ds = make_dataset(schema_of(Names{"HR"}), {2}, [](auto, auto t, auto) { return 2.0 * t; });
  auto out = normalize_per_subject(ds);
  EXPECT_NEAR(out.blocks[0].samples(0, 0), -1.0, 1e-6);
  EXPECT_NEAR(out.blocks[0].samples(1, 0), 1.0, 1e-6);
}

TEST(Normalize, PerSubjectMeansVanish) {
  auto ds = make_dataset(schema_of(Names{"HR", "GSR"}), {64, 64},
                         [](auto b, auto t, auto c) { return 100.0 * b + 3.0 * c + std::sin(0.3 * t); });
  auto out = normalize_per_subject(ds);
  for (const auto& blk : out.blocks) {
    for (Eigen::Index c = 0; c < 2; ++c) EXPECT_LT(std::abs(blk.samples.col(c).mean()), 1e-6);
  }
}

TEST(Normalize, FittedNormalizerUsesTrainStatistics) {
  auto train = make_dataset(schema_of(Names{"HR"}), {4}, [](auto, auto t, auto) { return static_cast<double>(t); });
  auto test = make_dataset(schema_of(Names{"HR"}), {2}, [](auto, auto, auto) { return 1.5; });
  auto n = SubjectNormalizer::fit(train);
  EXPECT_NEAR(n.apply(test).blocks[0].samples(0, 0), 0.0, 1e-12);
}

TEST(Validate, WellFormedIsClean) {
  auto ds = make_dataset(schema_of(Names{"HR", "GSR"}), {8}, [](auto, auto t, auto) { return t * 0.5; });
  EXPECT_TRUE(validate(ds).empty());
}

TEST(Validate, NaNNamesBlockAndChannel) {
  auto ds = make_dataset(schema_of(Names{"HR", "GSR"}), {8, 8}, [](auto, auto, auto) { return 1.0; });
  ds.blocks[1].samples(3, 1) = std::numeric_limits<double>::quiet_NaN();
  auto v = validate(ds);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::NonFinite);
  EXPECT_EQ(v[0].block, 1u);
  EXPECT_EQ(v[0].channel, "GSR");
}

TEST(Validate, WidthMismatch) {
  auto ds = make_dataset(schema_of(Names{"HR", "GSR"}), {8}, [](auto, auto, auto) { return 1.0; });
  ds.blocks[0].samples.conservativeResize(8, 3);
  ds.blocks[0].samples.col(2).setZero();
  auto v = validate(ds);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::WidthMismatch);
}

TEST(Validate, IllegalLabel) {
  auto ds = make_dataset(schema_of(Names{"HR"}), {4}, [](auto, auto, auto) { return 1.0; });
  ds.blocks[0].labels[2] = 7;
  auto v = validate(ds);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, ViolationKind::IllegalLabel);
}

#include "hetfuse/error.hpp"
#include "hetfuse/pipeline.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

using namespace hetfuse;
using Names = std::vector<std::string>;

namespace {

SynthConfig three_domain() {
  SynthConfig c;
  c.channels = {ChannelSpec{"PPG", Modality::PPG, 0.0, 0.5, 1.0, {}}, ChannelSpec{"ECG", Modality::ECG, 0.0, 0.8, 1.0, {{"PPG", 0.5}}},
                ChannelSpec{"EEG", Modality::EEG, 0.0, 0.8, 1.0, {}}};
  c.domains = {DomainLayout{"wear", {"PPG"}, 3, 256, {}, {}}, DomainLayout{"lab_ecg", {"PPG", "ECG"}, 3, 512, {}, {}},
               DomainLayout{"lab_eeg", {"PPG", "EEG"}, 3, 512, {}, {}}};
  c.persistence = 0.99;
  c.seed = 4;
  return c;
}

ScenarioConfig quick_scenario() {
  ScenarioConfig s;
  s.name = "quick";
  s.data.synth = three_domain();
  s.sources = {"lab_ecg", "lab_eeg"};
  s.window = {8, 4, LabelRule::majority};
  s.imputer.options.hidden = {8};
  s.imputer.train.epochs = 2;
  s.imputer.train.batch_size = 32;
  s.imputer.window = {8, 4, LabelRule::majority};
  s.detector.hidden = {8};
  s.detector.train.epochs = 3;
  s.detector.train.batch_size = 32;
  s.seeds = {0, 1};
  return s;
}

EnhanceConfig enhance_cfg(const ScenarioConfig& s) {
  EnhanceConfig e;
  e.imputer = s.imputer;
  return e;
}

// Window-level detector on a one-channel dataset with window 1.
Detector fixed_detector(const SensorDataset& like, Matrix w) {
  Detector f;
  f.net.layers.push_back(DenseLayer{std::move(w), Vector::Zero(2), Activation::softmax, std::nullopt});
  f.schema = like.schema;
  f.label_set = like.label_set;
  f.window = {1, 1, LabelRule::majority};
  return f;
}

}  // namespace

TEST(Enhance, EmptySourceListIsIdentity) {
  const auto data = load_data(quick_scenario().data, 0);
  const auto out = enhance_target(data.target, {}, enhance_cfg(quick_scenario()));
  EXPECT_EQ(out.schema, data.target.schema);
  for (std::size_t b = 0; b < out.blocks.size(); ++b) EXPECT_TRUE(out.blocks[b].samples == data.target.blocks[b].samples);
}

TEST(Enhance, CascadeAppendsInOrderAndPreservesOriginals) {
  const auto data = load_data(quick_scenario().data, 0);
  const auto out = enhance_target(data.target, data.sources, enhance_cfg(quick_scenario()));
  EXPECT_EQ(out.schema.names(), (Names{"PPG", "ECG", "EEG"}));
  EXPECT_EQ(out.schema[1].provenance, "generated_from:lab_ecg");
  EXPECT_EQ(out.schema[2].provenance, "generated_from:lab_eeg");
  for (std::size_t b = 0; b < out.blocks.size(); ++b) {
    EXPECT_TRUE(out.blocks[b].samples.col(0) == data.target.blocks[b].samples.col(0));
    EXPECT_EQ(out.blocks[b].labels, data.target.blocks[b].labels);
  }
  const auto reversed = enhance_target(data.target, {data.sources[1], data.sources[0]}, enhance_cfg(quick_scenario()));
  EXPECT_EQ(reversed.schema.names(), (Names{"PPG", "EEG", "ECG"}));
}

TEST(Enhance, SourceWithoutExtrasIsSkipped) {
  const auto data = load_data(quick_scenario().data, 0);
  const auto out = enhance_target(data.target, {data.sources[0], data.sources[0]}, enhance_cfg(quick_scenario()));
  EXPECT_EQ(out.schema.names(), (Names{"PPG", "ECG"}));
}

TEST(Leakage, NoFitAccessTouchesTestSamples) {
  for (bool normalize : {true, false}) {
    for (std::uint64_t seed : {0, 1, 2}) {
      auto s = quick_scenario();
      s.normalize = normalize;
      s.test_fraction = 0.1 + 0.1 * static_cast<double>(seed);
      const auto data = load_data(s.data, seed);
      RunTrace trace;
      run_scenario(s, data, seed, &trace);
      EXPECT_FALSE(trace.log.entries.empty());
      EXPECT_TRUE(leakage_violations(trace.log, trace.target_domain, trace.manifest).empty());

      NoiseBaselineConfig nb;
      nb.mask = {"PPG"};
      auto t = s;
      t.data.synth->domains[0].channels = {"PPG", "ECG"};
      const auto d2 = load_data(t.data, seed);
      RunTrace trace2;
      run_noise_baseline(t, nb, d2, seed, &trace2);
      EXPECT_TRUE(leakage_violations(trace2.log, trace2.target_domain, trace2.manifest).empty());
    }
  }
}

TEST(Leakage, DetectsAFitOnTestSamples) {
  const auto data = load_data(quick_scenario().data, 0);
  const auto split = block_split(data.target);
  AccessLog log;
  log.record("train", Access::fit, split.train);
  EXPECT_TRUE(leakage_violations(log, data.target.domain_id, split.manifest).empty());
  log.record("oops", Access::fit, split.test);
  EXPECT_EQ(leakage_violations(log, data.target.domain_id, split.manifest).size(), split.test.blocks.size());
}

TEST(Report, DeterministicAcrossRunsAndJobCounts) {
  ExperimentConfig cfg;
  cfg.name = "det";
  cfg.base = quick_scenario();
  cfg.scenarios = {cfg.base};
  cfg.scenarios[0].sources = {};
  cfg.scenarios[0].name = "target only";
  cfg.scenarios.push_back(cfg.base);
  const auto a = run_experiment(cfg, 1);
  const auto b = run_experiment(cfg, 1);
  const auto c = run_experiment(cfg, 3);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.runs_csv(), c.runs_csv());
  EXPECT_EQ(a.table(), c.table());
  ASSERT_EQ(a.runs.size(), 4u);
  for (const auto& r : a.runs) {
    ASSERT_TRUE(r.accuracy && r.cross_entropy);
    EXPECT_GE(*r.accuracy, 0.0);
    EXPECT_LE(*r.accuracy, 1.0);
    EXPECT_GE(*r.cross_entropy, 0.0);
  }
  EXPECT_EQ(a.runs[0].scenario, "target only");
  EXPECT_EQ(a.runs[3].channels, (Names{"PPG", "ECG", "EEG"}));
  EXPECT_EQ(a.runs[3].imputation_mse.size(), 2u);
}

TEST(Ablation, GridShapeAndBaselineEquivalence) {
  ExperimentConfig cfg;
  cfg.name = "abl";
  cfg.kind = ExperimentKind::ablation;
  cfg.base = quick_scenario();
  auto second = cfg.base;
  second.name = "one-source";
  second.sources = {"lab_eeg"};
  cfg.scenarios = {cfg.base, second};
  const auto rep = run_experiment(cfg, 2);
  EXPECT_EQ(rep.runs.size(), 4u * 2u * 2u);
  EXPECT_EQ(rep.scenario_order.front(), "quick/Baseline");
  EXPECT_EQ(rep.scenario_order.back(), "one-source/BN+Jacobian");

  auto off = cfg.base;
  off.use_batchnorm = false;
  off.use_jacobian = false;
  const auto direct = run_scenario(off, load_data(off.data, 1), 1);
  const auto& grid = rep.runs[1];
  EXPECT_EQ(grid.scenario, "quick/Baseline");
  EXPECT_EQ(grid.seed, 1u);
  EXPECT_EQ(grid.accuracy, direct.accuracy);
  EXPECT_EQ(grid.cross_entropy, direct.cross_entropy);
}

TEST(NoiseBaseline, AllVariantsScoredOnTheSameTestSet) {
  auto s = quick_scenario();
  s.sources = {};
  s.data.synth->domains[0].channels = {"PPG", "ECG"};
  NoiseBaselineConfig nb;
  nb.mask = {"ECG"};
  const auto data = load_data(s.data, 0);
  RunTrace trace;
  const auto runs = run_noise_baseline(s, nb, data, 0, &trace);
  ASSERT_EQ(runs.size(), 4u);
  for (std::size_t v = 0; v < 4; ++v) {
    EXPECT_EQ(runs[v].scenario, kNoiseVariants[v]);
    EXPECT_EQ(runs[v].channels, (Names{"PPG", "ECG"}));
  }
  std::map<std::string, std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>> seen;
  for (const auto& e : trace.log.entries) {
    if (e.kind == Access::evaluate) seen[e.stage].emplace_back(e.block, e.range.begin, e.range.end);
  }
  ASSERT_EQ(seen.size(), 4u);
  for (const auto& [stage, ranges] : seen) EXPECT_EQ(ranges, seen.begin()->second) << stage;
  ASSERT_EQ(runs[1].imputation_mse.size(), 1u);
}

TEST(NoiseBaseline, ModalityMaskExpands) {
  auto s = quick_scenario();
  s.sources = {};
  s.data.synth->domains[0].channels = {"PPG", "ECG", "EEG"};
  NoiseBaselineConfig nb;
  nb.mask = {"EEG"};
  EXPECT_EQ(run_noise_baseline(s, nb, load_data(s.data, 0), 0).size(), 4u);
  nb.mask = {"GSR"};
  try {
    run_noise_baseline(s, nb, load_data(s.data, 0), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownChannel);
  }
}

TEST(Detector, SameSeedIdenticalAndSeparableReachesOne) {
  auto ds = test::make_dataset(test::schema_of(Names{"HR"}), {200, 200},
                               [](auto b, auto t, auto) { return ((t / 50 + b) % 2 ? 1.0 : -1.0) + 0.01 * std::sin(1.0 * t); },
                               [](auto b, auto t) { return static_cast<int>((t / 50 + b) % 2); });
  DetectorTrainConfig cfg;
  cfg.detector.hidden = {8};
  cfg.detector.train.epochs = 20;
  cfg.detector.train.learning_rate = 1e-2;
  cfg.window = {5, 5, LabelRule::majority};
  cfg.seed = 3;
  const auto a = train_detector(ds, cfg);
  const auto b = train_detector(ds, cfg);
  EXPECT_TRUE(a.net.layers[0].weight == b.net.layers[0].weight);
  EXPECT_EQ(evaluate(a, ds).accuracy, 1.0);
}

TEST(Evaluate, PerfectClassifier) {
  auto ds = test::make_dataset(test::schema_of(Names{"HR"}), {100}, [](auto, auto t, auto) { return t % 3 ? 1.0 : -1.0; },
                               [](auto, auto t) { return static_cast<int>(t % 3 != 0); });
  Matrix w(2, 1);
  w << -20.0, 20.0;
  const auto r = evaluate(fixed_detector(ds, w), ds);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_LT(r.cross_entropy, 1e-3);
  EXPECT_EQ(r.windows, 100u);
}

TEST(Evaluate, UniformRandomPredictorIsChance) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n;
  std::vector<double> noise(1000);
  for (auto& v : noise) v = n(rng);
  auto ds = test::make_dataset(test::schema_of(Names{"HR"}), {1000}, [&](auto, auto t, auto) { return noise[t]; },
                               [](auto, auto t) { return static_cast<int>(t % 2); });
  Matrix w(2, 1);
  w << 0.0, 1.0;
  EXPECT_NEAR(evaluate(fixed_detector(ds, w), ds).accuracy, 0.5, 0.05);
}

TEST(Evaluate, SchemaMismatch) {
  auto ds = test::make_dataset(test::schema_of(Names{"HR"}), {10}, [](auto, auto, auto) { return 0.0; });
  auto other = test::make_dataset(test::schema_of(Names{"GSR"}), {10}, [](auto, auto, auto) { return 0.0; });
  try {
    evaluate(fixed_detector(ds, Matrix::Zero(2, 1)), other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaMismatch);
  }
}

TEST(Detector, SaveLoadRoundTrip) {
  auto ds = test::make_dataset(test::schema_of(Names{"HR", "GSR"}), {64}, [](auto, auto t, auto c) { return std::sin(0.1 * t + c); },
                               [](auto, auto t) { return static_cast<int>(t > 30); });
  DetectorTrainConfig cfg;
  cfg.detector.hidden = {4};
  cfg.detector.train.epochs = 2;
  cfg.window = {8, 4, LabelRule::majority};
  cfg.batchnorm = true;
  const auto f = train_detector(ds, cfg);
  const auto path = std::filesystem::temp_directory_path() / "hetfuse_detector_rt.hfm";
  save_detector(path, f);
  const auto g = load_detector(path);
  EXPECT_EQ(g.schema, f.schema);
  EXPECT_EQ(g.window.window_samples, 8u);
  EXPECT_EQ(evaluate(g, ds).cross_entropy, evaluate(f, ds).cross_entropy);
  std::filesystem::remove(path);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig cfg;
  cfg.name = "rt";
  cfg.kind = ExperimentKind::noise_baseline;
  cfg.base = quick_scenario();
  cfg.noise.mask = {"ECG"};
  const auto j = to_json(cfg);
  EXPECT_EQ(to_json(experiment_config_from_json(j)).dump(), j.dump());
  auto bad = j;
  bad["scenario"]["detector"]["depth"] = 3;
  try {
    experiment_config_from_json(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
  }
}

TEST(Config, ScenarioOverridesMergeOntoBase) {
  auto j = nlohmann::json::parse(R"({
    "name": "m", "scenario": {"name": "base", "seeds": [3], "detector": {"hidden": [5]}},
    "scenarios": [{"name": "a"}, {"name": "b", "detector": {"jacobian_coeff": 0.5}}]})");
  const auto cfg = experiment_config_from_json(j);
  ASSERT_EQ(cfg.scenarios.size(), 2u);
  EXPECT_EQ(cfg.scenarios[1].name, "b");
  EXPECT_EQ(cfg.scenarios[1].detector.hidden, (std::vector<Eigen::Index>{5}));
  EXPECT_EQ(cfg.scenarios[1].detector.jacobian_coeff, 0.5);
  EXPECT_EQ(cfg.scenarios[0].seeds, (std::vector<std::uint64_t>{3}));
}

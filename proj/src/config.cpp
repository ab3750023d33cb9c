#include "hetfuse/error.hpp"
#include "hetfuse/pipeline.hpp"

#include <algorithm>
#include <initializer_list>

namespace hetfuse {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::Parse, where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    require(std::find(allowed.begin(), allowed.end(), key) != allowed.end(), ErrorKind::Parse,
            where + ": unknown key '" + key + "'");
  }
}

SetLevel parse_level(const std::string& s) {
  if (s == "channel") return SetLevel::channel;
  if (s == "modality") return SetLevel::modality;
  fail(ErrorKind::Parse, "unknown set level '" + s + "'");
}

std::string_view level_name(SetLevel l) { return l == SetLevel::channel ? "channel" : "modality"; }

LabelRule parse_rule(const std::string& s) {
  if (s == "majority") return LabelRule::majority;
  if (s == "last") return LabelRule::last;
  fail(ErrorKind::Parse, "unknown label rule '" + s + "'");
}

ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::scenarios, ExperimentKind::noise_baseline, ExperimentKind::ablation,
                 ExperimentKind::imputer_selection}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorKind::Parse, "unknown experiment kind '" + s + "'");
}

DataConfig data_from_json(const json& j) {
  check_keys(j, {"synth", "target_dir", "source_dirs", "preprocess"}, "data");
  DataConfig d;
  if (j.contains("synth")) d.synth = synth_config_from_json(j["synth"]);
  d.target_dir = j.value("target_dir", std::string());
  if (j.contains("source_dirs")) {
    for (const auto& [id, dir] : j["source_dirs"].items()) d.source_dirs.emplace_back(id, dir.get<std::string>());
  }
  if (j.contains("preprocess")) d.preprocess = plan_from_json(j["preprocess"]);
  return d;
}

json to_json(const DataConfig& d) {
  json j = json::object();
  if (d.synth) j["synth"] = to_json(*d.synth);
  if (!d.target_dir.empty()) j["target_dir"] = d.target_dir;
  if (!d.source_dirs.empty()) {
    json s = json::object();
    for (const auto& [id, dir] : d.source_dirs) s[id] = dir;
    j["source_dirs"] = s;
  }
  if (d.preprocess) j["preprocess"] = to_json(*d.preprocess);
  return j;
}

ImputerConfig imputer_from_json(const json& j, const ImputerConfig& defaults) {
  check_keys(j, {"hidden", "batchnorm", "holdout_fraction", "level", "train", "window"}, "imputer");
  ImputerConfig c = defaults;
  c.options.hidden = j.value("hidden", c.options.hidden);
  c.options.batchnorm = j.value("batchnorm", c.options.batchnorm);
  c.options.holdout_fraction = j.value("holdout_fraction", c.options.holdout_fraction);
  if (j.contains("level")) c.options.level = parse_level(j["level"].get<std::string>());
  if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
  if (j.contains("window")) c.window = window_config_from_json(j["window"], c.window);
  return c;
}

json to_json(const ImputerConfig& c) {
  return {{"hidden", c.options.hidden},
          {"batchnorm", c.options.batchnorm},
          {"holdout_fraction", c.options.holdout_fraction},
          {"level", level_name(c.options.level)},
          {"train", to_json(c.train)},
          {"window", to_json(c.window)}};
}

DetectorConfig detector_from_json(const json& j, const DetectorConfig& defaults) {
  check_keys(j, {"hidden", "train", "jacobian_coeff"}, "detector");
  DetectorConfig c = defaults;
  c.hidden = j.value("hidden", c.hidden);
  if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
  c.jacobian_coeff = j.value("jacobian_coeff", c.jacobian_coeff);
  return c;
}

json to_json(const DetectorConfig& c) {
  return {{"hidden", c.hidden}, {"train", to_json(c.train)}, {"jacobian_coeff", c.jacobian_coeff}};
}

}  // namespace

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults) {
  check_keys(j, {"learning_rate", "epochs", "batch_size", "seed", "task_weight", "adaptive_task_weight", "optimizer"}, "train");
  TrainConfig c = defaults;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.task_weight = j.value("task_weight", c.task_weight);
    c.adaptive_task_weight = j.value("adaptive_task_weight", c.adaptive_task_weight);
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j["optimizer"].get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("train config: ") + e.what());
  }
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"task_weight", c.task_weight},
          {"adaptive_task_weight", c.adaptive_task_weight},
          {"optimizer", to_string(c.optimizer)}};
}

WindowConfig window_config_from_json(const json& j, const WindowConfig& defaults) {
  check_keys(j, {"window_samples", "stride_samples", "label_rule"}, "window");
  WindowConfig c = defaults;
  try {
    c.window_samples = j.value("window_samples", c.window_samples);
    c.stride_samples = j.value("stride_samples", c.stride_samples);
    if (j.contains("label_rule")) c.label_rule = parse_rule(j["label_rule"].get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("window config: ") + e.what());
  }
  require(c.window_samples > 0 && c.stride_samples > 0, ErrorKind::InvalidArgument, "window and stride must be positive");
  return c;
}

json to_json(const WindowConfig& c) {
  return {{"window_samples", c.window_samples},
          {"stride_samples", c.stride_samples},
          {"label_rule", c.label_rule == LabelRule::majority ? "majority" : "last"}};
}

ScenarioConfig scenario_config_from_json(const json& j, const ScenarioConfig& defaults) {
  check_keys(j,
             {"name", "data", "sources", "use_batchnorm", "use_jacobian", "normalize", "test_fraction",
              "cascade_feeds_forward", "window", "imputer", "detector", "seeds"},
             "scenario");
  ScenarioConfig c = defaults;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("data")) c.data = data_from_json(j["data"]);
    c.sources = j.value("sources", c.sources);
    c.use_batchnorm = j.value("use_batchnorm", c.use_batchnorm);
    c.use_jacobian = j.value("use_jacobian", c.use_jacobian);
    c.normalize = j.value("normalize", c.normalize);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.cascade_feeds_forward = j.value("cascade_feeds_forward", c.cascade_feeds_forward);
    if (j.contains("window")) c.window = window_config_from_json(j["window"], c.window);
    if (j.contains("imputer")) c.imputer = imputer_from_json(j["imputer"], c.imputer);
    if (j.contains("detector")) c.detector = detector_from_json(j["detector"], c.detector);
    c.seeds = j.value("seeds", c.seeds);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "scenario '" + c.name + "': " + e.what());
  }
  require(!c.seeds.empty(), ErrorKind::InvalidArgument, "scenario '" + c.name + "' lists no seeds");
  require(c.test_fraction >= 0.0 && c.test_fraction < 1.0, ErrorKind::InvalidArgument, "test_fraction must lie in [0, 1)");
  return c;
}

json to_json(const ScenarioConfig& c) {
  return {{"name", c.name},
          {"data", to_json(c.data)},
          {"sources", c.sources},
          {"use_batchnorm", c.use_batchnorm},
          {"use_jacobian", c.use_jacobian},
          {"normalize", c.normalize},
          {"test_fraction", c.test_fraction},
          {"cascade_feeds_forward", c.cascade_feeds_forward},
          {"window", to_json(c.window)},
          {"imputer", to_json(c.imputer)},
          {"detector", to_json(c.detector)},
          {"seeds", c.seeds}};
}

// Top-level keys besides the experiment's own belong to CLI subcommand
// sections and are read there.
ExperimentConfig experiment_config_from_json(const json& j) {
  check_keys(j,
             {"name", "kind", "scenario", "scenarios", "noise_baseline", "selection", "validate", "preprocess", "split",
              "impute", "train", "eval", "synth", "diagnose"},
             "experiment config");
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("kind")) c.kind = parse_kind(j["kind"].get<std::string>());
    if (j.contains("scenario")) c.base = scenario_config_from_json(j["scenario"]);
    if (j.contains("scenarios")) {
      const json base = to_json(c.base);
      for (const auto& over : j["scenarios"]) {
        json merged = base;
        merged.merge_patch(over);
        c.scenarios.push_back(scenario_config_from_json(merged));
      }
    }
    if (j.contains("noise_baseline")) {
      const auto& n = j["noise_baseline"];
      check_keys(n, {"mask", "noise_seed"}, "noise_baseline");
      c.noise.mask = n.value("mask", c.noise.mask);
      c.noise.noise_seed = n.value("noise_seed", c.noise.noise_seed);
    }
    if (j.contains("selection")) {
      for (const auto& e : j["selection"]) {
        check_keys(e, {"name", "dataset", "mask"}, "selection entry");
        c.selection.push_back(SelectionEntry{e.at("name").get<std::string>(), e.value("dataset", std::string("target")),
                                             e.at("mask").get<std::vector<std::string>>()});
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("experiment config: ") + e.what());
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j = {{"name", c.name}, {"kind", to_string(c.kind)}, {"scenario", to_json(c.base)}};
  if (!c.scenarios.empty()) {
    j["scenarios"] = json::array();
    for (const auto& s : c.scenarios) j["scenarios"].push_back(to_json(s));
  }
  j["noise_baseline"] = {{"mask", c.noise.mask}, {"noise_seed", c.noise.noise_seed}};
  if (!c.selection.empty()) {
    j["selection"] = json::array();
    for (const auto& e : c.selection) j["selection"].push_back({{"name", e.name}, {"dataset", e.dataset}, {"mask", e.mask}});
  }
  return j;
}

}  // namespace hetfuse

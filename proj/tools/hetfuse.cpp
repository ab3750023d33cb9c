#include "hetfuse/csv_io.hpp"
#include "hetfuse/dataset.hpp"
#include "hetfuse/error.hpp"
#include "hetfuse/imputer.hpp"
#include "hetfuse/model_io.hpp"
#include "hetfuse/pipeline.hpp"
#include "hetfuse/preprocess.hpp"
#include "hetfuse/synth.hpp"
#include "hetfuse/theory.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#ifndef HETFUSE_VERSION
#define HETFUSE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hetfuse;

namespace {

// Bad invocation or a config file lacking what the subcommand needs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Run {
  std::string command;
  fs::path config_path;
  fs::path out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  json config;
  json artifacts = json::array();
  json stages = json::array();
  std::vector<std::uint64_t> seeds;

  const json& section(const std::string& name) const {
    if (!config.contains(name)) throw UsageError("config " + config_path.string() + " has no '" + name + "' section");
    return config.at(name);
  }

  template <typename F>
  auto stage(const std::string& name, F&& body) {
    spdlog::info("{}: {}", command, name);
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      stages.push_back({{"name", name}, {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}});
    };
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      finish();
    } else {
      auto r = body();
      finish();
      return r;
    }
  }

  fs::path artifact(const std::string& name) {
    artifacts.push_back(name);
    return out / name;
  }

  void write(const std::string& name, const std::string& contents) { write_file(artifact(name), contents); }

  void write_manifest() const {
    json m = {{"tool", "hetfuse"},
              {"version", HETFUSE_VERSION},
              {"command", command},
              {"config_hash", fnv1a_hex(config.dump())},
              {"config", config},
              {"seeds", seeds},
              {"jobs", jobs},
              {"artifacts", artifacts},
              {"stages", stages}};
    write_file(out / "run_manifest.json", m.dump(2) + "\n");
  }
};

std::uint64_t seed_or(const Run& run, std::uint64_t fallback) { return run.seed.value_or(fallback); }

double number_or(const json& j, const char* key, double fallback) { return j.value(key, fallback); }

std::string path_of(const json& j, const char* key) {
  if (!j.contains(key)) throw UsageError(std::string("missing key '") + key + "'");
  return j.at(key).get<std::string>();
}

json range_json(const IndexRange& r) { return json::array({r.begin, r.end}); }

json split_manifest_json(const std::vector<BlockAssignment>& manifest, double test_fraction) {
  json blocks = json::array();
  for (const auto& a : manifest) {
    blocks.push_back({{"block", a.block},
                      {"subject_id", a.subject_id},
                      {"length", a.length},
                      {"test_head", range_json(a.test_head)},
                      {"train", range_json(a.train)},
                      {"test_tail", range_json(a.test_tail)}});
  }
  return {{"test_fraction", test_fraction}, {"blocks", blocks}};
}

ExperimentConfig experiment_of(Run& run) {
  ExperimentConfig cfg = experiment_config_from_json(run.config);
  if (run.seed) {
    cfg.base.seeds = {*run.seed};
    for (auto& s : cfg.scenarios) s.seeds = {*run.seed};
  }
  run.seeds = cfg.base.seeds;
  return cfg;
}

// --- subcommands -----------------------------------------------------------------

int cmd_validate(Run& run) {
  const json& sec = run.section("validate");
  const auto ds = run.stage("load", [&] { return load_dataset(path_of(sec, "dataset")); });
  const auto violations = run.stage("validate", [&] { return validate(ds); });
  json report = json::array();
  for (const auto& v : violations) {
    json e = {{"kind", to_string(v.kind)}, {"detail", v.detail}};
    if (v.block) e["block"] = *v.block;
    if (v.channel) e["channel"] = *v.channel;
    report.push_back(e);
    std::cout << to_string(v.kind) << ": " << v.detail << "\n";
  }
  run.write("violations.json", json{{"manifest", "run_manifest.json"}, {"violations", report}}.dump(2) + "\n");
  std::cout << violations.size() << " violation(s) in " << ds.blocks.size() << " block(s)\n";
  return violations.empty() ? 0 : 1;
}

int cmd_preprocess(Run& run) {
  const json& sec = run.section("preprocess");
  const auto raw = run.stage("load", [&] { return load_dataset(path_of(sec, "input")); });
  const PreprocessPlan plan = sec.contains("plan") ? plan_from_json(sec.at("plan")) : default_plan();
  const auto result = run.stage("apply", [&] { return apply_plan(raw, plan); });
  run.stage("write", [&] {
    write_dataset(run.artifact("data"), result.data);
    json prov = result.provenance;
    prov["manifest"] = "run_manifest.json";
    run.write("provenance.json", prov.dump(2) + "\n");
  });
  return 0;
}

int cmd_split(Run& run) {
  const json& sec = run.section("split");
  const double fraction = number_or(sec, "test_fraction", 0.2);
  const auto ds = run.stage("load", [&] { return load_dataset(path_of(sec, "dataset")); });
  const auto split = run.stage("split", [&] { return block_split(ds, fraction); });
  run.stage("write", [&] {
    run.write("split_manifest.json", split_manifest_json(split.manifest, fraction).dump(2) + "\n");
    write_dataset(run.artifact("train"), split.train);
    write_dataset(run.artifact("test"), split.test);
  });
  return 0;
}

ImputerConfig imputer_config(const json& sec) {
  // Reuses the scenario parser so the imputer block has one key list.
  ScenarioConfig s;
  if (sec.contains("imputer")) s = scenario_config_from_json(json{{"imputer", sec.at("imputer")}});
  return s.imputer;
}

int cmd_impute(Run& run) {
  const json& sec = run.section("impute");
  const auto target = run.stage("load", [&] { return load_dataset(path_of(sec, "target")); });
  const auto source = load_dataset(path_of(sec, "source"));
  ImputerConfig ic = imputer_config(sec);
  ic.options.align = sec.value("align", true);
  ic.options.init_seed = seed_or(run, ic.train.seed);
  ic.train.seed = ic.options.init_seed;
  run.seeds = {ic.train.seed};
  const double fraction = number_or(sec, "test_fraction", 0.2);

  const Imputer imp = run.stage("fit", [&] { return fit_imputer(source, target.schema, ic.train, ic.window, ic.options); });
  // Target alignment statistics come from the train side of the split.
  const auto split = block_split(target, fraction);
  const auto enhanced =
      run.stage("apply", [&] { return apply_imputer(imp, target, channel_stats(split.train, imp.shared_channels)); });

  json rep = {{"manifest", "run_manifest.json"},
              {"source", imp.source_domain_id},
              {"shared_channels", imp.shared_channels},
              {"generated_channels", imp.generated_names()},
              {"holdout_mse", imp.holdout_mse}};
  if (imp.holdout_mse_total) rep["holdout_mse_total"] = *imp.holdout_mse_total;
  std::string csv = "channel,holdout_mse\n";
  const auto names = imp.generated_names();
  for (std::size_t i = 0; i < names.size() && i < imp.holdout_mse.size(); ++i) {
    csv += names[i] + "," + format_double(imp.holdout_mse[i]) + "\n";
    std::cout << names[i] << "  holdout MSE " << format_double(imp.holdout_mse[i]) << "\n";
  }
  run.stage("write", [&] {
    write_dataset(run.artifact("enhanced"), enhanced);
    save_imputer(run.artifact("imputer.hfm"), imp);
    run.write("imputation_report.json", rep.dump(2) + "\n");
    run.write("imputation_report.csv", csv);
  });
  return 0;
}

int cmd_train(Run& run) {
  const json& sec = run.section("train");
  ExperimentConfig cfg = experiment_of(run);
  const auto ds = run.stage("load", [&] { return load_dataset(path_of(sec, "dataset")); });
  const double fraction = number_or(sec, "test_fraction", cfg.base.test_fraction);
  const auto split = block_split(ds, fraction);
  DetectorTrainConfig d;
  d.detector = cfg.base.detector;
  d.window = cfg.base.window;
  d.batchnorm = cfg.base.use_batchnorm;
  d.jacobian = cfg.base.use_jacobian;
  d.seed = cfg.base.seeds.front();
  run.seeds = {d.seed};
  const Detector f = run.stage("train", [&] { return train_detector(split.train, d); });
  const EvalResult tr = evaluate(f, split.train);
  std::cout << "train accuracy " << format_double(tr.accuracy) << " over " << tr.windows << " windows\n";
  run.stage("write", [&] {
    save_detector(run.artifact("detector.hfm"), f);
    run.write("split_manifest.json", split_manifest_json(split.manifest, fraction).dump(2) + "\n");
  });
  return 0;
}

int cmd_eval(Run& run) {
  const json& sec = run.section("eval");
  const Detector f = run.stage("load", [&] { return load_detector(path_of(sec, "model")); });
  const auto ds = load_dataset(path_of(sec, "dataset"));
  const double fraction = number_or(sec, "test_fraction", 0.2);
  const auto test = block_split(ds, fraction).test;
  const EvalResult r = run.stage("evaluate", [&] { return evaluate(f, test); });
  std::cout << "accuracy " << format_double(r.accuracy) << "  cross-entropy " << format_double(r.cross_entropy) << "  windows "
            << r.windows << "\n";
  run.write("eval.json", json{{"manifest", "run_manifest.json"},
                              {"accuracy", r.accuracy},
                              {"cross_entropy", r.cross_entropy},
                              {"windows", r.windows}}
                             .dump(2) +
                             "\n");
  return 0;
}

void write_report(Run& run, const ExperimentReport& rep) {
  json j = rep.to_json();
  j["manifest"] = "run_manifest.json";
  run.write("report.json", j.dump(2) + "\n");
  run.write("report_runs.csv", rep.runs_csv());
  run.write("report_summary.csv", rep.summary_csv());
  run.write("report.txt", rep.table());
  std::cout << rep.table();
}

int cmd_experiment(Run& run, ExperimentKind kind) {
  ExperimentConfig cfg = experiment_of(run);
  cfg.kind = kind;
  const auto rep = run.stage("experiment", [&] { return run_experiment(cfg, run.jobs); });
  write_report(run, rep);
  return 0;
}

int cmd_synth(Run& run) {
  SynthConfig sc = synth_config_from_json(run.section("synth"));
  if (run.seed) sc.seed = *run.seed;
  run.seeds = {sc.seed};
  const auto md = run.stage("generate", [&] { return generate_multidomain(sc); });
  json truth = {{"manifest", "run_manifest.json"},
                {"seed", sc.seed},
                {"target", md.target.domain_id},
                {"hidden_dir", md.hidden_truth.domain_id},
                {"hidden_channels", md.hidden_truth.schema.names()},
                {"sources", json::array()}};
  for (const auto& s : md.sources) truth["sources"].push_back(s.domain_id);
  try {
    truth["oracle_bayes_accuracy_per_sample"] = oracle_bayes_accuracy(sc, 1);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UnsupportedResponse) throw;
    truth["oracle_bayes_accuracy_per_sample"] = nullptr;
  }
  run.stage("write", [&] {
    write_dataset(run.artifact(md.target.domain_id), md.target);
    for (const auto& s : md.sources) write_dataset(run.artifact(s.domain_id), s);
    if (!md.hidden_truth.schema.empty()) write_dataset(run.artifact(md.hidden_truth.domain_id), md.hidden_truth);
    run.write("truth.json", truth.dump(2) + "\n");
  });
  return 0;
}

Matrix stacked(const SensorDataset& ds, const std::vector<std::string>& names, std::size_t max_rows) {
  const auto total = ds.total_samples();
  const std::size_t step = max_rows == 0 || total <= max_rows ? 1 : (total + max_rows - 1) / max_rows;
  std::vector<Eigen::Index> cols;
  for (const auto& n : names) cols.push_back(static_cast<Eigen::Index>(ds.schema.index_of(n)));
  Matrix out((total + step - 1) / step, static_cast<Eigen::Index>(cols.size()));
  Eigen::Index r = 0;
  std::size_t i = 0;
  for (const auto& b : ds.blocks) {
    for (Eigen::Index t = 0; t < b.samples.rows(); ++t, ++i) {
      if (i % step != 0) continue;
      for (std::size_t c = 0; c < cols.size(); ++c) out(r, static_cast<Eigen::Index>(c)) = b.samples(t, cols[c]);
      ++r;
    }
  }
  out.conservativeResize(r, Eigen::NoChange);
  return out;
}

Matrix standardized(const Matrix& x) {
  ChannelStats s;
  s.mean = x.colwise().mean().transpose();
  s.std = ((x.rowwise() - s.mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  return standardize(x, s);
}

int cmd_diagnose(Run& run) {
  ExperimentConfig cfg = experiment_of(run);
  const json sec = run.config.value("diagnose", json::object());
  const auto bins = sec.value("bins", std::size_t{16});
  const auto max_rows = sec.value("max_rows", std::size_t{20000});
  const std::uint64_t seed = cfg.base.seeds.front();
  run.seeds = {seed};
  const Datasets data = run.stage("load", [&] { return load_data(cfg.base.data, seed); });

  json out = {{"manifest", "run_manifest.json"}, {"mutual_information", json::array()}, {"proxy_a_distance", json::array()}};
  std::cout << "mutual information with the label (nats, " << bins << " bins)\n";
  run.stage("mutual_information", [&] {
    for (const auto& name : data.target.schema.names()) {
      Matrix x = stacked(data.target, {name}, std::numeric_limits<std::size_t>::max());
      std::vector<int> y;
      for (const auto& b : data.target.blocks) y.insert(y.end(), b.labels.begin(), b.labels.end());
      const auto mi = mutual_info_binned(x, y, bins);
      out["mutual_information"].push_back({{"channel", name}, {"nats", mi.value}, {"samples", mi.sample_count}});
      std::cout << "  " << name << "  " << format_double(mi.value) << "\n";
    }
  });
  std::cout << "proxy A-distance on shared channels (raw -> per-domain standardized)\n";
  run.stage("proxy_a_distance", [&] {
    DistanceConfig dc;
    dc.seed = seed;
    for (const auto& src : data.sources) {
      const auto shared = common_channels(data.target.schema, src.schema);
      if (shared.empty()) continue;
      const Matrix a = stacked(data.target, shared, max_rows);
      const Matrix b = stacked(src, shared, max_rows);
      const auto before = proxy_a_distance(a, b, dc);
      const auto after = proxy_a_distance(standardized(a), standardized(b), dc);
      out["proxy_a_distance"].push_back(
          {{"source", src.domain_id}, {"channels", shared}, {"before_alignment", before.value}, {"after_alignment", after.value}});
      std::cout << "  " << src.domain_id << "  " << format_double(before.value) << " -> " << format_double(after.value) << "\n";
    }
  });
  Theorem1Config tc;
  if (sec.contains("theorem1")) {
    const auto& t = sec.at("theorem1");
    tc.samples = t.value("samples", tc.samples);
    tc.bins = t.value("bins", tc.bins);
    tc.x_slope = t.value("x_slope", tc.x_slope);
    tc.a_slope = t.value("a_slope", tc.a_slope);
    tc.positive_rate = t.value("positive_rate", tc.positive_rate);
    tc.tolerance = t.value("tolerance", tc.tolerance);
  }
  const auto t1 = run.stage("theorem1", [&] { return theorem1_direction_check(tc, seed); });
  out["theorem1"] = {{"i_x", t1.i_x}, {"i_xplus", t1.i_xplus}, {"passed", t1.passed}};
  std::cout << "extra-feature information check: I(x) " << format_double(t1.i_x) << "  I(x, a) " << format_double(t1.i_xplus)
            << "  " << (t1.passed ? "PASS" : "FAIL") << "\n";
  run.write("diagnose.json", out.dump(2) + "\n");
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("hetfuse");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* level = std::getenv("HETFUSE_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Multi-source sensor imputation and fatigue detection"};
  app.set_version_flag("--version", HETFUSE_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  Run run;
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "overrides the config's seed list");
  app.add_option("--jobs", run.jobs, "parallel (scenario, seed) runs")->check(CLI::PositiveNumber);

  struct Entry {
    const char* name;
    const char* help;
    std::function<int(Run&)> fn;
  };
  const std::vector<Entry> commands = {
      {"validate", "check a CSV dataset against its schema", cmd_validate},
      {"preprocess", "apply the conditioning plan to a raw dataset", cmd_preprocess},
      {"split", "block split into train and test with a manifest", cmd_split},
      {"impute", "fit an imputer on a source and enhance a target", cmd_impute},
      {"train", "train a detector on the train side of a dataset", cmd_train},
      {"eval", "score a saved detector on the test side of a dataset", cmd_eval},
      {"noise-baseline", "original / imputed / imputed+noise / pure-noise comparison",
       [](Run& r) { return cmd_experiment(r, ExperimentKind::noise_baseline); }},
      {"ablate", "batch-norm x Jacobian toggle grid", [](Run& r) { return cmd_experiment(r, ExperimentKind::ablation); }},
      {"augment", "cascaded multi-source augmentation scenarios",
       [](Run& r) { return cmd_experiment(r, ExperimentKind::scenarios); }},
      {"select", "imputer holdout losses per masked modality",
       [](Run& r) { return cmd_experiment(r, ExperimentKind::imputer_selection); }},
      {"synth", "write a synthetic multi-domain dataset", cmd_synth},
      {"diagnose", "mutual information, proxy A-distance, extra-feature check", cmd_diagnose},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) subs.push_back(app.add_subcommand(c.name, c.help));

  int first_pos = 1;
  while (first_pos < argc && argv[first_pos][0] == '-') {
    const std::string opt = argv[first_pos];
    const bool takes_value = opt == "--config" || opt == "--out" || opt == "--seed" || opt == "--jobs";
    first_pos += takes_value ? 2 : 1;
  }
  if (first_pos < argc) {
    const std::string first = argv[first_pos];
    const bool known = std::any_of(commands.begin(), commands.end(), [&](const Entry& c) { return first == c.name; });
    if (!known) {
      std::cerr << "error: unknown subcommand '" << first << "'\n\n" << app.help();
      return 2;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  std::size_t which = 0;
  while (which < subs.size() && !subs[which]->parsed()) ++which;
  run.command = commands[which].name;
  run.out = out_dir;
  run.seed = seed;
  try {
    if (config_path.empty()) throw UsageError(run.command + " needs --config");
    run.config_path = config_path;
    try {
      run.config = json::parse(read_file(config_path));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Parse, config_path + ": " + e.what());
    }
    fs::create_directories(run.out);
    const int code = commands[which].fn(run);
    run.write_manifest();
    return code;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << subs[which]->help();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

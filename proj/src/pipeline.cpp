#include "hetfuse/pipeline.hpp"

#include "hetfuse/csv_io.hpp"
#include "hetfuse/error.hpp"
#include "hetfuse/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>

namespace hetfuse {

namespace {

std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kDetectorStream = 200;
constexpr std::uint64_t kImputerStream = 100;

}  // namespace

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::scenarios: return "scenarios";
    case ExperimentKind::noise_baseline: return "noise_baseline";
    case ExperimentKind::ablation: return "ablation";
    case ExperimentKind::imputer_selection: return "imputer_selection";
  }
  return "scenarios";
}

std::string_view to_string(Access a) {
  switch (a) {
    case Access::fit: return "fit";
    case Access::transform: return "transform";
    case Access::evaluate: return "evaluate";
  }
  return "fit";
}

// --- data ----------------------------------------------------------------------

const SensorDataset& Datasets::source(const std::string& id) const {
  for (const auto& s : sources) {
    if (s.domain_id == id) return s;
  }
  fail(ErrorKind::InvalidArgument, "unknown source domain '" + id + "'");
}

Datasets load_data(const DataConfig& cfg, std::uint64_t run_seed) {
  Datasets out;
  if (cfg.synth) {
    SynthConfig sc = *cfg.synth;
    sc.seed = derive_seed(sc.seed, run_seed);
    auto md = generate_multidomain(sc);
    out.target = std::move(md.target);
    out.sources = std::move(md.sources);
    out.hidden_truth = std::move(md.hidden_truth);
    return out;
  }
  require(!cfg.target_dir.empty(), ErrorKind::InvalidArgument, "data config names neither synth nor a target directory");
  auto load = [&](const std::string& dir) {
    SensorDataset ds = load_dataset(dir);
    if (cfg.preprocess) ds = apply_plan(ds, *cfg.preprocess).data;
    return ds;
  };
  out.target = load(cfg.target_dir);
  for (const auto& [id, dir] : cfg.source_dirs) {
    out.sources.push_back(load(dir));
    out.sources.back().domain_id = id;
  }
  return out;
}

// --- access log ----------------------------------------------------------------

void AccessLog::record(const std::string& stage, Access kind, const SensorDataset& ds) {
  for (const auto& b : ds.blocks) {
    entries.push_back(AccessEntry{stage, kind, ds.domain_id, b.origin.block, {b.origin.offset, b.origin.offset + b.length()}});
  }
}

std::vector<std::string> leakage_violations(const AccessLog& log, const std::string& domain,
                                            const std::vector<BlockAssignment>& manifest) {
  std::vector<std::string> out;
  for (const auto& e : log.entries) {
    if (e.kind != Access::fit || e.domain != domain) continue;
    for (const auto& a : manifest) {
      if (a.block != e.block) continue;
      for (const auto& t : {a.test_head, a.test_tail}) {
        if (!t.empty() && e.range.begin < t.end && t.begin < e.range.end) {
          out.push_back(e.stage + " fit touches test samples [" + std::to_string(t.begin) + ", " + std::to_string(t.end) +
                        ") of block " + std::to_string(a.block));
        }
      }
    }
  }
  return out;
}

// --- enhancement -----------------------------------------------------------------

Enhanced enhance_parts(const std::vector<SensorDataset>& parts, const std::vector<SensorDataset>& sources,
                       const EnhanceConfig& cfg, AccessLog* log) {
  require(!parts.empty(), ErrorKind::InvalidArgument, "enhance: no target parts");
  Enhanced out;
  out.parts = parts;
  const auto original = parts.front().schema.names();
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto& src = sources[s];
    const auto& current = out.parts.front().schema;
    require(!common_channels(current, src.schema).empty(), ErrorKind::NoSharedChannels,
            "source " + src.domain_id + " shares no channel with the target");
    if (extra_in_source(current, src.schema, cfg.imputer.options.level).empty()) continue;

    ImputerOptions opts = cfg.imputer.options;
    opts.align = cfg.align;
    if (!cfg.cascade_feeds_forward) opts.input_channels = original;
    opts.init_seed = derive_seed(cfg.seed, kImputerStream + s);
    TrainConfig tc = cfg.imputer.train;
    tc.seed = opts.init_seed;
    Imputer imp = fit_imputer(src, current, tc, cfg.imputer.window, opts);

    const ChannelStats stats = channel_stats(out.parts.front(), imp.shared_channels);
    if (log) {
      log->record("alignment_stats:" + src.domain_id, Access::fit, out.parts.front());
    }
    for (std::size_t p = 0; p < out.parts.size(); ++p) {
      if (log) log->record("impute:" + src.domain_id, Access::transform, out.parts[p]);
      out.parts[p] = apply_imputer(imp, out.parts[p], stats);
    }
    out.imputers.push_back(std::move(imp));
  }
  return out;
}

SensorDataset enhance_target(const SensorDataset& target, const std::vector<SensorDataset>& sources, const EnhanceConfig& cfg) {
  return enhance_parts({target}, sources, cfg).parts.front();
}

// --- detector --------------------------------------------------------------------

Detector train_detector(const SensorDataset& train, const DetectorTrainConfig& cfg) {
  const auto w = windowize_available(train, cfg.window);
  require(w.features.rows() > 0, ErrorKind::TooShort, "detector: no training windows (blocks shorter than the window)");
  MlpSpec spec;
  spec.input_dim = w.features.cols();
  spec.output_dim = static_cast<Eigen::Index>(train.label_set.size());
  spec.hidden = cfg.detector.hidden;
  spec.output_activation = Activation::softmax;
  spec.batchnorm = cfg.batchnorm;
  spec.seed = cfg.seed;
  TrainConfig tc = cfg.detector.train;
  tc.seed = cfg.seed;
  tc.jacobian_coeff = cfg.jacobian ? cfg.detector.jacobian_coeff : 0.0;
  Detector f;
  f.net = train_classifier(make_mlp(spec), w.features, w.labels, tc).net;
  f.schema = train.schema;
  f.label_set = train.label_set;
  f.window = cfg.window;
  return f;
}

EvalResult evaluate(const Detector& f, const SensorDataset& test) {
  require(test.schema.names() == f.schema.names(), ErrorKind::SchemaMismatch,
          "test channels differ from the detector's training channels");
  require(test.label_set == f.label_set, ErrorKind::SchemaMismatch, "test label set differs from the detector's");
  const auto w = windowize_available(test, f.window);
  require(w.features.rows() > 0, ErrorKind::TooShort, "evaluate: no test windows (blocks shorter than the window)");
  const Matrix p = forward(f.net, w.features);
  return EvalResult{accuracy(p, w.labels), cross_entropy(p, w.labels), static_cast<std::size_t>(w.features.rows())};
}

void save_detector(const std::filesystem::path& path, const Detector& f) {
  ModelFile m;
  m.net = f.net;
  m.fingerprint = schema_fingerprint(f.schema);
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& c : f.schema.channels()) {
    channels.push_back({{"name", c.name}, {"modality", to_string(c.modality)}, {"native_rate", c.native_rate},
                        {"provenance", c.provenance}});
  }
  m.extension = {{"kind", "detector"}, {"channels", channels}, {"label_set", f.label_set}, {"window", to_json(f.window)}};
  save_model(path, m);
}

Detector load_detector(const std::filesystem::path& path) {
  ModelFile m = load_model(path);
  Detector f;
  try {
    require(m.extension.value("kind", "") == "detector", ErrorKind::Parse, "model file does not hold a detector");
    std::vector<Channel> cs;
    for (const auto& c : m.extension.at("channels")) {
      cs.push_back(Channel{c.at("name").get<std::string>(), parse_modality(c.at("modality").get<std::string>()),
                           c.at("native_rate").get<double>(), c.value("provenance", std::string())});
    }
    f.schema = ChannelSchema(std::move(cs));
    f.label_set = m.extension.at("label_set").get<std::vector<std::string>>();
    f.window = window_config_from_json(m.extension.at("window"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("detector header: ") + e.what());
  }
  require(m.fingerprint == schema_fingerprint(f.schema), ErrorKind::FingerprintMismatch,
          "detector fingerprint does not match its channel list");
  f.net = std::move(m.net);
  return f;
}

// --- single runs -----------------------------------------------------------------

namespace {

struct Prepared {
  SplitResult split;
  SensorDataset train;
  SensorDataset test;
  std::vector<SensorDataset> sources;
};

Prepared prepare(const ScenarioConfig& cfg, const Datasets& data, AccessLog* log) {
  Prepared p;
  p.split = block_split(data.target, cfg.test_fraction);
  p.train = p.split.train;
  p.test = p.split.test;
  if (cfg.normalize) {
    if (log) log->record("normalizer", Access::fit, p.train);
    const auto norm = SubjectNormalizer::fit(p.train);
    if (log) {
      log->record("normalizer", Access::transform, p.train);
      log->record("normalizer", Access::transform, p.test);
    }
    p.train = norm.apply(p.train);
    p.test = norm.apply(p.test);
  }
  for (const auto& id : cfg.sources) {
    const auto& s = data.source(id);
    p.sources.push_back(cfg.normalize ? normalize_per_subject(s) : s);
  }
  return p;
}

DetectorTrainConfig detector_config(const ScenarioConfig& cfg, std::uint64_t seed) {
  DetectorTrainConfig d;
  d.detector = cfg.detector;
  d.window = cfg.window;
  d.batchnorm = cfg.use_batchnorm;
  d.jacobian = cfg.use_jacobian;
  d.seed = derive_seed(seed, kDetectorStream);
  return d;
}

RunRecord train_and_score(const std::string& name, std::uint64_t seed, const SensorDataset& train, const SensorDataset& test,
                          const DetectorTrainConfig& dcfg, AccessLog* log) {
  if (log) log->record("detector:" + name, Access::fit, train);
  const Detector f = train_detector(train, dcfg);
  if (log) log->record("evaluate:" + name, Access::evaluate, test);
  const EvalResult r = evaluate(f, test);
  RunRecord rec;
  rec.scenario = name;
  rec.seed = seed;
  rec.accuracy = r.accuracy;
  rec.cross_entropy = r.cross_entropy;
  rec.channels = train.schema.names();
  return rec;
}

std::vector<std::string> expand_mask(const ChannelSchema& schema, const std::vector<std::string>& mask) {
  std::vector<std::string> out;
  for (const auto& token : mask) {
    if (schema.contains(token)) {
      out.push_back(token);
      continue;
    }
    Modality m{};
    try {
      m = parse_modality(token);
    } catch (const Error&) {
      fail(ErrorKind::UnknownChannel, "mask entry '" + token + "' is neither a channel nor a modality");
    }
    bool any = false;
    for (const auto& c : schema.channels()) {
      if (c.modality == m) {
        out.push_back(c.name);
        any = true;
      }
    }
    require(any, ErrorKind::UnknownChannel, "no channel of modality " + token);
  }
  require(!out.empty(), ErrorKind::InvalidArgument, "empty mask");
  return out;
}

// `ds` with the `names` columns overwritten from `from` (same blocks).
SensorDataset replace_columns(const SensorDataset& ds, const SensorDataset& from, const std::vector<std::string>& names) {
  SensorDataset out = ds;
  for (const auto& n : names) {
    const auto dst = static_cast<Eigen::Index>(ds.schema.index_of(n));
    const auto src = static_cast<Eigen::Index>(from.schema.index_of(n));
    for (std::size_t b = 0; b < out.blocks.size(); ++b) out.blocks[b].samples.col(dst) = from.blocks[b].samples.col(src);
  }
  return out;
}

}  // namespace

RunRecord run_scenario(const ScenarioConfig& cfg, const Datasets& data, std::uint64_t seed, RunTrace* trace) {
  AccessLog* log = trace ? &trace->log : nullptr;
  Prepared p = prepare(cfg, data, log);
  EnhanceConfig ec;
  ec.imputer = cfg.imputer;
  ec.align = cfg.use_batchnorm;
  ec.cascade_feeds_forward = cfg.cascade_feeds_forward;
  ec.seed = seed;
  Enhanced e = enhance_parts({p.train, p.test}, p.sources, ec, log);
  RunRecord rec = train_and_score(cfg.name, seed, e.parts[0], e.parts[1], detector_config(cfg, seed), log);
  for (const auto& imp : e.imputers) {
    if (imp.holdout_mse_total) rec.imputation_mse.emplace_back(imp.source_domain_id, *imp.holdout_mse_total);
  }
  if (trace) {
    trace->manifest = p.split.manifest;
    trace->target_domain = data.target.domain_id;
    trace->enhanced_channels = e.parts[0].schema.names();
  }
  return rec;
}

std::vector<RunRecord> run_noise_baseline(const ScenarioConfig& cfg, const NoiseBaselineConfig& noise, const Datasets& data,
                                          std::uint64_t seed, RunTrace* trace) {
  AccessLog* log = trace ? &trace->log : nullptr;
  const Prepared p = prepare(cfg, data, log);
  const auto mask = expand_mask(p.train.schema, noise.mask);
  const DetectorTrainConfig dcfg = detector_config(cfg, seed);

  // The masked channels are regressed from the rest of the train split.
  const SensorDataset masked = p.train.without_channels(mask);
  ImputerOptions opts = cfg.imputer.options;
  opts.align = cfg.use_batchnorm;
  opts.init_seed = derive_seed(seed, kImputerStream);
  TrainConfig tc = cfg.imputer.train;
  tc.seed = opts.init_seed;
  if (log) log->record("imputer:masked", Access::fit, p.train);
  const Imputer imp = fit_imputer(p.train, masked.schema, tc, cfg.imputer.window, opts);
  if (log) log->record("imputer:masked", Access::transform, masked);
  const SensorDataset imputed = replace_columns(p.train, apply_imputer(imp, masked, channel_stats(masked, imp.shared_channels)), mask);

  SensorDataset noisy = imputed;
  SensorDataset pure = imputed;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(p.train.schema.index_of(mask[k]));
    double max_abs = 0.0;
    for (const auto& b : p.train.blocks) max_abs = std::max(max_abs, b.samples.col(c).cwiseAbs().maxCoeff());
    NoiseSpec spec;
    spec.reference_max_abs = max_abs;
    spec.kind = NoiseKind::additive_gaussian;
    spec.seed = derive_seed(derive_seed(noise.noise_seed, seed), 2 * k);
    noisy = add_gaussian_noise(noisy, {mask[k]}, spec);
    spec.kind = NoiseKind::pure_gaussian;
    spec.seed = derive_seed(derive_seed(noise.noise_seed, seed), 2 * k + 1);
    pure = add_gaussian_noise(pure, {mask[k]}, spec);
  }

  std::vector<RunRecord> out;
  const SensorDataset* variants[4] = {&p.train, &imputed, &noisy, &pure};
  for (std::size_t v = 0; v < 4; ++v) {
    out.push_back(train_and_score(kNoiseVariants[v], seed, *variants[v], p.test, dcfg, log));
  }
  if (imp.holdout_mse_total) out[1].imputation_mse.emplace_back("masked", *imp.holdout_mse_total);
  if (trace) {
    trace->manifest = p.split.manifest;
    trace->target_domain = data.target.domain_id;
    trace->enhanced_channels = p.train.schema.names();
  }
  return out;
}

// --- experiments -----------------------------------------------------------------

namespace {

bool uses_synth(const ScenarioConfig& s) { return s.data.synth.has_value(); }

// Runs `job(i)` for i in [0, n) on up to `jobs` threads; results land by
// index so the output order never depends on scheduling.
template <typename Job>
auto run_jobs(std::size_t n, int jobs, Job job) {
  using R = decltype(job(std::size_t{0}));
  std::vector<R> results(n);
  std::vector<std::exception_ptr> errors(n);
  const int threads = std::max(1, jobs);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      results[static_cast<std::size_t>(i)] = job(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

// CSV datasets are loaded once; synthetic ones are regenerated per run seed.
struct DataCache {
  std::map<std::size_t, Datasets> loaded;

  void preload(const std::vector<ScenarioConfig>& scenarios) {
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      if (!uses_synth(scenarios[i])) loaded.emplace(i, load_data(scenarios[i].data, 0));
    }
  }

  Datasets get(const std::vector<ScenarioConfig>& scenarios, std::size_t i, std::uint64_t seed) const {
    auto it = loaded.find(i);
    return it != loaded.end() ? it->second : load_data(scenarios[i].data, seed);
  }
};

std::vector<ScenarioConfig> effective_scenarios(const ExperimentConfig& cfg) {
  return cfg.scenarios.empty() ? std::vector<ScenarioConfig>{cfg.base} : cfg.scenarios;
}

ExperimentReport assemble(const std::string& name, std::vector<std::string> order, std::vector<RunRecord> runs) {
  ExperimentReport rep;
  rep.experiment = name;
  rep.scenario_order = std::move(order);
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < rep.scenario_order.size(); ++i) rank.emplace(rep.scenario_order[i], i);
  std::stable_sort(runs.begin(), runs.end(), [&](const RunRecord& a, const RunRecord& b) {
    const auto ra = rank.at(a.scenario);
    const auto rb = rank.at(b.scenario);
    return ra != rb ? ra < rb : a.seed < b.seed;
  });
  rep.runs = std::move(runs);
  return rep;
}

ExperimentReport run_grid(const std::string& name, const std::vector<ScenarioConfig>& scenarios, int jobs) {
  DataCache cache;
  cache.preload(scenarios);
  std::vector<std::pair<std::size_t, std::uint64_t>> tasks;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    require(!scenarios[i].seeds.empty(), ErrorKind::InvalidArgument, "scenario " + scenarios[i].name + " has no seeds");
    require(std::find(order.begin(), order.end(), scenarios[i].name) == order.end(), ErrorKind::InvalidArgument,
            "duplicate scenario name " + scenarios[i].name);
    order.push_back(scenarios[i].name);
    for (auto s : scenarios[i].seeds) tasks.emplace_back(i, s);
  }
  auto runs = run_jobs(tasks.size(), jobs, [&](std::size_t t) {
    const auto [i, seed] = tasks[t];
    return run_scenario(scenarios[i], cache.get(scenarios, i, seed), seed);
  });
  return assemble(name, std::move(order), std::move(runs));
}

}  // namespace

ExperimentReport run_augmentation(const ExperimentConfig& cfg, int jobs) {
  return run_grid(cfg.name, effective_scenarios(cfg), jobs);
}

ExperimentReport run_ablation(const ExperimentConfig& cfg, int jobs) {
  std::vector<ScenarioConfig> grid;
  for (const auto& s : effective_scenarios(cfg)) {
    for (int v = 0; v < 4; ++v) {
      ScenarioConfig g = s;
      g.use_batchnorm = v == 1 || v == 3;
      g.use_jacobian = v == 2 || v == 3;
      g.name = s.name + "/" + kAblationVariants[v];
      grid.push_back(std::move(g));
    }
  }
  return run_grid(cfg.name, grid, jobs);
}

ExperimentReport run_noise_baseline_experiment(const ExperimentConfig& cfg, int jobs) {
  const ScenarioConfig& s = cfg.base;
  require(!s.seeds.empty(), ErrorKind::InvalidArgument, "noise baseline has no seeds");
  DataCache cache;
  cache.preload({s});
  auto per_seed = run_jobs(s.seeds.size(), jobs, [&](std::size_t i) {
    return run_noise_baseline(s, cfg.noise, cache.get({s}, 0, s.seeds[i]), s.seeds[i]);
  });
  std::vector<RunRecord> runs;
  for (auto& v : per_seed) runs.insert(runs.end(), v.begin(), v.end());
  return assemble(cfg.name, {kNoiseVariants[0], kNoiseVariants[1], kNoiseVariants[2], kNoiseVariants[3]}, std::move(runs));
}

ExperimentReport run_imputer_selection(const ExperimentConfig& cfg, int jobs) {
  const ScenarioConfig& s = cfg.base;
  require(!cfg.selection.empty(), ErrorKind::InvalidArgument, "imputer selection lists no entries");
  DataCache cache;
  cache.preload({s});
  std::vector<std::pair<std::size_t, std::uint64_t>> tasks;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < cfg.selection.size(); ++i) {
    order.push_back(cfg.selection[i].name);
    for (auto seed : s.seeds) tasks.emplace_back(i, seed);
  }
  auto runs = run_jobs(tasks.size(), jobs, [&](std::size_t t) {
    const auto [i, seed] = tasks[t];
    const auto& entry = cfg.selection[i];
    const Datasets data = cache.get({s}, 0, seed);
    SensorDataset ds = entry.dataset == "target" ? data.target : data.source(entry.dataset);
    if (s.normalize) ds = normalize_per_subject(ds);
    const auto mask = expand_mask(ds.schema, entry.mask);
    ImputerOptions opts = s.imputer.options;
    opts.init_seed = derive_seed(seed, kImputerStream);
    TrainConfig tc = s.imputer.train;
    tc.seed = opts.init_seed;
    const Imputer imp = fit_imputer(ds, ds.without_channels(mask).schema, tc, s.imputer.window, opts);
    RunRecord rec;
    rec.scenario = entry.name;
    rec.seed = seed;
    if (imp.holdout_mse_total) rec.imputation_mse.emplace_back(ds.domain_id, *imp.holdout_mse_total);
    rec.channels = imp.generated_names();
    return rec;
  });
  return assemble(cfg.name, std::move(order), std::move(runs));
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, int jobs) {
  switch (cfg.kind) {
    case ExperimentKind::scenarios: return run_augmentation(cfg, jobs);
    case ExperimentKind::noise_baseline: return run_noise_baseline_experiment(cfg, jobs);
    case ExperimentKind::ablation: return run_ablation(cfg, jobs);
    case ExperimentKind::imputer_selection: return run_imputer_selection(cfg, jobs);
  }
  return run_augmentation(cfg, jobs);
}

}  // namespace hetfuse

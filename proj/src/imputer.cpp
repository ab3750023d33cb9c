#include "hetfuse/imputer.hpp"

#include "hetfuse/error.hpp"
#include "hetfuse/kernels.hpp"
#include "hetfuse/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hetfuse {

using nlohmann::json;

std::vector<std::string> Imputer::generated_names() const {
  std::vector<std::string> out;
  for (const auto& c : generated_channels) out.push_back(c.name);
  return out;
}

namespace {

kernels::WindowSpec spec_of(const WindowConfig& w) { return {w.window_samples, w.stride_samples}; }

// Windows of one block's samples, channel-major rows.
Matrix block_windows(const Matrix& samples, const WindowConfig& w) {
  const auto spec = spec_of(w);
  const auto n = kernels::window_count(static_cast<std::size_t>(samples.rows()), spec);
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(w.window_samples) * samples.cols());
  kernels::serial::windowize(samples, spec, out, 0);
  return out;
}

// Stacked windows of the given blocks (already standardized), skipping
// blocks shorter than the window.
Matrix stacked_windows(const std::vector<Matrix>& blocks, const WindowConfig& w) {
  std::vector<Matrix> parts;
  Eigen::Index rows = 0;
  for (const auto& b : blocks) {
    if (static_cast<std::size_t>(b.rows()) < w.window_samples) continue;
    parts.push_back(block_windows(b, w));
    rows += parts.back().rows();
  }
  const Eigen::Index cols = parts.empty() ? 0 : parts.front().cols();
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

std::vector<double> per_channel_mse(const Matrix& pred, const Matrix& truth, std::size_t channels, std::size_t window) {
  std::vector<double> out(channels, 0.0);
  if (pred.rows() == 0) return out;
  for (std::size_t c = 0; c < channels; ++c) {
    const auto cols = static_cast<Eigen::Index>(window);
    const auto off = static_cast<Eigen::Index>(c * window);
    out[c] = (pred.middleCols(off, cols) - truth.middleCols(off, cols)).squaredNorm() /
             static_cast<double>(pred.rows() * cols);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Window starts covering [0, T): the regular grid plus a final window
// aligned to the end when the grid leaves a tail uncovered.
std::vector<std::size_t> covering_starts(std::size_t length, const WindowConfig& w) {
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + w.window_samples <= length; s += w.stride_samples) starts.push_back(s);
  if (starts.back() + w.window_samples < length) starts.push_back(length - w.window_samples);
  return starts;
}

Matrix impute_block(const Imputer& imp, const Matrix& inputs) {
  const std::size_t W = imp.window.window_samples;
  const auto T = static_cast<std::size_t>(inputs.rows());
  const auto n_out = static_cast<Eigen::Index>(imp.generated_channels.size());
  Matrix padded = inputs;
  if (T < W) {
    padded.conservativeResize(static_cast<Eigen::Index>(W), Eigen::NoChange);
    for (std::size_t t = T; t < W; ++t) padded.row(static_cast<Eigen::Index>(t)) = inputs.row(static_cast<Eigen::Index>(T - 1));
  }
  const auto L = static_cast<std::size_t>(padded.rows());
  const auto starts = covering_starts(L, imp.window);
  Matrix x(static_cast<Eigen::Index>(starts.size()), static_cast<Eigen::Index>(W) * padded.cols());
  for (std::size_t r = 0; r < starts.size(); ++r) {
    for (Eigen::Index c = 0; c < padded.cols(); ++c) {
      x.block(static_cast<Eigen::Index>(r), c * static_cast<Eigen::Index>(W), 1, static_cast<Eigen::Index>(W)) =
          padded.block(static_cast<Eigen::Index>(starts[r]), c, static_cast<Eigen::Index>(W), 1).transpose();
    }
  }
  const Matrix y = forward(imp.net, x, Exec::serial);

  Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(L), n_out);
  Vector count = Vector::Zero(static_cast<Eigen::Index>(L));
  for (std::size_t r = 0; r < starts.size(); ++r) {
    const auto s = static_cast<Eigen::Index>(starts[r]);
    for (Eigen::Index c = 0; c < n_out; ++c) {
      sum.block(s, c, static_cast<Eigen::Index>(W), 1) +=
          y.block(static_cast<Eigen::Index>(r), c * static_cast<Eigen::Index>(W), 1, static_cast<Eigen::Index>(W)).transpose();
    }
    count.segment(s, static_cast<Eigen::Index>(W)).array() += 1.0;
  }
  Matrix out = sum.topRows(static_cast<Eigen::Index>(T)).array().colwise() / count.head(static_cast<Eigen::Index>(T)).array();
  // Back to the source's output scale.
  for (Eigen::Index c = 0; c < n_out; ++c) {
    out.col(c) = out.col(c).array() * (imp.output_stats.std(c) + kStdEpsilon) + imp.output_stats.mean(c);
  }
  return out;
}

json stats_to_json(const ChannelStats& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

ChannelStats stats_from_json(const json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("std").get<std::vector<double>>();
  ChannelStats out;
  out.mean = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  out.std = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  return out;
}

ChannelSchema shared_schema(const Imputer& imp) {
  std::vector<Channel> cs;
  for (const auto& n : imp.shared_channels) cs.push_back(Channel{n, Modality::OTHER, 1.0, {}});
  return ChannelSchema(std::move(cs));
}

}  // namespace

Imputer fit_imputer(const SensorDataset& source, const ChannelSchema& target_schema, const TrainConfig& cfg,
                    const WindowConfig& wcfg, const ImputerOptions& opts) {
  require(wcfg.window_samples >= 1 && wcfg.stride_samples >= 1, ErrorKind::InvalidArgument, "window and stride must be >= 1");
  require(opts.holdout_fraction >= 0.0 && opts.holdout_fraction < 1.0, ErrorKind::InvalidArgument,
          "holdout_fraction must lie in [0, 1)");
  Imputer imp;
  imp.source_domain_id = source.domain_id;
  imp.window = wcfg;
  imp.align = opts.align;
  imp.shared_channels = common_channels(target_schema, source.schema);
  if (opts.input_channels) {
    std::erase_if(imp.shared_channels, [&](const std::string& n) {
      return std::find(opts.input_channels->begin(), opts.input_channels->end(), n) == opts.input_channels->end();
    });
  }
  require(!imp.shared_channels.empty(), ErrorKind::NoSharedChannels,
          "source " + source.domain_id + " shares no channel with the target");
  const auto extra = extra_in_source(target_schema, source.schema, opts.level);
  require(!extra.empty(), ErrorKind::NoExtraChannels, "source " + source.domain_id + " has no extra channels");
  for (const auto& n : extra) imp.generated_channels.push_back(source.schema[source.schema.index_of(n)]);

  // Fit/holdout partition of every block by time.
  std::vector<Matrix> fit_in, fit_out, hold_in, hold_out;
  SensorDataset fit_part = source;
  for (auto& b : fit_part.blocks) {
    const auto T = b.length();
    const auto hold = static_cast<std::size_t>(std::ceil(opts.holdout_fraction * static_cast<double>(T) - 1e-9));
    const auto keep = T - std::min(hold, T - 1);
    b.samples = b.samples.topRows(static_cast<Eigen::Index>(keep)).eval();
    b.labels.resize(keep);
  }
  imp.alignment = channel_stats(fit_part, imp.shared_channels);
  imp.output_stats = channel_stats(fit_part, extra);

  for (std::size_t i = 0; i < source.blocks.size(); ++i) {
    const Matrix in = standardize(source.columns(i, imp.shared_channels), imp.alignment);
    const Matrix out = standardize(source.columns(i, extra), imp.output_stats);
    const auto keep = static_cast<Eigen::Index>(fit_part.blocks[i].length());
    const auto T = in.rows();
    fit_in.push_back(in.topRows(keep));
    fit_out.push_back(out.topRows(keep));
    if (keep < T) {
      hold_in.push_back(in.bottomRows(T - keep));
      hold_out.push_back(out.bottomRows(T - keep));
    }
  }
  const Matrix x = stacked_windows(fit_in, wcfg);
  const Matrix y = stacked_windows(fit_out, wcfg);
  require(x.rows() > 0, ErrorKind::TooShort, "source blocks too short for one imputer window");

  MlpSpec spec;
  spec.input_dim = x.cols();
  spec.output_dim = y.cols();
  spec.hidden = opts.hidden;
  spec.batchnorm = opts.batchnorm;
  spec.seed = opts.init_seed;
  imp.net = train_regressor(make_mlp(spec), x, y, cfg).net;

  const Matrix hx = stacked_windows(hold_in, wcfg);
  if (hx.rows() > 0) {
    const Matrix hy = stacked_windows(hold_out, wcfg);
    imp.holdout_mse = per_channel_mse(forward(imp.net, hx), hy, extra.size(), wcfg.window_samples);
    imp.holdout_mse_total = mean_of(imp.holdout_mse);
  }
  return imp;
}

SensorDataset apply_imputer(const Imputer& imp, const SensorDataset& target, const std::optional<ChannelStats>& target_stats) {
  for (const auto& n : imp.shared_channels) {
    require(target.schema.contains(n), ErrorKind::NoSharedChannels, "target lacks shared channel " + n);
  }
  for (const auto& c : imp.generated_channels) {
    require(!target.schema.contains(c.name), ErrorKind::SchemaMismatch, "target already has channel " + c.name);
  }
  for (const auto& b : target.blocks) {
    require(b.samples.allFinite(), ErrorKind::NonFiniteInput, "target " + target.domain_id + " has non-finite samples");
    require(b.length() > 0, ErrorKind::EmptyBlock, "target " + target.domain_id + " has an empty block");
  }
  ChannelStats in_stats = imp.alignment;
  if (imp.align) in_stats = target_stats ? *target_stats : channel_stats(target, imp.shared_channels);
  require(in_stats.mean.size() == static_cast<Eigen::Index>(imp.shared_channels.size()), ErrorKind::ShapeMismatch,
          "alignment statistics width differs from the shared channels");

  std::vector<Channel> added;
  for (const auto& c : imp.generated_channels) {
    added.push_back(Channel{c.name, c.modality, target.rate, "generated_from:" + imp.source_domain_id});
  }
  SensorDataset out = target;
  out.schema = target.schema.appended(added);
  const auto nb = static_cast<std::ptrdiff_t>(target.blocks.size());
  const auto D = target.schema.size();
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < nb; ++i) {
    const auto bi = static_cast<std::size_t>(i);
    const Matrix in = standardize(target.columns(bi, imp.shared_channels), in_stats);
    const Matrix gen = impute_block(imp, in);
    auto& samples = out.blocks[bi].samples;
    samples.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(D) + gen.cols());
    samples.rightCols(gen.cols()) = gen;
  }
  return out;
}

SensorDataset sensor_impute(const SensorDataset& target, const SensorDataset& source, const TrainConfig& cfg,
                            const WindowConfig& wcfg, const ImputerOptions& opts) {
  require(!common_channels(target.schema, source.schema).empty(), ErrorKind::NoSharedChannels,
          "source " + source.domain_id + " shares no channel with the target");
  if (extra_in_source(target.schema, source.schema, opts.level).empty()) return target;
  return apply_imputer(fit_imputer(source, target.schema, cfg, wcfg, opts), target);
}

SensorDataset add_gaussian_noise(const SensorDataset& ds, const std::vector<std::string>& channels, const NoiseSpec& spec) {
  const auto idx = ds.schema.indices_of(channels);
  std::optional<double> ref_max = spec.reference_max_abs;
  if (!ref_max && spec.reference_channel) {
    const auto r = ds.schema.index_of(*spec.reference_channel);
    double m = 0.0;
    for (const auto& b : ds.blocks) m = std::max(m, b.samples.col(static_cast<Eigen::Index>(r)).cwiseAbs().maxCoeff());
    ref_max = m;
  }
  std::mt19937_64 rng(spec.seed);
  SensorDataset out = ds;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(idx[k]);
    double m = 0.0;
    if (ref_max) {
      m = *ref_max;
    } else {
      for (const auto& b : ds.blocks) m = std::max(m, b.samples.col(c).cwiseAbs().maxCoeff());
    }
    const double sigma = 2.0 * m;
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& b : out.blocks) {
      for (Eigen::Index t = 0; t < b.samples.rows(); ++t) {
        const double z = sigma * noise(rng);
        b.samples(t, c) = spec.kind == NoiseKind::additive_gaussian ? b.samples(t, c) + z : z;
      }
    }
  }
  return out;
}

ImputeReport impute_report(const Imputer& imp, const SensorDataset& holdout) {
  const auto names = imp.generated_names();
  for (const auto& n : names) {
    require(holdout.schema.contains(n), ErrorKind::MissingTruthChannels, "holdout lacks true channel " + n);
  }
  std::vector<Matrix> ins, outs;
  for (std::size_t i = 0; i < holdout.blocks.size(); ++i) {
    ins.push_back(standardize(holdout.columns(i, imp.shared_channels), imp.alignment));
    outs.push_back(standardize(holdout.columns(i, names), imp.output_stats));
  }
  const Matrix x = stacked_windows(ins, imp.window);
  ImputeReport rep;
  rep.channels = names;
  rep.windows = static_cast<std::size_t>(x.rows());
  require(x.rows() > 0, ErrorKind::TooShort, "holdout blocks too short for one imputer window");
  rep.mse = per_channel_mse(forward(imp.net, x), stacked_windows(outs, imp.window), names.size(), imp.window.window_samples);
  rep.total = mean_of(rep.mse);
  return rep;
}

void save_imputer(const std::filesystem::path& path, const Imputer& imp) {
  ModelFile m;
  m.net = imp.net;
  m.fingerprint = schema_fingerprint(shared_schema(imp));
  json gen = json::array();
  for (const auto& c : imp.generated_channels) {
    gen.push_back({{"name", c.name}, {"modality", to_string(c.modality)}, {"native_rate", c.native_rate}});
  }
  m.extension = {{"kind", "imputer"},
                 {"source_domain_id", imp.source_domain_id},
                 {"shared_channels", imp.shared_channels},
                 {"generated_channels", gen},
                 {"alignment", stats_to_json(imp.alignment)},
                 {"output_stats", stats_to_json(imp.output_stats)},
                 {"window_samples", imp.window.window_samples},
                 {"stride_samples", imp.window.stride_samples},
                 {"align", imp.align},
                 {"holdout_mse", imp.holdout_mse}};
  if (imp.holdout_mse_total) m.extension["holdout_mse_total"] = *imp.holdout_mse_total;
  save_model(path, m);
}

Imputer load_imputer(const std::filesystem::path& path) {
  ModelFile m = load_model(path);
  Imputer imp;
  try {
    const auto& e = m.extension;
    require(e.value("kind", "") == "imputer", ErrorKind::Parse, "model file does not hold an imputer");
    imp.source_domain_id = e.at("source_domain_id").get<std::string>();
    imp.shared_channels = e.at("shared_channels").get<std::vector<std::string>>();
    for (const auto& g : e.at("generated_channels")) {
      imp.generated_channels.push_back(Channel{g.at("name").get<std::string>(),
                                               parse_modality(g.at("modality").get<std::string>()),
                                               g.at("native_rate").get<double>(), {}});
    }
    imp.alignment = stats_from_json(e.at("alignment"));
    imp.output_stats = stats_from_json(e.at("output_stats"));
    imp.window.window_samples = e.at("window_samples").get<std::size_t>();
    imp.window.stride_samples = e.at("stride_samples").get<std::size_t>();
    imp.align = e.at("align").get<bool>();
    imp.holdout_mse = e.at("holdout_mse").get<std::vector<double>>();
    if (e.contains("holdout_mse_total")) imp.holdout_mse_total = e["holdout_mse_total"].get<double>();
  } catch (const json::exception& ex) {
    fail(ErrorKind::Parse, std::string("imputer header: ") + ex.what());
  }
  require(m.fingerprint == schema_fingerprint(shared_schema(imp)), ErrorKind::FingerprintMismatch,
          "imputer fingerprint does not match its shared channels");
  imp.net = std::move(m.net);
  return imp;
}

}  // namespace hetfuse

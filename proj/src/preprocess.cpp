#include "hetfuse/preprocess.hpp"

#include "hetfuse/error.hpp"
#include "hetfuse/kernels.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace hetfuse {

using nlohmann::json;

// --- RLS -------------------------------------------------------------------

RlsResult rls_filter(std::span<const double> signal, std::span<const double> reference, const RlsConfig& cfg) {
  require(signal.size() == reference.size(), ErrorKind::LengthMismatch, "rls: signal and reference lengths differ");
  require(cfg.filter_order >= 1, ErrorKind::InvalidArgument, "rls: filter_order must be >= 1");
  require(cfg.forgetting > 0.0 && cfg.forgetting <= 1.0, ErrorKind::InvalidArgument, "rls: forgetting must lie in (0, 1]");
  require(cfg.init_scale > 0.0, ErrorKind::InvalidArgument, "rls: init_scale must be positive");
  require(signal.size() >= cfg.filter_order, ErrorKind::DegenerateInput, "rls: signal shorter than filter order");

  const auto M = static_cast<Eigen::Index>(cfg.filter_order);
  const double lambda = cfg.forgetting;
  Vector w = Vector::Zero(M);
  Matrix P = Matrix::Identity(M, M) * cfg.init_scale;
  Vector u = Vector::Zero(M);
  Vector Pu(M);
  Vector k(M);

  RlsResult out;
  out.residual.resize(signal.size());
  for (std::size_t n = 0; n < signal.size(); ++n) {
    for (Eigen::Index i = M - 1; i > 0; --i) u(i) = u(i - 1);
    u(0) = reference[n];
    const double e = signal[n] - w.dot(u);
    out.residual[n] = e;
    Pu.noalias() = P * u;
    k = Pu / (lambda + u.dot(Pu));
    w += k * e;
    P.noalias() -= k * Pu.transpose();
    P /= lambda;
    P = 0.5 * (P + P.transpose()).eval();
  }
  out.weights = w;
  return out;
}

std::vector<double> rls_denoise(std::span<const double> signal, std::span<const double> reference, const RlsConfig& cfg) {
  return rls_filter(signal, reference, cfg).residual;
}

// --- SSA -------------------------------------------------------------------

Matrix ssa_decompose(std::span<const double> signal, const SsaConfig& cfg) {
  const std::size_t N = signal.size();
  const std::size_t L = cfg.window_len;
  require(L >= 2, ErrorKind::InvalidArgument, "ssa: window_len must be >= 2");
  require(N >= 2 * L, ErrorKind::TooShort, "ssa: signal length " + std::to_string(N) + " < 2 * window_len");
  const std::size_t K = N - L + 1;

  Matrix hankel(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < K; ++j) hankel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = signal[i + j];
  }
  Eigen::BDCSVD<Matrix> svd(hankel, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Matrix comps;
  kernels::omp::diagonal_average(svd.matrixU(), svd.singularValues(), svd.matrixV(), comps);
  return comps;
}

std::vector<double> ssa_denoise(std::span<const double> signal, const SsaConfig& cfg) {
  require(cfg.keep_components >= 1 && cfg.keep_components <= cfg.window_len, ErrorKind::InvalidArgument,
          "ssa: keep_components must lie in [1, window_len]");
  const Matrix comps = ssa_decompose(signal, cfg);
  const Vector sum = comps.leftCols(static_cast<Eigen::Index>(cfg.keep_components)).rowwise().sum();
  return {sum.data(), sum.data() + sum.size()};
}

// --- Hampel ----------------------------------------------------------------

std::vector<double> max_outlier_filter(std::span<const double> signal, const OutlierConfig& cfg) {
  require(cfg.window_len >= 3 && cfg.window_len % 2 == 1, ErrorKind::InvalidArgument, "outlier: window_len must be odd and >= 3");
  require(cfg.threshold_mads > 0.0, ErrorKind::InvalidArgument, "outlier: threshold must be positive");
  require(signal.size() >= cfg.window_len, ErrorKind::TooShort, "outlier: signal shorter than window");
  std::vector<double> out(signal.size());
  kernels::omp::hampel(signal, cfg.window_len, cfg.threshold_mads, out);
  return out;
}

// --- resample --------------------------------------------------------------

namespace {

std::size_t resampled_length(std::size_t n, double from_rate, double to_rate) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n - 1) * to_rate / from_rate + 1e-9)) + 1;
}

}  // namespace

std::vector<double> resample(std::span<const double> signal, double from_rate, double to_rate) {
  require(from_rate > 0.0 && to_rate > 0.0, ErrorKind::InvalidArgument, "resample: rates must be positive");
  require(signal.size() >= 2, ErrorKind::TooShort, "resample: need at least two samples");
  const std::size_t n = signal.size();
  const std::size_t m = resampled_length(n, from_rate, to_rate);
  std::vector<double> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double p = static_cast<double>(j) * from_rate / to_rate;
    const auto i0 = static_cast<std::size_t>(std::floor(p));
    if (i0 >= n - 1) {
      out[j] = signal[n - 1];
      continue;
    }
    const double frac = p - static_cast<double>(i0);
    out[j] = frac == 0.0 ? signal[i0] : signal[i0] + frac * (signal[i0 + 1] - signal[i0]);
  }
  return out;
}

// --- windowing -------------------------------------------------------------

int window_label(std::span<const int> labels, std::size_t label_count, LabelRule rule) {
  require(!labels.empty(), ErrorKind::InvalidArgument, "window_label: empty window");
  if (rule == LabelRule::last) return labels.back();
  std::vector<std::size_t> counts(label_count, 0);
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < label_count, ErrorKind::UnknownLabel, "label outside the label set");
    ++counts[static_cast<std::size_t>(y)];
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < label_count; ++k) {
    if (counts[k] >= counts[best]) best = k;
  }
  return static_cast<int>(best);
}

WindowedData windowize(const SensorDataset& ds, const WindowConfig& cfg) {
  require(cfg.window_samples >= 1 && cfg.stride_samples >= 1, ErrorKind::InvalidArgument, "window and stride must be >= 1");
  const kernels::WindowSpec spec{cfg.window_samples, cfg.stride_samples};
  std::size_t rows = 0;
  for (std::size_t b = 0; b < ds.blocks.size(); ++b) {
    const auto T = ds.blocks[b].length();
    if (T < cfg.window_samples) {
      fail(ErrorKind::WindowTooLarge, "window of " + std::to_string(cfg.window_samples) + " exceeds block " + std::to_string(b) +
                                          " of " + ds.domain_id + " (" + std::to_string(T) + " samples)");
    }
    rows += kernels::window_count(T, spec);
  }

  WindowedData out;
  const auto width = static_cast<Eigen::Index>(cfg.window_samples * ds.schema.size());
  out.features.resize(static_cast<Eigen::Index>(rows), width);
  out.labels.reserve(rows);
  out.origins.reserve(rows);
  Eigen::Index row = 0;
  for (std::size_t b = 0; b < ds.blocks.size(); ++b) {
    const auto& block = ds.blocks[b];
    require(static_cast<std::size_t>(block.samples.cols()) == ds.schema.size(), ErrorKind::WidthMismatch,
            "block width differs from schema");
    const auto n = kernels::window_count(block.length(), spec);
    kernels::omp::windowize(block.samples, spec, out.features, row);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t start = r * cfg.stride_samples;
      out.labels.push_back(window_label(std::span<const int>(block.labels).subspan(start, cfg.window_samples),
                                        ds.label_set.size(), cfg.label_rule));
      out.origins.push_back({b, start});
    }
    row += static_cast<Eigen::Index>(n);
  }
  return out;
}

WindowedData windowize_available(const SensorDataset& ds, const WindowConfig& cfg) {
  SensorDataset fit = ds;
  fit.blocks.clear();
  std::vector<std::size_t> kept;
  for (std::size_t b = 0; b < ds.blocks.size(); ++b) {
    if (ds.blocks[b].length() >= cfg.window_samples) {
      fit.blocks.push_back(ds.blocks[b]);
      kept.push_back(b);
    }
  }
  WindowedData out;
  if (fit.blocks.empty()) {
    out.features.resize(0, static_cast<Eigen::Index>(cfg.window_samples * ds.schema.size()));
    return out;
  }
  out = windowize(fit, cfg);
  for (auto& o : out.origins) o.block = kept[o.block];
  return out;
}

// --- plan ------------------------------------------------------------------

PreprocessPlan default_plan() {
  PreprocessPlan plan;
  PreprocessStep rls;
  rls.kind = StepKind::rls;
  PreprocessStep ssa;
  ssa.kind = StepKind::ssa;
  PreprocessStep outlier;
  outlier.kind = StepKind::outlier;
  plan.steps[Modality::PPG] = {rls, ssa};
  plan.steps[Modality::ACC] = {ssa};
  plan.steps[Modality::HR] = {outlier};
  plan.steps[Modality::GSR] = {outlier};
  plan.steps[Modality::ST] = {outlier};
  return plan;
}

namespace {

std::string_view step_name(StepKind k) {
  switch (k) {
    case StepKind::rls: return "rls";
    case StepKind::ssa: return "ssa";
    case StepKind::outlier: return "outlier";
  }
  return "?";
}

json step_params(const PreprocessStep& s) {
  switch (s.kind) {
    case StepKind::rls:
      return {{"filter_order", s.rls.filter_order}, {"forgetting", s.rls.forgetting}, {"init_scale", s.rls.init_scale},
              {"reference", s.reference}};
    case StepKind::ssa:
      return {{"window_len", s.ssa.window_len}, {"keep_components", s.ssa.keep_components}};
    case StepKind::outlier:
      return {{"window_len", s.outlier.window_len}, {"threshold_mads", s.outlier.threshold_mads}};
  }
  return {};
}

PreprocessStep step_from_json(const json& j) {
  PreprocessStep s;
  const auto kind = j.at("step").get<std::string>();
  if (kind == "rls") {
    s.kind = StepKind::rls;
    s.rls.filter_order = j.value("filter_order", s.rls.filter_order);
    s.rls.forgetting = j.value("forgetting", s.rls.forgetting);
    s.rls.init_scale = j.value("init_scale", s.rls.init_scale);
    s.reference = j.value("reference", std::string());
  } else if (kind == "ssa") {
    s.kind = StepKind::ssa;
    s.ssa.window_len = j.value("window_len", s.ssa.window_len);
    s.ssa.keep_components = j.value("keep_components", s.ssa.keep_components);
  } else if (kind == "outlier") {
    s.kind = StepKind::outlier;
    s.outlier.window_len = j.value("window_len", s.outlier.window_len);
    s.outlier.threshold_mads = j.value("threshold_mads", s.outlier.threshold_mads);
  } else {
    fail(ErrorKind::Parse, "unknown preprocessing step '" + kind + "'");
  }
  return s;
}

std::vector<double> column(const Matrix& m, Eigen::Index c) { return {m.col(c).data(), m.col(c).data() + m.rows()}; }

}  // namespace

PreprocessPlan plan_from_json(const json& j) {
  try {
    PreprocessPlan plan;
    if (j.contains("steps")) {
      for (const auto& [mod, steps] : j.at("steps").items()) {
        auto& list = plan.steps[parse_modality(mod)];
        for (const auto& s : steps) list.push_back(step_from_json(s));
      }
    }
    if (j.contains("resample_to")) {
      if (j.at("resample_to").is_null()) {
        plan.resample_to.reset();
      } else {
        plan.resample_to = j.at("resample_to").get<double>();
      }
    }
    return plan;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("preprocess plan: ") + e.what());
  }
}

json to_json(const PreprocessPlan& plan) {
  json steps = json::object();
  for (const auto& [mod, list] : plan.steps) {
    json arr = json::array();
    for (const auto& s : list) {
      auto p = step_params(s);
      p["step"] = std::string(step_name(s.kind));
      arr.push_back(std::move(p));
    }
    steps[std::string(to_string(mod))] = std::move(arr);
  }
  json j = {{"steps", steps}};
  j["resample_to"] = plan.resample_to ? json(*plan.resample_to) : json(nullptr);
  return j;
}

PreprocessResult apply_plan(const SensorDataset& raw, const PreprocessPlan& plan) {
  PreprocessResult result;
  result.data = raw;
  json applied = json::array();

  // Resolve every channel's step list and RLS references once.
  std::optional<std::size_t> first_acc;
  for (std::size_t c = 0; c < raw.schema.size(); ++c) {
    if (raw.schema[c].modality == Modality::ACC) {
      first_acc = c;
      break;
    }
  }
  for (std::size_t c = 0; c < raw.schema.size(); ++c) {
    auto it = plan.steps.find(raw.schema[c].modality);
    if (it == plan.steps.end()) continue;
    for (const auto& step : it->second) {
      json entry = {{"channel", raw.schema[c].name}, {"step", std::string(step_name(step.kind))}, {"params", step_params(step)}};
      if (step.kind == StepKind::rls) {
        std::size_t ref = 0;
        if (!step.reference.empty()) {
          ref = raw.schema.index_of(step.reference);
        } else if (first_acc) {
          ref = *first_acc;
        } else {
          fail(ErrorKind::UnknownChannel, "rls step for '" + raw.schema[c].name + "' needs an ACC reference channel");
        }
        entry["params"]["reference"] = raw.schema[ref].name;
      }
      applied.push_back(std::move(entry));
    }
  }

  for (std::size_t b = 0; b < raw.blocks.size(); ++b) {
    const Matrix& in = raw.blocks[b].samples;
    Matrix& out = result.data.blocks[b].samples;
    for (const auto& entry : applied) {
      const auto c = static_cast<Eigen::Index>(raw.schema.index_of(entry["channel"].get<std::string>()));
      auto x = column(out, c);
      const auto& step_json = entry["params"];
      const auto kind = entry["step"].get<std::string>();
      if (kind == "rls") {
        RlsConfig cfg{step_json["filter_order"].get<std::size_t>(), step_json["forgetting"].get<double>(),
                      step_json["init_scale"].get<double>()};
        const auto ref = column(in, static_cast<Eigen::Index>(raw.schema.index_of(step_json["reference"].get<std::string>())));
        x = rls_denoise(x, ref, cfg);
      } else if (kind == "ssa") {
        x = ssa_denoise(x, {step_json["window_len"].get<std::size_t>(), step_json["keep_components"].get<std::size_t>()});
      } else {
        x = max_outlier_filter(x, {step_json["window_len"].get<std::size_t>(), step_json["threshold_mads"].get<double>()});
      }
      out.col(c) = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
    }
  }

  json provenance = {{"domain_id", raw.domain_id}, {"steps", applied}};
  if (plan.resample_to && *plan.resample_to != raw.rate) {
    const double to = *plan.resample_to;
    for (auto& block : result.data.blocks) {
      const std::size_t n = block.length();
      const std::size_t m = resampled_length(n, raw.rate, to);
      Matrix res(static_cast<Eigen::Index>(m), block.samples.cols());
      for (Eigen::Index c = 0; c < block.samples.cols(); ++c) {
        const auto r = resample(column(block.samples, c), raw.rate, to);
        res.col(c) = Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
      }
      std::vector<int> labels(m);
      for (std::size_t j = 0; j < m; ++j) {
        const auto src = static_cast<std::size_t>(std::lround(static_cast<double>(j) * raw.rate / to));
        labels[j] = block.labels[std::min(src, n - 1)];
      }
      block.samples = std::move(res);
      block.labels = std::move(labels);
      block.origin.offset = static_cast<std::size_t>(std::floor(static_cast<double>(block.origin.offset) * to / raw.rate));
    }
    provenance["resample"] = {{"from", raw.rate}, {"to", to}};
    result.data.rate = to;
  }
  result.provenance = std::move(provenance);
  return result;
}

}  // namespace hetfuse

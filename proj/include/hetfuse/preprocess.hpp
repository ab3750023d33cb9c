#pragma once

#include "hetfuse/dataset.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <span>
#include <vector>

namespace hetfuse {

// --- RLS motion-artifact canceller ---------------------------------------

struct RlsConfig {
  std::size_t filter_order = 4;
  double forgetting = 0.999;
  double init_scale = 100.0;  // P(0) = init_scale * I
};

struct RlsResult {
  std::vector<double> residual;  // signal - predicted artifact (a priori error)
  Vector weights;                // taps after the last update
};

// Exponentially weighted RLS predicting the artifact in `signal` from the
// lagged `reference` (u_n = [r_n, r_{n-1}, ...], zero before the start).
RlsResult rls_filter(std::span<const double> signal, std::span<const double> reference, const RlsConfig& cfg);
std::vector<double> rls_denoise(std::span<const double> signal, std::span<const double> reference,
                                const RlsConfig& cfg);

// --- singular spectrum analysis -------------------------------------------

struct SsaConfig {
  std::size_t window_len = 32;
  std::size_t keep_components = 8;
};

// Column k is the diagonal-averaged rank-1 term of the k-th largest singular
// value of the L x (N-L+1) trajectory matrix. Columns sum to the input.
Matrix ssa_decompose(std::span<const double> signal, const SsaConfig& cfg);
std::vector<double> ssa_denoise(std::span<const double> signal, const SsaConfig& cfg);

// --- Hampel outlier filter --------------------------------------------------

struct OutlierConfig {
  std::size_t window_len = 7;
  double threshold_mads = 3.0;
};

std::vector<double> max_outlier_filter(std::span<const double> signal, const OutlierConfig& cfg);

// --- resampling --------------------------------------------------------------

// Linear interpolation onto t_j = j / to_rate, j = 0 .. floor((n-1) to/from).
std::vector<double> resample(std::span<const double> signal, double from_rate, double to_rate = 32.0);

// --- windowing ---------------------------------------------------------------

enum class LabelRule { majority, last };

struct WindowConfig {
  std::size_t window_samples = 128;
  std::size_t stride_samples = 32;
  LabelRule label_rule = LabelRule::majority;
};

struct WindowOrigin {
  std::size_t block = 0;
  std::size_t start = 0;
};

struct WindowedData {
  Matrix features;  // rows x (window * D), channel-major
  std::vector<int> labels;
  std::vector<WindowOrigin> origins;
};

// Majority ties go to the higher label index.
int window_label(std::span<const int> labels, std::size_t label_count, LabelRule rule);
WindowedData windowize(const SensorDataset& ds, const WindowConfig& cfg);
// Same layout, but blocks shorter than the window contribute no rows.
WindowedData windowize_available(const SensorDataset& ds, const WindowConfig& cfg);

// --- preprocessing plan -----------------------------------------------------

enum class StepKind { rls, ssa, outlier };

struct PreprocessStep {
  StepKind kind = StepKind::outlier;
  RlsConfig rls;
  std::string reference;  // RLS reference channel; empty = first ACC channel
  SsaConfig ssa;
  OutlierConfig outlier;
};

struct PreprocessPlan {
  std::map<Modality, std::vector<PreprocessStep>> steps;
  std::optional<double> resample_to = 32.0;
};

// RLS then SSA for PPG, SSA for ACC, outlier filtering for HR/GSR/ST, then
// resampling to 32 Hz.
PreprocessPlan default_plan();
PreprocessPlan plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PreprocessPlan& plan);

struct PreprocessResult {
  SensorDataset data;
  nlohmann::json provenance;
};

// Steps run per block and channel on the original (pre-step) reference
// values. Labels follow resampling by nearest input sample.
PreprocessResult apply_plan(const SensorDataset& raw, const PreprocessPlan& plan);

}  // namespace hetfuse

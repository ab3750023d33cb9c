#include "hetfuse/csv_io.hpp"
#include "hetfuse/error.hpp"
#include "hetfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace hetfuse {

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

std::vector<ScenarioSummary> ExperimentReport::summary() const {
  std::vector<ScenarioSummary> out;
  for (const auto& name : scenario_order) {
    ScenarioSummary s;
    s.scenario = name;
    std::vector<double> acc, ce;
    std::vector<std::string> mse_order;
    std::map<std::string, std::vector<double>> mse;
    for (const auto& r : runs) {
      if (r.scenario != name) continue;
      ++s.runs;
      if (r.accuracy) acc.push_back(*r.accuracy);
      if (r.cross_entropy) ce.push_back(*r.cross_entropy);
      for (const auto& [src, v] : r.imputation_mse) {
        if (!mse.contains(src)) mse_order.push_back(src);
        mse[src].push_back(v);
      }
    }
    if (!acc.empty()) std::tie(s.accuracy_mean, s.accuracy_std) = mean_std(acc);
    if (!ce.empty()) std::tie(s.ce_mean, s.ce_std) = mean_std(ce);
    for (const auto& src : mse_order) s.mse_mean.emplace_back(src, mean_std(mse[src]).first);
    out.push_back(std::move(s));
  }
  return out;
}

ScenarioSummary ExperimentReport::scenario(const std::string& name) const {
  for (auto& s : summary()) {
    if (s.scenario == name) return s;
  }
  fail(ErrorKind::InvalidArgument, "report has no scenario '" + name + "'");
}

std::string ExperimentReport::runs_csv() const {
  std::string out = "scenario,seed,accuracy,cross_entropy,imputation_mse,channels\n";
  for (const auto& r : runs) {
    std::vector<std::string> mse;
    for (const auto& [src, v] : r.imputation_mse) mse.push_back(src + "=" + format_double(v));
    out += r.scenario + "," + std::to_string(r.seed) + "," + opt(r.accuracy) + "," + opt(r.cross_entropy) + "," +
           join(mse, ';') + "," + join(r.channels, ';') + "\n";
  }
  return out;
}

std::string ExperimentReport::summary_csv() const {
  std::string out = "scenario,runs,accuracy_mean,accuracy_std,cross_entropy_mean,cross_entropy_std,imputation_mse_mean\n";
  for (const auto& s : summary()) {
    std::vector<std::string> mse;
    for (const auto& [src, v] : s.mse_mean) mse.push_back(src + "=" + format_double(v));
    out += s.scenario + "," + std::to_string(s.runs) + "," + opt(s.accuracy_mean) + "," + opt(s.accuracy_std) + "," +
           opt(s.ce_mean) + "," + opt(s.ce_std) + "," + join(mse, ';') + "\n";
  }
  return out;
}

std::string ExperimentReport::table() const {
  std::vector<std::vector<std::string>> rows{{"scenario", "runs", "accuracy (%)", "cross-entropy", "imputation MSE"}};
  for (const auto& s : summary()) {
    std::string acc = s.accuracy_mean ? fixed(100.0 * *s.accuracy_mean, 2) + " +/- " + fixed(100.0 * *s.accuracy_std, 2) : "-";
    std::string ce = s.ce_mean ? fixed(*s.ce_mean, 4) + " +/- " + fixed(*s.ce_std, 4) : "-";
    std::vector<std::string> mse;
    for (const auto& [src, v] : s.mse_mean) mse.push_back(src + " " + fixed(v, 4));
    rows.push_back({s.scenario, std::to_string(s.runs), acc, ce, mse.empty() ? "-" : join(mse, ' ')});
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out = experiment + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) line += "  ";
      line += rows[i][c] + std::string(width[c] - rows[i][c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

nlohmann::json ExperimentReport::to_json() const {
  using nlohmann::json;
  auto optj = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j = {{"experiment", experiment}, {"scenario_order", scenario_order}, {"runs", json::array()}, {"summary", json::array()}};
  for (const auto& r : runs) {
    json mse = json::object();
    for (const auto& [src, v] : r.imputation_mse) mse[src] = v;
    j["runs"].push_back({{"scenario", r.scenario},
                         {"seed", r.seed},
                         {"accuracy", optj(r.accuracy)},
                         {"cross_entropy", optj(r.cross_entropy)},
                         {"imputation_mse", mse},
                         {"channels", r.channels}});
  }
  for (const auto& s : summary()) {
    json mse = json::object();
    for (const auto& [src, v] : s.mse_mean) mse[src] = v;
    j["summary"].push_back({{"scenario", s.scenario},
                            {"runs", s.runs},
                            {"accuracy_mean", optj(s.accuracy_mean)},
                            {"accuracy_std", optj(s.accuracy_std)},
                            {"cross_entropy_mean", optj(s.ce_mean)},
                            {"cross_entropy_std", optj(s.ce_std)},
                            {"imputation_mse_mean", mse}});
  }
  return j;
}

}  // namespace hetfuse

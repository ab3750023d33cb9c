#include "hetfuse/theory.hpp"

#include "hetfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace hetfuse {

namespace {

double entropy_of(const std::map<std::int64_t, std::size_t>& counts, double n) {
  double h = 0.0;
  for (const auto& [key, c] : counts) {
    (void)key;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

MiEstimate mutual_info_binned(const Matrix& x, const std::vector<int>& y, std::size_t bins) {
  require(bins >= 2, ErrorKind::InvalidArgument, "mutual information: bins must be >= 2");
  require(x.cols() >= 1 && x.cols() <= 3, ErrorKind::InvalidArgument, "mutual information: 1 to 3 columns supported");
  require(static_cast<std::size_t>(x.rows()) == y.size(), ErrorKind::ShapeMismatch, "mutual information: row count differs from labels");
  require(x.allFinite(), ErrorKind::NonFiniteInput, "mutual information: non-finite input");
  const auto n = static_cast<std::size_t>(x.rows());
  const double need = 10.0 * std::pow(static_cast<double>(bins), static_cast<double>(x.cols()));
  require(static_cast<double>(n) >= need, ErrorKind::TooFewSamples,
          "mutual information: " + std::to_string(n) + " samples < 10 * bins^columns");

  std::vector<std::int64_t> cell(n, 0);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double lo = x.col(c).minCoeff();
    const double hi = x.col(c).maxCoeff();
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i < n; ++i) {
      std::int64_t b = 0;
      if (width > 0.0) {
        b = static_cast<std::int64_t>((x(static_cast<Eigen::Index>(i), c) - lo) / width);
        b = std::clamp<std::int64_t>(b, 0, static_cast<std::int64_t>(bins) - 1);
      }
      cell[i] = cell[i] * static_cast<std::int64_t>(bins) + b;
    }
  }
  std::map<std::int64_t, std::size_t> cx, cy, cxy;
  const std::int64_t stride = static_cast<std::int64_t>(std::pow(static_cast<double>(bins), static_cast<double>(x.cols())));
  for (std::size_t i = 0; i < n; ++i) {
    ++cx[cell[i]];
    ++cy[y[i]];
    ++cxy[static_cast<std::int64_t>(y[i]) * stride + cell[i]];
  }
  const double dn = static_cast<double>(n);
  const double plug = entropy_of(cx, dn) + entropy_of(cy, dn) - entropy_of(cxy, dn);
  const double correction =
      (static_cast<double>(cx.size()) + static_cast<double>(cy.size()) - static_cast<double>(cxy.size()) - 1.0) / (2.0 * dn);
  return MiEstimate{std::max(0.0, plug + correction), bins, n};
}

Theorem1Result theorem1_direction_check(const Theorem1Config& cfg, std::uint64_t seed) {
  require(cfg.positive_rate >= 0.0 && cfg.positive_rate <= 1.0, ErrorKind::InvalidArgument,
          "theorem check: positive_rate must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution label(cfg.positive_rate);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix both(static_cast<Eigen::Index>(cfg.samples), 2);
  std::vector<int> y(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    y[i] = label(rng) ? 1 : 0;
    const auto r = static_cast<Eigen::Index>(i);
    both(r, 0) = cfg.x_slope * y[i] + noise(rng);
    both(r, 1) = cfg.a_slope * y[i] + noise(rng);
  }
  Theorem1Result out;
  out.i_x = mutual_info_binned(both.leftCols(1), y, cfg.bins).value;
  out.i_xplus = mutual_info_binned(both, y, cfg.bins).value;
  out.passed = out.i_xplus >= out.i_x - cfg.tolerance;
  return out;
}

DistanceEstimate proxy_a_distance(const Matrix& a, const Matrix& b, const DistanceConfig& cfg) {
  require(a.cols() == b.cols(), ErrorKind::WidthMismatch, "proxy distance: sample widths differ");
  require(a.rows() >= 100 && b.rows() >= 100, ErrorKind::TooFewSamples, "proxy distance: each set needs >= 100 rows");
  const Eigen::Index n = a.rows() + b.rows();
  Matrix pooled(n, a.cols());
  pooled << a, b;
  std::vector<int> domain(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) domain[static_cast<std::size_t>(i)] = i < a.rows() ? 0 : 1;

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto half = static_cast<std::size_t>(n / 2);
  auto take = [&](std::size_t lo, std::size_t hi, Matrix& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(hi - lo), pooled.cols());
    y.resize(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      x.row(static_cast<Eigen::Index>(i - lo)) = pooled.row(static_cast<Eigen::Index>(order[i]));
      y[i - lo] = domain[order[i]];
    }
  };
  Matrix xtr, xte;
  std::vector<int> ytr, yte;
  take(0, half, xtr, ytr);
  take(half, order.size(), xte, yte);

  const Vector mean = xtr.colwise().mean().transpose();
  const Vector sd = ((xtr.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  auto scale = [&](const Matrix& x) {
    Matrix out = x.rowwise() - mean.transpose();
    return Matrix(out.array().rowwise() / (sd.array() + kStdEpsilon).transpose());
  };

  MlpSpec spec;
  spec.input_dim = a.cols();
  spec.output_dim = 2;
  spec.hidden = cfg.hidden;
  spec.output_activation = Activation::softmax;
  spec.seed = cfg.seed;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const DenseNet f = train_classifier(make_mlp(spec), scale(xtr), ytr, tc).net;
  const double err = 1.0 - accuracy(forward(f, scale(xte)), yte);
  return DistanceEstimate{std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0), err};
}

double generalization_gap(const DenseNet& f, const Matrix& train_x, const std::vector<int>& train_y, const Matrix& test_x,
                          const std::vector<int>& test_y) {
  return cross_entropy(forward(f, test_x), test_y) - cross_entropy(forward(f, train_x), train_y);
}

double generalization_gap(const DenseNet& f, const SensorDataset& train, const SensorDataset& test, const WindowConfig& wcfg) {
  const auto tr = windowize_available(train, wcfg);
  const auto te = windowize_available(test, wcfg);
  require(tr.features.rows() > 0 && te.features.rows() > 0, ErrorKind::TooShort, "generalization gap: no windows on one side");
  return generalization_gap(f, tr.features, tr.labels, te.features, te.labels);
}

}  // namespace hetfuse

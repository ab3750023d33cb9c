#include "hetfuse/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hetfuse::kernels {

std::size_t window_count(std::size_t length, WindowSpec spec) {
  if (spec.window == 0 || spec.stride == 0 || length < spec.window) return 0;
  return (length - spec.window) / spec.stride + 1;
}

namespace detail {

void dense_row(const Matrix& in, Eigen::Index row, const DenseLayerView& layer, Matrix& out, Vector& scratch) {
  const Eigen::Index n_out = layer.weight.rows();
  scratch = in.row(row).transpose();
  for (Eigen::Index o = 0; o < n_out; ++o) {
    double z = layer.bias(o) + layer.weight.row(o).dot(scratch);
    if (layer.scale.size() > 0) z = z * layer.scale(o) + layer.shift(o);
    switch (layer.act) {
      case Activation::relu: z = z > 0.0 ? z : 0.0; break;
      case Activation::tanh: z = std::tanh(z); break;
      case Activation::identity:
      case Activation::softmax: break;
    }
    out(row, o) = z;
  }
  if (layer.act == Activation::softmax) {
    const double m = out.row(row).maxCoeff();
    double total = 0.0;
    for (Eigen::Index o = 0; o < n_out; ++o) {
      out(row, o) = std::exp(out(row, o) - m);
      total += out(row, o);
    }
    for (Eigen::Index o = 0; o < n_out; ++o) out(row, o) /= total;
  }
}

namespace {

double median_inplace(std::span<double> v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

double hampel_point(std::span<const double> x, std::size_t i, std::size_t window, double threshold,
                    std::span<double> buf) {
  const std::size_t half = window / 2;
  const std::size_t lo = i >= half ? i - half : 0;
  const std::size_t hi = std::min(x.size(), i + half + 1);
  const std::size_t n = hi - lo;
  auto w = buf.subspan(0, n);
  std::copy(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi), w.begin());
  const double med = median_inplace(w);
  for (std::size_t k = 0; k < n; ++k) w[k] = std::abs(x[lo + k] - med);
  const double mad = median_inplace(w);
  const double dev = std::abs(x[i] - med);
  // Zero MAD: the window is dominated by one value, anything else is an outlier.
  if (mad == 0.0) return dev > 0.0 ? med : x[i];
  return dev > threshold * 1.4826 * mad ? med : x[i];
}

void window_row(const Matrix& samples, WindowSpec spec, std::size_t r, Matrix& out, Eigen::Index out_row) {
  const auto start = static_cast<Eigen::Index>(r * spec.stride);
  const auto W = static_cast<Eigen::Index>(spec.window);
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    for (Eigen::Index t = 0; t < W; ++t) out(out_row, c * W + t) = samples(start + t, c);
  }
}

void diagonal_average_component(const Matrix& u, const Vector& sigma, const Matrix& v, Eigen::Index k, Matrix& comps) {
  const Eigen::Index L = u.rows();
  const Eigen::Index K = v.rows();
  const Eigen::Index N = L + K - 1;
  for (Eigen::Index t = 0; t < N; ++t) {
    const Eigen::Index j0 = std::max<Eigen::Index>(0, t - K + 1);
    const Eigen::Index j1 = std::min<Eigen::Index>(t, L - 1);
    double acc = 0.0;
    for (Eigen::Index j = j0; j <= j1; ++j) acc += u(j, k) * v(t - j, k);
    comps(t, k) = sigma(k) * acc / static_cast<double>(j1 - j0 + 1);
  }
}

}  // namespace detail

namespace serial {

void dense_layer(const Matrix& in, const DenseLayerView& layer, Matrix& out) {
  out.resize(in.rows(), layer.weight.rows());
  Vector scratch;
  for (Eigen::Index i = 0; i < in.rows(); ++i) detail::dense_row(in, i, layer, out, scratch);
}

void hampel(std::span<const double> x, std::size_t window, double threshold, std::span<double> out) {
  std::vector<double> buf(window + 1);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = detail::hampel_point(x, i, window, threshold, buf);
}

void windowize(const Matrix& samples, WindowSpec spec, Matrix& out, Eigen::Index first_row) {
  const auto n = window_count(static_cast<std::size_t>(samples.rows()), spec);
  for (std::size_t r = 0; r < n; ++r) detail::window_row(samples, spec, r, out, first_row + static_cast<Eigen::Index>(r));
}

void diagonal_average(const Matrix& u, const Vector& sigma, const Matrix& v, Matrix& comps) {
  comps.resize(u.rows() + v.rows() - 1, sigma.size());
  for (Eigen::Index k = 0; k < sigma.size(); ++k) detail::diagonal_average_component(u, sigma, v, k, comps);
}

}  // namespace serial

}  // namespace hetfuse::kernels

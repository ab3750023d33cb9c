#include "hetfuse/kernels.hpp"

#include <omp.h>

#include <vector>

namespace hetfuse::kernels::omp {

void dense_layer(const Matrix& in, const DenseLayerView& layer, Matrix& out) {
  out.resize(in.rows(), layer.weight.rows());
  const Eigen::Index n = in.rows();
#pragma omp parallel
  {
    Vector scratch;
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) detail::dense_row(in, i, layer, out, scratch);
  }
}

void hampel(std::span<const double> x, std::size_t window, double threshold, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel
  {
    std::vector<double> buf(window + 1);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(i)] = detail::hampel_point(x, static_cast<std::size_t>(i), window, threshold, buf);
    }
  }
}

void windowize(const Matrix& samples, WindowSpec spec, Matrix& out, Eigen::Index first_row) {
  const auto n = static_cast<std::ptrdiff_t>(window_count(static_cast<std::size_t>(samples.rows()), spec));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    detail::window_row(samples, spec, static_cast<std::size_t>(r), out, first_row + static_cast<Eigen::Index>(r));
  }
}

void diagonal_average(const Matrix& u, const Vector& sigma, const Matrix& v, Matrix& comps) {
  comps.resize(u.rows() + v.rows() - 1, sigma.size());
  const Eigen::Index d = sigma.size();
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index k = 0; k < d; ++k) detail::diagonal_average_component(u, sigma, v, k, comps);
}

}  // namespace hetfuse::kernels::omp

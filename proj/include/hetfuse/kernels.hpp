#pragma once

// Data-parallel inner loops. Every kernel exists twice: `serial` is the
// reference implementation the tests check against, `omp` splits the
// outermost independent loop across OpenMP threads. Both run the identical
// per-item arithmetic, so their outputs are bit-identical.

#include <Eigen/Dense>

#include <cstddef>
#include <span>

namespace hetfuse::kernels {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { identity, relu, tanh, softmax };

// out.row(i) = act(scale .* (weight * in.row(i)' + bias) + shift).
// `scale`/`shift` may be empty (no folded batch-norm). Softmax acts per row.
struct DenseLayerView {
  const RowMatrix& weight;  // out x in
  const Vector& bias;
  const Vector& scale;
  const Vector& shift;
  Activation act;
};

// Sliding windows over one block: row r holds samples [r*stride, r*stride+window)
// laid out channel-major (all timesteps of channel 0, then channel 1, ...).
struct WindowSpec {
  std::size_t window = 1;
  std::size_t stride = 1;
};

std::size_t window_count(std::size_t length, WindowSpec spec);

namespace serial {

void dense_layer(const Matrix& in, const DenseLayerView& layer, Matrix& out);
void hampel(std::span<const double> x, std::size_t window, double threshold, std::span<double> out);
void windowize(const Matrix& samples, WindowSpec spec, Matrix& out, Eigen::Index first_row);
// comps.col(k) = diagonal average of sigma(k) * u_k * v_k'.
void diagonal_average(const Matrix& u, const Vector& sigma, const Matrix& v, Matrix& comps);

}  // namespace serial

namespace omp {

void dense_layer(const Matrix& in, const DenseLayerView& layer, Matrix& out);
void hampel(std::span<const double> x, std::size_t window, double threshold, std::span<double> out);
void windowize(const Matrix& samples, WindowSpec spec, Matrix& out, Eigen::Index first_row);
void diagonal_average(const Matrix& u, const Vector& sigma, const Matrix& v, Matrix& comps);

}  // namespace omp

// Per-item bodies shared by both variants.
namespace detail {

void dense_row(const Matrix& in, Eigen::Index row, const DenseLayerView& layer, Matrix& out, Vector& scratch);
double hampel_point(std::span<const double> x, std::size_t i, std::size_t window, double threshold,
                    std::span<double> buf);
void window_row(const Matrix& samples, WindowSpec spec, std::size_t r, Matrix& out, Eigen::Index out_row);
void diagonal_average_component(const Matrix& u, const Vector& sigma, const Matrix& v, Eigen::Index k, Matrix& comps);

}  // namespace detail

}  // namespace hetfuse::kernels

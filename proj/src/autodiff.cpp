#include "hetfuse/autodiff.hpp"

#include "hetfuse/error.hpp"

#include <cmath>

namespace hetfuse::ad {

using Need = Graph::Need;


Var Graph::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::node(Matrix value, std::vector<Var> parents, Backward backward) {
  bool rg = false;
  for (auto p : parents) rg = rg || requires_grad(p);
  nodes_.push_back(Node{std::move(value), std::move(parents), rg ? std::move(backward) : nullptr, rg});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

std::vector<Var> Graph::gradients(Var output, const std::vector<Var>& wrt, Var seed) {
  const auto n = static_cast<std::size_t>(output.id) + 1;
  std::vector<Var> grads(n);
  if (!seed.valid()) seed = constant(Matrix::Ones(value(output).rows(), value(output).cols()));
  grads[static_cast<std::size_t>(output.id)] = seed;

  // A node is relevant when some `wrt` variable is among its ancestors.
  std::vector<char> relevant(n, 0);
  for (auto w : wrt) {
    if (static_cast<std::size_t>(w.id) < n) relevant[static_cast<std::size_t>(w.id)] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant[i] || !nodes_[i].requires_grad) continue;
    for (auto p : nodes_[i].parents) {
      if (relevant[static_cast<std::size_t>(p.id)]) {
        relevant[i] = 1;
        break;
      }
    }
  }

  for (int id = output.id; id >= 0; --id) {
    const auto i = static_cast<std::size_t>(id);
    if (!grads[i].valid() || !relevant[i] || !nodes_[i].backward) continue;
    // Copies: backward appends nodes, and deque growth must not alias these.
    const auto backward = nodes_[i].backward;
    const auto parents = nodes_[i].parents;
    Need need(parents.size());
    for (std::size_t k = 0; k < parents.size(); ++k) need[k] = relevant[static_cast<std::size_t>(parents[k].id)] != 0;
    const auto pg = backward(*this, Var{id}, grads[i], need);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (!need[k] || !pg[k].valid()) continue;
      auto& slot = grads[static_cast<std::size_t>(parents[k].id)];
      slot = slot.valid() ? add(*this, slot, pg[k]) : pg[k];
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (auto w : wrt) {
    const auto i = static_cast<std::size_t>(w.id);
    if (i < n && grads[i].valid()) {
      out.push_back(grads[i]);
    } else {
      out.push_back(constant(Matrix::Zero(value(w).rows(), value(w).cols())));
    }
  }
  return out;
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::ShapeMismatch, std::string(op) + ": operand shapes differ");
  }
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  Matrix v = g.value(a) * g.value(b);
  return g.node(std::move(v), {a, b}, [a, b](Graph& g, Var, Var d, const Need& need) -> std::vector<Var> {
    return {need[0] ? matmul_nt(g, d, b) : Var{}, need[1] ? matmul_tn(g, a, d) : Var{}};
  });
}

Var matmul_tn(Graph& g, Var a, Var b) {
  Matrix v = g.value(a).transpose() * g.value(b);
  return g.node(std::move(v), {a, b}, [a, b](Graph& g, Var, Var d, const Need& need) -> std::vector<Var> {
    return {need[0] ? matmul_nt(g, b, d) : Var{}, need[1] ? matmul(g, a, d) : Var{}};
  });
}

Var matmul_nt(Graph& g, Var a, Var b) {
  Matrix v = g.value(a) * g.value(b).transpose();
  return g.node(std::move(v), {a, b}, [a, b](Graph& g, Var, Var d, const Need& need) -> std::vector<Var> {
    return {need[0] ? matmul(g, d, b) : Var{}, need[1] ? matmul_tn(g, d, a) : Var{}};
  });
}

Var add(Graph& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "add");
  Matrix v = g.value(a) + g.value(b);
  return g.node(std::move(v), {a, b}, [](Graph&, Var, Var d, const Need&) -> std::vector<Var> { return {d, d}; });
}

Var sub(Graph& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "sub");
  Matrix v = g.value(a) - g.value(b);
  return g.node(std::move(v), {a, b}, [](Graph& g, Var, Var d, const Need& need) -> std::vector<Var> {
    return {d, need[1] ? scale(g, d, -1.0) : Var{}};
  });
}

Var mul(Graph& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "mul");
  Matrix v = g.value(a).cwiseProduct(g.value(b));
  return g.node(std::move(v), {a, b}, [a, b](Graph& g, Var, Var d, const Need& need) -> std::vector<Var> {
    return {need[0] ? mul(g, d, b) : Var{}, need[1] ? mul(g, d, a) : Var{}};
  });
}

Var scale(Graph& g, Var a, double c) {
  Matrix v = g.value(a) * c;
  return g.node(std::move(v), {a}, [c](Graph& g, Var, Var d, const Need&) -> std::vector<Var> { return {scale(g, d, c)}; });
}

Var affine(Graph& g, Var a, double c, double d0) {
  Matrix v = (g.value(a) * c).array() + d0;
  return g.node(std::move(v), {a}, [c](Graph& g, Var, Var d, const Need&) -> std::vector<Var> { return {scale(g, d, c)}; });
}

Var add_rowvec(Graph& g, Var a, Var row) {
  const auto& r = g.value(row);
  if (r.rows() != 1 || r.cols() != g.value(a).cols()) fail(ErrorKind::ShapeMismatch, "add_rowvec: bad row shape");
  Matrix v = g.value(a).rowwise() + r.row(0);
  return g.node(std::move(v), {a, row}, [](Graph& g, Var, Var d, const Need& need) -> std::vector<Var> {
    return {d, need[1] ? col_sums(g, d) : Var{}};
  });
}

Var sub_rowvec(Graph& g, Var a, Var row) { return add_rowvec(g, a, scale(g, row, -1.0)); }

Var mul_rowvec(Graph& g, Var a, Var row) {
  const auto& r = g.value(row);
  if (r.rows() != 1 || r.cols() != g.value(a).cols()) fail(ErrorKind::ShapeMismatch, "mul_rowvec: bad row shape");
  Matrix v = g.value(a).array().rowwise() * r.row(0).array();
  return g.node(std::move(v), {a, row}, [a, row](Graph& g, Var, Var d, const Need& need) -> std::vector<Var> {
    return {need[0] ? mul_rowvec(g, d, row) : Var{}, need[1] ? col_sums(g, mul(g, d, a)) : Var{}};
  });
}

Var col_sums(Graph& g, Var a) {
  const auto rows = g.value(a).rows();
  Matrix v = g.value(a).colwise().sum();
  return g.node(std::move(v), {a}, [rows](Graph& g, Var, Var d, const Need&) -> std::vector<Var> { return {broadcast_rows(g, d, rows)}; });
}

Var broadcast_rows(Graph& g, Var row, Eigen::Index rows) {
  Matrix v = g.value(row).replicate(rows, 1);
  return g.node(std::move(v), {row}, [](Graph& g, Var, Var d, const Need&) -> std::vector<Var> { return {col_sums(g, d)}; });
}

Var sum_all(Graph& g, Var a) {
  const auto rows = g.value(a).rows();
  const auto cols = g.value(a).cols();
  Matrix v(1, 1);
  v(0, 0) = g.value(a).sum();
  return g.node(std::move(v), {a}, [rows, cols](Graph& g, Var, Var d, const Need&) -> std::vector<Var> {
    return {broadcast_scalar(g, d, rows, cols)};
  });
}

Var broadcast_scalar(Graph& g, Var s, Eigen::Index rows, Eigen::Index cols) {
  Matrix v = Matrix::Constant(rows, cols, g.value(s)(0, 0));
  return g.node(std::move(v), {s}, [](Graph& g, Var, Var d, const Need&) -> std::vector<Var> { return {sum_all(g, d)}; });
}

Var relu(Graph& g, Var a) {
  Matrix v = g.value(a).cwiseMax(0.0);
  return g.node(std::move(v), {a}, [a](Graph& g, Var, Var d, const Need&) -> std::vector<Var> {
    Matrix mask = (g.value(a).array() > 0.0).cast<double>();
    return {mul(g, d, g.constant(std::move(mask)))};
  });
}

Var tanh(Graph& g, Var a) {
  Matrix v = g.value(a).array().tanh();
  return g.node(std::move(v), {a}, [](Graph& g, Var self, Var d, const Need&) -> std::vector<Var> {
    return {mul(g, d, affine(g, mul(g, self, self), -1.0, 1.0))};
  });
}

Var exp(Graph& g, Var a) {
  Matrix v = g.value(a).array().exp();
  return g.node(std::move(v), {a}, [](Graph& g, Var self, Var d, const Need&) -> std::vector<Var> { return {mul(g, d, self)}; });
}

Var rsqrt_eps(Graph& g, Var a, double eps) {
  Matrix v = (g.value(a).array() + eps).rsqrt();
  return g.node(std::move(v), {a}, [](Graph& g, Var self, Var d, const Need&) -> std::vector<Var> {
    return {mul(g, d, scale(g, mul(g, self, mul(g, self, self)), -0.5))};
  });
}

Var softmax_cross_entropy(Graph& g, Var logits, const std::vector<int>& labels) {
  const Matrix& z = g.value(logits);
  const auto n = z.rows();
  const auto k = z.cols();
  if (static_cast<std::size_t>(n) != labels.size()) fail(ErrorKind::ShapeMismatch, "cross-entropy: label count differs from rows");
  Matrix probs(n, k);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) fail(ErrorKind::UnknownLabel, "cross-entropy: label " + std::to_string(y) + " outside output range");
    const double m = z.row(i).maxCoeff();
    double s = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      probs(i, j) = std::exp(z(i, j) - m);
      s += probs(i, j);
    }
    probs.row(i) /= s;
    loss += (m + std::log(s)) - z(i, y);
  }
  Matrix v(1, 1);
  v(0, 0) = loss / static_cast<double>(n);

  Matrix dlogits = probs;
  for (Eigen::Index i = 0; i < n; ++i) dlogits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  dlogits /= static_cast<double>(n);
  return g.node(std::move(v), {logits}, [dlogits = std::move(dlogits), n, k](Graph& g, Var, Var d, const Need&) -> std::vector<Var> {
    return {mul(g, broadcast_scalar(g, d, n, k), g.constant(dlogits))};
  });
}

}  // namespace hetfuse::ad

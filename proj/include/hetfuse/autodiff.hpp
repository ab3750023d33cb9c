#pragma once

// Eager reverse-mode differentiation over dense matrices. Gradients are built
// from the same ops as the forward pass, so a gradient can itself be
// differentiated; the Jacobian-norm regularizer relies on that.

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <vector>

namespace hetfuse::ad {

using Matrix = Eigen::MatrixXd;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  using Need = std::vector<bool>;
  // Returns one gradient per parent; entries whose `need` flag is false may be
  // left invalid.
  using Backward = std::function<std::vector<Var>(Graph&, Var self, Var grad, const Need& need)>;

  Var leaf(Matrix value, bool requires_grad);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var node(Matrix value, std::vector<Var> parents, Backward backward);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // d(sum(seed .* output)) / d(wrt). `seed` defaults to ones (scalar outputs).
  // Missing paths give zero matrices.
  std::vector<Var> gradients(Var output, const std::vector<Var>& wrt, Var seed = {});

 private:
  struct Node {
    Matrix value;
    std::vector<Var> parents;
    Backward backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

// Shapes follow Eigen: a row vector is 1 x n.
Var matmul(Graph& g, Var a, Var b);     // A B
Var matmul_tn(Graph& g, Var a, Var b);  // A' B
Var matmul_nt(Graph& g, Var a, Var b);  // A B'
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);  // elementwise
Var scale(Graph& g, Var a, double c);
Var affine(Graph& g, Var a, double c, double d);  // c * a + d
Var add_rowvec(Graph& g, Var a, Var row);         // a + broadcast(row)
Var sub_rowvec(Graph& g, Var a, Var row);
Var mul_rowvec(Graph& g, Var a, Var row);         // a .* broadcast(row)
Var col_sums(Graph& g, Var a);                    // n x m -> 1 x m
Var broadcast_rows(Graph& g, Var row, Eigen::Index rows);
Var sum_all(Graph& g, Var a);  // -> 1 x 1
Var broadcast_scalar(Graph& g, Var s, Eigen::Index rows, Eigen::Index cols);
Var relu(Graph& g, Var a);
Var tanh(Graph& g, Var a);
Var exp(Graph& g, Var a);
Var rsqrt_eps(Graph& g, Var a, double eps);  // (a + eps)^(-1/2)
// Mean softmax cross-entropy of logits against integer labels. Its gradient
// treats the softmax as a constant, so it is first-order only.
Var softmax_cross_entropy(Graph& g, Var logits, const std::vector<int>& labels);

}  // namespace hetfuse::ad

#include "hetfuse/nn.hpp"

#include "hetfuse/autodiff.hpp"
#include "hetfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hetfuse {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_input(const DenseNet& net, const Matrix& batch) {
  require(batch.cols() == net.input_dim(), ErrorKind::ShapeMismatch,
          "batch width " + std::to_string(batch.cols()) + " != input dim " + std::to_string(net.input_dim()));
  require(all_finite(batch), ErrorKind::NonFiniteInput, "batch contains non-finite entries");
}

void softmax_rows(Matrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp();
    z.row(i) /= z.row(i).sum();
  }
}

void apply_activation(Matrix& z, Activation act) {
  switch (act) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh(); break;
    case Activation::softmax: softmax_rows(z); break;
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "identity";
}

Activation parse_activation(std::string_view text) {
  if (text == "identity") return Activation::identity;
  if (text == "relu") return Activation::relu;
  if (text == "tanh") return Activation::tanh;
  if (text == "softmax") return Activation::softmax;
  fail(ErrorKind::Parse, "unknown activation '" + std::string(text) + "'");
}

std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view text) {
  if (text == "sgd") return Optimizer::sgd;
  if (text == "adam") return Optimizer::adam;
  fail(ErrorKind::Parse, "unknown optimizer '" + std::string(text) + "'");
}

BatchNormState BatchNormState::identity(Eigen::Index width) {
  BatchNormState s;
  s.gamma = Vector::Ones(width);
  s.beta = Vector::Zero(width);
  s.running_mean = Vector::Zero(width);
  s.running_var = Vector::Ones(width);
  return s;
}

// --- DenseNet ----------------------------------------------------------------

Eigen::Index DenseNet::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
Eigen::Index DenseNet::output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

bool DenseNet::has_batchnorm() const {
  return std::any_of(layers.begin(), layers.end(), [](const DenseLayer& l) { return l.batchnorm.has_value(); });
}

bool DenseNet::is_classifier() const { return !layers.empty() && layers.back().activation == Activation::softmax; }

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    if (l.batchnorm) n += static_cast<std::size_t>(l.batchnorm->gamma.size() + l.batchnorm->beta.size());
  }
  return n;
}

void DenseNet::check() const {
  require(!layers.empty(), ErrorKind::InvalidArgument, "network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    require(l.weight.rows() > 0 && l.weight.cols() > 0, ErrorKind::ShapeMismatch, where + ": empty weight");
    require(l.bias.size() == l.out_dim(), ErrorKind::ShapeMismatch, where + ": bias length");
    if (i > 0) require(l.in_dim() == layers[i - 1].out_dim(), ErrorKind::ShapeMismatch, where + ": shapes do not compose");
    require(l.activation != Activation::softmax || i + 1 == layers.size(), ErrorKind::InvalidArgument,
            where + ": softmax is only allowed on the output layer");
    require(all_finite(l.weight) && l.bias.allFinite(), ErrorKind::NonFiniteInput, where + ": non-finite parameters");
    if (l.batchnorm) {
      const auto& bn = *l.batchnorm;
      const auto w = l.out_dim();
      require(bn.gamma.size() == w && bn.beta.size() == w && bn.running_mean.size() == w && bn.running_var.size() == w,
              ErrorKind::ShapeMismatch, where + ": batch-norm width");
      require((bn.running_var.array() >= 0.0).all(), ErrorKind::InvalidArgument, where + ": negative running variance");
      require(bn.momentum > 0.0 && bn.momentum < 1.0 && bn.epsilon > 0.0, ErrorKind::InvalidArgument,
              where + ": batch-norm momentum/epsilon");
    }
  }
}

DenseNet make_mlp(const MlpSpec& spec) {
  require(spec.input_dim > 0 && spec.output_dim > 0, ErrorKind::InvalidArgument, "mlp dims must be positive");
  std::mt19937_64 rng(spec.seed);
  DenseNet net;
  std::vector<Eigen::Index> dims{spec.input_dim};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.output_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    DenseLayer l;
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> u(-limit, limit);
    l.weight.resize(dims[i + 1], dims[i]);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = u(rng);
    }
    l.bias = Vector::Zero(dims[i + 1]);
    l.activation = last ? spec.output_activation : spec.hidden_activation;
    if (!last && spec.batchnorm) l.batchnorm = BatchNormState::identity(dims[i + 1]);
    net.layers.push_back(std::move(l));
  }
  net.check();
  return net;
}

// --- plain forward ---------------------------------------------------------

Matrix batchnorm_forward(BatchNormState& state, const Matrix& batch, Mode mode) {
  require(batch.cols() == state.gamma.size(), ErrorKind::ShapeMismatch, "batch-norm width mismatch");
  if (mode == Mode::eval) {
    const Vector scale = state.gamma.array() / (state.running_var.array() + state.epsilon).sqrt();
    Matrix out = (batch.rowwise() - state.running_mean.transpose()).array().rowwise() * scale.transpose().array();
    return out.rowwise() + state.beta.transpose();
  }
  require(batch.rows() >= 2, ErrorKind::BatchTooSmall, "train-mode batch norm needs at least 2 rows");
  const double n = static_cast<double>(batch.rows());
  const Vector mean = batch.colwise().mean().transpose();
  const Matrix centered = batch.rowwise() - mean.transpose();
  const Vector var = centered.array().square().colwise().sum().transpose() / n;
  const Vector scale = state.gamma.array() / (var.array() + state.epsilon).sqrt();
  Matrix out = centered.array().rowwise() * scale.transpose().array();
  out.rowwise() += state.beta.transpose();
  state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mean;
  state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * var;
  return out;
}

namespace {

Matrix forward_eval(const DenseNet& net, const Matrix& batch, Exec exec, bool stop_before_softmax) {
  require_input(net, batch);
  Matrix cur = batch;
  Matrix next;
  const Vector none;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    const kernels::RowMatrix w = l.weight;
    Vector scale;
    Vector shift;
    if (l.batchnorm) {
      const auto& bn = *l.batchnorm;
      scale = bn.gamma.array() / (bn.running_var.array() + bn.epsilon).sqrt();
      shift = bn.beta.array() - scale.array() * bn.running_mean.array();
    }
    Activation act = l.activation;
    if (stop_before_softmax && act == Activation::softmax) act = Activation::identity;
    const kernels::DenseLayerView view{w, l.bias, scale, shift, act};
    if (exec == Exec::serial) {
      kernels::serial::dense_layer(cur, view, next);
    } else {
      kernels::omp::dense_layer(cur, view, next);
    }
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

Matrix forward(const DenseNet& net, const Matrix& batch, Exec exec) { return forward_eval(net, batch, exec, false); }

Matrix forward(DenseNet& net, const Matrix& batch, Mode mode) {
  if (mode == Mode::eval) return forward_eval(net, batch, Exec::parallel, false);
  require_input(net, batch);
  Matrix cur = batch;
  for (auto& l : net.layers) {
    Matrix z = (cur * l.weight.transpose()).rowwise() + l.bias.transpose();
    if (l.batchnorm) z = batchnorm_forward(*l.batchnorm, z, Mode::train);
    apply_activation(z, l.activation);
    cur = std::move(z);
  }
  return cur;
}

Matrix logits(const DenseNet& net, const Matrix& batch) { return forward_eval(net, batch, Exec::parallel, true); }

std::vector<int> predict_labels(const DenseNet& net, const Matrix& batch) {
  const Matrix z = logits(net, batch);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index k = 0;
    z.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

double mse(const Matrix& prediction, const Matrix& target) {
  require(prediction.rows() == target.rows() && prediction.cols() == target.cols(), ErrorKind::ShapeMismatch,
          "mse: shapes differ");
  if (prediction.size() == 0) return 0.0;
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

double cross_entropy(const Matrix& probabilities, const std::vector<int>& labels) {
  require(static_cast<std::size_t>(probabilities.rows()) == labels.size(), ErrorKind::ShapeMismatch,
          "cross-entropy: label count differs from rows");
  if (labels.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probabilities(static_cast<Eigen::Index>(i), labels[i]);
    s -= std::log(std::max(p, 1e-300));
  }
  return s / static_cast<double>(labels.size());
}

double accuracy(const Matrix& probabilities, const std::vector<int>& labels) {
  require(static_cast<std::size_t>(probabilities.rows()) == labels.size(), ErrorKind::ShapeMismatch,
          "accuracy: label count differs from rows");
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Eigen::Index k = 0;
    probabilities.row(static_cast<Eigen::Index>(i)).maxCoeff(&k);
    hit += static_cast<int>(k) == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// --- taped forward and losses -----------------------------------------------

namespace {

using ad::Graph;
using ad::Var;

// Parameters as row-friendly matrices: W (out x in), b/gamma/beta (1 x out).
std::vector<Matrix> get_params(const DenseNet& net) {
  std::vector<Matrix> p;
  for (const auto& l : net.layers) {
    p.push_back(l.weight);
    p.push_back(l.bias.transpose());
    if (l.batchnorm) {
      p.push_back(l.batchnorm->gamma.transpose());
      p.push_back(l.batchnorm->beta.transpose());
    }
  }
  return p;
}

void set_params(DenseNet& net, const std::vector<Matrix>& p) {
  std::size_t k = 0;
  for (auto& l : net.layers) {
    l.weight = p[k++];
    l.bias = p[k++].transpose();
    if (l.batchnorm) {
      l.batchnorm->gamma = p[k++].transpose();
      l.batchnorm->beta = p[k++].transpose();
    }
  }
}

enum class BnMode { batch, given, running };

struct BnStats {
  Var mean;
  Var var;
  Var inv;
};

// Returns the network output, or the logits when the output layer is softmax.
Var tape_forward(Graph& g, const DenseNet& net, const std::vector<Var>& params, Var x, BnMode mode,
                 std::vector<BnStats>& stats) {
  std::size_t k = 0;
  std::size_t bn_index = 0;
  Var cur = x;
  const double n = static_cast<double>(g.value(x).rows());
  for (const auto& l : net.layers) {
    const Var w = params[k++];
    const Var b = params[k++];
    Var z = ad::add_rowvec(g, ad::matmul_nt(g, cur, w), b);
    if (l.batchnorm) {
      const Var gamma = params[k++];
      const Var beta = params[k++];
      const auto& bn = *l.batchnorm;
      Var mean;
      Var inv;
      if (mode == BnMode::running) {
        mean = g.constant(bn.running_mean.transpose());
        inv = g.constant(((bn.running_var.array() + bn.epsilon).rsqrt()).matrix().transpose());
      } else if (mode == BnMode::given) {
        mean = stats[bn_index].mean;
        inv = stats[bn_index].inv;
      } else {
        mean = ad::scale(g, ad::col_sums(g, z), 1.0 / n);
        const Var c = ad::sub_rowvec(g, z, mean);
        const Var var = ad::scale(g, ad::col_sums(g, ad::mul(g, c, c)), 1.0 / n);
        inv = ad::rsqrt_eps(g, var, bn.epsilon);
        stats.push_back(BnStats{mean, var, inv});
      }
      z = ad::mul_rowvec(g, ad::sub_rowvec(g, z, mean), inv);
      z = ad::add_rowvec(g, ad::mul_rowvec(g, z, gamma), beta);
      ++bn_index;
    }
    switch (l.activation) {
      case Activation::identity:
      case Activation::softmax: break;
      case Activation::relu: z = ad::relu(g, z); break;
      case Activation::tanh: z = ad::tanh(g, z); break;
    }
    cur = z;
  }
  return cur;
}

// sum_k ||d out[:, k] / d x||_F^2 / n, built on the tape so it can be
// differentiated again.
Var tape_jacobian(Graph& g, Var out, Var x) {
  const auto n = g.value(out).rows();
  const auto m = g.value(out).cols();
  Var total;
  for (Eigen::Index k = 0; k < m; ++k) {
    Matrix seed = Matrix::Zero(n, m);
    seed.col(k).setOnes();
    const Var gk = g.gradients(out, {x}, g.constant(std::move(seed)))[0];
    const Var sq = ad::sum_all(g, ad::mul(g, gk, gk));
    total = total.valid() ? ad::add(g, total, sq) : sq;
  }
  return ad::scale(g, total, 1.0 / static_cast<double>(n));
}

struct Objective {
  bool classify = false;
  const Matrix* targets = nullptr;
  const std::vector<int>* labels = nullptr;
  double task_weight = 1.0;
  double jacobian_coeff = 0.0;
  bool adaptive = false;
};

struct Built {
  Var task;
  Var reg;
  Var total;
  std::vector<BnStats> stats;
};

Built build_loss(Graph& g, const DenseNet& net, const std::vector<Var>& params, const Matrix& x, const Objective& obj,
                 Var log_var) {
  Built b;
  const bool bn = net.has_batchnorm();
  Var out = tape_forward(g, net, params, g.constant(x), BnMode::batch, b.stats);
  if (obj.classify) {
    b.task = ad::softmax_cross_entropy(g, out, *obj.labels);
  } else {
    const Var d = ad::sub(g, out, g.constant(*obj.targets));
    b.task = ad::scale(g, ad::sum_all(g, ad::mul(g, d, d)), 1.0 / static_cast<double>(g.value(d).size()));
  }
  Var weighted;
  if (obj.adaptive) {
    // exp(-s) * task + s / 2
    const Var w = ad::exp(g, ad::scale(g, log_var, -1.0));
    weighted = ad::add(g, ad::mul(g, w, b.task), ad::scale(g, log_var, 0.5));
  } else {
    weighted = ad::scale(g, b.task, obj.task_weight);
  }
  if (obj.jacobian_coeff > 0.0) {
    // The per-sample Jacobian holds batch statistics fixed: they come from the
    // pass above, while a second pass differentiates through a fresh input
    // leaf.
    const Var xl = g.leaf(x, true);
    std::vector<BnStats> stats = b.stats;
    const Var out2 = tape_forward(g, net, params, xl, bn ? BnMode::given : BnMode::batch, stats);
    b.reg = tape_jacobian(g, out2, xl);
    b.total = ad::add(g, weighted, ad::scale(g, b.reg, obj.jacobian_coeff));
  } else {
    b.total = weighted;
  }
  return b;
}

std::vector<std::size_t> batch_starts(std::size_t n, std::size_t batch, bool merge_singletons) {
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s < n; s += batch) starts.push_back(s);
  if (merge_singletons && starts.size() > 1 && n - starts.back() == 1) starts.pop_back();
  starts.push_back(n);
  return starts;
}

std::uint64_t shuffle_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Trained train_impl(DenseNet net, const Matrix& x, const Objective& obj, const TrainConfig& cfg) {
  net.check();
  require(cfg.learning_rate > 0.0 && cfg.epochs > 0 && cfg.batch_size > 0, ErrorKind::InvalidArgument,
          "learning rate, epochs and batch size must be positive");
  require(cfg.jacobian_coeff >= 0.0 && cfg.task_weight > 0.0, ErrorKind::InvalidArgument,
          "jacobian_coeff must be >= 0 and task_weight > 0");
  require_input(net, x);
  const auto n = static_cast<std::size_t>(x.rows());
  require(n > 0, ErrorKind::ShapeMismatch, "empty training set");
  const bool bn = net.has_batchnorm();
  require(!bn || n >= 2, ErrorKind::BatchTooSmall, "batch-norm training needs at least 2 rows");

  std::mt19937_64 rng(shuffle_seed(cfg.seed));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Matrix> params = get_params(net);
  std::vector<Matrix> m1;
  std::vector<Matrix> m2;
  for (const auto& p : params) {
    m1.push_back(Matrix::Zero(p.rows(), p.cols()));
    m2.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  double log_var = 0.0;
  double lv_m1 = 0.0;
  double lv_m2 = 0.0;
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double adam_eps = 1e-8;
  std::size_t step = 0;

  Trained result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto starts = batch_starts(n, cfg.batch_size, bn);
    EpochLoss sum;
    for (std::size_t bi = 0; bi + 1 < starts.size(); ++bi) {
      const std::size_t lo = starts[bi];
      const std::size_t hi = starts[bi + 1];
      const auto rows = static_cast<Eigen::Index>(hi - lo);
      Matrix xb(rows, x.cols());
      Matrix yb;
      std::vector<int> lb;
      if (obj.classify) {
        lb.resize(hi - lo);
      } else {
        yb.resize(rows, obj.targets->cols());
      }
      for (std::size_t r = lo; r < hi; ++r) {
        const auto dst = static_cast<Eigen::Index>(r - lo);
        const auto src = static_cast<Eigen::Index>(order[r]);
        xb.row(dst) = x.row(src);
        if (obj.classify) {
          lb[r - lo] = (*obj.labels)[order[r]];
        } else {
          yb.row(dst) = obj.targets->row(src);
        }
      }
      Objective bobj = obj;
      bobj.targets = &yb;
      bobj.labels = &lb;

      Graph g;
      std::vector<Var> pv;
      for (const auto& p : params) pv.push_back(g.leaf(p, true));
      const Var lv = g.leaf(Matrix::Constant(1, 1, log_var), obj.adaptive);
      const Built built = build_loss(g, net, pv, xb, bobj, lv);
      const double task = g.value(built.task)(0, 0);
      const double reg = built.reg.valid() ? g.value(built.reg)(0, 0) : 0.0;
      const double total = g.value(built.total)(0, 0);
      if (!std::isfinite(total)) {
        fail(ErrorKind::NonFiniteLoss, "non-finite training loss at epoch " + std::to_string(epoch + 1));
      }
      std::vector<Var> wrt = pv;
      if (obj.adaptive) wrt.push_back(lv);
      const auto grads = g.gradients(built.total, wrt);

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        const Matrix& gk = g.value(grads[k]);
        if (cfg.optimizer == Optimizer::sgd) {
          params[k] -= cfg.learning_rate * gk;
        } else {
          m1[k] = beta1 * m1[k] + (1.0 - beta1) * gk;
          m2[k] = beta2 * m2[k] + (1.0 - beta2) * gk.cwiseProduct(gk);
          params[k].array() -=
              cfg.learning_rate * (m1[k].array() / c1) / ((m2[k].array() / c2).sqrt() + adam_eps);
        }
      }
      if (obj.adaptive) {
        const double gs = g.value(grads.back())(0, 0);
        if (cfg.optimizer == Optimizer::sgd) {
          log_var -= cfg.learning_rate * gs;
        } else {
          lv_m1 = beta1 * lv_m1 + (1.0 - beta1) * gs;
          lv_m2 = beta2 * lv_m2 + (1.0 - beta2) * gs * gs;
          log_var -= cfg.learning_rate * (lv_m1 / c1) / (std::sqrt(lv_m2 / c2) + adam_eps);
        }
      }
      // Running statistics follow the batch statistics of this step.
      std::size_t si = 0;
      for (auto& l : net.layers) {
        if (!l.batchnorm) continue;
        auto& s = *l.batchnorm;
        const Vector mean = g.value(built.stats[si].mean).transpose();
        const Vector var = g.value(built.stats[si].var).transpose();
        s.running_mean = (1.0 - s.momentum) * s.running_mean + s.momentum * mean;
        s.running_var = (1.0 - s.momentum) * s.running_var + s.momentum * var;
        ++si;
      }
      const double wgt = static_cast<double>(hi - lo);
      sum.task += wgt * task;
      sum.regularizer += wgt * reg;
      sum.total += wgt * total;
    }
    const double dn = static_cast<double>(n);
    result.report.epochs.push_back(EpochLoss{sum.task / dn, sum.regularizer / dn, sum.total / dn});
  }
  set_params(net, params);
  if (obj.adaptive) result.report.log_variance = log_var;
  result.net = std::move(net);
  return result;
}

}  // namespace

Trained train_regressor(DenseNet net, const Matrix& x, const Matrix& y, const TrainConfig& cfg) {
  require(x.rows() == y.rows(), ErrorKind::ShapeMismatch, "regressor: row counts differ");
  require(y.cols() == net.output_dim(), ErrorKind::ShapeMismatch, "regressor: target width != output dim");
  require(y.allFinite(), ErrorKind::NonFiniteInput, "regressor: non-finite targets");
  Objective obj;
  obj.targets = &y;
  obj.task_weight = cfg.task_weight;
  obj.jacobian_coeff = cfg.jacobian_coeff;
  return train_impl(std::move(net), x, obj, cfg);
}

Trained train_classifier(DenseNet net, const Matrix& x, const std::vector<int>& y, const TrainConfig& cfg) {
  require(static_cast<std::size_t>(x.rows()) == y.size(), ErrorKind::ShapeMismatch, "classifier: row counts differ");
  for (int label : y) {
    require(label >= 0 && label < net.output_dim(), ErrorKind::UnknownLabel,
            "classifier: label " + std::to_string(label) + " outside output range");
  }
  Objective obj;
  obj.classify = true;
  obj.labels = &y;
  obj.task_weight = cfg.task_weight;
  obj.jacobian_coeff = cfg.jacobian_coeff;
  obj.adaptive = cfg.adaptive_task_weight;
  return train_impl(std::move(net), x, obj, cfg);
}

double jacobian_norm(const DenseNet& net, const Matrix& batch) {
  net.check();
  require_input(net, batch);
  if (batch.rows() == 0) return 0.0;
  Graph g;
  std::vector<Var> pv;
  for (const auto& p : get_params(net)) pv.push_back(g.constant(p));
  const Var x = g.leaf(batch, true);
  std::vector<BnStats> stats;
  const Var out = tape_forward(g, net, pv, x, BnMode::running, stats);
  return g.value(tape_jacobian(g, out, x))(0, 0);
}

double grad_check(const DenseNet& net, LossKind loss, const GradCheckBatch& batch) {
  Objective obj;
  obj.classify = loss == LossKind::ce || loss == LossKind::ce_jacobian;
  obj.targets = &batch.targets;
  obj.labels = &batch.labels;
  obj.jacobian_coeff = (loss == LossKind::mse_jacobian || loss == LossKind::ce_jacobian) ? batch.jacobian_coeff : 0.0;

  const std::vector<Matrix> base = get_params(net);
  auto loss_at = [&](const std::vector<Matrix>& params) {
    Graph g;
    std::vector<Var> pv;
    for (const auto& p : params) pv.push_back(g.leaf(p, false));
    return g.value(build_loss(g, net, pv, batch.x, obj, g.constant(Matrix::Zero(1, 1))).total)(0, 0);
  };

  Graph g;
  std::vector<Var> pv;
  for (const auto& p : base) pv.push_back(g.leaf(p, true));
  const Built built = build_loss(g, net, pv, batch.x, obj, g.constant(Matrix::Zero(1, 1)));
  const auto grads = g.gradients(built.total, pv);

  double worst = 0.0;
  std::vector<Matrix> probe = base;
  for (std::size_t k = 0; k < base.size(); ++k) {
    const Matrix& analytic = g.value(grads[k]);
    for (Eigen::Index i = 0; i < base[k].size(); ++i) {
      probe[k].data()[i] = base[k].data()[i] + batch.step;
      const double up = loss_at(probe);
      probe[k].data()[i] = base[k].data()[i] - batch.step;
      const double down = loss_at(probe);
      probe[k].data()[i] = base[k].data()[i];
      const double numeric = (up - down) / (2.0 * batch.step);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace hetfuse

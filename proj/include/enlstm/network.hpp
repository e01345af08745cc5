#pragma once

// LSTM + fully-connected stack evaluated from one flat parameter vector.
//
// Parameter layout (offsets are contiguous, in layer order):
//
//   lstm(in, H)   for gate in (i, f, g, o):
//                   W_input     H x in   row-major
//                   W_recurrent H x H    row-major
//                   bias        H
//   dense(in, n)  W n x in row-major, then bias n
//   batchnorm(n)  gamma n, then beta n
//   dropout       no parameters
//
// Batch-norm running statistics are not parameters; they live in NetworkAux.
//
// Activations flow through the stack as a (width x steps*batch) matrix whose
// column t*batch + b holds time step t of sequence b.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "enlstm/error.hpp"
#include "enlstm/linalg.hpp"
#include "enlstm/rng.hpp"

namespace enlstm {

enum class Activation { tanh, linear };

struct LstmLayer {
  std::size_t hidden = 0;
  friend bool operator==(const LstmLayer&, const LstmLayer&) = default;
};
struct DenseLayer {
  std::size_t out = 0;
  Activation activation = Activation::linear;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};
struct BatchNormLayer {
  std::size_t dim = 0;
  friend bool operator==(const BatchNormLayer&, const BatchNormLayer&) = default;
};
struct DropoutLayer {
  double rate = 0.0;
  friend bool operator==(const DropoutLayer&, const DropoutLayer&) = default;
};

using LayerSpec = std::variant<LstmLayer, DenseLayer, BatchNormLayer, DropoutLayer>;

inline std::string layer_kind(const LayerSpec& layer) {
  static constexpr const char* names[] = {"lstm", "dense", "batchnorm", "dropout"};
  return names[layer.index()];
}

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

  // Input width of every layer followed by the stack's output width.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim};
    for (const auto& layer : layers) {
      const std::size_t in = w.back();
      w.push_back(std::visit(
          [in](const auto& l) -> std::size_t {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, LstmLayer>) return l.hidden;
            else if constexpr (std::is_same_v<T, DenseLayer>) return l.out;
            else return in;
          },
          layer));
    }
    return w;
  }

  void validate() const {
    detail::require(input_dim >= 1, "network: input_dim must be >= 1");
    detail::require(!layers.empty(), "network: at least one layer required");
    std::size_t in = input_dim;
    std::optional<std::size_t> last_trainable;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const std::string where = "network: layer " + std::to_string(k) + " (" + layer_kind(layers[k]) + ")";
      std::visit(
          [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, LstmLayer>) {
              detail::require(l.hidden >= 1, where + ": hidden must be >= 1");
              in = l.hidden;
              last_trainable = in;
            } else if constexpr (std::is_same_v<T, DenseLayer>) {
              detail::require(l.out >= 1, where + ": out must be >= 1");
              in = l.out;
              last_trainable = in;
            } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
              detail::require(l.dim == in, where + ": dim " + std::to_string(l.dim) +
                                               " does not match incoming width " + std::to_string(in));
              last_trainable = in;
            } else {
              detail::require(l.rate >= 0.0 && l.rate < 1.0, where + ": rate must lie in [0, 1)");
            }
          },
          layers[k]);
    }
    detail::require(last_trainable.has_value(), "network: no trainable layer");
    detail::require(*last_trainable == output_dim, "network: output_dim " + std::to_string(output_dim) +
                                                       " does not match last layer width " +
                                                       std::to_string(*last_trainable));
  }
};

// Names the first field in which two specs differ, or returns an empty string.
inline std::string spec_difference(const NetworkSpec& a, const NetworkSpec& b) {
  if (a.input_dim != b.input_dim) return "input_dim";
  if (a.output_dim != b.output_dim) return "output_dim";
  if (a.layers.size() != b.layers.size()) return "layers.size";
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    const std::string prefix = "layers[" + std::to_string(k) + "]";
    if (a.layers[k].index() != b.layers[k].index()) return prefix + ".kind";
    if (!(a.layers[k] == b.layers[k])) {
      return std::visit(
          [&](const auto& l) -> std::string {
            using T = std::decay_t<decltype(l)>;
            const auto& r = std::get<T>(b.layers[k]);
            if constexpr (std::is_same_v<T, LstmLayer>) return prefix + ".hidden";
            else if constexpr (std::is_same_v<T, DenseLayer>) return prefix + (l.out != r.out ? ".out" : ".activation");
            else if constexpr (std::is_same_v<T, BatchNormLayer>) return prefix + ".dim";
            else return prefix + ".rate";
          },
          a.layers[k]);
    }
  }
  return {};
}

// Layer-size knobs from which a NetworkSpec is instantiated for any in/out width.
// Stack: lstm(H) -> [dropout] -> [dense(D, tanh) -> [batchnorm(D)]] -> dense(out, linear).
struct NetworkTemplate {
  std::size_t lstm_hidden = 30;
  std::size_t dense_hidden = 15;
  bool batchnorm = true;
  double dropout = 0.3;

  friend bool operator==(const NetworkTemplate&, const NetworkTemplate&) = default;

  NetworkSpec instantiate(std::size_t input_dim, std::size_t output_dim) const {
    NetworkSpec spec;
    spec.input_dim = input_dim;
    spec.output_dim = output_dim;
    spec.layers.push_back(LstmLayer{lstm_hidden});
    if (dropout > 0.0) spec.layers.push_back(DropoutLayer{dropout});
    if (dense_hidden > 0) {
      spec.layers.push_back(DenseLayer{dense_hidden, Activation::tanh});
      if (batchnorm) spec.layers.push_back(BatchNormLayer{dense_hidden});
    }
    spec.layers.push_back(DenseLayer{output_dim, Activation::linear});
    spec.validate();
    return spec;
  }
};

// ---------------------------------------------------------------------------
// Layout

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

struct LayerLayout {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t size = 0;
  std::vector<ParamBlock> blocks;
};

inline constexpr const char* kGateNames[4] = {"i", "f", "g", "o"};

inline std::vector<LayerLayout> layout(const NetworkSpec& spec) {
  spec.validate();
  const auto widths = spec.widths();
  std::vector<LayerLayout> out;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    LayerLayout ll;
    ll.layer = k;
    ll.offset = offset;
    const std::size_t in = widths[k];
    auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
      ll.blocks.push_back(ParamBlock{std::move(name), offset, rows, cols});
      offset += rows * cols;
    };
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, LstmLayer>) {
            for (const char* gate : kGateNames) {
              add(std::string(gate) + ".W_input", l.hidden, in);
              add(std::string(gate) + ".W_recurrent", l.hidden, l.hidden);
              add(std::string(gate) + ".bias", l.hidden, 1);
            }
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            add("W", l.out, in);
            add("bias", l.out, 1);
          } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
            add("gamma", l.dim, 1);
            add("beta", l.dim, 1);
          }
        },
        spec.layers[k]);
    ll.size = offset - ll.offset;
    out.push_back(std::move(ll));
  }
  return out;
}

inline std::size_t param_count(const NetworkSpec& spec) {
  const auto ll = layout(spec);
  return ll.back().offset + ll.back().size;
}

// ---------------------------------------------------------------------------
// Auxiliary (non-trainable) state

struct RunningStats {
  Vector mean;
  Vector var;
};

// Batch-norm running statistics, one entry per batchnorm layer in stack order.
struct NetworkAux {
  std::vector<RunningStats> batchnorm;

  static NetworkAux initial(const NetworkSpec& spec) {
    NetworkAux aux;
    for (const auto& layer : spec.layers) {
      if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
        aux.batchnorm.push_back(RunningStats{Vector::Zero(bn->dim), Vector::Ones(bn->dim)});
      }
    }
    return aux;
  }

  // Exponential moving average: running <- momentum * running + (1 - momentum) * batch.
  void absorb(const std::vector<RunningStats>& batch, double momentum = 0.9) {
    detail::require(batch.size() == batchnorm.size(), "aux: batch statistics count mismatch");
    for (std::size_t k = 0; k < batch.size(); ++k) {
      batchnorm[k].mean = momentum * batchnorm[k].mean + (1.0 - momentum) * batch[k].mean;
      batchnorm[k].var = momentum * batchnorm[k].var + (1.0 - momentum) * batch[k].var;
    }
  }

  friend bool operator==(const NetworkAux& a, const NetworkAux& b) {
    if (a.batchnorm.size() != b.batchnorm.size()) return false;
    for (std::size_t k = 0; k < a.batchnorm.size(); ++k) {
      if (a.batchnorm[k].mean != b.batchnorm[k].mean || a.batchnorm[k].var != b.batchnorm[k].var) return false;
    }
    return true;
  }
};

// ---------------------------------------------------------------------------
// Forward evaluation

// A batch of equal-length sequences: values is (dim x steps*batch), column
// t*batch + b holding step t of sequence b.
struct SequenceBatch {
  std::size_t steps = 0;
  std::size_t batch = 0;
  Matrix values;

  SequenceBatch() = default;
  SequenceBatch(std::size_t steps_, std::size_t batch_, std::size_t dim)
      : steps(steps_), batch(batch_), values(Matrix::Zero(dim, steps_ * batch_)) {}

  std::size_t dim() const { return static_cast<std::size_t>(values.rows()); }
  double& at(std::size_t t, std::size_t b, std::size_t d) { return values(d, t * batch + b); }
  double at(std::size_t t, std::size_t b, std::size_t d) const { return values(d, t * batch + b); }

  // Wraps one T x dim sequence.
  static SequenceBatch from_sequence(const Matrix& x) {
    SequenceBatch s;
    s.steps = static_cast<std::size_t>(x.rows());
    s.batch = 1;
    s.values = x.transpose();
    return s;
  }
  // Sequence b as a T x dim matrix.
  Matrix sequence(std::size_t b) const {
    Matrix out(steps, dim());
    for (std::size_t t = 0; t < steps; ++t) out.row(t) = values.col(t * batch + b).transpose();
    return out;
  }
};

enum class Mode { train, infer };

// Keep/scale multipliers for every dropout layer, indexed like the layers.
struct DropoutMasks {
  std::vector<Matrix> per_layer;  // empty matrix for non-dropout layers
};

inline DropoutMasks make_dropout_masks(const NetworkSpec& spec, std::size_t steps, std::size_t batch,
                                       std::uint64_t seed) {
  const auto widths = spec.widths();
  DropoutMasks masks;
  masks.per_layer.resize(spec.layers.size());
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const auto* d = std::get_if<DropoutLayer>(&spec.layers[k]);
    if (d == nullptr || d->rate <= 0.0) continue;
    Engine eng = make_engine(seed, {k});
    const double keep = 1.0 - d->rate;
    const double scale = 1.0 / keep;
    Matrix m(widths[k], steps * batch);
    double* p = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
      p[i] = u < keep ? scale : 0.0;
    }
    masks.per_layer[k] = std::move(m);
  }
  return masks;
}

struct ForwardContext {
  Mode mode = Mode::infer;
  std::uint64_t dropout_seed = 0;
  // Optional precomputed masks for `dropout_seed`; generated on the fly when null.
  const DropoutMasks* masks = nullptr;
  // Running statistics read in infer mode. Required when the stack has batchnorm.
  const NetworkAux* aux = nullptr;
  // Train mode: receives the batch statistics of every batchnorm layer.
  std::vector<RunningStats>* batch_stats = nullptr;
};

inline constexpr double kBatchNormEps = 1e-5;

inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

namespace detail {

template <typename Derived>
inline auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 / (1.0 + (-x).exp());
}

// 1 - 2/(exp(2x)+1): vectorizes through exp and stays inside [-1, 1].
template <typename Derived>
inline auto fast_tanh(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

inline Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> block_view(
    std::span<const double> params, const ParamBlock& b) {
  return {params.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

inline Eigen::Map<const Vector> vec_view(std::span<const double> params, const ParamBlock& b) {
  return {params.data() + b.offset, static_cast<Eigen::Index>(b.size())};
}

inline Matrix lstm_forward(const Matrix& x, std::size_t steps, std::size_t batch, std::size_t hidden,
                           std::span<const double> params, const LayerLayout& ll) {
  const auto in = static_cast<Eigen::Index>(x.rows());
  const auto H = static_cast<Eigen::Index>(hidden);
  Matrix w_in(4 * H, in);
  Matrix w_rec(4 * H, H);
  Vector bias(4 * H);
  for (Eigen::Index g = 0; g < 4; ++g) {
    w_in.middleRows(g * H, H) = block_view(params, ll.blocks[3 * g]);
    w_rec.middleRows(g * H, H) = block_view(params, ll.blocks[3 * g + 1]);
    bias.segment(g * H, H) = vec_view(params, ll.blocks[3 * g + 2]);
  }
  Matrix pre = w_in * x;
  pre.colwise() += bias;

  const auto B = static_cast<Eigen::Index>(batch);
  Matrix h = Matrix::Zero(H, B);
  Matrix c = Matrix::Zero(H, B);
  Matrix gates(4 * H, B);
  Matrix out(H, static_cast<Eigen::Index>(steps) * B);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto col = static_cast<Eigen::Index>(t) * B;
    gates.noalias() = w_rec * h;
    gates += pre.middleCols(col, B);
    // rows: [i; f] sigmoid, g tanh, o sigmoid
    gates.topRows(2 * H).array() = sigmoid(gates.topRows(2 * H).array());
    gates.middleRows(2 * H, H).array() = fast_tanh(gates.middleRows(2 * H, H).array());
    gates.bottomRows(H).array() = sigmoid(gates.bottomRows(H).array());
    c.array() = gates.middleRows(H, H).array() * c.array() +
                gates.topRows(H).array() * gates.middleRows(2 * H, H).array();
    h.array() = gates.bottomRows(H).array() * fast_tanh(c.array());
    out.middleCols(col, B) = h;
  }
  return out;
}

}  // namespace detail

// Evaluates the stack on a batch of sequences. Dense and batchnorm layers act
// per time step; the LSTM starts every sequence from h = c = 0.
inline SequenceBatch forward(const NetworkSpec& spec, std::span<const double> params, const SequenceBatch& x,
                             const ForwardContext& ctx = {}) {
  const auto lay = layout(spec);
  const std::size_t n_params = lay.back().offset + lay.back().size;
  detail::require(params.size() == n_params, "forward: parameter vector has length " + std::to_string(params.size()) +
                                                 ", spec requires " + std::to_string(n_params));
  detail::require(x.dim() == spec.input_dim, "forward: input width " + std::to_string(x.dim()) +
                                                 " does not match spec input_dim " + std::to_string(spec.input_dim));
  detail::require(x.steps >= 1 && x.batch >= 1, "forward: empty sequence batch");
  detail::require(static_cast<std::size_t>(x.values.cols()) == x.steps * x.batch, "forward: malformed sequence batch");
  if (!x.values.allFinite()) throw InvalidArgument("forward: non-finite input");

  std::optional<DropoutMasks> local_masks;
  const DropoutMasks* masks = ctx.masks;
  if (ctx.mode == Mode::train && masks == nullptr) {
    local_masks = make_dropout_masks(spec, x.steps, x.batch, ctx.dropout_seed);
    masks = &*local_masks;
  }
  if (ctx.batch_stats != nullptr) ctx.batch_stats->clear();

  Matrix act = x.values;
  std::size_t bn_index = 0;
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const LayerLayout& ll = lay[k];
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, LstmLayer>) {
            act = detail::lstm_forward(act, x.steps, x.batch, l.hidden, params, ll);
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            Matrix y = detail::block_view(params, ll.blocks[0]) * act;
            y.colwise() += detail::vec_view(params, ll.blocks[1]);
            if (l.activation == Activation::tanh) y.array() = detail::fast_tanh(y.array());
            act = std::move(y);
          } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
            Vector mean;
            Vector var;
            if (ctx.mode == Mode::train) {
              mean = act.rowwise().mean();
              var = (act.colwise() - mean).array().square().rowwise().mean();
              if (ctx.batch_stats != nullptr) ctx.batch_stats->push_back(RunningStats{mean, var});
            } else {
              detail::require(ctx.aux != nullptr && bn_index < ctx.aux->batchnorm.size(),
                              "forward: infer mode needs batchnorm running statistics");
              mean = ctx.aux->batchnorm[bn_index].mean;
              var = ctx.aux->batchnorm[bn_index].var;
            }
            const Vector inv_std = (var.array() + kBatchNormEps).rsqrt();
            const auto gamma = detail::vec_view(params, ll.blocks[0]);
            const auto beta = detail::vec_view(params, ll.blocks[1]);
            const Vector scale = gamma.cwiseProduct(inv_std);
            const Vector shift = beta - scale.cwiseProduct(mean);
            act = (scale.asDiagonal() * act).colwise() + shift;
            ++bn_index;
          } else {
            if (ctx.mode == Mode::train && l.rate > 0.0) act.array() *= masks->per_layer[k].array();
          }
        },
        spec.layers[k]);
    if (!act.allFinite()) throw NumericalError("numerical blow-up at layer " + std::to_string(k));
  }
  SequenceBatch out;
  out.steps = x.steps;
  out.batch = x.batch;
  out.values = std::move(act);
  return out;
}

// Single-sequence convenience: x is T x input_dim, result is T x output_dim.
inline Matrix forward(const NetworkSpec& spec, std::span<const double> params, const Matrix& x,
                      const ForwardContext& ctx = {}) {
  return forward(spec, params, SequenceBatch::from_sequence(x), ctx).values.transpose();
}

// Train-mode evaluation that also folds the batch statistics into `aux`.
inline SequenceBatch forward_train(const NetworkSpec& spec, std::span<const double> params, const SequenceBatch& x,
                                   std::uint64_t dropout_seed, NetworkAux& aux, double momentum = 0.9) {
  std::vector<RunningStats> stats;
  ForwardContext ctx;
  ctx.mode = Mode::train;
  ctx.dropout_seed = dropout_seed;
  ctx.batch_stats = &stats;
  SequenceBatch out = forward(spec, params, x, ctx);
  aux.absorb(stats, momentum);
  return out;
}

}  // namespace enlstm

#pragma once

// Define-by-run reverse-mode differentiation over dense fp64 tensors.
//
// A Tape is rebuilt for every training step. Operations append nodes in
// topological order; backward() walks them once in reverse insertion order.
// Parameter tensors enter the tape as external leaves, so their gradients
// accumulate directly into Tensor::grad() of the owning parameter. Callers
// zero those gradients before each step.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scp/tensor.hpp"

namespace scp::ag {

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  // Value of a single-element tensor.
  double item() const;
};

class Tape {
 public:
  // Receives the node's own output value and its accumulated gradient.
  using BackwardFn =
      std::function<void(Tape&, const Tensor& out, std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // External leaf; gradients accumulate into `t.grad()` when requires_grad.
  Var leaf(Tensor& t, bool requires_grad = true);
  // Owned leaf that never receives gradients.
  Var constant(Tensor t);
  // Owned leaf that receives gradients (read back with grad_of()).
  Var input(Tensor t);

  // Appends an operation node. `backward` is dropped when no input needs a gradient.
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and runs every reachable backward rule once.
  void backward(Var loss);

  const Tensor& value(std::uint32_t id) const { return *nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  // Gradient accumulator of a node; marks the node as reached by backward.
  std::span<double> grad(std::uint32_t id);
  std::span<const double> grad_of(Var v) const { return nodes_[v.id].value->grad(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor* value = nullptr;
    std::unique_ptr<Tensor> owned;
    bool requires_grad = false;
    bool reached = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---- matrix ops -----------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// x[m x n] + bias broadcast over rows (bias holds n entries).
Var add_bias(Var x, Var bias);

Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(Var table, std::span<const std::size_t> ids);
Var reshape(Var x, Shape shape);

// Sum of all entries as a [1] tensor.
Var sum(Var x);

// Row-wise softmax / log-softmax with max subtraction.
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);

// sum_r weight[r] * ( -sum_j target[r,j] * log softmax(logits[r])_j ).
// Rows with nonzero weight must hold a probability vector (|sum - 1| <= 1e-6).
// log-probabilities are floored at log(1e-12).
Var cross_entropy_rows(Var logits, Var target, std::span<const double> weights);

// Single-vector convenience form.
Var cross_entropy(Var logits, std::span<const double> target);

// ---- sequence-model ops ---------------------------------------------------

// GRU update from precomputed gate pre-activations gx = x Wx + bx and
// gh = h Wh + bh, both [B x 3H] laid out as (reset, update, candidate):
//   r = sig(gx_r + gh_r), z = sig(gx_z + gh_z), n = tanh(gx_n + r * gh_n)
//   h' = (1 - z) * n + z * h
Var gru_gates(Var gx, Var gh, Var h);

// keep[r] ? fresh[r] : held[r], used to freeze finished rows of a batch.
Var blend_rows(Var fresh, Var held, std::span<const std::uint8_t> keep);

// score[b, j] = w . tanh(keys[b*len + j] + query[b]) for additive attention.
Var additive_scores(Var keys, Var query, Var w, std::size_t len);

// Row softmax over entries with mask != 0; masked entries become exactly 0.
Var masked_softmax_rows(Var x, std::span<const std::uint8_t> mask);

// out[b] = sum_j weights[b, j] * states[b*len + j]
Var attend(Var weights, Var states);

// Interleaves per-step [B x H] tensors into [B*T x H] with row b*T + t.
Var stack_time(const std::vector<Var>& steps);

// Sliding windows of `width` rows per sequence: [B*len x E] -> [B*(len-width+1) x width*E].
Var unfold_windows(Var x, std::size_t batch, std::size_t len, std::size_t width);

// Column-wise max over the valid rows of each group of `group` consecutive rows.
Var masked_max_groups(Var x, std::span<const std::uint8_t> valid, std::size_t group);

struct CosineTerm {
  std::size_t row;
  std::vector<double> target;
  double weight;
};

// sum_t weight_t * (1 - cosine(target_t, emb[row_t])).
Var cosine_distance_sum(Var emb, const std::vector<CosineTerm>& terms);

}  // namespace scp::ag

#pragma once

// Minimal reverse-mode automatic differentiation over relcat::Matrix.
//
// A Tape records every operation applied to its Vars. Calling backward() on a
// scalar Var walks the recording in reverse and accumulates gradients into the
// Parameters that were bound with Tape::param(). A Tape constructed with
// record_gradients=false computes values only.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "relcat/tensor.hpp"

namespace relcat::ag {

// Trainable tensor with Adam state.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  void zero_grad();
};

class Tape;

class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // The Var aliases the parameter's value; the parameter must outlive the tape.
  Var param(Parameter& p);

  // Seeds d(loss)/d(loss) = 1 and propagates to every bound Parameter.
  void backward(Var loss);

  bool recording() const { return recording_; }
  const Matrix& value(int id) const;
  Matrix& grad(int id);
  bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  // Appends a result node. `backward` runs only when some input needs gradients.
  Var push(Matrix value, bool needs_grad, std::function<void()> backward);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    std::function<void()> backward;
    bool needs_grad = false;
  };
  bool recording_;
  std::deque<Node> nodes_;
};

// ---- elementwise and linear algebra -------------------------------------
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_bias(Var x, Var bias);          // bias is 1 x cols, broadcast over rows
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var scale_by(Var x, Var s);             // s is 1 x 1
Var exp(Var x);
Var square(Var x);
Var relu(Var x);
Var gelu(Var x);
Var leaky_relu(Var x, double slope);
Var sum_all(Var x);
Var mean_all(Var x);

// ---- row-wise --------------------------------------------------------------
Var layer_norm(Var x, double eps = 1e-5);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Rows with norm <= min_norm are divided by min_norm instead; with the
// default of 0 a zero-norm row throws std::domain_error.
Var l2_normalize_rows(Var x, double min_norm = 0.0);
Var rowwise_dot(Var a, Var b);           // n x 1
Var mul_col(Var x, Var w);               // x (n x d) scaled per row by w (n x 1)
// Softmax along each row over entries with mask == 1; fully masked rows yield 0.
Var masked_softmax_rows(Var scores, std::span<const std::uint8_t> mask);

// ---- shape ---------------------------------------------------------------
Var concat_cols(std::span<const Var> parts);
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var gather_rows(Var x, std::span<const int> rows);

// ---- graph aggregation ---------------------------------------------------
// out[d] = mean over edges e with dst[e] == d of x[src[e]], summed in edge order.
// Rows with no incoming edge are zero.
Var edge_mean(Var x, std::span<const int> src, std::span<const int> dst, std::size_t num_dst);

// GATv2: e = a . LeakyReLU(src_proj[s] + dst_proj[d]); alpha = softmax of e over
// each destination's edges; out[d] = sum alpha * msg[s]. When `attention` is
// non-null it receives one weight per edge.
Var edge_gatv2(Var src_proj, Var dst_proj, Var msg, Var att, std::span<const int> src,
               std::span<const int> dst, std::size_t num_dst, double slope,
               std::vector<double>* attention = nullptr);

// ---- sequence ops ---------------------------------------------------------
// qkv is (batch*seq_len) x (3*hidden) laid out as [Q | K | V]; keys at
// positions >= lengths[b] are masked. Returns (batch*seq_len) x hidden.
Var multi_head_attention(Var qkv, std::size_t batch, std::size_t seq_len, std::size_t heads,
                         std::span<const int> lengths);
// Mean over the first lengths[b] positions of each sequence: batch x hidden.
Var masked_mean_pool(Var x, std::size_t batch, std::size_t seq_len, std::span<const int> lengths);

// ---- losses --------------------------------------------------------------
// For a square similarity matrix S: mean_i -(log softmax_row(S)_ii + log softmax_col(S)_ii).
Var symmetric_diagonal_cross_entropy(Var sims);

// ---- optimization -------------------------------------------------------
struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // Keeps parameters exactly representable in the 32-bit weight file format.
  bool round_to_float32 = true;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}
  void step(std::span<Parameter* const> params, double learning_rate);
  long steps() const { return step_; }

 private:
  AdamOptions options_;
  long step_ = 0;
};

void round_to_float32(Matrix& m);

}  // namespace relcat::ag

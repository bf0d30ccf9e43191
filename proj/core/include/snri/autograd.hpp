// SPDX-License-Identifier: Apache-2.0
/**
 * @file   autograd.hpp
 * @brief  Reverse-mode differentiation tape and the op set the model needs.
 *
 * A Tape owns every intermediate value of one forward pass. Ops append a node
 * holding the output and a closure that maps the output gradient onto the
 * input gradients; backward() walks the nodes once in reverse order.
 *
 * Leaves created with Tape::parameter() reference an external tensor instead
 * of copying it, so a forward pass over shared read-only parameters is cheap.
 * A tape is single-threaded; independent tapes may share parameters.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snri/tensor.hpp"

namespace snri {

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatmul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kAddRow,
  kMulCol,
  kAffine,
  kSigmoid,
  kTanh,
  kRelu,
  kLog,
  kLogSigmoid,
  kSoftmax,
  kSegmentSoftmax,
  kSum,
  kMeanRows,
  kConcatCols,
  kConcatRows,
  kGatherRows,
  kIndexAddRows,
  kRelationMatmul,
  kReshape,
  kDropout,
};

std::string_view op_name(OpKind kind);

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

using GradientMap = std::map<std::string, Tensor>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant input; never receives a gradient.
  Var constant(Tensor value);
  /// Owned leaf that receives a gradient (tests, optimisation of inputs).
  Var variable(Tensor value, std::string name = {});
  /// Leaf referencing an external tensor that must outlive the tape.
  Var parameter(const Tensor& value, std::string name);

  /// Runs the reverse sweep from a 1 x 1 loss. Gradients of every named leaf
  /// are returned; gradients of all nodes stay readable through grad().
  GradientMap backward(Var loss);

  /// Gradient of a node after backward(); zero tensor when unreachable.
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  struct BackwardContext;
  using BackwardFn = std::function<void(BackwardContext&)>;

  /// Appends an op node. The output is checked for non-finite values.
  Var record(OpKind kind, std::vector<std::uint32_t> inputs, Tensor output,
             BackwardFn backward);

  struct BackwardContext {
    const Tape& tape;
    const std::vector<std::uint32_t>& inputs;
    const Tensor& output;
    const Tensor& grad_output;
    std::vector<Tensor>& grads;

    const Tensor& input(std::size_t i) const { return tape.value(inputs[i]); }
    /// Gradient accumulator of input i, or nullptr when it needs none.
    Tensor* grad_input(std::size_t i) const;
  };

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<std::uint32_t> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    std::string name;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

/// Differentiable ops. Shape errors throw snri::Error naming op and shapes.
namespace ops {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (n x c) + b (1 x c) broadcast over rows.
Var add_row(Var a, Var b);
/// a (n x c) scaled row-wise by s (n x 1).
Var mul_col(Var a, Var s);
/// alpha * a + beta, elementwise.
Var affine(Var a, double alpha, double beta = 0.0);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var log(Var a);
/// log(sigmoid(a)) evaluated without overflow.
Var log_sigmoid(Var a);
/// Softmax over all entries of a vector-shaped tensor.
Var softmax(Var a);
/// Softmax of an (n x 1) column within each segment [offsets[i], offsets[i+1]).
Var segment_softmax(Var a, std::vector<std::size_t> offsets);
/// Sum of all entries, 1 x 1.
Var sum(Var a);
/// Column means, 1 x c.
Var mean_rows(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::vector<std::uint32_t> index);
/// out (rows x c) with out[index[i]] += a[i].
Var index_add_rows(Var a, std::vector<std::uint32_t> index, std::size_t rows);
/// out[e] = x[e] * W[rel[e]] where w is (T x din*dout), each row a row-major
/// din x dout matrix.
Var relation_matmul(Var x, Var w, std::vector<std::uint32_t> rel, std::size_t dout);
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// Inverted dropout: kept entries scaled by 1/(1-p). p == 0 is the identity.
Var dropout(Var a, double p, std::mt19937_64& rng);

}  // namespace ops
}  // namespace snri

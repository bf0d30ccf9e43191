// SPDX-License-Identifier: Apache-2.0
#include "snri/autograd.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <fmt/format.h>

namespace snri {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC as_mat(const Tensor& t) {
  return MapC(t.data().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}
Map as_mat(Tensor& t) {
  return Map(t.data().data(), static_cast<Eigen::Index>(t.rows()),
             static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_error(OpKind kind, const Tensor& a, const Tensor& b) {
  throw Error(fmt::format("{}: incompatible shapes {} and {}", op_name(kind),
                          a.shape_str(), b.shape_str()));
}

[[noreturn]] void shape_error(OpKind kind, const Tensor& a, std::string_view what) {
  throw Error(fmt::format("{}: input {} {}", op_name(kind), a.shape_str(), what));
}

Tape& tape_of(Var a) { return a.tape(); }

void check_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw Error("ops on vars from different tapes");
}

void check_same_shape(OpKind kind, Var a, Var b) {
  check_same_tape(a, b);
  if (!a.value().same_shape(b.value())) shape_error(kind, a.value(), b.value());
}

bool is_vector(const Tensor& t) { return t.rows() == 1 || t.cols() == 1; }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
Tensor map_values(const Tensor& a, F f) {
  Tensor out({a.rows(), a.cols()});
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

void axpy(Tensor& dst, const Tensor& src, double alpha = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * s[i];
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kMulCol: return "mul_col";
    case OpKind::kAffine: return "affine";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kLog: return "log";
    case OpKind::kLogSigmoid: return "log_sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kSegmentSoftmax: return "segment_softmax";
    case OpKind::kSum: return "sum";
    case OpKind::kMeanRows: return "mean_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kIndexAddRows: return "index_add_rows";
    case OpKind::kRelationMatmul: return "relation_matmul";
    case OpKind::kReshape: return "reshape";
    case OpKind::kDropout: return "dropout";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor& Tape::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::variable(Tensor value, std::string name) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(const Tensor& value, std::string name) {
  Node n;
  n.external = &value;
  n.requires_grad = true;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(OpKind kind, std::vector<std::uint32_t> inputs, Tensor output,
                 BackwardFn backward) {
  if (!output.all_finite()) {
    throw Error(fmt::format("{}: produced a non-finite value (output {})",
                            op_name(kind), output.shape_str()));
  }
  Node n;
  n.kind = kind;
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::uint32_t i) {
    return nodes_[i].requires_grad;
  });
  n.inputs = std::move(inputs);
  n.owned = std::move(output);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor* Tape::BackwardContext::grad_input(std::size_t i) const {
  const std::uint32_t id = inputs[i];
  if (!tape.requires_grad(id)) return nullptr;
  Tensor& g = grads[id];
  if (g.empty()) {
    const Tensor& v = tape.value(id);
    g = Tensor(v.shape());
  }
  return &g;
}

GradientMap Tape::backward(Var loss) {
  if (&loss.tape() != this) throw Error("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw Error(fmt::format("backward: loss must be scalar, got {}",
                            loss.value().shape_str()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id()] = Tensor(loss.value().shape(), 1.0);

  for (std::int64_t id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.kind == OpKind::kLeaf) continue;
    const Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) continue;
    BackwardContext ctx{*this, n.inputs, value(static_cast<std::uint32_t>(id)), g, grads_};
    n.backward(ctx);
    for (std::uint32_t in : n.inputs) {
      if (!grads_[in].empty() && !grads_[in].all_finite()) {
        throw Error(fmt::format("backward: non-finite gradient produced by {}",
                                op_name(n.kind)));
      }
    }
  }

  GradientMap out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.kind != OpKind::kLeaf || !n.requires_grad || n.name.empty()) continue;
    Tensor& slot = out[n.name];
    if (slot.empty()) slot = Tensor(value(static_cast<std::uint32_t>(id)).shape());
    if (!grads_[id].empty()) axpy(slot, grads_[id]);
  }
  return out;
}

Tensor Tape::grad(Var v) const {
  if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
  return Tensor(v.value().shape());
}

// ---------------------------------------------------------------------------
// ops

namespace ops {

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) shape_error(OpKind::kMatmul, A, B);
  Tensor out = Tensor::zeros(A.rows(), B.cols());
  as_mat(out).noalias() = as_mat(A) * as_mat(B);
  return tape_of(a).record(OpKind::kMatmul, {a.id(), b.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    auto G = as_mat(c.grad_output);
    if (Tensor* ga = c.grad_input(0)) as_mat(*ga).noalias() += G * as_mat(c.input(1)).transpose();
    if (Tensor* gb = c.grad_input(1)) as_mat(*gb).noalias() += as_mat(c.input(0)).transpose() * G;
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  Tensor out = Tensor::zeros(A.cols(), A.rows());
  as_mat(out) = as_mat(A).transpose();
  return tape_of(a).record(OpKind::kTranspose, {a.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) as_mat(*ga) += as_mat(c.grad_output).transpose();
  });
}

Var add(Var a, Var b) {
  check_same_shape(OpKind::kAdd, a, b);
  Tensor out = a.value();
  axpy(out, b.value());
  return tape_of(a).record(OpKind::kAdd, {a.id(), b.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) axpy(*ga, c.grad_output);
    if (Tensor* gb = c.grad_input(1)) axpy(*gb, c.grad_output);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(OpKind::kSub, a, b);
  Tensor out = a.value();
  axpy(out, b.value(), -1.0);
  return tape_of(a).record(OpKind::kSub, {a.id(), b.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) axpy(*ga, c.grad_output);
    if (Tensor* gb = c.grad_input(1)) axpy(*gb, c.grad_output, -1.0);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(OpKind::kMul, a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return tape_of(a).record(OpKind::kMul, {a.id(), b.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    auto g = c.grad_output.data();
    if (Tensor* ga = c.grad_input(0)) {
      auto other = c.input(1).data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
    }
    if (Tensor* gb = c.grad_input(1)) {
      auto other = c.input(0).data();
      auto d = gb->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
    }
  });
}

Var add_row(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (B.rows() != 1 || B.cols() != A.cols()) shape_error(OpKind::kAddRow, A, B);
  Tensor out = A;
  as_mat(out).rowwise() += as_mat(B).row(0);
  return tape_of(a).record(OpKind::kAddRow, {a.id(), b.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) axpy(*ga, c.grad_output);
    if (Tensor* gb = c.grad_input(1)) as_mat(*gb).row(0) += as_mat(c.grad_output).colwise().sum();
  });
}

Var mul_col(Var a, Var s) {
  check_same_tape(a, s);
  const Tensor& A = a.value();
  const Tensor& S = s.value();
  if (S.cols() != 1 || S.rows() != A.rows()) shape_error(OpKind::kMulCol, A, S);
  Tensor out = A;
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (double& x : out.row(r)) x *= S[r];
  }
  return tape_of(a).record(OpKind::kMulCol, {a.id(), s.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    const Tensor& G = c.grad_output;
    const Tensor& A = c.input(0);
    const Tensor& S = c.input(1);
    Tensor* ga = c.grad_input(0);
    Tensor* gs = c.grad_input(1);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      auto grow = G.row(r);
      if (ga) {
        auto dst = ga->row(r);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += grow[j] * S[r];
      }
      if (gs) {
        auto arow = A.row(r);
        double acc = 0.0;
        for (std::size_t j = 0; j < arow.size(); ++j) acc += grow[j] * arow[j];
        (*gs)[r] += acc;
      }
    }
  });
}

Var affine(Var a, double alpha, double beta) {
  Tensor out = map_values(a.value(), [=](double x) { return alpha * x + beta; });
  return tape_of(a).record(OpKind::kAffine, {a.id()}, std::move(out),
                           [alpha](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) axpy(*ga, c.grad_output, alpha);
  });
}

Var sigmoid(Var a) {
  Tensor out = map_values(a.value(), stable_sigmoid);
  return tape_of(a).record(OpKind::kSigmoid, {a.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      auto y = c.output.data();
      auto g = c.grad_output.data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Var tanh(Var a) {
  Tensor out = map_values(a.value(), [](double x) { return std::tanh(x); });
  return tape_of(a).record(OpKind::kTanh, {a.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      auto y = c.output.data();
      auto g = c.grad_output.data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Var relu(Var a) {
  Tensor out = map_values(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  return tape_of(a).record(OpKind::kRelu, {a.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      auto x = c.input(0).data();
      auto g = c.grad_output.data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += x[i] > 0.0 ? g[i] : 0.0;
    }
  });
}

Var log(Var a) {
  for (double x : a.value().data()) {
    if (!(x > 0.0)) throw Error(fmt::format("log: non-positive input {}", x));
  }
  Tensor out = map_values(a.value(), [](double x) { return std::log(x); });
  return tape_of(a).record(OpKind::kLog, {a.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      auto x = c.input(0).data();
      auto g = c.grad_output.data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / x[i];
    }
  });
}

Var log_sigmoid(Var a) {
  Tensor out = map_values(a.value(), [](double x) {
    // -softplus(-x)
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  });
  return tape_of(a).record(OpKind::kLogSigmoid, {a.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      auto x = c.input(0).data();
      auto g = c.grad_output.data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (1.0 - stable_sigmoid(x[i]));
    }
  });
}

namespace {

void softmax_range(std::span<const double> x, std::span<double> y) {
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (double& v : y) v /= z;
}

void softmax_backward_range(std::span<const double> y, std::span<const double> g,
                            std::span<double> d) {
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
  for (std::size_t i = 0; i < y.size(); ++i) d[i] += y[i] * (g[i] - dot);
}

}  // namespace

Var softmax(Var a) {
  const Tensor& A = a.value();
  if (!is_vector(A)) shape_error(OpKind::kSoftmax, A, "is not a vector");
  Tensor out(A.shape());
  softmax_range(A.data(), out.data());
  return tape_of(a).record(OpKind::kSoftmax, {a.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      softmax_backward_range(c.output.data(), c.grad_output.data(), ga->data());
    }
  });
}

Var segment_softmax(Var a, std::vector<std::size_t> offsets) {
  const Tensor& A = a.value();
  if (A.cols() != 1) shape_error(OpKind::kSegmentSoftmax, A, "is not a column");
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != A.rows() ||
      !std::is_sorted(offsets.begin(), offsets.end())) {
    shape_error(OpKind::kSegmentSoftmax, A, "has inconsistent segment offsets");
  }
  Tensor out(A.shape());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t lo = offsets[s], n = offsets[s + 1] - lo;
    if (n == 0) continue;
    softmax_range(A.data().subspan(lo, n), out.data().subspan(lo, n));
  }
  return tape_of(a).record(OpKind::kSegmentSoftmax, {a.id()}, std::move(out),
                           [offsets = std::move(offsets)](Tape::BackwardContext& c) {
    Tensor* ga = c.grad_input(0);
    if (!ga) return;
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const std::size_t lo = offsets[s], n = offsets[s + 1] - lo;
      if (n == 0) continue;
      softmax_backward_range(c.output.data().subspan(lo, n),
                             c.grad_output.data().subspan(lo, n),
                             ga->data().subspan(lo, n));
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  return tape_of(a).record(OpKind::kSum, {a.id()}, Tensor::scalar(total),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      const double g = c.grad_output[0];
      for (double& d : ga->data()) d += g;
    }
  });
}

Var mean_rows(Var a) {
  const Tensor& A = a.value();
  Tensor out = Tensor::zeros(1, A.cols());
  as_mat(out).row(0) = as_mat(A).colwise().mean();
  return tape_of(a).record(OpKind::kMeanRows, {a.id()}, std::move(out),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      const double inv = 1.0 / static_cast<double>(ga->rows());
      as_mat(*ga).rowwise() += inv * as_mat(c.grad_output).row(0);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.rows() != rows) shape_error(OpKind::kConcatCols, parts[0].value(), p.value());
    cols += p.cols();
    ids.push_back(p.id());
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    as_mat(out).middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(p.cols())) =
        as_mat(p.value());
    off += p.cols();
  }
  return tape_of(parts[0]).record(OpKind::kConcatCols, std::move(ids), std::move(out),
                                  [](Tape::BackwardContext& c) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
      const std::size_t w = c.input(i).cols();
      if (Tensor* gi = c.grad_input(i)) {
        as_mat(*gi) += as_mat(c.grad_output).middleCols(static_cast<Eigen::Index>(off),
                                                        static_cast<Eigen::Index>(w));
      }
      off += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.cols() != cols) shape_error(OpKind::kConcatRows, parts[0].value(), p.value());
    rows += p.rows();
    ids.push_back(p.id());
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Var& p : parts) {
    auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
  }
  return tape_of(parts[0]).record(
      OpKind::kConcatRows, std::move(ids), Tensor({rows, cols}, std::move(data)),
      [](Tape::BackwardContext& c) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < c.inputs.size(); ++i) {
          const std::size_t n = c.input(i).size();
          if (Tensor* gi = c.grad_input(i)) {
            auto g = c.grad_output.data().subspan(off, n);
            auto d = gi->data();
            for (std::size_t j = 0; j < n; ++j) d[j] += g[j];
          }
          off += n;
        }
      });
}

Var gather_rows(Var a, std::vector<std::uint32_t> index) {
  const Tensor& A = a.value();
  if (index.empty()) shape_error(OpKind::kGatherRows, A, "gathered with an empty index");
  Tensor out = Tensor::zeros(index.size(), A.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= A.rows()) shape_error(OpKind::kGatherRows, A, "indexed out of range");
    std::copy_n(A.row(index[i]).begin(), A.cols(), out.row(i).begin());
  }
  return tape_of(a).record(OpKind::kGatherRows, {a.id()}, std::move(out),
                           [index = std::move(index)](Tape::BackwardContext& c) {
    Tensor* ga = c.grad_input(0);
    if (!ga) return;
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto src = c.grad_output.row(i);
      auto dst = ga->row(index[i]);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var index_add_rows(Var a, std::vector<std::uint32_t> index, std::size_t rows) {
  const Tensor& A = a.value();
  if (index.size() != A.rows()) shape_error(OpKind::kIndexAddRows, A, "and index length differ");
  Tensor out = Tensor::zeros(rows, A.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) shape_error(OpKind::kIndexAddRows, A, "scattered out of range");
    auto src = A.row(i);
    auto dst = out.row(index[i]);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  return tape_of(a).record(OpKind::kIndexAddRows, {a.id()}, std::move(out),
                           [index = std::move(index)](Tape::BackwardContext& c) {
    Tensor* ga = c.grad_input(0);
    if (!ga) return;
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto src = c.grad_output.row(index[i]);
      auto dst = ga->row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var relation_matmul(Var x, Var w, std::vector<std::uint32_t> rel, std::size_t dout) {
  check_same_tape(x, w);
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const std::size_t din = X.cols();
  if (W.cols() != din * dout) shape_error(OpKind::kRelationMatmul, X, W);
  if (rel.size() != X.rows()) shape_error(OpKind::kRelationMatmul, X, "and relation index differ");
  for (auto r : rel) {
    if (r >= W.rows()) shape_error(OpKind::kRelationMatmul, W, "indexed out of range");
  }
  Tensor out = Tensor::zeros(X.rows(), dout);
  const auto di = static_cast<Eigen::Index>(din), dd = static_cast<Eigen::Index>(dout);
  for (std::size_t e = 0; e < rel.size(); ++e) {
    MapC We(W.row(rel[e]).data(), di, dd);
    Map(out.row(e).data(), 1, dd).noalias() = MapC(X.row(e).data(), 1, di) * We;
  }
  return tape_of(x).record(
      OpKind::kRelationMatmul, {x.id(), w.id()}, std::move(out),
      [rel = std::move(rel), din, dout](Tape::BackwardContext& c) {
        const Tensor& X = c.input(0);
        const Tensor& W = c.input(1);
        Tensor* gx = c.grad_input(0);
        Tensor* gw = c.grad_input(1);
        const auto di = static_cast<Eigen::Index>(din), dd = static_cast<Eigen::Index>(dout);
        for (std::size_t e = 0; e < rel.size(); ++e) {
          MapC g(c.grad_output.row(e).data(), 1, dd);
          if (gx) {
            Map(gx->row(e).data(), 1, di).noalias() +=
                g * MapC(W.row(rel[e]).data(), di, dd).transpose();
          }
          if (gw) {
            Map(gw->row(rel[e]).data(), di, dd).noalias() +=
                MapC(X.row(e).data(), 1, di).transpose() * g;
          }
        }
      });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Tensor& A = a.value();
  if (rows * cols != A.size()) shape_error(OpKind::kReshape, A, "cannot be reshaped");
  return tape_of(a).record(OpKind::kReshape, {a.id()}, A.reshaped({rows, cols}),
                           [](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      auto g = c.grad_output.data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Var dropout(Var a, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw Error(fmt::format("dropout: rate {} not in [0, 1)", p));
  const Tensor& A = a.value();
  Tensor mask(A.shape(), 1.0);
  if (p > 0.0) {
    std::bernoulli_distribution keep(1.0 - p);
    const double scale = 1.0 / (1.0 - p);
    for (double& m : mask.data()) m = keep(rng) ? scale : 0.0;
  }
  Tensor out = A;
  auto o = out.data();
  auto m = mask.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= m[i];
  return tape_of(a).record(OpKind::kDropout, {a.id()}, std::move(out),
                           [mask = std::move(mask)](Tape::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      auto g = c.grad_output.data();
      auto m = mask.data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * m[i];
    }
  });
}

}  // namespace ops
}  // namespace snri

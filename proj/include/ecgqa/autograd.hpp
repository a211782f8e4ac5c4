#pragma once

// Reverse-mode tape over the kernels in kernels.hpp. A Tape lives for one
// forward/backward pass; parameters are copied in by name and their
// gradients are added back into the ParamStore after backward().

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ecgqa/params.hpp"
#include "ecgqa/tensor.hpp"

namespace ecgqa {

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Copies a parameter onto the tape. Repeated lookups return the same node.
  Var param(const ParamStore& store, const std::string& name, bool trainable = true);

  /// Records an op result. `fn` is dropped when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Tensor& value(const Var& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient after backward(); zeros if the node received none.
  Tensor grad(const Var& v) const;

  /// Adds `g` into the gradient of node `v` if it requires one.
  void accumulate(const Var& v, const Tensor& g);

  /// Back-propagates from a single-element output.
  void backward(const Var& output);

  /// Adds gradients of trainable parameter nodes into `store`.
  void accumulate_param_grads(ParamStore& store) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };
  std::deque<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> param_index_;
};

namespace ops {

Var add(const Var& a, const Var& b);
Var add_constant(const Var& a, const Tensor& c);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
/// x·w + bias; pass an invalid Var for no bias.
Var linear(const Var& x, const Var& w, const Var& bias);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta);
Var group_norm(const Var& x, std::size_t groups, const Var& gamma, const Var& beta);
Var conv1d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t padding);
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, bool causal);
Var transpose(const Var& x);
Var reshape(const Var& x, Shape shape);
/// Mean over rows of an n×d matrix, giving 1×d.
Var mean_rows(const Var& x);
Var concat_rows(const Var& top, const Var& bottom);
/// Rows [begin, begin + count) of a matrix.
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
/// Row i of the result is row ids[i] of `table`.
Var gather_rows(const Var& table, std::span<const std::int64_t> ids);
/// Inverted dropout with a Bernoulli(1-p) keep mask drawn from Rng(seed).
Var dropout(const Var& x, double p, std::uint64_t seed);
/// Mean token cross-entropy as a 1-element tensor.
Var cross_entropy(const Var& logits, std::span<const std::int64_t> targets);
/// sum(x ⊙ w) as a 1-element tensor.
Var weighted_sum(const Var& x, const Tensor& w);

}  // namespace ops

}  // namespace ecgqa

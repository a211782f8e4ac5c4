#include "ecgqa/autograd.hpp"

#include <algorithm>

#include "ecgqa/errors.hpp"
#include "ecgqa/kernels.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamStore& store, const std::string& name, bool trainable) {
  for (const auto& [n, id] : param_index_) {
    if (n == name) return Var(this, id);
  }
  nodes_.push_back(Node{store.value(name), {}, trainable, {}, trainable ? name : std::string{}});
  param_index_.emplace_back(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.valid() && nodes_[in.id()].requires_grad) needs = true;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}, {}});
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  if (!v.valid()) return;
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    if (g.shape() != n.value.shape()) throw ShapeError("gradient shape mismatch on tape");
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& output) {
  if (output.value().size() != 1) throw ShapeError("backward needs a scalar output");
  Node& out = nodes_[output.id()];
  if (!out.requires_grad) return;
  out.grad = Tensor(out.value.shape(), 1.0);
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Closures only write into earlier nodes, so n.grad stays put.
    auto fn = std::move(n.backward);
    fn(*this, n.grad);
  }
}

void Tape::accumulate_param_grads(ParamStore& store) const {
  for (const auto& [name, id] : param_index_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    store.grad(name) += n.grad;
  }
}

namespace ops {

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y += b.value();
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_constant(const Var& a, const Tensor& c) {
  require_same_shape(a.value(), c, "add_constant");
  Tensor y = a.value();
  y += c;
  return a.tape().record(std::move(y), {a}, [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var scale(const Var& a, double s) {
  Tensor y = a.value();
  y *= s;
  return a.tape().record(std::move(y), {a}, [a, s](Tape& t, const Tensor& g) {
    Tensor d = g;
    d *= s;
    t.accumulate(a, d);
  });
}

Var matmul(const Var& a, const Var& b) {
  Tensor y = kernels::matmul(a.value(), b.value());
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, kernels::matmul_a_bt(g, b.value()));
    if (t.requires_grad(b)) t.accumulate(b, kernels::matmul_at_b(a.value(), g));
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  Tensor y = kernels::linear(x.value(), w.value(), bias.valid() ? bias.value() : Tensor{});
  return x.tape().record(std::move(y), {x, w, bias}, [x, w, bias](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) t.accumulate(x, kernels::matmul_a_bt(g, w.value()));
    if (t.requires_grad(w)) t.accumulate(w, kernels::matmul_at_b(x.value(), g));
    if (bias.valid() && t.requires_grad(bias)) {
      Tensor db({g.cols()});
      for (std::size_t i = 0; i < g.rows(); ++i) {
        auto r = g.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) db[j] += r[j];
      }
      t.accumulate(bias, db);
    }
  });
}

Var gelu(const Var& x) {
  return x.tape().record(kernels::gelu(x.value()), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, kernels::gelu_backward(x.value(), g));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta) {
  kernels::NormCache cache;
  Tensor y = kernels::layer_norm(x.value(), gamma.value(), beta.value(), &cache);
  return x.tape().record(std::move(y), {x, gamma, beta},
                         [x, gamma, beta, cache = std::move(cache)](Tape& t, const Tensor& g) {
                           auto grads = kernels::layer_norm_backward(x.value(), gamma.value(), cache, g);
                           t.accumulate(x, grads.dx);
                           t.accumulate(gamma, grads.dgamma);
                           t.accumulate(beta, grads.dbeta);
                         });
}

Var group_norm(const Var& x, std::size_t groups, const Var& gamma, const Var& beta) {
  kernels::NormCache cache;
  Tensor y = kernels::group_norm(x.value(), groups, gamma.value(), beta.value(), &cache);
  return x.tape().record(std::move(y), {x, gamma, beta},
                         [x, groups, gamma, beta, cache = std::move(cache)](Tape& t, const Tensor& g) {
                           auto grads = kernels::group_norm_backward(x.value(), groups, gamma.value(), cache, g);
                           t.accumulate(x, grads.dx);
                           t.accumulate(gamma, grads.dgamma);
                           t.accumulate(beta, grads.dbeta);
                         });
}

Var conv1d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t padding) {
  Tensor y = kernels::conv1d(x.value(), w.value(), bias.valid() ? bias.value() : Tensor{}, stride, padding);
  return x.tape().record(std::move(y), {x, w, bias}, [x, w, bias, stride, padding](Tape& t, const Tensor& g) {
    const bool need_dx = t.requires_grad(x);
    auto grads = kernels::conv1d_backward(x.value(), w.value(), stride, padding, g, need_dx);
    if (need_dx) t.accumulate(x, grads.dx);
    t.accumulate(w, grads.dw);
    t.accumulate(bias, grads.dbias);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, bool causal) {
  Tensor probs;
  Tensor y = kernels::attention(q.value(), k.value(), v.value(), heads, causal, &probs);
  return q.tape().record(std::move(y), {q, k, v},
                         [q, k, v, heads, probs = std::move(probs)](Tape& t, const Tensor& g) {
                           auto grads = kernels::attention_backward(q.value(), k.value(), v.value(), heads, probs, g);
                           t.accumulate(q, grads.dq);
                           t.accumulate(k, grads.dk);
                           t.accumulate(v, grads.dv);
                         });
}

namespace {
Tensor transposed(const Tensor& x) {
  require_rank(x, 2, "transpose");
  Tensor y({x.cols(), x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) y.at(j, i) = x.at(i, j);
  }
  return y;
}
}  // namespace

Var transpose(const Var& x) {
  return x.tape().record(transposed(x.value()), {x},
                         [x](Tape& t, const Tensor& g) { t.accumulate(x, transposed(g)); });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(y), {x},
                         [x](Tape& t, const Tensor& g) { t.accumulate(x, g.reshaped(x.value().shape())); });
}

Var mean_rows(const Var& x) {
  const Tensor& v = x.value();
  require_rank(v, 2, "mean_rows");
  const std::size_t n = v.rows(), d = v.cols();
  Tensor y({1, d});
  for (std::size_t i = 0; i < n; ++i) {
    auto r = v.row(i);
    for (std::size_t j = 0; j < d; ++j) y[j] += r[j];
  }
  y *= 1.0 / static_cast<double>(n);
  return x.tape().record(std::move(y), {x}, [x, n, d](Tape& t, const Tensor& g) {
    Tensor dx({n, d});
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) dx.at(i, j) = g[j] * inv;
    }
    t.accumulate(x, dx);
  });
}

Var concat_rows(const Var& top, const Var& bottom) {
  const Tensor& a = top.value();
  const Tensor& b = bottom.value();
  require_rank(a, 2, "concat_rows");
  require_rank(b, 2, "concat_rows");
  if (a.cols() != b.cols()) {
    throw ShapeError("concat_rows: widths differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  const std::size_t ra = a.rows(), rb = b.rows(), c = a.cols();
  return top.tape().record(Tensor({ra + rb, c}, std::move(data)), {top, bottom},
                           [top, bottom, ra, rb, c](Tape& t, const Tensor& g) {
                             const auto split = static_cast<std::ptrdiff_t>(ra * c);
                             if (t.requires_grad(top)) {
                               t.accumulate(top, Tensor({ra, c}, std::vector<double>(g.data().begin(),
                                                                                      g.data().begin() + split)));
                             }
                             if (t.requires_grad(bottom)) {
                               t.accumulate(bottom, Tensor({rb, c}, std::vector<double>(g.data().begin() + split,
                                                                                         g.data().end())));
                             }
                           });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& v = x.value();
  require_rank(v, 2, "slice_rows");
  if (count == 0 || begin + count > v.rows()) throw ShapeError("slice_rows: range outside matrix");
  const std::size_t c = v.cols();
  const auto first = v.data().begin() + static_cast<std::ptrdiff_t>(begin * c);
  Tensor y({count, c}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * c)));
  return x.tape().record(std::move(y), {x}, [x, begin, c](Tape& t, const Tensor& g) {
    Tensor d(x.value().shape());
    std::copy(g.data().begin(), g.data().end(), d.data().begin() + static_cast<std::ptrdiff_t>(begin * c));
    t.accumulate(x, d);
  });
}

Var gather_rows(const Var& table, std::span<const std::int64_t> ids) {
  const Tensor& tv = table.value();
  require_rank(tv, 2, "gather_rows");
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  const std::size_t d = tv.cols();
  Tensor y({ids.size(), d});
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= tv.rows()) {
      throw InvalidArgument("gather_rows: id " + std::to_string(idx[i]) + " out of range");
    }
    auto src = tv.row(static_cast<std::size_t>(idx[i]));
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return table.tape().record(std::move(y), {table}, [table, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor dt(table.value().shape());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = g.row(i);
      auto dst = dt.row(static_cast<std::size_t>(idx[i]));
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
    t.accumulate(table, dt);
  });
}

Var dropout(const Var& x, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout probability must lie in [0, 1)");
  if (p == 0.0) return x;
  Rng rng(seed);
  Tensor mask(x.value().shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep_scale;
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return x.tape().record(std::move(y), {x}, [x, mask = std::move(mask)](Tape& t, const Tensor& g) {
    Tensor d = g;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= mask[i];
    t.accumulate(x, d);
  });
}

Var cross_entropy(const Var& logits, std::span<const std::int64_t> targets) {
  auto r = kernels::cross_entropy(logits.value(), targets);
  return logits.tape().record(Tensor({1}, r.loss), {logits},
                              [logits, d = std::move(r.dlogits)](Tape& t, const Tensor& g) {
                                Tensor dl = d;
                                dl *= g[0];
                                t.accumulate(logits, dl);
                              });
}

Var weighted_sum(const Var& x, const Tensor& w) {
  require_same_shape(x.value(), w, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  return x.tape().record(Tensor({1}, s), {x}, [x, w](Tape& t, const Tensor& g) {
    Tensor d = w;
    d *= g[0];
    t.accumulate(x, d);
  });
}

}  // namespace ops
}  // namespace ecgqa

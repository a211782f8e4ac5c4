#include "ecgqa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>

#include "ecgqa/errors.hpp"

namespace ecgqa::kernels {

namespace {

void require_matrix(const Tensor& t, const char* what) { require_rank(t, 2, what); }

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> view(const Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                                     static_cast<Eigen::Index>(t.cols()));
}

Eigen::Map<RowMatrix> view(Tensor& t) {
  return Eigen::Map<RowMatrix>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                               static_cast<Eigen::Index>(t.cols()));
}

// Output positions t whose tap k lands inside the input: 0 <= t·stride + k − pad < len.
std::pair<std::size_t, std::size_t> valid_range(std::size_t k, std::size_t len, std::size_t out_len,
                                                std::size_t stride, std::ptrdiff_t pad) {
  const auto kk = static_cast<std::ptrdiff_t>(k);
  const auto st = static_cast<std::ptrdiff_t>(stride);
  const std::ptrdiff_t lo = kk >= pad ? 0 : (pad - kk + st - 1) / st;
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(len) - 1 + pad - kk;  // t·stride <= last
  const std::ptrdiff_t hi = last < 0 ? 0 : std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_len), last / st + 1);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dims differ " + shape_string(a.shape()) + " · " + shape_string(b.shape()));
  }
  Tensor y({a.rows(), b.cols()});
  view(y).noalias() = view(a) * view(b);
  return y;
}

Tensor matmul_at_b(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_at_b lhs");
  require_matrix(b, "matmul_at_b rhs");
  if (a.rows() != b.rows()) throw ShapeError("matmul_at_b: row counts differ");
  Tensor y({a.cols(), b.cols()});
  view(y).noalias() = view(a).transpose() * view(b);
  return y;
}

Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_a_bt lhs");
  require_matrix(b, "matmul_a_bt rhs");
  if (a.cols() != b.cols()) throw ShapeError("matmul_a_bt: column counts differ");
  Tensor y({a.rows(), b.rows()});
  view(y).noalias() = view(a) * view(b).transpose();
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  if (!bias.empty()) {
    if (bias.size() != w.cols()) throw ShapeError("linear: bias length does not match output width");
    for (std::size_t i = 0; i < y.rows(); ++i) {
      auto r = y.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
  LinearGrads g;
  g.dx = matmul_a_bt(dy, w);
  g.dw = matmul_at_b(x, dy);
  g.dbias = Tensor({dy.cols()});
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    auto r = dy.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) g.dbias[j] += r[j];
  }
  return g;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = gelu(v);
  return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "gelu_backward");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= gelu_derivative(x[i]);
  return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormCache* cache) {
  require_matrix(x, "layer_norm");
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.size() != d || beta.size() != d) throw ShapeError("layer_norm: affine size mismatch");
  Tensor y({n, d});
  if (cache) {
    cache->mean.assign(n, 0.0);
    cache->rstd.assign(n, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kNormEps);
    auto out = y.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] = (r[j] - mean) * rstd * gamma[j] + beta[j];
    if (cache) {
      cache->mean[i] = mean;
      cache->rstd[i] = rstd;
    }
  }
  return y;
}

AffineNormGrads layer_norm_backward(const Tensor& x, const Tensor& gamma, const NormCache& cache,
                                    const Tensor& dy) {
  const std::size_t n = x.rows(), d = x.cols();
  AffineNormGrads g{Tensor({n, d}), Tensor({d}), Tensor({d})};
  std::vector<double> xhat(d), dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    auto gr = dy.row(i);
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[j] = (r[j] - cache.mean[i]) * cache.rstd[i];
      dxhat[j] = gr[j] * gamma[j];
      g.dgamma[j] += gr[j] * xhat[j];
      g.dbeta[j] += gr[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat[j];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    auto dx = g.dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      dx[j] = cache.rstd[i] * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
    }
  }
  return g;
}

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  NormCache* cache) {
  require_matrix(x, "group_norm");
  const std::size_t c = x.rows(), t = x.cols();
  if (groups == 0 || c % groups != 0) {
    throw InvalidArgument("group_norm: " + std::to_string(c) + " channels not divisible into " +
                          std::to_string(groups) + " groups");
  }
  if (gamma.size() != c || beta.size() != c) throw ShapeError("group_norm: affine size mismatch");
  const std::size_t per = c / groups;
  const double count = static_cast<double>(per * t);
  Tensor y({c, t});
  if (cache) {
    cache->mean.assign(groups, 0.0);
    cache->rstd.assign(groups, 0.0);
  }
  for (std::size_t g = 0; g < groups; ++g) {
    const double* base = x.data().data() + g * per * t;
    double mean = 0.0;
    for (std::size_t i = 0; i < per * t; ++i) mean += base[i];
    mean /= count;
    double var = 0.0;
    for (std::size_t i = 0; i < per * t; ++i) var += (base[i] - mean) * (base[i] - mean);
    var /= count;
    const double rstd = 1.0 / std::sqrt(var + kNormEps);
    for (std::size_t ch = g * per; ch < (g + 1) * per; ++ch) {
      auto in = x.row(ch);
      auto out = y.row(ch);
      for (std::size_t j = 0; j < t; ++j) out[j] = (in[j] - mean) * rstd * gamma[ch] + beta[ch];
    }
    if (cache) {
      cache->mean[g] = mean;
      cache->rstd[g] = rstd;
    }
  }
  return y;
}

AffineNormGrads group_norm_backward(const Tensor& x, std::size_t groups, const Tensor& gamma,
                                    const NormCache& cache, const Tensor& dy) {
  const std::size_t c = x.rows(), t = x.cols();
  const std::size_t per = c / groups;
  const double count = static_cast<double>(per * t);
  AffineNormGrads g{Tensor({c, t}), Tensor({c}), Tensor({c})};
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const double mean = cache.mean[grp], rstd = cache.rstd[grp];
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t ch = grp * per; ch < (grp + 1) * per; ++ch) {
      auto in = x.row(ch);
      auto gr = dy.row(ch);
      for (std::size_t j = 0; j < t; ++j) {
        const double xhat = (in[j] - mean) * rstd;
        const double dxhat = gr[j] * gamma[ch];
        g.dgamma[ch] += gr[j] * xhat;
        g.dbeta[ch] += gr[j];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
      }
    }
    mean_dxhat /= count;
    mean_dxhat_xhat /= count;
    for (std::size_t ch = grp * per; ch < (grp + 1) * per; ++ch) {
      auto in = x.row(ch);
      auto gr = dy.row(ch);
      auto dx = g.dx.row(ch);
      for (std::size_t j = 0; j < t; ++j) {
        const double xhat = (in[j] - mean) * rstd;
        dx[j] = rstd * (gr[j] * gamma[ch] - mean_dxhat - xhat * mean_dxhat_xhat);
      }
    }
  }
  return g;
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t padding) {
  if (stride == 0) throw InvalidArgument("conv1d: stride must be positive");
  if (kernel == 0 || kernel > length + 2 * padding) {
    throw InvalidArgument("conv1d: kernel of " + std::to_string(kernel) + " exceeds padded input of " +
                          std::to_string(length + 2 * padding));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

namespace {

// Unfolds x (Cin×T) into a (Cin·K)×T′ matrix whose column t holds every tap of
// output position t; out-of-range taps stay zero.
RowMatrix im2col(const Tensor& x, std::size_t kw, std::size_t stride, std::size_t padding, std::size_t out_len) {
  const std::size_t cin = x.rows(), len = x.cols();
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(cin * kw), static_cast<Eigen::Index>(out_len));
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double* xr = x.data().data() + ci * len;
    for (std::size_t k = 0; k < kw; ++k) {
      double* row = cols.data() + (ci * kw + k) * out_len;
      const auto [lo, hi] = valid_range(k, len, out_len, stride, pad);
      const double* xs = xr + (static_cast<std::ptrdiff_t>(lo * stride + k) - pad);
      for (std::size_t t = lo; t < hi; ++t) row[t] = xs[(t - lo) * stride];
    }
  }
  return cols;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t padding) {
  require_matrix(x, "conv1d input");
  require_rank(w, 3, "conv1d kernel");
  const std::size_t cin = x.rows(), len = x.cols();
  const std::size_t cout = w.dim(0), kw = w.dim(2);
  if (w.dim(1) != cin) throw ShapeError("conv1d: kernel expects " + std::to_string(w.dim(1)) + " input channels");
  if (!bias.empty() && bias.size() != cout) throw ShapeError("conv1d: bias size mismatch");
  const std::size_t out_len = conv1d_output_length(len, kw, stride, padding);
  const RowMatrix cols = im2col(x, kw, stride, padding, out_len);
  Eigen::Map<const RowMatrix> wm(w.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * kw));
  Tensor y({cout, out_len});
  auto yv = view(y);
  yv.noalias() = wm * cols;
  if (!bias.empty()) {
    for (std::size_t co = 0; co < cout; ++co) yv.row(static_cast<Eigen::Index>(co)).array() += bias[co];
  }
  return y;
}

Conv1dGrads conv1d_backward(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding,
                            const Tensor& dy, bool need_dx) {
  const std::size_t cin = x.rows(), len = x.cols();
  const std::size_t cout = w.dim(0), kw = w.dim(2);
  const std::size_t out_len = dy.cols();
  Conv1dGrads g{Tensor(), Tensor(w.shape()), Tensor({cout})};
  const auto dyv = view(dy);
  for (std::size_t co = 0; co < cout; ++co) g.dbias[co] = dyv.row(static_cast<Eigen::Index>(co)).sum();
  const auto rows = static_cast<Eigen::Index>(cout), inner = static_cast<Eigen::Index>(cin * kw);
  Eigen::Map<RowMatrix>(g.dw.data().data(), rows, inner).noalias() = dyv * im2col(x, kw, stride, padding, out_len).transpose();
  if (!need_dx) return g;

  Eigen::Map<const RowMatrix> wm(w.data().data(), rows, inner);
  const RowMatrix dcols = wm.transpose() * dyv;
  g.dx = Tensor(x.shape());
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    double* dxr = g.dx.data().data() + ci * len;
    for (std::size_t k = 0; k < kw; ++k) {
      const double* row = dcols.data() + (ci * kw + k) * out_len;
      const auto [lo, hi] = valid_range(k, len, out_len, stride, pad);
      double* dxs = dxr + (static_cast<std::ptrdiff_t>(lo * stride + k) - pad);
      for (std::size_t t = lo; t < hi; ++t) dxs[(t - lo) * stride] += row[t];
    }
  }
  return g;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal,
                 Tensor* probs) {
  require_matrix(q, "attention q");
  require_same_shape(q, k, "attention q/k");
  require_same_shape(q, v, "attention q/v");
  const std::size_t s = q.rows(), d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw InvalidArgument("attention: width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
  }
  const auto n = static_cast<Eigen::Index>(s);
  const auto dh = static_cast<Eigen::Index>(d / heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({s, d});
  Tensor p({heads, s, s});
  const auto qv = view(q), kv = view(k), vv = view(v);
  auto ov = view(out);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dh;
    Eigen::Map<RowMatrix> ph(p.data().data() + h * s * s, n, n);
    ph.noalias() = qv.middleCols(c0, dh) * kv.middleCols(c0, dh).transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index visible = causal ? i + 1 : n;
      auto row = ph.row(i);
      const double mx = (row.head(visible) * scale).maxCoeff();
      row.head(visible) = ((row.head(visible) * scale).array() - mx).exp().matrix();
      row.head(visible) /= row.head(visible).sum();
      if (visible < n) row.tail(n - visible).setZero();
    }
    ov.middleCols(c0, dh).noalias() = ph * vv.middleCols(c0, dh);
  }
  if (probs) *probs = std::move(p);
  return out;
}

AttentionGrads attention_backward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                  const Tensor& probs, const Tensor& dy) {
  const std::size_t s = q.rows(), d = q.cols();
  const auto n = static_cast<Eigen::Index>(s);
  const auto dh = static_cast<Eigen::Index>(d / heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionGrads g{Tensor(q.shape()), Tensor(k.shape()), Tensor(v.shape())};
  const auto qv = view(q), kv = view(k), vv = view(v), dyv = view(dy);
  auto dq = view(g.dq), dk = view(g.dk), dv = view(g.dv);
  RowMatrix dp(n, n);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dh;
    Eigen::Map<const RowMatrix> ph(probs.data().data() + h * s * s, n, n);
    dv.middleCols(c0, dh).noalias() = ph.transpose() * dyv.middleCols(c0, dh);
    dp.noalias() = dyv.middleCols(c0, dh) * vv.middleCols(c0, dh).transpose();
    // Softmax backward: ds = p ⊙ (dp − Σ_j p·dp), masked entries have p = 0.
    const Eigen::VectorXd centre = (ph.array() * dp.array()).rowwise().sum();
    dp = (ph.array() * (dp.array().colwise() - centre.array()) * scale).matrix();
    dq.middleCols(c0, dh).noalias() = dp * kv.middleCols(c0, dh);
    dk.middleCols(c0, dh).noalias() = dp.transpose() * qv.middleCols(c0, dh);
  }
  return g;
}

CrossEntropyResult cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                                 std::int64_t ignore_index) {
  require_matrix(logits, "cross_entropy");
  const std::size_t s = logits.rows(), vocab = logits.cols();
  if (targets.size() != s) throw ShapeError("cross_entropy: one target per logit row required");
  CrossEntropyResult r;
  r.dlogits = Tensor(logits.shape());
  for (std::size_t i = 0; i < s; ++i) {
    const auto t = targets[i];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw InvalidArgument("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(vocab));
    }
    ++r.count;
  }
  if (r.count == 0) return r;
  const double inv = 1.0 / static_cast<double>(r.count);
  for (std::size_t i = 0; i < s; ++i) {
    const auto t = targets[i];
    if (t == ignore_index) continue;
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    r.loss += (log_z - row[static_cast<std::size_t>(t)]) * inv;
    auto grad = r.dlogits.row(i);
    for (std::size_t j = 0; j < vocab; ++j) grad[j] = std::exp(row[j] - log_z) * inv;
    grad[static_cast<std::size_t>(t)] -= inv;
  }
  return r;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  Tensor y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : r) v /= z;
  }
  return y;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t width) {
  if (width == 0 || width % 2 != 0) throw InvalidArgument("sinusoidal_positions: width must be even");
  Tensor pe({length, width});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) / freq;
      pe.at(pos, 2 * i) = std::sin(angle);
      pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace ecgqa::kernels

#pragma once

// Dense kernels with hand-written backward passes. Every function here is a
// pure function of its arguments; the autograd tape in autograd.hpp wires the
// forward/backward pairs together.

#include <cstdint>
#include <span>
#include <vector>

#include "ecgqa/tensor.hpp"

namespace ecgqa::kernels {

inline constexpr double kNormEps = 1e-5;

Tensor matmul(const Tensor& a, const Tensor& b);       // a·b
Tensor matmul_at_b(const Tensor& a, const Tensor& b);  // aᵀ·b
Tensor matmul_a_bt(const Tensor& a, const Tensor& b);  // a·bᵀ

/// y = x·w + bias, x: n×a, w: a×b, bias: b (or empty for no bias).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
struct LinearGrads {
  Tensor dx, dw, dbias;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

/// Exact GELU: x·Φ(x) with Φ the standard normal CDF.
double gelu(double x);
double gelu_derivative(double x);
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

struct NormCache {
  std::vector<double> mean;
  std::vector<double> rstd;
};
struct AffineNormGrads {
  Tensor dx, dgamma, dbeta;
};

/// Row-wise layer norm over the last axis of an n×d matrix.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormCache* cache = nullptr);
AffineNormGrads layer_norm_backward(const Tensor& x, const Tensor& gamma, const NormCache& cache,
                                    const Tensor& dy);

/// Group norm of a C×T activation: channels are split into `groups`
/// contiguous groups, each normalized over (C/groups)×T values, then scaled
/// and shifted per channel.
Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  NormCache* cache = nullptr);
AffineNormGrads group_norm_backward(const Tensor& x, std::size_t groups, const Tensor& gamma,
                                    const NormCache& cache, const Tensor& dy);

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t padding);

/// Cross-correlation of x (Cin×T) with w (Cout×Cin×K) plus optional bias.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);
struct Conv1dGrads {
  Tensor dx, dw, dbias;
};
/// dx is left empty when `need_dx` is false (e.g. the raw signal input).
Conv1dGrads conv1d_backward(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding,
                            const Tensor& dy, bool need_dx = true);

/// Scaled dot-product attention over already-projected q, k, v (S×d each),
/// split into `heads` column blocks. Scale is 1/sqrt(d/heads). When `causal`,
/// query i only sees keys j <= i. `probs` receives the H×S×S weights.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal,
                 Tensor* probs = nullptr);
struct AttentionGrads {
  Tensor dq, dk, dv;
};
AttentionGrads attention_backward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                  const Tensor& probs, const Tensor& dy);

inline constexpr std::int64_t kIgnoreIndex = -100;

struct CrossEntropyResult {
  double loss = 0.0;        // mean over supervised positions
  std::size_t count = 0;    // number of supervised positions
  Tensor dlogits;           // d(loss)/d(logits)
};
CrossEntropyResult cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                                 std::int64_t ignore_index = kIgnoreIndex);

/// Row-wise softmax of a matrix.
Tensor softmax_rows(const Tensor& x);

/// pe[pos][2i] = sin(pos / 10000^(2i/d)), pe[pos][2i+1] = cos(same).
Tensor sinusoidal_positions(std::size_t length, std::size_t width);

}  // namespace ecgqa::kernels

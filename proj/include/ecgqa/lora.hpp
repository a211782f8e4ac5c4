#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecgqa/autograd.hpp"
#include "ecgqa/params.hpp"

namespace ecgqa {

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 32.0;
  double dropout = 0.1;

  double scale() const { return alpha / static_cast<double>(rank); }
  void validate() const;
};

/// A frozen base projection plus a trainable low-rank delta:
///   y = x·base_w + base_bias + (alpha/r)·dropout(x)·a·b
/// `a` is in×r (seeded Gaussian), `b` is r×out (zeros at init).
struct LoraLayer {
  Tensor base_w;
  Tensor base_bias;  // may be empty
  Tensor a;
  Tensor b;
  LoraConfig config;
};

LoraLayer make_lora_layer(Tensor base_w, Tensor base_bias, const LoraConfig& config, Rng& rng);

/// Plain forward. Dropout only applies when `training`.
Tensor lora_forward(const LoraLayer& layer, const Tensor& x, bool training, std::uint64_t dropout_seed);

/// Tape forward; whether base/adapter receive gradients follows the Vars.
Var lora_linear(const Var& x, const Var& base_w, const Var& base_bias, const Var& a, const Var& b,
                const LoraConfig& config, bool training, std::uint64_t dropout_seed);

/// Adapter parameters "<prefix>.A" (in×r) and "<prefix>.B" (r×out).
std::vector<ParamSpec> lora_specs(const std::string& prefix, std::size_t in, std::size_t out,
                                  const LoraConfig& config);

}  // namespace ecgqa

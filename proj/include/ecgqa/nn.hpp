#pragma once

// Composite layers built from tape ops. Parameters are looked up by name
// under a prefix, e.g. "<prefix>.attn.wq".

#include <cstdint>
#include <string>
#include <vector>

#include "ecgqa/autograd.hpp"
#include "ecgqa/lora.hpp"
#include "ecgqa/params.hpp"

namespace ecgqa {

/// Train-time behaviour of stochastic layers. Dropout is off unless training.
struct ForwardMode {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

/// LoRA adapters on the query and value projections of one attention block.
struct LoraAttachment {
  std::string prefix;  // "<prefix>.q.A", "<prefix>.q.B", "<prefix>.v.A", ...
  LoraConfig config;
  bool trainable = true;
};

struct LayerParams {
  const ParamStore& store;
  std::string prefix;
  bool trainable = true;

  Var get(Tape& tape, const std::string& suffix) const {
    return tape.param(store, prefix + "." + suffix, trainable);
  }
};

/// Pre-norm transformer block parameters: LN, attention (wq/wk/wv/wo with
/// biases), LN, MLP of hidden size mlp_ratio·width with GELU.
std::vector<ParamSpec> transformer_layer_specs(const std::string& prefix, std::size_t width,
                                               std::size_t mlp_ratio = 4, double stddev = 0.02);

Var multi_head_attention(const Var& x, const LayerParams& params, std::size_t heads, bool causal,
                         const LoraAttachment* lora = nullptr, const ForwardMode& mode = {});

/// x + MHA(LN(x)), then h + MLP(LN(h)).
Var transformer_layer(const Var& x, const LayerParams& params, std::size_t heads, bool causal,
                      const LoraAttachment* lora = nullptr, const ForwardMode& mode = {});

}  // namespace ecgqa

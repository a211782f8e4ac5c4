#pragma once

// Autoregressive decoder contract, the toy transformer decoder, prefix/token
// fusion and greedy generation.

#include <span>
#include <string>
#include <vector>

#include "ecgqa/autograd.hpp"
#include "ecgqa/kv_config.hpp"
#include "ecgqa/lora.hpp"
#include "ecgqa/nn.hpp"
#include "ecgqa/params.hpp"
#include "ecgqa/tokenizer.hpp"

namespace ecgqa {

struct DecoderConfig {
  std::size_t vocab_size = 0;
  std::size_t width = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  double init_std = 0.02;
  double embed_std = 1.0;
  LoraConfig lora;

  void validate() const;
  KeyValues to_kv() const;
  static DecoderConfig from_kv(const KeyValues& kv);
};

/// Parameters of the base decoder ("decoder.*").
std::vector<ParamSpec> decoder_specs(const DecoderConfig& config);
/// LoRA adapters on each layer's query and value projections ("lora.*").
std::vector<ParamSpec> decoder_lora_specs(const DecoderConfig& config);

class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual std::size_t width() const = 0;
  virtual std::size_t vocab_size() const = 0;
  /// l × width token embeddings.
  virtual Var embed_tokens(Tape& tape, std::span<const TokenId> ids) const = 0;
  /// Causal pass over a fused n × width sequence, giving n × V logits.
  virtual Var forward(const Var& fused, const ForwardMode& mode) const = 0;
};

/// Pre-norm causal transformer with sinusoidal positions, a final LayerNorm
/// and an untied output head. LoRA adapters are used when present in the store.
class ToyDecoder final : public Decoder {
 public:
  ToyDecoder(const ParamStore& params, DecoderConfig config, bool base_trainable = false,
             bool lora_trainable = true, bool use_lora = true);

  std::size_t width() const override { return config_.width; }
  std::size_t vocab_size() const override { return config_.vocab_size; }
  Var embed_tokens(Tape& tape, std::span<const TokenId> ids) const override;
  Var forward(const Var& fused, const ForwardMode& mode) const override;

  const DecoderConfig& config() const { return config_; }

 private:
  const ParamStore& params_;
  DecoderConfig config_;
  bool base_trainable_;
  bool lora_trainable_;
  bool use_lora_;
};

struct FusedSequence {
  Var values;
  std::size_t prefix_len = 0;
};

/// Prefix rows first, then token rows. Either part may be absent (invalid Var).
FusedSequence fuse(const Var& prefix, const Var& tokens);
Tensor fuse(const Tensor& prefix, const Tensor& tokens);

/// Next-token targets for prefix + prompt + answer: only the positions that
/// predict an answer token or the closing eos are supervised.
std::vector<TokenId> answer_targets(std::size_t prefix_len, std::size_t prompt_len,
                                    std::span<const TokenId> answer, TokenId eos);

struct DecodeOutput {
  Var logits;
  Var loss;
};

DecodeOutput decode_forward(const Decoder& decoder, const FusedSequence& fused,
                            std::span<const TokenId> targets, const ForwardMode& mode = {});

/// Greedy continuation of prefix + prompt until eos or max_tokens. The
/// returned ids exclude eos.
std::vector<TokenId> generate(const Decoder& decoder, const Tensor& prefix, std::span<const TokenId> prompt,
                              std::size_t max_tokens, TokenId eos);

}  // namespace ecgqa

#include "ecgqa/decoder.hpp"

#include "ecgqa/errors.hpp"
#include "ecgqa/kernels.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

namespace {

std::string layer_prefix(std::size_t i) { return "decoder.layer" + std::to_string(i); }
std::string lora_prefix(std::size_t i) { return "lora.layer" + std::to_string(i); }

}  // namespace

void DecoderConfig::validate() const {
  if (vocab_size < 3) throw InvalidArgument("decoder vocab_size must cover the special tokens");
  if (width == 0 || layers == 0 || heads == 0 || mlp_ratio == 0) {
    throw InvalidArgument("decoder width, layers, heads and mlp_ratio must be positive");
  }
  if (width % heads != 0) throw InvalidArgument("decoder width must be divisible by heads");
  if (width % 2 != 0) throw InvalidArgument("decoder width must be even for sinusoidal positions");
  if (!(init_std > 0) || !(embed_std > 0)) throw InvalidArgument("decoder init scales must be positive");
  lora.validate();
}

KeyValues DecoderConfig::to_kv() const {
  KeyValues kv;
  kv.set("decoder.vocab_size", std::to_string(vocab_size));
  kv.set("decoder.width", std::to_string(width));
  kv.set("decoder.layers", std::to_string(layers));
  kv.set("decoder.heads", std::to_string(heads));
  kv.set("decoder.mlp_ratio", std::to_string(mlp_ratio));
  kv.set("decoder.init_std", format_number(init_std));
  kv.set("decoder.embed_std", format_number(embed_std));
  kv.set("lora.rank", std::to_string(lora.rank));
  kv.set("lora.alpha", format_number(lora.alpha));
  kv.set("lora.dropout", format_number(lora.dropout));
  return kv;
}

DecoderConfig DecoderConfig::from_kv(const KeyValues& kv) {
  DecoderConfig c;
  auto u = [&](const char* key) { return static_cast<std::size_t>(kv.get_int(key)); };
  c.vocab_size = u("decoder.vocab_size");
  c.width = u("decoder.width");
  c.layers = u("decoder.layers");
  c.heads = u("decoder.heads");
  c.mlp_ratio = u("decoder.mlp_ratio");
  c.init_std = kv.get_double("decoder.init_std");
  c.embed_std = kv.get_double("decoder.embed_std");
  c.lora.rank = u("lora.rank");
  c.lora.alpha = kv.get_double("lora.alpha");
  c.lora.dropout = kv.get_double("lora.dropout");
  c.validate();
  return c;
}

std::vector<ParamSpec> decoder_specs(const DecoderConfig& config) {
  using Init = ParamSpec::Init;
  std::vector<ParamSpec> specs = {
      {"decoder.embed", {config.vocab_size, config.width}, Init::kNormal, config.embed_std},
  };
  for (std::size_t i = 0; i < config.layers; ++i) {
    auto layer = transformer_layer_specs(layer_prefix(i), config.width, config.mlp_ratio, config.init_std);
    specs.insert(specs.end(), layer.begin(), layer.end());
  }
  specs.push_back({"decoder.final_norm.gamma", {config.width}, Init::kOnes, 0.0});
  specs.push_back({"decoder.final_norm.beta", {config.width}, Init::kZeros, 0.0});
  specs.push_back({"decoder.head.weight", {config.width, config.vocab_size}, Init::kNormal, config.init_std});
  return specs;
}

std::vector<ParamSpec> decoder_lora_specs(const DecoderConfig& config) {
  std::vector<ParamSpec> specs;
  for (std::size_t i = 0; i < config.layers; ++i) {
    for (const char* p : {".q", ".v"}) {
      auto s = lora_specs(lora_prefix(i) + p, config.width, config.width, config.lora);
      specs.insert(specs.end(), s.begin(), s.end());
    }
  }
  return specs;
}

ToyDecoder::ToyDecoder(const ParamStore& params, DecoderConfig config, bool base_trainable, bool lora_trainable,
                       bool use_lora)
    : params_(params),
      config_(std::move(config)),
      base_trainable_(base_trainable),
      lora_trainable_(lora_trainable),
      use_lora_(use_lora) {
  config_.validate();
  if (use_lora_ && !params_.contains(lora_prefix(0) + ".q.A")) {
    throw InvalidArgument("decoder LoRA requested but adapters are missing from the parameter store");
  }
}

Var ToyDecoder::embed_tokens(Tape& tape, std::span<const TokenId> ids) const {
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(id) + " outside decoder vocabulary");
    }
  }
  return ops::gather_rows(tape.param(params_, "decoder.embed", base_trainable_), ids);
}

Var ToyDecoder::forward(const Var& fused, const ForwardMode& mode) const {
  Tape& tape = fused.tape();
  const Tensor& x0 = fused.value();
  if (x0.rank() != 2 || x0.cols() != config_.width) {
    throw ShapeError("decoder input must be n × " + std::to_string(config_.width) + ", got " +
                     shape_string(x0.shape()));
  }
  Var h = ops::add_constant(fused, kernels::sinusoidal_positions(x0.rows(), config_.width));
  for (std::size_t i = 0; i < config_.layers; ++i) {
    LayerParams lp{params_, layer_prefix(i), base_trainable_};
    if (use_lora_) {
      LoraAttachment lora{lora_prefix(i), config_.lora, lora_trainable_};
      ForwardMode layer_mode{mode.training, mix_seed({mode.dropout_seed, i})};
      h = transformer_layer(h, lp, config_.heads, true, &lora, layer_mode);
    } else {
      h = transformer_layer(h, lp, config_.heads, true);
    }
  }
  h = ops::layer_norm(h, tape.param(params_, "decoder.final_norm.gamma", base_trainable_),
                      tape.param(params_, "decoder.final_norm.beta", base_trainable_));
  return ops::linear(h, tape.param(params_, "decoder.head.weight", base_trainable_), Var{});
}

FusedSequence fuse(const Var& prefix, const Var& tokens) {
  if (!prefix.valid()) return {tokens, 0};
  if (!tokens.valid()) return {prefix, prefix.value().rows()};
  if (prefix.value().cols() != tokens.value().cols()) {
    throw ShapeError("fuse: prefix width " + std::to_string(prefix.value().cols()) + " vs token width " +
                     std::to_string(tokens.value().cols()));
  }
  return {ops::concat_rows(prefix, tokens), prefix.value().rows()};
}

Tensor fuse(const Tensor& prefix, const Tensor& tokens) {
  Tape tape;
  return fuse(tape.constant(prefix), tape.constant(tokens)).values.value();
}

std::vector<TokenId> answer_targets(std::size_t prefix_len, std::size_t prompt_len,
                                    std::span<const TokenId> answer, TokenId eos) {
  if (prefix_len + prompt_len == 0) throw InvalidArgument("answer_targets needs some context before the answer");
  const std::size_t n = prefix_len + prompt_len + answer.size();
  std::vector<TokenId> targets(n, kernels::kIgnoreIndex);
  const std::size_t first = prefix_len + prompt_len - 1;
  for (std::size_t j = 0; j < answer.size(); ++j) targets[first + j] = answer[j];
  targets[first + answer.size()] = eos;
  return targets;
}

DecodeOutput decode_forward(const Decoder& decoder, const FusedSequence& fused, std::span<const TokenId> targets,
                            const ForwardMode& mode) {
  Var logits = decoder.forward(fused.values, mode);
  if (targets.size() != logits.value().rows()) {
    throw ShapeError("decode_forward: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.value().rows()) + " positions");
  }
  for (std::size_t i = 0; i < fused.prefix_len && i < targets.size(); ++i) {
    if (targets[i] != kernels::kIgnoreIndex) throw InvalidArgument("prefix positions must not be supervised");
  }
  return {logits, ops::cross_entropy(logits, targets)};
}

std::vector<TokenId> generate(const Decoder& decoder, const Tensor& prefix, std::span<const TokenId> prompt,
                              std::size_t max_tokens, TokenId eos) {
  if (max_tokens == 0) throw InvalidArgument("generate needs max_tokens >= 1");
  std::vector<TokenId> tokens(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  while (out.size() < max_tokens) {
    Tape tape;
    Var text = tokens.empty() ? Var{} : decoder.embed_tokens(tape, tokens);
    Var pre = prefix.empty() ? Var{} : tape.constant(prefix);
    FusedSequence fused = fuse(pre, text);
    if (!fused.values.valid()) throw InvalidArgument("generate needs a prefix or a prompt");
    const Tensor& logits = decoder.forward(fused.values, {}).value();
    const std::size_t last = logits.rows() - 1;
    TokenId best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits.at(last, j) > logits.at(last, static_cast<std::size_t>(best))) best = static_cast<TokenId>(j);
    }
    if (best == eos) break;
    out.push_back(best);
    tokens.push_back(best);
  }
  return out;
}

}  // namespace ecgqa

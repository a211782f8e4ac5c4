#include "ecgqa/nn.hpp"

#include "ecgqa/errors.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

std::vector<ParamSpec> transformer_layer_specs(const std::string& prefix, std::size_t width,
                                               std::size_t mlp_ratio, double stddev) {
  using Init = ParamSpec::Init;
  const std::size_t hidden = mlp_ratio * width;
  std::vector<ParamSpec> specs = {
      {prefix + ".ln1.gamma", {width}, Init::kOnes, 0.0},
      {prefix + ".ln1.beta", {width}, Init::kZeros, 0.0},
      {prefix + ".ln2.gamma", {width}, Init::kOnes, 0.0},
      {prefix + ".ln2.beta", {width}, Init::kZeros, 0.0},
      {prefix + ".mlp.w1", {width, hidden}, Init::kNormal, stddev},
      {prefix + ".mlp.b1", {hidden}, Init::kZeros, 0.0},
      {prefix + ".mlp.w2", {hidden, width}, Init::kNormal, stddev},
      {prefix + ".mlp.b2", {width}, Init::kZeros, 0.0},
  };
  for (const char* p : {"q", "k", "v", "o"}) {
    specs.push_back({prefix + ".attn.w" + p, {width, width}, Init::kNormal, stddev});
    specs.push_back({prefix + ".attn.b" + p, {width}, Init::kZeros, 0.0});
  }
  return specs;
}

Var multi_head_attention(const Var& x, const LayerParams& params, std::size_t heads, bool causal,
                         const LoraAttachment* lora, const ForwardMode& mode) {
  Tape& tape = x.tape();
  const std::size_t width = x.value().cols();
  if (heads == 0 || width % heads != 0) {
    throw InvalidArgument("attention width " + std::to_string(width) + " not divisible by " +
                          std::to_string(heads) + " heads");
  }
  auto project = [&](const char* p, std::uint64_t salt, bool adapted) {
    auto w = params.get(tape, std::string("attn.w") + p);
    auto b = params.get(tape, std::string("attn.b") + p);
    if (!adapted) return ops::linear(x, w, b);
    const std::string base = lora->prefix + "." + p;
    auto a = tape.param(params.store, base + ".A", lora->trainable);
    auto bm = tape.param(params.store, base + ".B", lora->trainable);
    return lora_linear(x, w, b, a, bm, lora->config, mode.training, mix_seed({mode.dropout_seed, salt}));
  };
  const bool adapted = lora != nullptr;
  auto q = project("q", 1, adapted);
  auto k = project("k", 0, false);
  auto v = project("v", 2, adapted);
  auto ctx = ops::attention(q, k, v, heads, causal);
  return ops::linear(ctx, params.get(tape, "attn.wo"), params.get(tape, "attn.bo"));
}

Var transformer_layer(const Var& x, const LayerParams& params, std::size_t heads, bool causal,
                      const LoraAttachment* lora, const ForwardMode& mode) {
  Tape& tape = x.tape();
  auto h1 = ops::layer_norm(x, params.get(tape, "ln1.gamma"), params.get(tape, "ln1.beta"));
  auto h = ops::add(x, multi_head_attention(h1, params, heads, causal, lora, mode));
  auto h2 = ops::layer_norm(h, params.get(tape, "ln2.gamma"), params.get(tape, "ln2.beta"));
  auto mlp = ops::linear(ops::gelu(ops::linear(h2, params.get(tape, "mlp.w1"), params.get(tape, "mlp.b1"))),
                         params.get(tape, "mlp.w2"), params.get(tape, "mlp.b2"));
  return ops::add(h, mlp);
}

}  // namespace ecgqa

#include "ecgqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ecgqa/decoder.hpp"
#include "ecgqa/encoder.hpp"
#include "ecgqa/lora.hpp"
#include "ecgqa/mapper.hpp"
#include "ecgqa/nn.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.normal(0.0, scale);
  return t;
}

double reduced(Tape& tape, const ParamStore& inputs, const GradFn& fn, std::uint64_t seed, Var* out_loss) {
  Var out = fn(tape, inputs);
  Rng rng(mix_seed({seed, 0x77656967687473}));
  Var loss = ops::weighted_sum(out, random_tensor(out.value().shape(), rng));
  if (out_loss) *out_loss = loss;
  return loss.value().data()[0];
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, ParamStore& inputs, const GradFn& fn,
                                std::uint64_t seed, const GradCheckOptions& options) {
  GradCheckResult result{name, 0.0, 0, false};
  inputs.zero_grads();
  {
    Tape tape;
    Var loss;
    reduced(tape, inputs, fn, seed, &loss);
    tape.backward(loss);
    tape.accumulate_param_grads(inputs);
  }
  Rng pick(mix_seed({seed, 0x70726f6265}));
  for (const auto& pname : inputs.names()) {
    Tensor& value = inputs.value(pname);
    const Tensor analytic_full = inputs.grad(pname);
    std::vector<std::size_t> idx(value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (options.max_probes > 0 && idx.size() > options.max_probes) {
      for (std::size_t i = 0; i < options.max_probes; ++i) {
        std::swap(idx[i], idx[i + pick.below(idx.size() - i)]);
      }
      idx.resize(options.max_probes);
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (auto i : idx) {
      const double saved = value.data()[i];
      value.data()[i] = saved + options.step;
      Tape tp;
      const double up = reduced(tp, inputs, fn, seed, nullptr);
      value.data()[i] = saved - options.step;
      Tape tm;
      const double down = reduced(tm, inputs, fn, seed, nullptr);
      value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = analytic_full.data()[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
      ++result.probes;
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    // Both sides below the noise floor means a structurally zero gradient
    // (e.g. a key bias, which softmax cancels); a ratio of noise says nothing.
    const bool both_zero = std::sqrt(a2) < options.zero_floor && std::sqrt(n2) < options.zero_floor;
    const double rel = denom > 0 && !both_zero ? std::sqrt(diff2) / denom : 0.0;
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  result.passed = result.max_rel_error <= options.tolerance;
  return result;
}

std::vector<GradCheckResult> gradient_suite(std::uint64_t seed, const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  Rng rng(mix_seed({seed, 0x7375697465}));
  auto run = [&](const std::string& name, std::vector<std::pair<std::string, Tensor>> tensors, const GradFn& fn) {
    ParamStore store;
    for (auto& [n, t] : tensors) store.add(n, std::move(t));
    out.push_back(check_gradients(name, store, fn, mix_seed({seed, hash_text(name)}), options));
  };
  auto r = [&](Shape s, double scale = 1.0) { return random_tensor(std::move(s), rng, scale); };
  auto p = [](Tape& t, const ParamStore& s, const char* n) { return t.param(s, n, true); };

  run("add", {{"a", r({3, 4})}, {"b", r({3, 4})}},
      [&](Tape& t, const ParamStore& s) { return ops::add(p(t, s, "a"), p(t, s, "b")); });
  run("scale", {{"a", r({3, 4})}}, [&](Tape& t, const ParamStore& s) { return ops::scale(p(t, s, "a"), -1.7); });
  run("matmul", {{"a", r({3, 5})}, {"b", r({5, 4})}},
      [&](Tape& t, const ParamStore& s) { return ops::matmul(p(t, s, "a"), p(t, s, "b")); });
  run("linear", {{"x", r({4, 5})}, {"w", r({5, 3})}, {"b", r({3})}},
      [&](Tape& t, const ParamStore& s) { return ops::linear(p(t, s, "x"), p(t, s, "w"), p(t, s, "b")); });
  run("gelu", {{"x", r({4, 6}, 2.0)}}, [&](Tape& t, const ParamStore& s) { return ops::gelu(p(t, s, "x")); });
  run("layer_norm", {{"x", r({4, 6})}, {"g", r({6})}, {"b", r({6})}}, [&](Tape& t, const ParamStore& s) {
    return ops::layer_norm(p(t, s, "x"), p(t, s, "g"), p(t, s, "b"));
  });
  run("group_norm", {{"x", r({6, 7})}, {"g", r({6})}, {"b", r({6})}}, [&](Tape& t, const ParamStore& s) {
    return ops::group_norm(p(t, s, "x"), 3, p(t, s, "g"), p(t, s, "b"));
  });
  run("conv1d", {{"x", r({3, 17})}, {"w", r({4, 3, 5})}, {"b", r({4})}}, [&](Tape& t, const ParamStore& s) {
    return ops::conv1d(p(t, s, "x"), p(t, s, "w"), p(t, s, "b"), 2, 2);
  });
  for (bool causal : {false, true}) {
    run(causal ? "attention_causal" : "attention", {{"q", r({5, 8})}, {"k", r({5, 8})}, {"v", r({5, 8})}},
        [&, causal](Tape& t, const ParamStore& s) {
          return ops::attention(p(t, s, "q"), p(t, s, "k"), p(t, s, "v"), 2, causal);
        });
  }
  run("cross_entropy", {{"logits", r({5, 7})}}, [&](Tape& t, const ParamStore& s) {
    static const std::int64_t targets[] = {3, -100, 0, 6, 2};
    return ops::cross_entropy(p(t, s, "logits"), targets);
  });
  run("transpose_reshape", {{"x", r({3, 4})}}, [&](Tape& t, const ParamStore& s) {
    return ops::reshape(ops::transpose(p(t, s, "x")), {2, 6});
  });
  run("mean_rows", {{"x", r({5, 3})}}, [&](Tape& t, const ParamStore& s) { return ops::mean_rows(p(t, s, "x")); });
  run("concat_slice_rows", {{"a", r({2, 3})}, {"b", r({3, 3})}}, [&](Tape& t, const ParamStore& s) {
    return ops::slice_rows(ops::concat_rows(p(t, s, "a"), p(t, s, "b")), 1, 3);
  });
  run("gather_rows", {{"table", r({5, 3})}}, [&](Tape& t, const ParamStore& s) {
    static const std::int64_t ids[] = {4, 0, 4, 2};
    return ops::gather_rows(p(t, s, "table"), ids);
  });
  run("dropout", {{"x", r({4, 5})}},
      [&](Tape& t, const ParamStore& s) { return ops::dropout(p(t, s, "x"), 0.3, 12345); });

  LoraConfig lora{2, 4.0, 0.1};
  run("lora_linear", {{"x", r({3, 6})}, {"w", r({6, 5})}, {"bias", r({5})}, {"A", r({6, 2})}, {"B", r({2, 5})}},
      [&](Tape& t, const ParamStore& s) {
        return lora_linear(p(t, s, "x"), p(t, s, "w"), p(t, s, "bias"), p(t, s, "A"), p(t, s, "B"), lora, true, 99);
      });

  {
    ParamStore store;
    Rng init(mix_seed({seed, 0x6c61796572}));
    materialize(store, transformer_layer_specs("blk", 8, 2, 0.3), init);
    materialize(store, lora_specs("ad.q", 8, 8, lora), init);
    materialize(store, lora_specs("ad.v", 8, 8, lora), init);
    // Non-zero B so the A path carries gradient too.
    for (const char* n : {"ad.q.B", "ad.v.B"}) store.set(n, random_tensor(store.value(n).shape(), init, 0.3));
    for (const char* n : {"blk.ln1.gamma", "blk.ln2.gamma", "blk.ln1.beta", "blk.ln2.beta"}) {
      store.set(n, random_tensor(store.value(n).shape(), init, 0.5));
    }
    store.add("x", random_tensor({5, 8}, init));
    out.push_back(check_gradients(
        "transformer_layer_lora", store,
        [&](Tape& t, const ParamStore& s) {
          LayerParams lp{s, "blk", true};
          LoraAttachment att{"ad", lora, true};
          return transformer_layer(t.param(s, "x", true), lp, 2, true, &att, ForwardMode{true, 7});
        },
        mix_seed({seed, 1}), options));
  }

  {
    // Composed path at small shapes: encode → map_prefix → fuse → decode_forward.
    EncoderConfig enc;
    enc.conv_stages = {{4, 5, 2}, {8, 3, 2}};
    enc.norm_groups = 2;
    enc.n_layers = 1;
    enc.d_model = 8;
    enc.heads = 2;
    enc.d_out = 6;
    enc.d_prime = 8;
    enc.lead_channels = 2;
    enc.lead_kernel = 3;
    enc.lead_stride = 2;
    MapperConfig map = MapperConfig::for_encoder(enc);
    map.layers = 1;
    map.heads = 2;
    DecoderConfig dec;
    dec.vocab_size = 9;
    dec.width = 8;
    dec.layers = 1;
    dec.heads = 2;
    dec.mlp_ratio = 2;
    dec.init_std = 0.3;
    dec.lora = lora;
    ParamStore store;
    Rng init(mix_seed({seed, 0x70617468}));
    materialize(store, encoder_specs(enc), init);
    materialize(store, lead_positional_specs(enc), init);
    materialize(store, mapper_specs(map), init);
    materialize(store, decoder_specs(dec), init);
    materialize(store, decoder_lora_specs(dec), init);
    for (const auto& n : store.names_with_prefix("lora.")) {
      if (n.ends_with(".B")) store.set(n, random_tensor(store.value(n).shape(), init, 0.3));
    }
    for (const auto& n : store.names()) {
      // Toy-init weights (σ 0.02) leave attention gradients near the
      // finite-difference noise floor; widen them so the check has signal.
      if ((n.starts_with("mapper.") || n.starts_with("encoder.layer")) && n.find(".w") != std::string::npos) {
        store.set(n, random_tensor(store.value(n).shape(), init, 0.3));
      }
    }
    store.add("signal", random_tensor({kLeadCount, 24}, init));
    out.push_back(check_gradients(
        "encode_map_decode", store,
        [&](Tape& t, const ParamStore& s) {
          Var sig = t.param(s, "signal", true);
          Var z = encode(sig, s, enc, true);
          Var pe = lead_positional(sig, s, enc, true);
          Var prefix = map_prefix(z, pe, s, map, true);
          const ToyDecoder decoder(s, dec, true, true, true);
          static const TokenId prompt[] = {3, 5, 4, 7};
          static const TokenId answer[] = {6, 8};
          std::vector<TokenId> input(std::begin(prompt), std::end(prompt));
          input.insert(input.end(), std::begin(answer), std::end(answer));
          auto targets = answer_targets(kLeadCount, std::size(prompt), answer, 2);
          Var tokens = decoder.embed_tokens(t, input);
          return decode_forward(decoder, fuse(prefix, tokens), targets, ForwardMode{true, 5}).loss;
        },
        mix_seed({seed, 2}), options));
  }
  return out;
}

}  // namespace ecgqa

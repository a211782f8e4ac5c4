#include <doctest.h>

#include <cmath>

#include "ecgqa/decoder.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/kernels.hpp"
#include "ecgqa/lora.hpp"
#include "ecgqa/optim.hpp"
#include "ecgqa/rng.hpp"
#include "ecgqa/tokenizer.hpp"

using namespace ecgqa;

namespace {

Tokenizer fixture_tokenizer() {
  return Tokenizer::from_corpus({"yes no not sure", "what is the qt interval ?", "lead i, lead ii."});
}

DecoderConfig small_config(std::size_t vocab) {
  DecoderConfig c;
  c.vocab_size = vocab;
  c.width = 16;
  c.layers = 2;
  c.heads = 4;
  c.lora.rank = 2;
  return c;
}

ParamStore small_store(const DecoderConfig& c, std::uint64_t seed) {
  ParamStore s;
  Rng rng(seed);
  materialize(s, decoder_specs(c), rng);
  materialize(s, decoder_lora_specs(c), rng);
  return s;
}

// Always prefers token `favored`.
class StubDecoder final : public Decoder {
 public:
  StubDecoder(std::size_t vocab, TokenId favored) : vocab_(vocab), favored_(favored) {}
  std::size_t width() const override { return 4; }
  std::size_t vocab_size() const override { return vocab_; }
  Var embed_tokens(Tape& tape, std::span<const TokenId> ids) const override {
    return tape.constant(Tensor({ids.size(), 4}));
  }
  Var forward(const Var& fused, const ForwardMode&) const override {
    Tensor logits({fused.value().rows(), vocab_});
    for (std::size_t i = 0; i < logits.rows(); ++i) logits.at(i, static_cast<std::size_t>(favored_)) = 5.0;
    return fused.tape().constant(std::move(logits));
  }

 private:
  std::size_t vocab_;
  TokenId favored_;
};

}  // namespace

TEST_CASE("tokenizer rules") {
  const Tokenizer tok = fixture_tokenizer();
  CHECK(tok.token(0) == "<pad>");
  CHECK(tok.token(1) == "<unk>");
  CHECK(tok.token(2) == "<eos>");
  CHECK(tok.encode("yes") == std::vector<TokenId>{tok.id("yes")});
  CHECK(tok.encode("qt interval?") == std::vector<TokenId>{tok.id("qt"), tok.id("interval"), tok.id("?")});
  CHECK(tok.encode("Zebra") == std::vector<TokenId>{tok.unk()});
  CHECK(tok.decode(tok.encode("Lead I,  lead II.")) == "lead i, lead ii.");
  CHECK(split_words("<report> a </report>") == std::vector<std::string>{"<report>", "a", "</report>"});
  for (std::size_t i = 0; i < tok.size(); ++i) CHECK(tok.id(tok.token(static_cast<TokenId>(i))) == static_cast<TokenId>(i));
  CHECK_THROWS_AS(Tokenizer({"a", "b"}), InvalidArgument);
}

TEST_CASE("fuse keeps both parts bitwise") {
  Rng rng(1);
  Tensor prefix({12, 8}), tokens({5, 8});
  for (double& x : prefix.data()) x = rng.normal();
  for (double& x : tokens.data()) x = rng.normal();
  const Tensor fused = fuse(prefix, tokens);
  REQUIRE(fused.rows() == 17);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 8; ++j) CHECK(fused.at(i, j) == prefix.at(i, j));
  }
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 8; ++j) CHECK(fused.at(12 + i, j) == tokens.at(i, j));
  }
  CHECK_THROWS_AS(fuse(prefix, Tensor({5, 7})), ShapeError);
}

TEST_CASE("lora forward examples") {
  LoraLayer layer;
  layer.base_w = Tensor({2, 2});
  layer.a = Tensor::matrix({{1}, {0}});
  layer.b = Tensor::matrix({{2, 3}});
  layer.config = {1, 1.0, 0.0};
  const Tensor y = lora_forward(layer, Tensor::matrix({{1, 0}}), false, 0);
  CHECK(y.at(0, 0) == 2.0);
  CHECK(y.at(0, 1) == 3.0);
  CHECK(LoraConfig{8, 32.0, 0.1}.scale() == 4.0);

  Rng rng(4);
  Tensor w({6, 5}), bias({5}), x({3, 6});
  for (double& v : w.data()) v = rng.normal();
  for (double& v : x.data()) v = rng.normal();
  const LoraLayer fresh = make_lora_layer(w, bias, LoraConfig{}, rng);
  CHECK(lora_forward(fresh, x, true, 9) == kernels::linear(x, w, bias));
  CHECK_THROWS_AS(lora_forward(fresh, Tensor({3, 4}), false, 0), ShapeError);
}

TEST_CASE("answer targets supervise only answer positions") {
  const std::vector<TokenId> answer = {7, 8};
  const auto t = answer_targets(3, 4, answer, 2);
  REQUIRE(t.size() == 9);
  for (std::size_t i = 0; i < 6; ++i) CHECK(t[i] == kernels::kIgnoreIndex);
  CHECK(t[6] == 7);
  CHECK(t[7] == 8);
  CHECK(t[8] == 2);
}

TEST_CASE("decode_forward shape and uniform baseline") {
  const auto cfg = small_config(11);
  ParamStore store = small_store(cfg, 3);
  store.set("decoder.head.weight", Tensor({16, 11}));
  const ToyDecoder dec(store, cfg);
  Tape tape;
  const std::vector<TokenId> ids = {3, 4, 5, 6, 7};
  Var prefix = tape.constant(Tensor({12, 16}, 0.1));
  auto fused = fuse(prefix, dec.embed_tokens(tape, ids));
  const auto targets = answer_targets(12, 3, std::vector<TokenId>{6, 7}, 2);
  const auto out = decode_forward(dec, fused, targets);
  CHECK(out.logits.value().rows() == 17);
  CHECK(out.logits.value().cols() == 11);
  CHECK(std::abs(out.loss.value().data()[0] - std::log(11.0)) < 1e-12);
}

TEST_CASE("causal mask: earlier logits ignore later inputs") {
  const auto cfg = small_config(13);
  const ParamStore store = small_store(cfg, 8);
  const ToyDecoder dec(store, cfg);
  Rng rng(2);
  Tensor x({9, 16});
  for (double& v : x.data()) v = rng.normal();
  Tensor perturbed = x;
  for (std::size_t i = 6; i < 9; ++i) {
    for (std::size_t j = 0; j < 16; ++j) perturbed.at(i, j) += rng.normal();
  }
  Tape t1, t2;
  const Tensor a = dec.forward(t1.constant(x), {}).value();
  const Tensor b = dec.forward(t2.constant(perturbed), {}).value();
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 13; ++j) CHECK(a.at(i, j) == b.at(i, j));
  }
  bool later_changed = false;
  for (std::size_t j = 0; j < 13; ++j) later_changed |= a.at(8, j) != b.at(8, j);
  CHECK(later_changed);
}

TEST_CASE("generation: eos stub, determinism, zero-B equals base") {
  const std::vector<TokenId> prompt = {3, 4};
  CHECK(generate(StubDecoder(6, 2), Tensor({12, 4}), prompt, 5, 2).empty());
  CHECK(generate(StubDecoder(6, 4), Tensor({12, 4}), prompt, 3, 2) == std::vector<TokenId>{4, 4, 4});
  CHECK_THROWS_AS(generate(StubDecoder(6, 4), Tensor({12, 4}), prompt, 0, 2), InvalidArgument);

  const auto cfg = small_config(13);
  const ParamStore store = small_store(cfg, 21);
  Rng rng(3);
  Tensor prefix({12, 16});
  for (double& v : prefix.data()) v = rng.normal();
  const ToyDecoder adapted(store, cfg, false, true, true);
  const ToyDecoder base(store, cfg, false, false, false);
  const auto a = generate(adapted, prefix, prompt, 6, 2);
  CHECK(a == generate(adapted, prefix, prompt, 6, 2));
  CHECK(a == generate(base, prefix, prompt, 6, 2));
}

TEST_CASE("gradient reaches the prefix; base weights stay frozen") {
  const auto cfg = small_config(13);
  ParamStore store = small_store(cfg, 5);
  const ParamStore before = store;
  const ToyDecoder dec(store, cfg, false, true, true);
  const auto lora_names = store.names_with_prefix("lora.");
  AdamState adam;
  for (int step = 0; step < 20; ++step) {
    store.zero_grads();
    Tape tape;
    Var prefix = tape.variable(Tensor({12, 16}, 0.3));
    const std::vector<TokenId> ids = {3, 4, 5, 6};
    auto fused = fuse(prefix, dec.embed_tokens(tape, ids));
    const auto targets = answer_targets(12, 2, std::vector<TokenId>{5, 6}, 2);
    auto out = decode_forward(dec, fused, targets, ForwardMode{true, static_cast<std::uint64_t>(step)});
    tape.backward(out.loss);
    tape.accumulate_param_grads(store);
    double norm = 0;
    for (double g : tape.grad(prefix).data()) norm += g * g;
    CHECK(norm > 0.0);
    adamw_step(store, lora_names, adam, AdamWConfig{}, 1e-2);
  }
  for (const auto& n : store.names_with_prefix("decoder.")) CHECK(store.value(n) == before.value(n));
  CHECK_FALSE(store.value("lora.layer0.q.B") == before.value("lora.layer0.q.B"));
}

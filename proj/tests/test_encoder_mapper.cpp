#include <doctest.h>

#include <cmath>

#include "golden.hpp"
#include "ecgqa/encoder.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/kernels.hpp"
#include "ecgqa/mapper.hpp"
#include "ecgqa/model.hpp"
#include "ecgqa/synth.hpp"

using namespace ecgqa;

namespace {

const Model& toy_model() {
  static const Model model = init_model(ModelConfig::toy(40), 2024);
  return model;
}

const EcgRecord& fixture_record() {
  static const EcgRecord record = render_ecg(sample_findings(3), 3);
  return record;
}

EcgRecord swap_leads(const EcgRecord& r, std::size_t a, std::size_t b) {
  std::vector<float> s(r.samples().begin(), r.samples().end());
  const std::size_t t = r.length();
  std::swap_ranges(s.begin() + static_cast<long>(a * t), s.begin() + static_cast<long>((a + 1) * t),
                   s.begin() + static_cast<long>(b * t));
  return EcgRecord(r.rate(), std::move(s));
}

// Hand count: conv stage = out·in·k + bias + norm affine; pre-norm block of
// width w = 4 projections (w²+w) + 2 norms (2w) + MLP (4w²+4w + 4w²+w).
std::size_t formula_encoder_params(const EncoderConfig& c) {
  std::size_t n = 0, in = c.c_leads;
  for (const auto& s : c.conv_stages) {
    n += s.out_channels * in * s.kernel + 3 * s.out_channels;
    in = s.out_channels;
  }
  const std::size_t w = c.d_model;
  n += c.n_layers * (12 * w * w + 13 * w);
  n += c.d_model * c.d_out + c.d_out;
  return n;
}

}  // namespace

TEST_CASE("conv frontend lengths for a canonical record") {
  const auto& c = EncoderConfig::toy();
  std::size_t t = kCanonicalLength;
  const std::size_t expected[] = {1250, 625, 313, 157};
  for (std::size_t i = 0; i < c.conv_stages.size(); ++i) {
    t = kernels::conv1d_output_length(t, c.conv_stages[i].kernel, c.conv_stages[i].stride, c.conv_stages[i].kernel / 2);
    CHECK(t == expected[i]);
  }
}

TEST_CASE("presets validate and the full-scale shape audit") {
  EncoderConfig::toy().validate();
  const auto full = EncoderConfig::full_scale();
  full.validate();
  CHECK(full.n_layers == 12);
  CHECK(full.d_out == 768);
  CHECK(EncoderConfig::toy().n_layers == 2);
  CHECK(EncoderConfig::toy().d_out == 32);
  const std::size_t count = count_parameters(encoder_specs(full));
  MESSAGE("full-scale encoder parameters: " << count);
  CHECK(count == formula_encoder_params(full));
  CHECK(count_parameters(encoder_specs(EncoderConfig::toy())) == formula_encoder_params(EncoderConfig::toy()));

  EncoderConfig bad = EncoderConfig::toy();
  bad.conv_stages.back().out_channels = 24;
  CHECK_THROWS(bad.validate());
  auto kv = EncoderConfig::toy().to_kv();
  CHECK(EncoderConfig::from_kv(kv).to_kv().format() == kv.format());
}

TEST_CASE("encode") {
  const auto& m = toy_model();
  const auto z = encode(fixture_record(), m.params, m.config.encoder);
  REQUIRE(z.values.size() == 32);
  for (double v : z.values) CHECK(std::isfinite(v));
  CHECK(encode(fixture_record(), m.params, m.config.encoder).values == z.values);
  golden::check_values("encode_fixture.txt", z.values);

  // Mask flags carry no information beyond the zeroed samples.
  const auto masked = mask_leads(fixture_record(), 0.5, 4);
  REQUIRE(masked.masked_count() > 0);
  const EcgRecord unflagged(masked.rate(), std::vector<float>(masked.samples().begin(), masked.samples().end()));
  CHECK(encode(masked, m.params, m.config.encoder).values == encode(unflagged, m.params, m.config.encoder).values);

  Tape tape;
  auto wrong = tape.constant(Tensor({11, 100}));
  CHECK_THROWS_AS(encode(wrong, m.params, m.config.encoder, false), ShapeError);
}

TEST_CASE("lead positional rows are per-lead") {
  const auto& m = toy_model();
  const auto& cfg = m.config.encoder;
  const auto zero = lead_positional(EcgRecord(500, 5000), m.params, cfg).values;
  REQUIRE(zero.rows() == 12);
  REQUIRE(zero.cols() == cfg.d_prime);
  for (std::size_t l = 1; l < 12; ++l)
    for (std::size_t j = 0; j < cfg.d_prime; ++j) CHECK(zero.at(l, j) == zero.at(0, j));

  const auto base = lead_positional(fixture_record(), m.params, cfg).values;
  golden::check_values("lead_positional_fixture.txt", base.data());

  const auto swapped = lead_positional(swap_leads(fixture_record(), 2, 9), m.params, cfg).values;
  for (std::size_t j = 0; j < cfg.d_prime; ++j) {
    CHECK(swapped.at(2, j) == base.at(9, j));
    CHECK(swapped.at(9, j) == base.at(2, j));
    CHECK(swapped.at(0, j) == base.at(0, j));
  }

  std::vector<float> s(fixture_record().samples().begin(), fixture_record().samples().end());
  for (std::size_t j = 0; j < 5000; j += 7) s[5 * 5000 + j] += 0.5f;
  const auto bumped = lead_positional(EcgRecord(500, std::move(s)), m.params, cfg).values;
  for (std::size_t l = 0; l < 12; ++l) {
    bool changed = false;
    for (std::size_t j = 0; j < cfg.d_prime; ++j) changed |= bumped.at(l, j) != base.at(l, j);
    CHECK(changed == (l == 5));
  }
}

TEST_CASE("prefix shape and skip additivity") {
  const auto& m = toy_model();
  const auto z = encode(fixture_record(), m.params, m.config.encoder);
  const auto p = lead_positional(fixture_record(), m.params, m.config.encoder);
  const auto with = map_prefix(z, p, m.params, m.config.mapper).values;
  const auto without = map_prefix_no_skip(z, m.params, m.config.mapper).values;
  CHECK(with.shape() == Shape{12, 64});
  CHECK(without.shape() == Shape{12, 64});
  bool differs = false;
  for (std::size_t i = 0; i < with.size(); ++i) {
    CHECK(std::abs(with[i] - without[i] - p.values[i]) <= 1e-6);
    differs |= with[i] != without[i];
  }
  CHECK(differs);
  CHECK(map_prefix(z, LeadPositional{Tensor({12, 64})}, m.params, m.config.mapper).values == without);
  golden::check_values("prefix_fixture.txt", with.data());
  golden::check_values("prefix_no_skip_fixture.txt", without.data());

  CHECK_THROWS_AS(map_prefix(Embedding{std::vector<double>(31, 0.1)}, p, m.params, m.config.mapper), ShapeError);
  CHECK_THROWS_AS(map_prefix(z, LeadPositional{Tensor({12, 63})}, m.params, m.config.mapper), ShapeError);
}

TEST_CASE("prefix shape holds across mapper configs") {
  for (std::size_t width : {8, 16, 24}) {
    for (std::size_t layers : {1, 2, 3}) {
      for (std::size_t heads : {1, 2, 4}) {
        MapperConfig cfg;
        cfg.d_in = 5;
        cfg.width = width;
        cfg.layers = layers;
        cfg.heads = heads;
        ParamStore store;
        Rng rng(mix_seed({width, layers, heads}));
        materialize(store, mapper_specs(cfg), rng);
        Embedding z{{0.1, -0.2, 0.3, 0.4, -0.5}};
        Tensor pe({12, width});
        for (double& v : pe.data()) v = rng.normal();
        const auto a = map_prefix(z, LeadPositional{pe}, store, cfg).values;
        const auto b = map_prefix_no_skip(z, store, cfg).values;
        REQUIRE(a.shape() == Shape{12, width});
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i] - pe[i]) <= 1e-6);
      }
    }
  }
  MapperConfig odd;
  odd.width = 10;
  odd.heads = 4;
  CHECK_THROWS(odd.validate());
}

#include "ecgqa/mapper.hpp"

#include <string>

#include "ecgqa/errors.hpp"
#include "ecgqa/nn.hpp"

namespace ecgqa {

MapperConfig MapperConfig::for_encoder(const EncoderConfig& encoder) {
  MapperConfig c;
  c.d_in = encoder.d_out;
  c.width = encoder.d_prime;
  return c;
}

void MapperConfig::validate() const {
  if (channels != kLeadCount) throw InvalidArgument("mapper produces exactly 12 channels");
  if (d_in == 0 || width == 0) throw InvalidArgument("mapper widths must be positive");
  if (layers < 1 || heads < 1) throw InvalidArgument("mapper needs at least one layer and head");
  if (width % heads != 0) throw InvalidArgument("mapper width must be divisible by heads");
}

std::vector<ParamSpec> mapper_specs(const MapperConfig& config) {
  config.validate();
  std::vector<ParamSpec> specs = {
      {"mapper.proj.weight", {config.d_in, config.channels * config.width}, ParamSpec::Init::kNormal, 0.02},
      {"mapper.proj.bias", {config.channels * config.width}, ParamSpec::Init::kZeros, 0.0},
  };
  for (std::size_t l = 0; l < config.layers; ++l) {
    auto layer = transformer_layer_specs("mapper.layer" + std::to_string(l), config.width);
    specs.insert(specs.end(), layer.begin(), layer.end());
  }
  return specs;
}

Var map_prefix_no_skip(const Var& z_e, const ParamStore& params, const MapperConfig& config, bool trainable) {
  config.validate();
  Tape& tape = z_e.tape();
  const Tensor& z = z_e.value();
  if (z.size() != config.d_in) {
    throw ShapeError("mapper expects a " + std::to_string(config.d_in) + "-dim embedding, got " +
                     shape_string(z.shape()));
  }
  auto x = z.rank() == 2 && z.rows() == 1 ? z_e : ops::reshape(z_e, {1, config.d_in});
  auto flat = ops::linear(x, tape.param(params, "mapper.proj.weight", trainable),
                          tape.param(params, "mapper.proj.bias", trainable));
  Var h = ops::reshape(flat, {config.channels, config.width});
  if (config.use_transformer) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      h = transformer_layer(h, LayerParams{params, "mapper.layer" + std::to_string(l), trainable}, config.heads,
                            /*causal=*/false);
    }
  }
  return h;
}

Var map_prefix(const Var& z_e, const Var& p_e, const ParamStore& params, const MapperConfig& config, bool trainable) {
  const Shape expected{config.channels, config.width};
  if (p_e.value().shape() != expected) {
    throw ShapeError("lead-positional input must be " + shape_string(expected) + ", got " +
                     shape_string(p_e.value().shape()));
  }
  return ops::add(map_prefix_no_skip(z_e, params, config, trainable), p_e);
}

PrefixEmbedding map_prefix(const Embedding& z_e, const LeadPositional& p_e, const ParamStore& params,
                           const MapperConfig& config) {
  Tape tape;
  auto z = tape.constant(Tensor::vector(z_e.values));
  auto out = map_prefix(z, tape.constant(p_e.values), params, config, false);
  return PrefixEmbedding{out.value()};
}

PrefixEmbedding map_prefix_no_skip(const Embedding& z_e, const ParamStore& params, const MapperConfig& config) {
  Tape tape;
  auto out = map_prefix_no_skip(tape.constant(Tensor::vector(z_e.values)), params, config, false);
  return PrefixEmbedding{out.value()};
}

}  // namespace ecgqa

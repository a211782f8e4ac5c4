#pragma once

#include <vector>

#include "ecgqa/autograd.hpp"
#include "ecgqa/encoder.hpp"
#include "ecgqa/params.hpp"

namespace ecgqa {

/// ET-Mapper shape: z_e (d_in) → linear → c × width → L transformer layers.
struct MapperConfig {
  std::size_t d_in = 32;
  std::size_t channels = kLeadCount;
  std::size_t width = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  /// Off for the "linear reshape only" ablation: the transformer is skipped.
  bool use_transformer = true;

  static MapperConfig for_encoder(const EncoderConfig& encoder);
  void validate() const;
};

/// The c × d′ pseudo-token sequence prepended to the decoder input.
struct PrefixEmbedding {
  Tensor values;
};

std::vector<ParamSpec> mapper_specs(const MapperConfig& config);

/// z_et = mapper(z_e). `z_e` is 1 × d_in.
Var map_prefix_no_skip(const Var& z_e, const ParamStore& params, const MapperConfig& config, bool trainable);
/// z_prefix = z_et + p_e.
Var map_prefix(const Var& z_e, const Var& p_e, const ParamStore& params, const MapperConfig& config, bool trainable);

PrefixEmbedding map_prefix(const Embedding& z_e, const LeadPositional& p_e, const ParamStore& params,
                           const MapperConfig& config);
PrefixEmbedding map_prefix_no_skip(const Embedding& z_e, const ParamStore& params, const MapperConfig& config);

}  // namespace ecgqa

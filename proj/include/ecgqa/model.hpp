#pragma once

// The full model: ECG encoder, lead-positional branch, ET-Mapper and decoder
// with LoRA adapters, all in one ParamStore. Parameter groups by name prefix:
//   encoder.*  posenc.*  mapper.*  decoder.*  lora.*

#include <cstdint>
#include <filesystem>
#include <string>

#include "ecgqa/decoder.hpp"
#include "ecgqa/encoder.hpp"
#include "ecgqa/kv_config.hpp"
#include "ecgqa/mapper.hpp"
#include "ecgqa/params.hpp"

namespace ecgqa {

struct ModelConfig {
  EncoderConfig encoder;
  MapperConfig mapper;
  DecoderConfig decoder;
  /// Adds p_e to the mapped prefix. Off for the "without lead positions" ablation.
  bool use_lead_positional = true;

  static ModelConfig toy(std::size_t vocab_size);
  void validate() const;
  KeyValues to_kv() const;
  static ModelConfig from_kv(const KeyValues& kv);
};

struct Model {
  ModelConfig config;
  ParamStore params;
};

/// Seeded initialization. Each group draws from its own stream, so changing
/// one group's shape leaves the others unchanged.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Copies every parameter under `prefix` from `source`.
void copy_group(ParamStore& target, const ParamStore& source, std::string_view prefix);

/// Writes <path> (QHPT) and <path>.manifest (config, seed, content hash).
void save_model(const Model& model, const std::filesystem::path& path, const KeyValues& extra = {});
Model load_model(const std::filesystem::path& path);

/// Sidecar "<artifact>.manifest": `fields` plus the artifact's git-style blob hash.
void write_manifest(const std::filesystem::path& artifact, const KeyValues& fields);
KeyValues read_manifest(const std::filesystem::path& artifact);
std::filesystem::path manifest_path(const std::filesystem::path& artifact);

}  // namespace ecgqa

#pragma once

#include <string>
#include <vector>

#include "ecgqa/autograd.hpp"
#include "ecgqa/kv_config.hpp"
#include "ecgqa/params.hpp"
#include "ecgqa/signal.hpp"

namespace ecgqa {

struct ConvStage {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
};

/// Shape of the ECG encoder and of the lead-positional branch.
///
/// The conv frontend runs conv1d → group norm → GELU per stage with padding
/// kernel/2; the last stage must produce d_model channels. The time axis then
/// becomes the sequence axis of an n_layers pre-norm transformer, is
/// mean-pooled and projected to d_out.
struct EncoderConfig {
  std::vector<ConvStage> conv_stages;
  std::size_t norm_groups = 4;
  std::size_t n_layers = 2;
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t d_out = 32;
  std::size_t c_leads = kLeadCount;
  std::size_t d_prime = 64;
  // Lead-positional branch: shared per-lead conv, mean over time, linear to d_prime.
  std::size_t lead_channels = 8;
  std::size_t lead_kernel = 7;
  std::size_t lead_stride = 4;

  static EncoderConfig toy();
  static EncoderConfig full_scale();

  void validate() const;
  KeyValues to_kv() const;
  static EncoderConfig from_kv(const KeyValues& kv);
};

/// z_e: the pooled d_out-dimensional ECG representation.
struct Embedding {
  std::vector<double> values;
};

/// p_e: one d_prime row per lead, each computed from that lead alone.
struct LeadPositional {
  Tensor values;  // 12 × d_prime
};

std::vector<ParamSpec> encoder_specs(const EncoderConfig& config);
std::vector<ParamSpec> lead_positional_specs(const EncoderConfig& config);

/// Record samples as a 12×T tensor.
Tensor record_tensor(const EcgRecord& record);

/// Tape versions; `trainable` decides whether encoder weights get gradients.
Var encode(const Var& signal, const ParamStore& params, const EncoderConfig& config, bool trainable);
Var lead_positional(const Var& signal, const ParamStore& params, const EncoderConfig& config, bool trainable);

Embedding encode(const EcgRecord& record, const ParamStore& params, const EncoderConfig& config);
LeadPositional lead_positional(const EcgRecord& record, const ParamStore& params, const EncoderConfig& config);

}  // namespace ecgqa

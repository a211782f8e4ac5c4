#pragma once

#include <string>
#include <vector>

#include "ecgqa/params.hpp"

namespace ecgqa {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.01;

  void validate() const;
};

/// First/second moment estimates per parameter plus the step counter.
struct AdamState {
  NamedTensors m;
  NamedTensors v;
  std::uint64_t step = 0;
};

/// One AdamW update of `names` in `store` using their accumulated gradients:
///   m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²
///   w ← w − lr·wd·w − lr·m̂/(√v̂ + ε)
/// Throws TrainingError (leaving everything untouched) if any gradient is
/// not finite.
void adamw_step(ParamStore& store, const std::vector<std::string>& names, AdamState& state,
                const AdamWConfig& config, double lr);

/// Rounds the moment estimates to float, matching what a checkpoint stores.
void round_to_f32(AdamState& state);

/// Linear warmup from 0 to `peak` over floor(warmup_ratio·total) steps, then
/// cosine decay to 0 at `total`.
double cosine_warmup_lr(std::size_t step, std::size_t total, double peak, double warmup_ratio);

}  // namespace ecgqa

#pragma once

// Central-difference gradient checks for every differentiable op and for the
// composed encode → map_prefix → decode_forward path at small shapes.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ecgqa/autograd.hpp"
#include "ecgqa/params.hpp"

namespace ecgqa {

struct GradCheckResult {
  std::string name;
  /// max over inputs of ‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖) on the
  /// probed entries.
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-5;
  /// Entries probed per input tensor; 0 probes every entry.
  std::size_t max_probes = 24;
  /// A tensor whose analytic and numeric gradient norms are both below this
  /// counts as exactly zero. Central differences at step 1e-6 carry ~1e-10
  /// of rounding noise on O(1) outputs.
  double zero_floor = 1e-8;
};

/// Output of `fn` is reduced to sum(out ⊙ R) with a fixed random R; every
/// parameter in `inputs` is differentiated.
using GradFn = std::function<Var(Tape&, const ParamStore&)>;

GradCheckResult check_gradients(const std::string& name, ParamStore& inputs, const GradFn& fn,
                                std::uint64_t seed, const GradCheckOptions& options = {});

/// The full suite for one seed.
std::vector<GradCheckResult> gradient_suite(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace ecgqa

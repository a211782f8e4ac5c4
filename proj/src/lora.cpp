#include "ecgqa/lora.hpp"

#include <cmath>

#include "ecgqa/errors.hpp"
#include "ecgqa/kernels.hpp"

namespace ecgqa {

void LoraConfig::validate() const {
  if (rank == 0) throw InvalidArgument("LoRA rank must be at least 1");
  if (!(alpha > 0.0)) throw InvalidArgument("LoRA alpha must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("LoRA dropout must lie in [0, 1)");
}

std::vector<ParamSpec> lora_specs(const std::string& prefix, std::size_t in, std::size_t out,
                                  const LoraConfig& config) {
  config.validate();
  const double a_std = 1.0 / std::sqrt(static_cast<double>(in));
  return {
      {prefix + ".A", {in, config.rank}, ParamSpec::Init::kNormal, a_std},
      {prefix + ".B", {config.rank, out}, ParamSpec::Init::kZeros, 0.0},
  };
}

LoraLayer make_lora_layer(Tensor base_w, Tensor base_bias, const LoraConfig& config, Rng& rng) {
  config.validate();
  require_rank(base_w, 2, "LoRA base weight");
  const std::size_t in = base_w.rows(), out = base_w.cols();
  Tensor a({in, config.rank});
  const double a_std = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : a.data()) v = rng.normal(0.0, a_std);
  return LoraLayer{std::move(base_w), std::move(base_bias), std::move(a), Tensor({config.rank, out}), config};
}

Tensor lora_forward(const LoraLayer& layer, const Tensor& x, bool training, std::uint64_t dropout_seed) {
  Tape tape;
  auto xv = tape.constant(x);
  auto bias = layer.base_bias.empty() ? Var{} : tape.constant(layer.base_bias);
  auto y = lora_linear(xv, tape.constant(layer.base_w), bias, tape.constant(layer.a), tape.constant(layer.b),
                       layer.config, training, dropout_seed);
  return y.value();
}

Var lora_linear(const Var& x, const Var& base_w, const Var& base_bias, const Var& a, const Var& b,
                const LoraConfig& config, bool training, std::uint64_t dropout_seed) {
  if (a.value().rows() != base_w.value().rows() || b.value().cols() != base_w.value().cols() ||
      a.value().cols() != b.value().rows()) {
    throw ShapeError("LoRA adapter shapes " + shape_string(a.value().shape()) + "·" +
                     shape_string(b.value().shape()) + " do not match base " + shape_string(base_w.value().shape()));
  }
  auto base = ops::linear(x, base_w, base_bias);
  auto dropped = training ? ops::dropout(x, config.dropout, dropout_seed) : x;
  auto delta = ops::matmul(ops::matmul(dropped, a), b);
  return ops::add(base, ops::scale(delta, config.scale()));
}

}  // namespace ecgqa

#include "ecgqa/encoder.hpp"

#include <cmath>
#include <cstdio>

#include "ecgqa/errors.hpp"
#include "ecgqa/kernels.hpp"
#include "ecgqa/nn.hpp"

namespace ecgqa {

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c;
  c.conv_stages = {{16, 7, 4}, {16, 5, 2}, {32, 3, 2}, {32, 3, 2}};
  c.norm_groups = 4;
  c.n_layers = 2;
  c.d_model = 32;
  c.heads = 4;
  c.d_out = 32;
  c.d_prime = 64;
  return c;
}

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig c;
  c.conv_stages = {{256, 7, 4}, {256, 5, 2}, {512, 3, 2}, {768, 3, 2}};
  c.norm_groups = 32;
  c.n_layers = 12;
  c.d_model = 768;
  c.heads = 12;
  c.d_out = 768;
  c.d_prime = 2048;
  c.lead_channels = 64;
  return c;
}

void EncoderConfig::validate() const {
  if (conv_stages.empty()) throw InvalidArgument("encoder needs at least one conv stage");
  for (const auto& s : conv_stages) {
    if (s.out_channels == 0 || s.kernel == 0 || s.stride == 0) throw InvalidArgument("conv stage extents must be positive");
    if (norm_groups == 0 || s.out_channels % norm_groups != 0) {
      throw InvalidArgument("conv stage channels must be divisible by norm_groups");
    }
  }
  if (conv_stages.back().out_channels != d_model) {
    throw InvalidArgument("last conv stage must output d_model channels");
  }
  if (n_layers < 1) throw InvalidArgument("encoder needs n_layers >= 1");
  if (d_out < 1 || d_prime < 1) throw InvalidArgument("embedding widths must be positive");
  if (d_model % 2 != 0) throw InvalidArgument("d_model must be even for sinusoidal positions");
  if (heads == 0 || d_model % heads != 0) throw InvalidArgument("d_model must be divisible by heads");
  if (c_leads != kLeadCount) throw InvalidArgument("encoder expects 12 leads");
  if (lead_channels == 0 || lead_kernel == 0 || lead_stride == 0) {
    throw InvalidArgument("lead-positional extents must be positive");
  }
}

KeyValues EncoderConfig::to_kv() const {
  KeyValues kv;
  std::string stages;
  for (const auto& s : conv_stages) {
    if (!stages.empty()) stages += ";";
    stages += std::to_string(s.out_channels) + "," + std::to_string(s.kernel) + "," + std::to_string(s.stride);
  }
  kv.set("encoder.conv_stages", stages);
  kv.set("encoder.norm_groups", std::to_string(norm_groups));
  kv.set("encoder.n_layers", std::to_string(n_layers));
  kv.set("encoder.d_model", std::to_string(d_model));
  kv.set("encoder.heads", std::to_string(heads));
  kv.set("encoder.d_out", std::to_string(d_out));
  kv.set("encoder.c_leads", std::to_string(c_leads));
  kv.set("encoder.d_prime", std::to_string(d_prime));
  kv.set("encoder.lead_channels", std::to_string(lead_channels));
  kv.set("encoder.lead_kernel", std::to_string(lead_kernel));
  kv.set("encoder.lead_stride", std::to_string(lead_stride));
  return kv;
}

EncoderConfig EncoderConfig::from_kv(const KeyValues& kv) {
  EncoderConfig c;
  const std::string stages = kv.get("encoder.conv_stages");
  std::size_t pos = 0;
  while (pos < stages.size()) {
    auto end = stages.find(';', pos);
    if (end == std::string::npos) end = stages.size();
    const std::string item = stages.substr(pos, end - pos);
    ConvStage s{};
    if (std::sscanf(item.c_str(), "%zu,%zu,%zu", &s.out_channels, &s.kernel, &s.stride) != 3) {
      throw InvalidArgument("bad conv stage \"" + item + "\"");
    }
    c.conv_stages.push_back(s);
    pos = end + 1;
  }
  auto u = [&](const char* key) { return static_cast<std::size_t>(kv.get_int(key)); };
  c.norm_groups = u("encoder.norm_groups");
  c.n_layers = u("encoder.n_layers");
  c.d_model = u("encoder.d_model");
  c.heads = u("encoder.heads");
  c.d_out = u("encoder.d_out");
  c.c_leads = u("encoder.c_leads");
  c.d_prime = u("encoder.d_prime");
  c.lead_channels = u("encoder.lead_channels");
  c.lead_kernel = u("encoder.lead_kernel");
  c.lead_stride = u("encoder.lead_stride");
  c.validate();
  return c;
}

std::vector<ParamSpec> encoder_specs(const EncoderConfig& config) {
  config.validate();
  using Init = ParamSpec::Init;
  std::vector<ParamSpec> specs;
  std::size_t in_ch = config.c_leads;
  for (std::size_t i = 0; i < config.conv_stages.size(); ++i) {
    const auto& s = config.conv_stages[i];
    const std::string p = "encoder.conv" + std::to_string(i);
    const double fan_in = static_cast<double>(in_ch * s.kernel);
    specs.push_back({p + ".weight", {s.out_channels, in_ch, s.kernel}, Init::kNormal, 1.0 / std::sqrt(fan_in)});
    specs.push_back({p + ".bias", {s.out_channels}, Init::kZeros, 0.0});
    specs.push_back({p + ".norm.gamma", {s.out_channels}, Init::kOnes, 0.0});
    specs.push_back({p + ".norm.beta", {s.out_channels}, Init::kZeros, 0.0});
    in_ch = s.out_channels;
  }
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    auto layer = transformer_layer_specs("encoder.layer" + std::to_string(l), config.d_model);
    specs.insert(specs.end(), layer.begin(), layer.end());
  }
  specs.push_back({"encoder.proj.weight", {config.d_model, config.d_out}, Init::kNormal,
                   1.0 / std::sqrt(static_cast<double>(config.d_model))});
  specs.push_back({"encoder.proj.bias", {config.d_out}, Init::kZeros, 0.0});
  return specs;
}

std::vector<ParamSpec> lead_positional_specs(const EncoderConfig& config) {
  config.validate();
  using Init = ParamSpec::Init;
  return {
      {"posenc.conv.weight", {config.lead_channels, 1, config.lead_kernel}, Init::kNormal,
       1.0 / std::sqrt(static_cast<double>(config.lead_kernel))},
      {"posenc.conv.bias", {config.lead_channels}, Init::kNormal, 0.02},
      {"posenc.proj.weight", {config.lead_channels, config.d_prime}, Init::kNormal,
       1.0 / std::sqrt(static_cast<double>(config.lead_channels))},
      {"posenc.proj.bias", {config.d_prime}, Init::kNormal, 0.02},
  };
}

Tensor record_tensor(const EcgRecord& record) {
  std::vector<double> data(record.samples().begin(), record.samples().end());
  return Tensor({kLeadCount, record.length()}, std::move(data));
}

Var encode(const Var& signal, const ParamStore& params, const EncoderConfig& config, bool trainable) {
  Tape& tape = signal.tape();
  if (signal.value().rank() != 2 || signal.value().rows() != config.c_leads) {
    throw ShapeError("encoder expects a 12×T signal, got " + shape_string(signal.value().shape()));
  }
  auto p = [&](const std::string& name) { return tape.param(params, name, trainable); };
  Var h = signal;
  for (std::size_t i = 0; i < config.conv_stages.size(); ++i) {
    const auto& s = config.conv_stages[i];
    const std::string pre = "encoder.conv" + std::to_string(i);
    h = ops::conv1d(h, p(pre + ".weight"), p(pre + ".bias"), s.stride, s.kernel / 2);
    h = ops::group_norm(h, config.norm_groups, p(pre + ".norm.gamma"), p(pre + ".norm.beta"));
    h = ops::gelu(h);
  }
  h = ops::transpose(h);  // sequence × d_model
  h = ops::add_constant(h, kernels::sinusoidal_positions(h.value().rows(), config.d_model));
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    h = transformer_layer(h, LayerParams{params, "encoder.layer" + std::to_string(l), trainable}, config.heads,
                          /*causal=*/false);
  }
  h = ops::mean_rows(h);
  return ops::linear(h, p("encoder.proj.weight"), p("encoder.proj.bias"));
}

Var lead_positional(const Var& signal, const ParamStore& params, const EncoderConfig& config, bool trainable) {
  Tape& tape = signal.tape();
  const Tensor& x = signal.value();
  if (x.rank() != 2 || x.rows() != config.c_leads) {
    throw ShapeError("lead-positional branch expects a 12×T signal, got " + shape_string(x.shape()));
  }
  auto w = tape.param(params, "posenc.conv.weight", trainable);
  auto b = tape.param(params, "posenc.conv.bias", trainable);
  auto pw = tape.param(params, "posenc.proj.weight", trainable);
  auto pb = tape.param(params, "posenc.proj.bias", trainable);
  Var pooled;
  for (std::size_t l = 0; l < config.c_leads; ++l) {
    auto row = ops::slice_rows(signal, l, 1);
    auto feat = ops::gelu(ops::conv1d(row, w, b, config.lead_stride, config.lead_kernel / 2));
    auto mean = ops::mean_rows(ops::transpose(feat));  // 1 × lead_channels
    pooled = pooled.valid() ? ops::concat_rows(pooled, mean) : mean;
  }
  return ops::linear(pooled, pw, pb);
}

Embedding encode(const EcgRecord& record, const ParamStore& params, const EncoderConfig& config) {
  Tape tape;
  auto z = encode(tape.constant(record_tensor(record)), params, config, false);
  return Embedding{std::vector<double>(z.value().data().begin(), z.value().data().end())};
}

LeadPositional lead_positional(const EcgRecord& record, const ParamStore& params, const EncoderConfig& config) {
  Tape tape;
  auto p = lead_positional(tape.constant(record_tensor(record)), params, config, false);
  return LeadPositional{p.value()};
}

}  // namespace ecgqa

#include "ecgqa/model.hpp"

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

ModelConfig ModelConfig::toy(std::size_t vocab_size) {
  ModelConfig c;
  c.encoder = EncoderConfig::toy();
  c.mapper = MapperConfig::for_encoder(c.encoder);
  c.decoder.vocab_size = vocab_size;
  c.decoder.width = c.encoder.d_prime;
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  mapper.validate();
  decoder.validate();
  if (mapper.d_in != encoder.d_out) throw InvalidArgument("mapper input width must equal encoder d_out");
  if (mapper.width != encoder.d_prime || decoder.width != encoder.d_prime) {
    throw InvalidArgument("mapper and decoder width must equal encoder d_prime");
  }
  if (mapper.channels != encoder.c_leads) throw InvalidArgument("mapper channels must equal c_leads");
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv = encoder.to_kv();
  kv.merge(decoder.to_kv());
  kv.set("mapper.layers", std::to_string(mapper.layers));
  kv.set("mapper.heads", std::to_string(mapper.heads));
  kv.set("mapper.use_transformer", mapper.use_transformer ? "true" : "false");
  kv.set("model.use_lead_positional", use_lead_positional ? "true" : "false");
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig c;
  c.encoder = EncoderConfig::from_kv(kv);
  c.mapper = MapperConfig::for_encoder(c.encoder);
  c.mapper.layers = static_cast<std::size_t>(kv.get_int("mapper.layers"));
  c.mapper.heads = static_cast<std::size_t>(kv.get_int("mapper.heads"));
  c.mapper.use_transformer = kv.get_bool("mapper.use_transformer");
  c.decoder = DecoderConfig::from_kv(kv);
  c.use_lead_positional = kv.get_bool("model.use_lead_positional");
  c.validate();
  return c;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model{config, {}};
  auto group = [&](const std::vector<ParamSpec>& specs, std::uint64_t salt) {
    Rng rng(mix_seed({seed, salt}));
    materialize(model.params, specs, rng);
  };
  group(encoder_specs(config.encoder), 1);
  group(lead_positional_specs(config.encoder), 2);
  group(mapper_specs(config.mapper), 3);
  group(decoder_specs(config.decoder), 4);
  group(decoder_lora_specs(config.decoder), 5);
  return model;
}

void copy_group(ParamStore& target, const ParamStore& source, std::string_view prefix) {
  const auto names = source.names_with_prefix(prefix);
  if (names.empty()) throw InvalidArgument("no parameters under \"" + std::string(prefix) + "\"");
  for (const auto& name : names) target.set(name, source.value(name));
}

std::filesystem::path manifest_path(const std::filesystem::path& artifact) {
  return std::filesystem::path(artifact.string() + ".manifest");
}

void write_manifest(const std::filesystem::path& artifact, const KeyValues& fields) {
  KeyValues kv = fields;
  kv.set("artifact.file", artifact.filename().string());
  kv.set("artifact.sha1", git_blob_sha1(read_file(artifact)));
  write_file(manifest_path(artifact), kv.format());
}

KeyValues read_manifest(const std::filesystem::path& artifact) {
  const auto path = manifest_path(artifact);
  if (!std::filesystem::exists(path)) throw IoError("missing manifest " + path.string());
  KeyValues kv = KeyValues::load(path);
  if (kv.has("artifact.sha1") && kv.get("artifact.sha1") != git_blob_sha1(read_file(artifact))) {
    throw FormatError(artifact.string() + " does not match the hash in its manifest");
  }
  return kv;
}

void save_model(const Model& model, const std::filesystem::path& path, const KeyValues& extra) {
  save_qhpt(model.params.values(), path);
  KeyValues kv = model.config.to_kv();
  kv.merge(extra);
  kv.set("artifact.kind", "model");
  write_manifest(path, kv);
}

Model load_model(const std::filesystem::path& path) {
  const KeyValues kv = read_manifest(path);
  Model model = init_model(ModelConfig::from_kv(kv), 0);
  const NamedTensors tensors = load_qhpt(path);
  if (tensors.size() != model.params.size()) {
    throw FormatError(path.string() + ": expected " + std::to_string(model.params.size()) + " tensors, found " +
                      std::to_string(tensors.size()));
  }
  const std::size_t expected = model.params.size();
  model.params.assign(tensors);
  if (model.params.size() != expected) throw FormatError(path.string() + ": parameter names do not match its config");
  return model;
}

}  // namespace ecgqa

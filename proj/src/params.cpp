#include "ecgqa/params.hpp"

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"

namespace ecgqa {

void ParamStore::add(std::string name, Tensor value) {
  if (entries_.contains(name)) throw InvalidArgument("duplicate parameter " + name);
  Tensor grad(value.shape());
  entries_.emplace(std::move(name), Entry{std::move(value), std::move(grad)});
}

void ParamStore::set(std::string_view name, Tensor value) {
  auto& e = entry(name);
  require_same_shape(e.value, value, "ParamStore::set");
  e.value = std::move(value);
}

const ParamStore::Entry& ParamStore::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter " + std::string(name));
  return it->second;
}

ParamStore::Entry& ParamStore::entry(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter " + std::string(name));
  return it->second;
}

const Tensor& ParamStore::value(std::string_view name) const { return entry(name).value; }
Tensor& ParamStore::value(std::string_view name) { return entry(name).value; }
const Tensor& ParamStore::grad(std::string_view name) const { return entry(name).grad; }
Tensor& ParamStore::grad(std::string_view name) { return entry(name).grad; }

void ParamStore::zero_grads() {
  for (auto& [_, e] : entries_) std::fill(e.grad.data().begin(), e.grad.data().end(), 0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) {
    if (std::string_view(name).starts_with(prefix)) out.push_back(name);
  }
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::round_to_f32() {
  for (auto& [_, e] : entries_) {
    for (double& v : e.value.data()) v = static_cast<float>(v);
  }
}

NamedTensors ParamStore::values() const {
  NamedTensors out;
  for (const auto& [name, e] : entries_) out.emplace(name, e.value);
  return out;
}

void ParamStore::assign(const NamedTensors& values) {
  for (const auto& [name, t] : values) {
    if (contains(name)) {
      set(name, t);
    } else {
      add(name, t);
    }
  }
}

std::size_t count_parameters(const std::vector<ParamSpec>& specs) {
  std::size_t n = 0;
  for (const auto& s : specs) n += shape_size(s.shape);
  return n;
}

void materialize(ParamStore& store, const std::vector<ParamSpec>& specs, Rng& rng) {
  for (const auto& s : specs) {
    Tensor t(s.shape);
    switch (s.init) {
      case ParamSpec::Init::kNormal:
        for (double& v : t.data()) v = rng.normal(0.0, s.stddev);
        break;
      case ParamSpec::Init::kOnes:
        for (double& v : t.data()) v = 1.0;
        break;
      case ParamSpec::Init::kZeros:
        break;
    }
    store.add(s.name, std::move(t));
  }
  store.round_to_f32();
}

std::string encode_qhpt(const NamedTensors& tensors) {
  ByteWriter w;
  w.magic("QHPT");
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

NamedTensors decode_qhpt(std::string_view bytes) {
  ByteReader r(bytes, "QHPT");
  r.expect_magic("QHPT");
  const std::uint32_t count = r.u32();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name(r.bytes(name_len));
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("QHPT: bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw FormatError("QHPT: zero extent for " + name);
    }
    const std::size_t n = shape_size(shape);
    if (r.remaining() < n * 4) throw FormatError("QHPT: truncated payload for " + name);
    std::vector<double> data(n);
    for (double& v : data) v = r.f32();
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw FormatError("QHPT: duplicate tensor " + name);
    }
  }
  r.expect_end();
  return out;
}

void save_qhpt(const NamedTensors& tensors, const std::filesystem::path& path) {
  write_file(path, encode_qhpt(tensors));
}

NamedTensors load_qhpt(const std::filesystem::path& path) { return decode_qhpt(read_file(path)); }

}  // namespace ecgqa

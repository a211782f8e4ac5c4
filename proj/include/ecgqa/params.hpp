#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ecgqa/rng.hpp"
#include "ecgqa/tensor.hpp"

namespace ecgqa {

using NamedTensors = std::map<std::string, Tensor, std::less<>>;

/// Named parameters with matching gradient accumulators, iterated by name.
///
/// Mutation (gradient accumulation, optimizer steps) needs exclusive access;
/// concurrent const access is safe.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  void set(std::string_view name, Tensor value);
  bool contains(std::string_view name) const { return entries_.contains(name); }

  const Tensor& value(std::string_view name) const;
  Tensor& value(std::string_view name);
  const Tensor& grad(std::string_view name) const;
  Tensor& grad(std::string_view name);

  void zero_grads();
  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(std::string_view prefix) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  /// Rounds every value to the nearest float so that an f32 checkpoint
  /// reproduces the store exactly.
  void round_to_f32();

  NamedTensors values() const;
  void assign(const NamedTensors& values);

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
  };
  const Entry& entry(std::string_view name) const;
  Entry& entry(std::string_view name);

  std::map<std::string, Entry, std::less<>> entries_;
};

/// Shape-only description of a parameter, used to audit large presets
/// without allocating them.
struct ParamSpec {
  std::string name;
  Shape shape;
  enum class Init { kNormal, kZeros, kOnes } init = Init::kNormal;
  double stddev = 0.02;
};

std::size_t count_parameters(const std::vector<ParamSpec>& specs);
void materialize(ParamStore& store, const std::vector<ParamSpec>& specs, Rng& rng);

// QHPT container: "QHPT", u32 count, then per tensor u32 name length, UTF-8
// name, u32 rank, rank x u32 extents, f32 little-endian payload.
std::string encode_qhpt(const NamedTensors& tensors);
NamedTensors decode_qhpt(std::string_view bytes);
void save_qhpt(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_qhpt(const std::filesystem::path& path);

}  // namespace ecgqa

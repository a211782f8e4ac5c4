#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace ecgqa {

/// Flat key=value settings. Blank lines and '#' comments are ignored;
/// keys are kept sorted so serialization is stable.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  bool has(std::string_view key) const { return entries_.contains(std::string(key)); }
  const std::string& get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key) const;
  long long get_int(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  void merge(const KeyValues& overrides);
  std::string format() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// Shortest decimal that round-trips the double.
std::string format_number(double v);

}  // namespace ecgqa

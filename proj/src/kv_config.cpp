#include "ecgqa/kv_config.hpp"

#include <charconv>
#include <sstream>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"

namespace ecgqa {

namespace {
std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}
}  // namespace

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(line_no) + ": empty key");
    kv.set(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) { return parse(read_file(path)); }

const std::string& KeyValues::get(std::string_view key) const {
  auto it = entries_.find(std::string(key));
  if (it == entries_.end()) throw InvalidArgument("missing config key " + std::string(key));
  return it->second;
}

std::string KeyValues::get_or(std::string_view key, std::string fallback) const {
  auto it = entries_.find(std::string(key));
  return it == entries_.end() ? fallback : it->second;
}

double KeyValues::get_double(std::string_view key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + std::string(key) + ": not a number: " + v);
  }
}

long long KeyValues::get_int(std::string_view key) const {
  const auto& v = get(key);
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw InvalidArgument("config key " + std::string(key) + ": not an integer: " + v);
  }
  return out;
}

bool KeyValues::get_bool(std::string_view key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument("config key " + std::string(key) + ": not a boolean: " + v);
}

void KeyValues::merge(const KeyValues& overrides) {
  for (const auto& [k, v] : overrides.entries_) entries_[k] = v;
}

std::string KeyValues::format() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace ecgqa

#pragma once

// Recorded-output fixtures. A missing golden file fails the test; set
// ECGQA_UPDATE_GOLDEN=1 to (re)write them from the current build.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ecgqa/tensor.hpp"

namespace golden {

inline std::filesystem::path path_of(const std::string& name) {
  return std::filesystem::path(ECGQA_GOLDEN_DIR) / name;
}

inline void check_text(const std::string& name, const std::string& actual) {
  const auto path = path_of(name);
  if (const char* env = std::getenv("ECGQA_UPDATE_GOLDEN"); env && std::string(env) == "1") {
    std::ofstream(path, std::ios::binary) << actual;
    MESSAGE("wrote golden " << path.string());
    return;
  }
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing golden file " << path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == actual);
}

// Values are printed with %.17g so the golden pins every bit of a double.
inline std::string format_values(std::span<const double> values) {
  std::string out;
  char buf[40];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out += buf;
  }
  return out;
}

// Numeric goldens allow 1e-9 relative drift so that a change in summation
// order inside a GEMM does not invalidate them; exact reproducibility is
// checked separately by running the same computation twice.
inline void check_values(const std::string& name, std::span<const double> values) {
  const auto path = path_of(name);
  if (const char* env = std::getenv("ECGQA_UPDATE_GOLDEN"); env && std::string(env) == "1") {
    check_text(name, format_values(values));
    return;
  }
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing golden file " << path.string());
  std::vector<double> expected;
  for (double v; in >> v;) expected.push_back(v);
  REQUIRE(expected.size() == values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    CAPTURE(i);
    CHECK(std::abs(values[i] - expected[i]) <= 1e-9 * (1.0 + std::abs(expected[i])));
  }
}

}  // namespace golden

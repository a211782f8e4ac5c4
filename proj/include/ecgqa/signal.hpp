#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ecgqa {

inline constexpr std::size_t kLeadCount = 12;

inline constexpr std::array<std::string_view, kLeadCount> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

inline constexpr std::uint32_t kCanonicalRate = 500;
inline constexpr std::size_t kCanonicalLength = 5000;

using LeadMask = std::array<bool, kLeadCount>;

/// A 12-lead recording: 12 rows of T millivolt samples at `rate` Hz.
///
/// Rows are stored contiguously (lead-major). A masked lead is always all-zero;
/// the constructor rejects records that violate this.
class EcgRecord {
 public:
  EcgRecord(std::uint32_t rate, std::size_t length);
  EcgRecord(std::uint32_t rate, std::vector<float> samples, LeadMask mask = {});

  std::uint32_t rate() const { return rate_; }
  std::size_t length() const { return length_; }
  const LeadMask& mask() const { return mask_; }
  bool is_masked(std::size_t lead) const { return mask_.at(lead); }
  std::size_t masked_count() const;

  std::span<const float> samples() const { return samples_; }
  std::span<const float> lead(std::size_t i) const;
  std::span<float> lead(std::size_t i);

  bool is_canonical() const { return rate_ == kCanonicalRate && length_ == kCanonicalLength; }

  bool operator==(const EcgRecord&) const = default;

 private:
  std::uint32_t rate_;
  std::size_t length_;
  std::vector<float> samples_;
  LeadMask mask_{};
};

/// Linear interpolation onto a uniform grid at `target_rate`.
/// Output length is round(T * target_rate / rate); the mask is carried over.
EcgRecord resample(const EcgRecord& record, int target_rate);

/// Masks each lead independently with probability `p`, zeroing masked rows.
/// Draws come from Rng(seed), one uniform per lead in lead order.
EcgRecord mask_leads(const EcgRecord& record, double p, std::uint64_t seed);

// ECGR fixture format: "ECGR", u32 version=1, u32 rate, u32 T,
// 12*T f32 (row-major), 12 mask bytes. All little-endian.
std::string encode_ecgr(const EcgRecord& record);
EcgRecord decode_ecgr(std::string_view bytes);
void write_ecg(const EcgRecord& record, const std::filesystem::path& path);
EcgRecord read_ecg(const std::filesystem::path& path);

}  // namespace ecgqa

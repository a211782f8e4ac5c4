#include "ecgqa/signal.hpp"

#include <cmath>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

EcgRecord::EcgRecord(std::uint32_t rate, std::size_t length)
    : EcgRecord(rate, std::vector<float>(kLeadCount * length, 0.0F)) {}

EcgRecord::EcgRecord(std::uint32_t rate, std::vector<float> samples, LeadMask mask)
    : rate_(rate), length_(samples.size() / kLeadCount), samples_(std::move(samples)), mask_(mask) {
  if (rate_ == 0) throw InvalidArgument("sampling rate must be positive");
  if (length_ == 0 || samples_.size() != kLeadCount * length_) {
    throw ShapeError("ECG record needs 12 equal, non-empty rows; got " +
                     std::to_string(samples_.size()) + " samples");
  }
  for (std::size_t i = 0; i < kLeadCount; ++i) {
    if (!mask_[i]) continue;
    for (float v : lead(i)) {
      if (v != 0.0F) {
        throw InvalidArgument("masked lead " + std::string(kLeadNames[i]) + " has non-zero samples");
      }
    }
  }
}

std::size_t EcgRecord::masked_count() const {
  std::size_t n = 0;
  for (bool m : mask_) n += m ? 1 : 0;
  return n;
}

std::span<const float> EcgRecord::lead(std::size_t i) const {
  return std::span<const float>(samples_).subspan(i * length_, length_);
}

std::span<float> EcgRecord::lead(std::size_t i) {
  return std::span<float>(samples_).subspan(i * length_, length_);
}

EcgRecord resample(const EcgRecord& record, int target_rate) {
  if (target_rate <= 0) throw InvalidArgument("target rate must be positive");
  const auto target = static_cast<std::uint32_t>(target_rate);
  if (target == record.rate()) return record;

  const std::size_t in_len = record.length();
  const double ratio = static_cast<double>(record.rate()) / target;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(in_len) * target / record.rate()));
  if (out_len == 0) throw InvalidArgument("resampled record would be empty");

  std::vector<float> out(kLeadCount * out_len);
  for (std::size_t l = 0; l < kLeadCount; ++l) {
    const auto src = record.lead(l);
    float* dst = out.data() + l * out_len;
    for (std::size_t j = 0; j < out_len; ++j) {
      const double pos = static_cast<double>(j) * ratio;
      auto lo = static_cast<std::size_t>(pos);
      if (lo >= in_len - 1) {
        dst[j] = src[in_len - 1];
        continue;
      }
      const double frac = pos - static_cast<double>(lo);
      const double a = src[lo];
      const double b = src[lo + 1];
      dst[j] = static_cast<float>(a + frac * (b - a));
    }
  }
  return EcgRecord(target, std::move(out), record.mask());
}

EcgRecord mask_leads(const EcgRecord& record, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("mask probability must lie in [0, 1]");
  Rng rng(seed);
  std::vector<float> samples(record.samples().begin(), record.samples().end());
  LeadMask mask = record.mask();
  const std::size_t len = record.length();
  for (std::size_t l = 0; l < kLeadCount; ++l) {
    if (rng.uniform() < p) {
      mask[l] = true;
      std::fill_n(samples.begin() + static_cast<std::ptrdiff_t>(l * len), len, 0.0F);
    }
  }
  return EcgRecord(record.rate(), std::move(samples), mask);
}

std::string encode_ecgr(const EcgRecord& record) {
  ByteWriter w;
  w.magic("ECGR");
  w.u32(1);
  w.u32(record.rate());
  w.u32(static_cast<std::uint32_t>(record.length()));
  for (float v : record.samples()) w.f32(v);
  for (bool m : record.mask()) w.u8(m ? 1 : 0);
  return w.buffer();
}

EcgRecord decode_ecgr(std::string_view bytes) {
  ByteReader r(bytes, "ECGR");
  r.expect_magic("ECGR");
  if (const auto version = r.u32(); version != 1) {
    throw FormatError("ECGR: unsupported version " + std::to_string(version));
  }
  const std::uint32_t rate = r.u32();
  const std::uint32_t length = r.u32();
  if (rate == 0 || length == 0) throw FormatError("ECGR: zero rate or length");
  if (r.remaining() != static_cast<std::size_t>(length) * kLeadCount * 4 + kLeadCount) {
    throw FormatError("ECGR: payload size does not match header");
  }
  std::vector<float> samples(kLeadCount * length);
  for (float& v : samples) v = r.f32();
  LeadMask mask{};
  for (bool& m : mask) {
    const auto b = r.u8();
    if (b > 1) throw FormatError("ECGR: mask byte must be 0 or 1");
    m = b == 1;
  }
  try {
    return EcgRecord(rate, std::move(samples), mask);
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("ECGR: ") + e.what());
  }
}

void write_ecg(const EcgRecord& record, const std::filesystem::path& path) {
  write_file(path, encode_ecgr(record));
}

EcgRecord read_ecg(const std::filesystem::path& path) { return decode_ecgr(read_file(path)); }

}  // namespace ecgqa

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ecgqa {

struct IndexEntry {
  std::uint64_t id;
  std::vector<float> vector;  // unit norm
  std::string report;
};

struct RetrievedReport {
  std::uint64_t id;
  double score;  // cosine similarity
  std::string report;
};

/// Hits in descending score order (ties: smaller id first).
struct RetrievedReports {
  std::vector<RetrievedReport> hits;
};

inline constexpr std::size_t kDefaultTopK = 3;

/// Exhaustive cosine-similarity index over (embedding, report) pairs.
///
/// Vectors are normalized on insert, so a search is a dot product scan plus a
/// bounded heap. Concurrent const calls are safe; add() needs exclusive access.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim);

  std::uint64_t add(std::span<const double> embedding, std::string report);
  RetrievedReports search(std::span<const double> query, std::size_t k = kDefaultTopK) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }

  // QHIX: "QHIX", u32 version=1, u32 dim, u64 count, then per entry u64 id,
  // dim × f32, u32 report byte length, UTF-8 report. Little-endian.
  std::string serialize() const;
  static VectorIndex deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

 private:
  std::size_t dim_;
  std::uint64_t next_id_ = 0;
  std::vector<IndexEntry> entries_;
};

}  // namespace ecgqa

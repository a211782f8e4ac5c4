#include "ecgqa/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"

namespace ecgqa {

VectorIndex::VectorIndex(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw InvalidArgument("index dimension must be positive");
}

std::uint64_t VectorIndex::add(std::span<const double> embedding, std::string report) {
  if (embedding.size() != dim_) {
    throw ShapeError("index holds " + std::to_string(dim_) + "-dim vectors, got " +
                     std::to_string(embedding.size()));
  }
  double norm = 0.0;
  for (double v : embedding) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw InvalidArgument("cannot index a zero or non-finite vector");
  std::vector<float> unit(dim_);
  for (std::size_t i = 0; i < dim_; ++i) unit[i] = static_cast<float>(embedding[i] / norm);
  const std::uint64_t id = next_id_++;
  entries_.push_back(IndexEntry{id, std::move(unit), std::move(report)});
  return id;
}

RetrievedReports VectorIndex::search(std::span<const double> query, std::size_t k) const {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  if (query.size() != dim_) {
    throw ShapeError("query has " + std::to_string(query.size()) + " dims, index has " + std::to_string(dim_));
  }
  if (entries_.empty()) throw EmptyIndexError();
  double norm = 0.0;
  for (double v : query) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw InvalidArgument("query vector is zero");

  struct Candidate {
    double score;
    std::uint64_t id;
    std::size_t pos;
  };
  // "Better" = higher score, then smaller id. The heap top is the worst kept.
  auto better = [](const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(better)> heap(better);
  for (std::size_t pos = 0; pos < entries_.size(); ++pos) {
    const auto& e = entries_[pos];
    double dot = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) dot += static_cast<double>(e.vector[i]) * query[i];
    Candidate c{dot / norm, e.id, pos};
    if (heap.size() < k) {
      heap.push(c);
    } else if (better(c, heap.top())) {
      heap.pop();
      heap.push(c);
    }
  }
  std::vector<Candidate> kept;
  kept.reserve(heap.size());
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::reverse(kept.begin(), kept.end());
  RetrievedReports out;
  for (const auto& c : kept) out.hits.push_back({c.id, c.score, entries_[c.pos].report});
  return out;
}

std::string VectorIndex::serialize() const {
  ByteWriter w;
  w.magic("QHIX");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u64(entries_.size());
  for (const auto& e : entries_) {
    w.u64(e.id);
    for (float v : e.vector) w.f32(v);
    w.u32(static_cast<std::uint32_t>(e.report.size()));
    w.bytes(e.report);
  }
  return w.buffer();
}

VectorIndex VectorIndex::deserialize(std::string_view bytes) {
  ByteReader r(bytes, "QHIX");
  r.expect_magic("QHIX");
  if (const auto version = r.u32(); version != 1) {
    throw FormatError("QHIX: unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = r.u32();
  if (dim == 0) throw FormatError("QHIX: zero dimension");
  const std::uint64_t count = r.u64();
  // Each entry needs at least id + vector + length bytes.
  if (count > r.remaining() / (12 + 4ULL * dim)) throw FormatError("QHIX: count exceeds payload");
  VectorIndex index(dim);
  index.entries_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.id = r.u64();
    if (!index.entries_.empty() && e.id <= index.entries_.back().id) {
      throw FormatError("QHIX: ids must be strictly increasing");
    }
    e.vector.resize(dim);
    for (float& v : e.vector) v = r.f32();
    const std::uint32_t len = r.u32();
    e.report = std::string(r.bytes(len));
    index.next_id_ = e.id + 1;
    index.entries_.push_back(std::move(e));
  }
  r.expect_end();
  return index;
}

void VectorIndex::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

VectorIndex VectorIndex::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

}  // namespace ecgqa

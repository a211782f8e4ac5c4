#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ecgqa/errors.hpp"
#include "ecgqa/rng.hpp"
#include "ecgqa/vector_index.hpp"

using namespace ecgqa;

namespace {

std::vector<double> random_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

// Full sort over every entry: score from the original double vectors, ties by id.
std::vector<std::pair<double, std::uint64_t>> sort_oracle(const std::vector<std::vector<double>>& stored,
                                                          const std::vector<double>& query) {
  auto unit = [](const std::vector<double>& v) {
    double n = 0;
    for (double x : v) n += x * x;
    std::vector<double> u(v);
    for (double& x : u) x /= std::sqrt(n);
    return u;
  };
  const auto q = unit(query);
  std::vector<std::pair<double, std::uint64_t>> all;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const auto e = unit(stored[i]);
    double dot = 0;
    for (std::size_t j = 0; j < q.size(); ++j) dot += e[j] * q[j];
    all.emplace_back(dot, i);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  return all;
}

}  // namespace

TEST_CASE("add normalizes and assigns monotone ids") {
  VectorIndex index(2);
  const double v[] = {3, 4};
  CHECK(index.add(v, "a") == 0);
  CHECK(index.add(v, "b") == 1);
  CHECK(index.entries()[0].vector[0] == 0.6f);
  CHECK(index.entries()[0].vector[1] == 0.8f);

  VectorIndex four(4);
  const double five[] = {1, 2, 3, 4, 5};
  CHECK_THROWS_AS(four.add(five, "x"), ShapeError);
  const double zero[] = {0, 0, 0, 0};
  CHECK_THROWS_AS(four.add(zero, "x"), InvalidArgument);
  const double q[] = {1, 0, 0, 0};
  CHECK_THROWS_AS(four.search(q), EmptyIndexError);
  CHECK_THROWS_AS(VectorIndex(0), InvalidArgument);
}

TEST_CASE("self and orthogonal similarity") {
  VectorIndex index(3);
  const double a[] = {1, 2, 2}, b[] = {2, -1, 0}, c[] = {0, 0, 5};
  index.add(a, "a");
  index.add(b, "b");
  index.add(c, "c");
  const auto hits = index.search(a, 3).hits;
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].id == 0);
  CHECK(std::abs(hits[0].score - 1.0) < 1e-6);
  CHECK(hits[0].report == "a");
  CHECK(hits.back().id == 1);
  CHECK(std::abs(hits.back().score) < 1e-6);
  CHECK(index.search(a, 10).hits.size() == 3);
  CHECK_THROWS_AS(index.search(a, 0), InvalidArgument);
}

TEST_CASE("ties break toward the smaller id") {
  VectorIndex index(2);
  const double v[] = {1, 1}, w[] = {1, -1};
  index.add(w, "w");
  index.add(v, "v1");
  index.add(v, "v2");
  index.add(v, "v3");
  const auto hits = index.search(v, 2).hits;
  CHECK(hits[0].id == 1);
  CHECK(hits[1].id == 2);
}

TEST_CASE("search equals the exhaustive sort oracle") {
  Rng sizes(2024);
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(mix_seed({17, trial}));
    const std::size_t n = trial < 5 ? 10000 : 1 + static_cast<std::size_t>(std::exp(sizes.uniform() * std::log(10000.0)));
    const std::size_t dim = 2 + rng.below(15);
    VectorIndex index(dim);
    std::vector<std::vector<double>> stored;
    for (std::size_t i = 0; i < n; ++i) {
      // A sprinkling of exact duplicates exercises the tie rule.
      stored.push_back(i > 0 && rng.below(20) == 0 ? stored[rng.below(i)] : random_vector(dim, rng));
      index.add(stored.back(), std::to_string(i));
    }
    for (int qn = 0; qn < 3; ++qn) {
      const auto query = qn == 0 ? stored[rng.below(n)] : random_vector(dim, rng);
      const auto oracle = sort_oracle(stored, query);
      for (std::size_t k : {1, 3, 10}) {
        const auto hits = index.search(query, k).hits;
        REQUIRE(hits.size() == std::min(k, n));
        for (std::size_t i = 0; i < hits.size(); ++i) {
          CHECK(std::abs(hits[i].score - oracle[i].first) <= 1e-6);
          // The index stores f32 vectors; ids may only differ where the oracle
          // scores themselves are within that rounding.
          if (hits[i].id != oracle[i].second) {
            const auto it = std::find_if(oracle.begin(), oracle.end(),
                                         [&](const auto& p) { return p.second == hits[i].id; });
            CHECK(std::abs(it->first - oracle[i].first) <= 1e-6);
          }
          CHECK(hits[i].report == std::to_string(hits[i].id));
          if (i > 0) CHECK(hits[i - 1].score >= hits[i].score);
        }
      }
    }
  }
}

TEST_CASE("persistence round trips bit-exactly") {
  Rng rng(8);
  VectorIndex index(6);
  for (int i = 0; i < 3; ++i) index.add(random_vector(6, rng), "report " + std::to_string(i) + " \xc3\xa9");
  const std::string bytes = index.serialize();
  const VectorIndex back = VectorIndex::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.entries()[i].id == index.entries()[i].id);
    CHECK(back.entries()[i].vector == index.entries()[i].vector);
    CHECK(back.entries()[i].report == index.entries()[i].report);
  }
  const auto q = random_vector(6, rng);
  const auto h1 = index.search(q).hits, h2 = back.search(q).hits;
  REQUIRE(h1.size() == h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i].id == h2[i].id);
    CHECK(h1[i].score == h2[i].score);
  }
  // New ids continue after the loaded ones.
  VectorIndex grown = VectorIndex::deserialize(bytes);
  CHECK(grown.add(q, "next") == 3);

  const VectorIndex empty(4);
  const VectorIndex empty_back = VectorIndex::deserialize(empty.serialize());
  CHECK(empty_back.empty());
  CHECK(empty_back.dim() == 4);

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() - 1}) {
    CHECK_THROWS_AS(VectorIndex::deserialize(bytes.substr(0, cut)), FormatError);
  }
  std::string bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(VectorIndex::deserialize(bad), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "ecgqa_index_roundtrip.qhix";
  index.save(path);
  CHECK(VectorIndex::load(path).serialize() == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(VectorIndex::load(path), IoError);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "golden.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/metrics.hpp"
#include "ecgqa/rng.hpp"

using namespace ecgqa;

namespace {

// Mann-Whitney U via average ranks, independent of the pairwise definition.
double mann_whitney_auc(const std::vector<ScoredLabel>& items) {
  std::vector<std::size_t> idx(items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return items[a].score < items[b].score; });
  std::vector<double> rank(items.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && items[idx[j]].score == items[idx[i]].score) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) rank[idx[k]] = avg;
    i = j;
  }
  double pos_ranks = 0;
  double npos = 0, nneg = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].positive) {
      pos_ranks += rank[i];
      ++npos;
    } else {
      ++nneg;
    }
  }
  const double u = pos_ranks - npos * (npos + 1) / 2.0;
  return u / (npos * nneg);
}

}  // namespace

TEST_CASE("exact match normalization") {
  CHECK(exact_match("yes", {"yes"}) == 1.0);
  CHECK(exact_match("Yes.", {"yes"}) == 1.0);
  CHECK(exact_match("  not   sure ", {"not sure"}) == 1.0);
  CHECK(exact_match("lead ii, lead i", {"lead i", "lead ii"}) == 1.0);
  CHECK(exact_match("lead II, lead I", {"lead I", "lead II"}) == 1.0);
  CHECK(exact_match("lead i", {"lead i", "lead ii"}) == 0.0);
  CHECK(exact_match("no", {"yes"}) == 0.0);
}

TEST_CASE("bleu1 hand examples") {
  CHECK(bleu1("the cat sat", "the cat sat") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bleu1("the the the", "the cat") == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(bleu1("cat", "the cat") == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  CHECK(bleu1("", "the cat") == 0.0);
}

TEST_CASE("rouge_l hand examples") {
  CHECK(rouge_l("a b c", "a b c") == doctest::Approx(1.0));
  CHECK(rouge_l("a b", "c d") == 0.0);
  CHECK(rouge_l("", "") == 0.0);
  // LCS 3, P 3/4, R 1, beta^2 1.44: 2.44·0.75 / (1 + 1.44·0.75).
  const double p = 0.75, r = 1.0, b2 = 1.44;
  CHECK(std::abs(rouge_l("a b c d", "a c d") - (1 + b2) * p * r / (r + b2 * p)) < 1e-12);
  CHECK(std::abs(rouge_l("a b c d", "a c d") - 0.879808) < 1e-6);
}

TEST_CASE("meteor hand examples") {
  // m = 3, one chunk: penalty 0.5/27.
  CHECK(std::abs(meteor_simplified("a b c", "a b c") - (1.0 - 0.5 / 27.0)) < 1e-12);
  CHECK(std::abs(meteor_simplified("a b c", "a b c") - 0.981481) < 1e-6);
  CHECK(meteor_simplified("a b", "c d") == 0.0);
  CHECK(std::abs(meteor_simplified("b a", "a b") - 0.5) < 1e-12);
}

TEST_CASE("macro auc examples and Mann-Whitney oracle") {
  std::vector<ScoredLabel> ex = {{0.1, false}, {0.4, false}, {0.35, true}, {0.8, true}};
  CHECK(std::abs(binary_auc(ex) - 0.75) < 1e-12);
  CHECK(macro_auc({{{0.1, false}, {0.9, true}}}).value == 1.0);
  CHECK(macro_auc({{{0.9, false}, {0.1, true}}}).value == 0.0);
  CHECK_THROWS_AS(macro_auc({{{0.9, true}}}, true), InvalidArgument);
  auto lenient = macro_auc({{{0.9, true}}, {{0.2, false}, {0.4, true}}});
  CHECK(lenient.used_classes == 1);
  CHECK(lenient.skipped == std::vector<std::size_t>{0});

  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    std::vector<ScoredLabel> items;
    for (std::size_t i = 0; i < n; ++i) {
      items.push_back({static_cast<double>(rng.below(5)) / 4.0, rng.uniform() < 0.5});
    }
    items[0].positive = true;
    items[1].positive = false;
    CHECK(std::abs(binary_auc(items) - mann_whitney_auc(items)) < 1e-12);
  }
}

TEST_CASE("metric ranges and identity") {
  Rng rng(5);
  const char* words[] = {"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string p, r;
    for (std::size_t i = 0, n = 1 + rng.below(6); i < n; ++i) p += std::string(words[rng.below(5)]) + " ";
    for (std::size_t i = 0, n = 1 + rng.below(6); i < n; ++i) r += std::string(words[rng.below(5)]) + " ";
    for (double v : {bleu1(p, r), rouge_l(p, r), meteor_simplified(p, r)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(bleu1(p, p) == doctest::Approx(1.0));
    CHECK(rouge_l(p, p) == doctest::Approx(1.0));
  }
  const MetricValues v = score_record({QuestionType::kSingleQuery, "lead ii, lead i", {"lead I", "lead II"}});
  CHECK(v.em_acc == 1.0);
  CHECK(v.bleu1 == doctest::Approx(1.0));
  CHECK(v.rouge_l == doctest::Approx(1.0));
}

TEST_CASE("aggregate uses unweighted type means") {
  std::vector<EvalRecord> recs;
  auto add = [&](QuestionType t, int right, int total) {
    for (int i = 0; i < total; ++i) recs.push_back({t, i < right ? "yes" : "no", {"yes"}});
  };
  add(QuestionType::kSingleVerify, 9, 10);
  add(QuestionType::kSingleChoose, 3, 5);
  add(QuestionType::kSingleQuery, 3, 10);
  const auto report = aggregate(recs);
  CHECK(report.per_type.at(QuestionType::kSingleVerify).em_acc == doctest::Approx(0.9));
  CHECK(report.per_type.at(QuestionType::kSingleChoose).em_acc == doctest::Approx(0.6));
  CHECK(report.per_type.at(QuestionType::kSingleQuery).em_acc == doctest::Approx(0.3));
  CHECK(report.average.em_acc == doctest::Approx(0.6));

  std::vector<EvalRecord> missing = {{QuestionType::kSingleVerify, "yes", {"yes"}}};
  CHECK_THROWS_AS(aggregate(missing), IncompleteEvalError);
}

TEST_CASE("eval record json round trip") {
  const EvalRecord r{QuestionType::kSingleChoose, "sinus rhythm", {"sinus rhythm"}};
  const EvalRecord back = parse_eval_record(format_eval_record(r));
  CHECK(back.qtype == r.qtype);
  CHECK(back.prediction == r.prediction);
  CHECK(back.gold == r.gold);
  CHECK_THROWS_AS(parse_eval_record("{\"qtype\":\"single-verify\"}"), FormatError);
}

TEST_CASE("thirty record fixture report") {
  std::ifstream in(golden::path_of("eval_30.jsonl"));
  REQUIRE(in.good());
  std::vector<EvalRecord> recs;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) recs.push_back(parse_eval_record(line));
  REQUIRE(recs.size() == 30);
  const auto report = aggregate(recs);
  // counted by hand from the fixture
  CHECK(report.per_type.at(QuestionType::kSingleVerify).em_acc == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(report.per_type.at(QuestionType::kSingleChoose).em_acc == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(report.per_type.at(QuestionType::kSingleQuery).em_acc == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(report.average.em_acc == doctest::Approx(1.7 / 3.0).epsilon(1e-12));
  golden::check_text("eval_30_report.json", format_report_json(report));
  golden::check_text("eval_30_report.txt", format_report_table(report));
}

#include <doctest.h>

#include <algorithm>
#include <map>

#include "golden.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/prompting.hpp"

using namespace ecgqa;

namespace {

QaItem make_item(QuestionType t, std::string q, std::vector<std::string> attrs = {}) {
  QaItem item;
  item.qtype = t;
  item.question = std::move(q);
  item.attributes = std::move(attrs);
  item.gold_answers = {"yes"};
  item.ecg_ref = "ecgs/ecg_0000.ecgr";
  return item;
}

using Strings = std::vector<std::string>;

RetrievedReports three_hits() {
  return {{{4, 0.9, "first"}, {1, 0.5, "second"}, {7, 0.1, "third"}}};
}

}  // namespace

TEST_CASE("option table rows") {
  using enum QuestionType;
  CHECK(candidate_options(make_item(kSingleVerify, "Does this ECG show sinus rhythm?")).options ==
        Strings{"yes", "no", "not sure"});
  CHECK(candidate_options(make_item(kSingleChoose, "Which rhythm?", {"sinus rhythm", "atrial fibrillation"})).options ==
        Strings{"sinus rhythm", "atrial fibrillation", "none"});
  CHECK(candidate_options(make_item(kSingleQuery, "What leads show st elevation?")).options ==
        Strings{"lead I", "lead II", "lead III", "lead aVR", "lead aVL", "lead aVF", "lead V1", "lead V2", "lead V3",
                "lead V4", "lead V5", "lead V6"});
  CHECK(candidate_options(make_item(kSingleQuery, "What numeric features are outside the normal range?")).options ==
        Strings{"rr interval", "p duration", "pr interval", "qrs duration", "qt interval", "qt corrected"});
  CHECK(candidate_options(make_item(kSingleQuery, "What range is the qt interval?")).options ==
        Strings{"below the normal range", "within the normal range", "above the normal range"});
  CHECK(candidate_options(make_item(kSingleQuery, "Which rhythm is present?", {"a", "b", "a"})).options ==
        Strings{"a", "b", "none"});
  // Prefix matching is case-sensitive.
  CHECK(candidate_options(make_item(kSingleQuery, "what leads show q waves?", {"x"})).options == Strings{"x", "none"});
  // Pure: same item, same list.
  const auto item = make_item(kSingleChoose, "Which?", {"p", "q"});
  CHECK(candidate_options(item).options == candidate_options(item).options);
}

TEST_CASE("question types parse") {
  CHECK(parse_question_type("single-verify") == QuestionType::kSingleVerify);
  CHECK(parse_question_type("single-choose") == QuestionType::kSingleChoose);
  CHECK(parse_question_type("single-query") == QuestionType::kSingleQuery);
  CHECK_THROWS_AS(parse_question_type("multi-verify"), InvalidArgument);
  QaItem bad = make_item(QuestionType::kSingleVerify, "Q");
  bad.qtype = static_cast<QuestionType>(9);
  CHECK_THROWS_AS(candidate_options(bad), InvalidArgument);
}

TEST_CASE("QA JSONL round trip") {
  const auto item = make_item(QuestionType::kSingleChoose, "Which rhythm, \"a\" or b?", {"a", "b"});
  const auto back = parse_qa_item(format_qa_item(item));
  CHECK(back.question == item.question);
  CHECK(back.qtype == item.qtype);
  CHECK(back.attributes == item.attributes);
  CHECK(back.gold_answers == item.gold_answers);
  CHECK(back.ecg_ref == item.ecg_ref);
  CHECK_THROWS_AS(parse_qa_item("{not json"), FormatError);
  CHECK_THROWS_AS(parse_qa_item(R"({"question": "x"})"), FormatError);
}

TEST_CASE("shuffle is a seeded permutation") {
  CHECK(shuffle_options({{"only"}}, 5).options == Strings{"only"});
  const CandidateOptions abcd{{"a", "b", "c", "d"}};
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    auto out = shuffle_options(abcd, seed).options;
    std::sort(out.begin(), out.end());
    REQUIRE(out == abcd.options);
  }
  CHECK(shuffle_options(abcd, 77).options == shuffle_options(abcd, 77).options);
  std::string recorded;
  for (const auto& s : shuffle_options(abcd, 12345).options) recorded += s + "\n";
  golden::check_text("shuffle_seed_12345.txt", recorded);
}

TEST_CASE("shuffle is uniform over the 24 permutations") {
  const CandidateOptions abcd{{"a", "b", "c", "d"}};
  std::map<Strings, int> counts;
  const int draws = 120000;
  for (int i = 0; i < draws; ++i) ++counts[shuffle_options(abcd, prompt_seed(99, 3, static_cast<std::uint64_t>(i))).options];
  REQUIRE(counts.size() == 24);
  const double expected = draws / 24.0;
  double chi2 = 0;
  for (const auto& [perm, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
  // Upper 0.001 quantile of chi-square with 23 degrees of freedom.
  CHECK(chi2 < 49.728);
}

TEST_CASE("report selection") {
  const RetrievedReports one{{{3, 0.7, "only"}}};
  CHECK(select_report(one, {true, ReportChoice::kRandomOfThree, 1}) == "only");
  CHECK(select_report(three_hits(), DynamicPromptConfig::evaluation()) == "first");
  CHECK_FALSE(select_report(three_hits(), {true, ReportChoice::kNone, 1}).has_value());
  CHECK_FALSE(select_report(RetrievedReports{}, {true, ReportChoice::kNone, 1}).has_value());
  CHECK_THROWS_AS(select_report(RetrievedReports{}, DynamicPromptConfig::evaluation()), EmptyRetrievalError);
  CHECK_THROWS_AS(select_report(RetrievedReports{}, DynamicPromptConfig::training(3)), EmptyRetrievalError);

  std::map<std::string, int> freq;
  const int picks = 30000;
  for (int i = 0; i < picks; ++i) ++freq[*select_report(three_hits(), DynamicPromptConfig::training(prompt_seed(5, 0, i)))];
  for (const char* name : {"first", "second", "third"}) {
    const double f = freq[name] / static_cast<double>(picks);
    CAPTURE(name);
    CHECK(f >= 0.32);
    CHECK(f <= 0.35);
  }
  CHECK(parse_report_choice(to_string(ReportChoice::kFixedTopOne)) == ReportChoice::kFixedTopOne);
  CHECK_THROWS_AS(parse_report_choice("top-5"), InvalidArgument);
}

TEST_CASE("prompt rendering") {
  const auto tmpl = PromptTemplate::default_template();
  const auto item = make_item(QuestionType::kSingleVerify, "Does this ECG show atrial fibrillation?");
  const auto options = candidate_options(item);

  const std::string without = build_prompt(item, options, std::nullopt, tmpl);
  CHECK(without.find("<report>") == std::string::npos);
  CHECK(without.find("{") == std::string::npos);

  const std::string with = build_prompt(item, options, std::string("rhythm: sinus rhythm."), tmpl);
  CHECK(with.find("<report> rhythm: sinus rhythm. </report>") != std::string::npos);
  std::size_t lines = 0, pos = 0;
  while ((pos = with.find("Options:", pos)) != std::string::npos) {
    ++lines;
    ++pos;
  }
  CHECK(lines == 1);
  CHECK(with.find("Options: yes, no, not sure\n") != std::string::npos);
  // The question and each option appear verbatim exactly once.
  for (const std::string& s : {item.question, std::string("yes"), std::string("not sure")}) {
    const auto first = with.find(s);
    REQUIRE(first != std::string::npos);
    CHECK(with.find(s, first + 1) == std::string::npos);
  }
  CHECK(with.substr(with.size() - 7) == "Answer:");

  golden::check_text("prompt_verify_with_report.txt", with);
  golden::check_text("prompt_verify_without_report.txt", without);

  CHECK_THROWS_AS(PromptTemplate("Q: {question} {patient}").render("q", {"a"}, std::nullopt), TemplateError);
  CHECK_THROWS_AS(PromptTemplate("Q: {question").render("q", {"a"}, std::nullopt), TemplateError);
  CHECK_THROWS_AS(build_prompt(item, CandidateOptions{}, std::nullopt, tmpl), InvalidArgument);
}

TEST_CASE("template file matches the built-in default") {
  const auto path = std::filesystem::path(ECGQA_DATA_DIR) / "prompt_template_v1.txt";
  CHECK(PromptTemplate::load(path).text() == PromptTemplate::default_template().text());
}

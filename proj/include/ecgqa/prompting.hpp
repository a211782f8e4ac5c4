#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecgqa/vector_index.hpp"

namespace ecgqa {

enum class QuestionType { kSingleVerify, kSingleChoose, kSingleQuery };

std::string_view to_string(QuestionType type);
QuestionType parse_question_type(std::string_view text);

struct QaItem {
  std::string question;
  QuestionType qtype = QuestionType::kSingleVerify;
  std::vector<std::string> attributes;
  std::vector<std::string> gold_answers;
  std::string ecg_ref;
};

/// Reads the QA JSONL schema: ecg_ref, question_type, question, attributes, answers.
QaItem parse_qa_item(std::string_view json_line);
std::string format_qa_item(const QaItem& item);
std::vector<QaItem> load_qa_jsonl(const std::filesystem::path& path);

struct CandidateOptions {
  std::vector<std::string> options;
};

/// Option list for a question, following the construction rules:
///   verify                      → yes, no, not sure
///   choose                      → attributes, none
///   query "What leads ..."      → the 12 lead names
///   query "What numeric features ..." → the six interval features
///   query "What range ..."      → below/within/above the normal range
///   other query                 → attributes, none
/// Prefix matching is case-sensitive. Duplicates are dropped, first wins.
CandidateOptions candidate_options(const QaItem& item);

/// Seeded Fisher-Yates permutation.
CandidateOptions shuffle_options(const CandidateOptions& options, std::uint64_t seed);

enum class ReportChoice { kRandomOfThree, kFixedTopOne, kNone };

std::string_view to_string(ReportChoice choice);
ReportChoice parse_report_choice(std::string_view text);

/// Per-step prompt randomization.
struct DynamicPromptConfig {
  bool shuffle = true;
  ReportChoice report_choice = ReportChoice::kRandomOfThree;
  std::uint64_t seed = 0;

  static DynamicPromptConfig training(std::uint64_t seed) { return {true, ReportChoice::kRandomOfThree, seed}; }
  static DynamicPromptConfig evaluation() { return {false, ReportChoice::kFixedTopOne, 0}; }
};

/// Seed for one item at one training step.
std::uint64_t prompt_seed(std::uint64_t global_seed, std::uint64_t item_id, std::uint64_t step);

std::optional<std::string> select_report(const RetrievedReports& reports, const DynamicPromptConfig& config);

/// Prompt text with {report}, {question} and {options} placeholders.
///
/// {report} renders as "<report> ... </report>"; with no report, a line that
/// holds only the placeholder is dropped entirely. Options are joined by ", ".
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text);

  static PromptTemplate default_template();
  static PromptTemplate load(const std::filesystem::path& path);

  std::string render(std::string_view question, const std::vector<std::string>& options,
                     const std::optional<std::string>& report) const;
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

inline constexpr std::string_view kDefaultTemplateText =
    "You are a cardiology assistant. Answer the question about this ECG with one of the given options, using the "
    "retrieved report.\n"
    "Question: {question}\n"
    "Options: {options}\n"
    "{report}\n"
    "Answer:";

std::string build_prompt(const QaItem& item, const CandidateOptions& options, const std::optional<std::string>& report,
                         const PromptTemplate& tmpl);

}  // namespace ecgqa

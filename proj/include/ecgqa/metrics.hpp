#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ecgqa/prompting.hpp"

namespace ecgqa {

/// Lowercase, trim, collapse whitespace, strip one trailing period.
std::string normalize_answer(std::string_view text);
/// Normalized answers sorted and joined with ", ". A prediction is split on
/// commas first so that answer order does not matter.
std::string canonical_answer_set(const std::vector<std::string>& answers);

double exact_match(std::string_view prediction, const std::vector<std::string>& gold);

/// Metrics below work on normalize_text() word pieces.
double bleu1(std::string_view prediction, std::string_view reference);
double rouge_l(std::string_view prediction, std::string_view reference);
/// METEOR with exact unigram matching only: no stemming or synonyms.
double meteor_simplified(std::string_view prediction, std::string_view reference);

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

/// Pairwise AUC (ties count half). Throws InvalidArgument without both classes.
double binary_auc(const std::vector<ScoredLabel>& items);

struct MacroAucResult {
  double value = 0.0;
  std::size_t used_classes = 0;
  std::vector<std::size_t> skipped;  // classes lacking a positive or a negative
};

/// Unweighted mean of per-class AUCs. Degenerate classes are skipped, or
/// rejected with InvalidArgument when `strict`.
MacroAucResult macro_auc(const std::vector<std::vector<ScoredLabel>>& classes, bool strict = false);

struct EvalRecord {
  QuestionType qtype = QuestionType::kSingleVerify;
  std::string prediction;
  std::vector<std::string> gold;
};

struct MetricValues {
  double em_acc = 0.0;
  double bleu1 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
};

/// Scores one record. Text metrics compare the canonical answer sets.
MetricValues score_record(const EvalRecord& record);

struct MetricReport {
  std::map<QuestionType, MetricValues> per_type;
  std::map<QuestionType, std::size_t> counts;
  MetricValues average;  // unweighted mean over the three question types
};

/// Throws IncompleteEvalError when a question type has no records.
MetricReport aggregate(const std::vector<EvalRecord>& records);

std::string format_report_json(const MetricReport& report);
/// Columns Verify, Choose, Query, Avg; one row per metric. BERTScore is n/a.
std::string format_report_table(const MetricReport& report);

EvalRecord parse_eval_record(std::string_view json_line);
std::string format_eval_record(const EvalRecord& record);

}  // namespace ecgqa

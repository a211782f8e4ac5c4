#include "ecgqa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "ecgqa/errors.hpp"
#include "ecgqa/tokenizer.hpp"

namespace ecgqa {

namespace {

constexpr std::array<QuestionType, 3> kTypes = {QuestionType::kSingleVerify, QuestionType::kSingleChoose,
                                                QuestionType::kSingleQuery};

std::vector<std::string> split_commas(std::string_view text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto end = text.find(',', start);
    parts.emplace_back(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return parts;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (!out.empty() && out.back() == '.') out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string canonical_answer_set(const std::vector<std::string>& answers) {
  std::vector<std::string> parts;
  for (const auto& a : answers) {
    for (const auto& p : split_commas(a)) {
      auto n = normalize_answer(p);
      if (!n.empty()) parts.push_back(std::move(n));
    }
  }
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ", ";
    out += p;
  }
  return out;
}

double exact_match(std::string_view prediction, const std::vector<std::string>& gold) {
  return canonical_answer_set({std::string(prediction)}) == canonical_answer_set(gold) ? 1.0 : 0.0;
}

double bleu1(std::string_view prediction, std::string_view reference) {
  const auto pred = split_words(prediction);
  const auto ref = split_words(reference);
  if (pred.empty()) return 0.0;
  std::map<std::string, std::size_t> ref_counts;
  for (const auto& w : ref) ++ref_counts[w];
  std::map<std::string, std::size_t> pred_counts;
  for (const auto& w : pred) ++pred_counts[w];
  std::size_t clipped = 0;
  for (const auto& [w, n] : pred_counts) {
    auto it = ref_counts.find(w);
    if (it != ref_counts.end()) clipped += std::min(n, it->second);
  }
  const double precision = static_cast<double>(clipped) / static_cast<double>(pred.size());
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref.size()) / static_cast<double>(pred.size())));
  return precision * bp;
}

double rouge_l(std::string_view prediction, std::string_view reference) {
  constexpr double kBeta2 = 1.2 * 1.2;
  const auto pred = split_words(prediction);
  const auto ref = split_words(reference);
  if (pred.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(pred, ref));
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(pred.size());
  const double r = lcs / static_cast<double>(ref.size());
  return (1.0 + kBeta2) * p * r / (r + kBeta2 * p);
}

double meteor_simplified(std::string_view prediction, std::string_view reference) {
  const auto pred = split_words(prediction);
  const auto ref = split_words(reference);
  // Greedy left-to-right alignment: each prediction word takes the first
  // unused identical reference word.
  std::vector<bool> used(ref.size(), false);
  std::vector<std::ptrdiff_t> align(pred.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == pred[i]) {
        used[j] = true;
        align[i] = static_cast<std::ptrdiff_t>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  std::size_t chunks = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (align[i] < 0) continue;
    const bool continues = i > 0 && align[i - 1] >= 0 && align[i] == align[i - 1] + 1;
    if (!continues) ++chunks;
  }
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(pred.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = p * r / (0.9 * p + 0.1 * r);
  const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / m, 3.0);
  return fmean * (1.0 - penalty);
}

double binary_auc(const std::vector<ScoredLabel>& items) {
  double wins = 0.0;
  std::size_t pos = 0, neg = 0;
  for (const auto& a : items) {
    if (!a.positive) {
      ++neg;
      continue;
    }
    ++pos;
    for (const auto& b : items) {
      if (b.positive) continue;
      if (a.score > b.score) wins += 1.0;
      else if (a.score == b.score) wins += 0.5;
    }
  }
  if (pos == 0 || neg == 0) throw InvalidArgument("AUC needs at least one positive and one negative");
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

MacroAucResult macro_auc(const std::vector<std::vector<ScoredLabel>>& classes, bool strict) {
  MacroAucResult result;
  double sum = 0.0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& items = classes[c];
    const bool has_pos = std::any_of(items.begin(), items.end(), [](const auto& s) { return s.positive; });
    const bool has_neg = std::any_of(items.begin(), items.end(), [](const auto& s) { return !s.positive; });
    if (!has_pos || !has_neg) {
      if (strict) throw InvalidArgument("class " + std::to_string(c) + " lacks a positive or a negative");
      result.skipped.push_back(c);
      continue;
    }
    sum += binary_auc(items);
    ++result.used_classes;
  }
  if (result.used_classes == 0) throw InvalidArgument("macro AUC has no usable class");
  result.value = sum / static_cast<double>(result.used_classes);
  return result;
}

MetricValues score_record(const EvalRecord& record) {
  if (record.gold.empty()) throw InvalidArgument("evaluation record without gold answers");
  const std::string pred = canonical_answer_set({record.prediction});
  const std::string ref = canonical_answer_set(record.gold);
  return {pred == ref ? 1.0 : 0.0, bleu1(pred, ref), rouge_l(pred, ref), meteor_simplified(pred, ref)};
}

MetricReport aggregate(const std::vector<EvalRecord>& records) {
  MetricReport report;
  std::map<QuestionType, MetricValues> sums;
  for (const auto& r : records) {
    const MetricValues v = score_record(r);
    auto& s = sums[r.qtype];
    s.em_acc += v.em_acc;
    s.bleu1 += v.bleu1;
    s.rouge_l += v.rouge_l;
    s.meteor += v.meteor;
    ++report.counts[r.qtype];
  }
  for (QuestionType t : kTypes) {
    if (report.counts[t] == 0) {
      throw IncompleteEvalError("no evaluation records of type " + std::string(to_string(t)));
    }
    const double n = static_cast<double>(report.counts[t]);
    const auto& s = sums[t];
    MetricValues mean{s.em_acc / n, s.bleu1 / n, s.rouge_l / n, s.meteor / n};
    report.per_type[t] = mean;
    report.average.em_acc += mean.em_acc / 3.0;
    report.average.bleu1 += mean.bleu1 / 3.0;
    report.average.rouge_l += mean.rouge_l / 3.0;
    report.average.meteor += mean.meteor / 3.0;
  }
  return report;
}

std::string format_report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["meteor_variant"] = "exact-match unigram alignment (no stemming or synonyms)";
  j["bertscore"] = "n/a";
  auto values = [](const MetricValues& v) {
    nlohmann::ordered_json o;
    o["em_acc"] = v.em_acc;
    o["bleu1"] = v.bleu1;
    o["rouge_l"] = v.rouge_l;
    o["meteor"] = v.meteor;
    return o;
  };
  for (QuestionType t : kTypes) {
    auto o = values(report.per_type.at(t));
    o["count"] = report.counts.at(t);
    j[std::string(to_string(t))] = o;
  }
  j["avg"] = values(report.average);
  return j.dump(2) + "\n";
}

std::string format_report_table(const MetricReport& report) {
  std::string out = "# METEOR uses exact unigram matching only; BERTScore is not computed.\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s\n", "metric", "Verify", "Choose", "Query", "Avg");
  out += line;
  auto row = [&](const char* name, double MetricValues::*field) {
    std::snprintf(line, sizeof line, "%-10s %8.3f %8.3f %8.3f %8.3f\n", name,
                  report.per_type.at(QuestionType::kSingleVerify).*field,
                  report.per_type.at(QuestionType::kSingleChoose).*field,
                  report.per_type.at(QuestionType::kSingleQuery).*field, report.average.*field);
    out += line;
  };
  row("EM-Acc", &MetricValues::em_acc);
  row("BLEU-1", &MetricValues::bleu1);
  row("ROUGE-L", &MetricValues::rouge_l);
  row("METEOR", &MetricValues::meteor);
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s\n", "BERTScore", "n/a", "n/a", "n/a", "n/a");
  out += line;
  return out;
}

EvalRecord parse_eval_record(std::string_view json_line) {
  try {
    auto j = nlohmann::json::parse(json_line);
    EvalRecord r;
    r.qtype = parse_question_type(j.at("qtype").get<std::string>());
    r.prediction = j.at("prediction").get<std::string>();
    r.gold = j.at("gold").get<std::vector<std::string>>();
    if (r.gold.empty()) throw FormatError("evaluation record without gold answers");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad evaluation record: ") + e.what());
  }
}

std::string format_eval_record(const EvalRecord& record) {
  nlohmann::ordered_json j;
  j["qtype"] = to_string(record.qtype);
  j["prediction"] = record.prediction;
  j["gold"] = record.gold;
  return j.dump();
}

}  // namespace ecgqa

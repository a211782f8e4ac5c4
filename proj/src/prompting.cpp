#include "ecgqa/prompting.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

std::string_view to_string(QuestionType type) {
  switch (type) {
    case QuestionType::kSingleVerify: return "single-verify";
    case QuestionType::kSingleChoose: return "single-choose";
    case QuestionType::kSingleQuery: return "single-query";
  }
  return "unknown";
}

QuestionType parse_question_type(std::string_view text) {
  if (text == "single-verify") return QuestionType::kSingleVerify;
  if (text == "single-choose") return QuestionType::kSingleChoose;
  if (text == "single-query") return QuestionType::kSingleQuery;
  throw InvalidArgument("unknown question type \"" + std::string(text) + "\"");
}

QaItem parse_qa_item(std::string_view json_line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("QA line is not valid JSON: ") + e.what());
  }
  try {
    QaItem item;
    item.ecg_ref = j.at("ecg_ref").get<std::string>();
    item.qtype = parse_question_type(j.at("question_type").get<std::string>());
    item.question = j.at("question").get<std::string>();
    item.attributes = j.value("attributes", std::vector<std::string>{});
    item.gold_answers = j.at("answers").get<std::vector<std::string>>();
    return item;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("QA line has a missing or mistyped field: ") + e.what());
  }
}

std::string format_qa_item(const QaItem& item) {
  nlohmann::ordered_json j;
  j["ecg_ref"] = item.ecg_ref;
  j["question_type"] = std::string(to_string(item.qtype));
  j["question"] = item.question;
  j["attributes"] = item.attributes;
  j["answers"] = item.gold_answers;
  return j.dump();
}

std::vector<QaItem> load_qa_jsonl(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<QaItem> items;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) items.push_back(parse_qa_item(line));
    start = end + 1;
  }
  return items;
}

namespace {

void append_unique(std::vector<std::string>& out, std::string value) {
  if (std::find(out.begin(), out.end(), value) == out.end()) out.push_back(std::move(value));
}

std::vector<std::string> attributes_plus_none(const QaItem& item) {
  std::vector<std::string> out;
  for (const auto& a : item.attributes) append_unique(out, a);
  append_unique(out, "none");
  return out;
}

}  // namespace

CandidateOptions candidate_options(const QaItem& item) {
  switch (item.qtype) {
    case QuestionType::kSingleVerify:
      return {{"yes", "no", "not sure"}};
    case QuestionType::kSingleChoose:
      return {attributes_plus_none(item)};
    case QuestionType::kSingleQuery: {
      const std::string_view q = item.question;
      if (q.starts_with("What leads")) {
        return {{"lead I", "lead II", "lead III", "lead aVR", "lead aVL", "lead aVF", "lead V1", "lead V2", "lead V3",
                 "lead V4", "lead V5", "lead V6"}};
      }
      if (q.starts_with("What numeric features")) {
        return {{"rr interval", "p duration", "pr interval", "qrs duration", "qt interval", "qt corrected"}};
      }
      if (q.starts_with("What range")) {
        return {{"below the normal range", "within the normal range", "above the normal range"}};
      }
      return {attributes_plus_none(item)};
    }
  }
  throw InvalidArgument("unknown question type");
}

CandidateOptions shuffle_options(const CandidateOptions& options, std::uint64_t seed) {
  CandidateOptions out = options;
  Rng rng(seed);
  auto& v = out.options;
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
  return out;
}

std::string_view to_string(ReportChoice choice) {
  switch (choice) {
    case ReportChoice::kRandomOfThree: return "random-of-3";
    case ReportChoice::kFixedTopOne: return "fixed-top-1";
    case ReportChoice::kNone: return "none";
  }
  return "unknown";
}

ReportChoice parse_report_choice(std::string_view text) {
  if (text == "random-of-3") return ReportChoice::kRandomOfThree;
  if (text == "fixed-top-1") return ReportChoice::kFixedTopOne;
  if (text == "none") return ReportChoice::kNone;
  throw InvalidArgument("unknown report choice \"" + std::string(text) + "\"");
}

std::uint64_t prompt_seed(std::uint64_t global_seed, std::uint64_t item_id, std::uint64_t step) {
  return mix_seed({global_seed, item_id, step});
}

std::optional<std::string> select_report(const RetrievedReports& reports, const DynamicPromptConfig& config) {
  if (config.report_choice == ReportChoice::kNone) return std::nullopt;
  if (reports.hits.empty()) throw EmptyRetrievalError();
  if (config.report_choice == ReportChoice::kFixedTopOne) return reports.hits.front().report;
  const std::size_t pool = std::min<std::size_t>(3, reports.hits.size());
  Rng rng(mix_seed({config.seed, 0x7265706f7274ULL}));
  return reports.hits[static_cast<std::size_t>(rng.below(pool))].report;
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {}

PromptTemplate PromptTemplate::default_template() { return PromptTemplate(std::string(kDefaultTemplateText)); }

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::string text = read_file(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return PromptTemplate(std::move(text));
}

std::string PromptTemplate::render(std::string_view question, const std::vector<std::string>& options,
                                   const std::optional<std::string>& report) const {
  std::string joined;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) joined += ", ";
    joined += options[i];
  }
  const std::string report_block = report ? "<report> " + *report + " </report>" : std::string{};

  std::string out;
  std::size_t start = 0;
  bool first_line = true;
  while (start <= text_.size()) {
    auto end = text_.find('\n', start);
    if (end == std::string::npos) end = text_.size();
    std::string_view line(text_.data() + start, end - start);
    start = end + 1;
    if (!report && line == "{report}") continue;

    std::string rendered;
    std::size_t pos = 0;
    while (pos < line.size()) {
      const auto open = line.find('{', pos);
      if (open == std::string_view::npos) {
        rendered.append(line.substr(pos));
        break;
      }
      rendered.append(line.substr(pos, open - pos));
      const auto close = line.find('}', open);
      if (close == std::string_view::npos) throw TemplateError("unterminated placeholder in prompt template");
      const auto name = line.substr(open + 1, close - open - 1);
      if (name == "report") {
        rendered += report_block;
      } else if (name == "question") {
        rendered.append(question);
      } else if (name == "options") {
        rendered += joined;
      } else {
        throw TemplateError("unresolved placeholder {" + std::string(name) + "} in prompt template");
      }
      pos = close + 1;
    }
    if (!first_line) out += '\n';
    out += rendered;
    first_line = false;
  }
  return out;
}

std::string build_prompt(const QaItem& item, const CandidateOptions& options, const std::optional<std::string>& report,
                         const PromptTemplate& tmpl) {
  if (options.options.empty()) throw InvalidArgument("prompt needs at least one option");
  return tmpl.render(item.question, options.options, report);
}

}  // namespace ecgqa

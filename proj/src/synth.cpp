#include "ecgqa/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <numbers>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

namespace {

struct Rhythm {
  const char* name;
  double rate_bpm;
  bool irregular;
};

constexpr Rhythm kRhythms[] = {
    {"sinus rhythm", 72, false},
    {"sinus tachycardia", 118, false},
    {"sinus bradycardia", 48, false},
    {"atrial fibrillation", 95, true},
};

constexpr const char* kLeadFindings[] = {"st elevation", "st depression", "t wave inversion", "q waves"};

struct LeadGroup {
  std::vector<std::size_t> leads;
};

// Indices into kLeadNames.
const std::vector<LeadGroup>& lead_groups() {
  static const std::vector<LeadGroup> groups = {
      {{1, 2, 5}},         // inferior
      {{0, 4, 10, 11}},    // lateral
      {{6, 7, 8, 9}},      // anterior
      {{6, 7}},            // septal
      {{8, 9, 10}},        // mid precordial
  };
  return groups;
}

// Per-lead gains for the P wave, QRS complex and T wave.
constexpr double kGain[kLeadCount][3] = {
    {0.10, 0.8, 0.25},  {0.15, 1.2, 0.35},  {0.05, 0.5, 0.15},  {-0.10, -0.9, -0.25},
    {0.05, 0.4, 0.12},  {0.10, 0.8, 0.25},  {0.05, -0.7, 0.10}, {0.08, -0.4, 0.30},
    {0.08, 0.3, 0.35},  {0.10, 0.9, 0.40},  {0.10, 1.1, 0.35},  {0.08, 1.0, 0.30},
};

std::string range_phrase(RangeLevel level) {
  switch (level) {
    case RangeLevel::kBelow: return "below the normal range";
    case RangeLevel::kWithin: return "within the normal range";
    case RangeLevel::kAbove: return "above the normal range";
  }
  return {};
}

RangeLevel draw_level(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.2) return RangeLevel::kBelow;
  if (u < 0.7) return RangeLevel::kWithin;
  return RangeLevel::kAbove;
}

const Rhythm& rhythm_of(const SynthFindings& f) {
  for (const auto& r : kRhythms) {
    if (f.rhythm == r.name) return r;
  }
  throw InvalidArgument("unknown rhythm \"" + f.rhythm + "\"");
}

std::string lead_option(std::size_t lead) { return "lead " + std::string(kLeadNames[lead]); }

double bump(double t, double center, double width) {
  const double z = (t - center) / width;
  return std::exp(-0.5 * z * z);
}

}  // namespace

SynthFindings sample_findings(std::uint64_t seed) {
  Rng rng(seed);
  SynthFindings f;
  f.rhythm = kRhythms[rng.below(std::size(kRhythms))].name;
  f.lead_finding = kLeadFindings[rng.below(std::size(kLeadFindings))];
  f.leads = lead_groups()[rng.below(lead_groups().size())].leads;
  std::sort(f.leads.begin(), f.leads.end());
  f.pr = draw_level(rng);
  f.qrs = draw_level(rng);
  f.qt = draw_level(rng);
  if (f.pr == RangeLevel::kWithin && f.qrs == RangeLevel::kWithin && f.qt == RangeLevel::kWithin) {
    f.qt = RangeLevel::kAbove;
  }
  return f;
}

EcgRecord render_ecg(const SynthFindings& f, std::uint64_t seed) {
  Rng rng(seed);
  const Rhythm& rhythm = rhythm_of(f);
  auto pick = [](RangeLevel level, double below, double within, double above) {
    return level == RangeLevel::kBelow ? below : level == RangeLevel::kWithin ? within : above;
  };
  const double pr = pick(f.pr, 0.10, 0.16, 0.24);
  const double qrs = pick(f.qrs, 0.06, 0.09, 0.14);
  const double qt = pick(f.qt, 0.32, 0.40, 0.50);
  std::array<bool, kLeadCount> affected{};
  for (auto l : f.leads) affected[l] = true;

  // Beat times.
  const double seconds = static_cast<double>(kCanonicalLength) / kCanonicalRate;
  const double rr = 60.0 / rhythm.rate_bpm;
  std::vector<double> beats;
  for (double t = 0.2 + 0.3 * rng.uniform(); t < seconds + 0.5;) {
    beats.push_back(t);
    const double jitter = rhythm.irregular ? (rng.uniform() - 0.5) * 0.5 * rr : rng.normal(0.0, 0.01);
    t += rr + jitter;
  }

  std::vector<float> samples(kLeadCount * kCanonicalLength);
  const double wander_phase = 2.0 * std::numbers::pi * rng.uniform();
  for (std::size_t lead = 0; lead < kLeadCount; ++lead) {
    const double* g = kGain[lead];
    for (std::size_t i = 0; i < kCanonicalLength; ++i) {
      const double t = static_cast<double>(i) / kCanonicalRate;
      double v = 0.05 * std::sin(2.0 * std::numbers::pi * 0.3 * t + wander_phase);
      for (double b : beats) {
        if (std::abs(t - b) > 0.8) continue;
        if (!rhythm.irregular) v += g[0] * bump(t, b - pr, 0.025);
        v += g[1] * bump(t, b, qrs / 6.0);
        double t_amp = g[2];
        if (affected[lead]) {
          if (f.lead_finding == "t wave inversion") t_amp = -std::abs(t_amp) - 0.1;
          if (f.lead_finding == "q waves") v -= 0.35 * bump(t, b - qrs / 2.5, qrs / 8.0);
          const double st = f.lead_finding == "st elevation" ? 0.2 : f.lead_finding == "st depression" ? -0.15 : 0.0;
          if (st != 0.0 && t > b + qrs / 2.0 && t < b + qt - 0.12) v += st;
        }
        v += t_amp * bump(t, b + qt - 0.1, 0.045);
      }
      v += rng.normal(0.0, 0.02);
      samples[lead * kCanonicalLength + i] = static_cast<float>(v);
    }
  }
  return EcgRecord(kCanonicalRate, std::move(samples));
}

std::string write_report(const SynthFindings& f) {
  std::vector<std::string> leads;
  for (auto l : f.leads) leads.push_back(lead_option(l));
  std::vector<std::string> outside;
  if (f.pr != RangeLevel::kWithin) outside.emplace_back("pr interval");
  if (f.qrs != RangeLevel::kWithin) outside.emplace_back("qrs duration");
  if (f.qt != RangeLevel::kWithin) outside.emplace_back("qt interval");
  auto join = [](const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ", ") + p;
    return out;
  };
  std::string out = "rhythm: " + f.rhythm + ". " + f.lead_finding + ": " + join(leads) + ". ";
  out += "pr interval: " + range_phrase(f.pr) + ". qrs duration: " + range_phrase(f.qrs) + ". qt interval: " +
         range_phrase(f.qt) + ". outside the normal range: " + join(outside) + ".";
  std::string lowered;
  for (char c : out) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lowered;
}

std::vector<QaItem> make_questions(const SynthFindings& f, const std::string& ecg_ref, std::size_t index,
                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<QaItem> qa;

  // Verify: the true lead finding or a different one.
  {
    std::string finding = f.lead_finding;
    bool present = rng.uniform() < 0.5;
    if (!present) {
      std::vector<std::string> others;
      for (const char* x : kLeadFindings) {
        if (f.lead_finding != x) others.emplace_back(x);
      }
      finding = others[rng.below(others.size())];
    }
    qa.push_back({"Does this ECG show " + finding + "?", QuestionType::kSingleVerify, {}, {present ? "yes" : "no"},
                  ecg_ref});
  }

  // Choose: two rhythms, the true one included most of the time.
  {
    std::vector<std::string> others;
    for (const auto& r : kRhythms) {
      if (f.rhythm != r.name) others.emplace_back(r.name);
    }
    const std::string a = others[rng.below(others.size())];
    std::vector<std::string> attrs;
    std::string answer;
    if (rng.uniform() < 0.8) {
      attrs = {f.rhythm, a};
      if (rng.uniform() < 0.5) std::swap(attrs[0], attrs[1]);
      answer = f.rhythm;
    } else {
      std::string b;
      do {
        b = others[rng.below(others.size())];
      } while (b == a);
      attrs = {a, b};
      answer = "none";
    }
    qa.push_back({"Which rhythm does this ECG show, " + attrs[0] + " or " + attrs[1] + "?",
                  QuestionType::kSingleChoose, attrs, {answer}, ecg_ref});
  }

  // Queries: two of four kinds, rotating with the case index.
  for (std::size_t k = 0; k < 2; ++k) {
    switch ((index + k) % 4) {
      case 0: {
        std::vector<std::string> answers;
        for (auto l : f.leads) answers.push_back(lead_option(l));
        qa.push_back({"What leads show " + f.lead_finding + "?", QuestionType::kSingleQuery, {}, answers, ecg_ref});
        break;
      }
      case 1: {
        std::vector<std::string> answers;
        if (f.pr != RangeLevel::kWithin) answers.emplace_back("pr interval");
        if (f.qrs != RangeLevel::kWithin) answers.emplace_back("qrs duration");
        if (f.qt != RangeLevel::kWithin) answers.emplace_back("qt interval");
        qa.push_back({"What numeric features are outside the normal range?", QuestionType::kSingleQuery, {}, answers,
                      ecg_ref});
        break;
      }
      case 2: {
        const char* names[] = {"pr interval", "qrs duration", "qt interval"};
        const RangeLevel levels[] = {f.pr, f.qrs, f.qt};
        const auto which = rng.below(3);
        qa.push_back({std::string("What range is the ") + names[which] + "?", QuestionType::kSingleQuery, {},
                      {range_phrase(levels[which])}, ecg_ref});
        break;
      }
      default: {
        std::vector<std::string> attrs;
        for (const auto& r : kRhythms) attrs.emplace_back(r.name);
        qa.push_back({"Which rhythm is present in this ECG?", QuestionType::kSingleQuery, attrs, {f.rhythm}, ecg_ref});
        break;
      }
    }
  }
  return qa;
}

std::vector<SynthCase> synthesize(std::size_t n, std::uint64_t seed, bool with_signals) {
  std::vector<SynthCase> cases;
  cases.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SynthCase c;
    char id[32];
    std::snprintf(id, sizeof id, "ecg_%04zu", i);
    c.id = id;
    c.findings = sample_findings(mix_seed({seed, i, 1}));
    if (with_signals) c.record = render_ecg(c.findings, mix_seed({seed, i, 2}));
    c.report = write_report(c.findings);
    c.qa = make_questions(c.findings, "ecgs/" + c.id + ".ecgr", i, mix_seed({seed, i, 3}));
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<std::string> synthetic_corpus_text() {
  std::vector<std::string> text = {std::string(kDefaultTemplateText), "<report> </report>",
                                   "yes, no, not sure, none"};
  for (const auto& r : kRhythms) text.emplace_back(r.name);
  for (const char* f : kLeadFindings) text.emplace_back(f);
  for (std::size_t l = 0; l < kLeadCount; ++l) text.push_back(lead_option(l));
  text.emplace_back("rr interval, p duration, pr interval, qrs duration, qt interval, qt corrected");
  text.emplace_back("below the normal range, within the normal range, above the normal range");
  for (const auto& c : synthesize(64, 0, false)) {
    text.push_back(c.report);
    for (const auto& q : c.qa) text.push_back(q.question);
  }
  return text;
}

std::size_t write_fixtures(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed, std::size_t recordings) {
  if (recordings == 0) throw InvalidArgument("recordings per case must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(dir / "ecgs", ec);
  std::filesystem::create_directories(dir / "reports", ec);
  if (ec) throw IoError("cannot create fixture directories under " + dir.string() + ": " + ec.message());
  std::string jsonl;
  std::size_t lines = 0, index = 0;
  for (auto& c : synthesize(n, seed)) {
    write_ecg(*c.record, dir / "ecgs" / (c.id + ".ecgr"));
    write_file(dir / "reports" / (c.id + ".txt"), c.report + "\n");
    // Later recordings of the same findings: new noise, beat timing and
    // baseline wander, same report.
    for (std::size_t r = 1; r < recordings; ++r) {
      const std::string id = c.id + "_r" + std::to_string(r);
      write_ecg(render_ecg(c.findings, mix_seed({seed, index, 4, r})), dir / "ecgs" / (id + ".ecgr"));
      write_file(dir / "reports" / (id + ".txt"), c.report + "\n");
    }
    for (const auto& q : c.qa) {
      jsonl += format_qa_item(q) + "\n";
      ++lines;
    }
    ++index;
  }
  write_file(dir / "qa.jsonl", jsonl);
  return lines;
}

}  // namespace ecgqa

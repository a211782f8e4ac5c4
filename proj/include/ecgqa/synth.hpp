#pragma once

// Synthetic ECG fixtures: 12-lead waveforms driven by a few latent findings,
// a free-text report describing them, and QA items exercising every
// candidate-option rule.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ecgqa/prompting.hpp"
#include "ecgqa/signal.hpp"

namespace ecgqa {

enum class RangeLevel { kBelow, kWithin, kAbove };

struct SynthFindings {
  std::string rhythm;         // e.g. "sinus tachycardia"
  std::string lead_finding;   // e.g. "st elevation"
  std::vector<std::size_t> leads;  // leads showing lead_finding, ascending
  RangeLevel pr = RangeLevel::kWithin;
  RangeLevel qrs = RangeLevel::kWithin;
  RangeLevel qt = RangeLevel::kWithin;
};

struct SynthCase {
  std::string id;  // "ecg_0007"
  SynthFindings findings;
  std::optional<EcgRecord> record;
  std::string report;
  std::vector<QaItem> qa;
};

SynthFindings sample_findings(std::uint64_t seed);
EcgRecord render_ecg(const SynthFindings& findings, std::uint64_t seed);
std::string write_report(const SynthFindings& findings);
/// Four questions: one verify, one choose and two queries. The query kinds
/// rotate with `index` over leads / numeric features / range / rhythm.
std::vector<QaItem> make_questions(const SynthFindings& findings, const std::string& ecg_ref, std::size_t index,
                                   std::uint64_t seed);

/// Cases index .. index+n-1. Signals are skipped when `with_signals` is false.
std::vector<SynthCase> synthesize(std::size_t n, std::uint64_t seed, bool with_signals = true);

/// Every word the generator and the default prompt template can produce.
std::vector<std::string> synthetic_corpus_text();

/// Writes <dir>/ecgs/<id>.ecgr, <dir>/reports/<id>.txt and <dir>/qa.jsonl.
/// With recordings > 1 each case also gets re-recordings <id>_r1, <id>_r2, ...
/// with the same report; QA items only reference the first recording.
/// Returns the number of QA lines.
std::size_t write_fixtures(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed,
                           std::size_t recordings = 1);

}  // namespace ecgqa

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ecgqa/encoder.hpp"
#include "ecgqa/prompting.hpp"
#include "ecgqa/signal.hpp"
#include "ecgqa/vector_index.hpp"

namespace ecgqa {

struct DatasetItem {
  std::size_t id = 0;  // line number in qa.jsonl
  QaItem qa;
  std::size_t record = 0;  // index into Dataset::records
};

/// A QA set with its ECG records loaded and brought to the canonical grid.
struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetItem> items;
  std::vector<std::string> record_refs;
  std::vector<EcgRecord> records;
};

/// Reads <dir>/qa.jsonl and every ECG it references (paths relative to dir).
/// Records at other sampling rates are resampled; a record that does not end
/// up 500 Hz × 5000 samples is rejected.
Dataset load_dataset(const std::filesystem::path& dir);

/// Deterministic sample of round(fraction·n) items (at least one).
Dataset subset(const Dataset& data, double fraction, std::uint64_t seed);

/// Record brought to the canonical grid.
EcgRecord canonical_record(EcgRecord record, const std::string& name);

struct IndexSource {
  std::string id;
  std::filesystem::path ecg;
  std::string report;
};

/// Pairs <ecg_dir>/<id>.ecgr with <report_dir>/<id>.txt, sorted by id.
/// Throws InvalidArgument naming every unpaired file.
std::vector<IndexSource> pair_index_sources(const std::filesystem::path& ecg_dir,
                                            const std::filesystem::path& report_dir);

/// Encodes each ECG with `params` (encoder.*) and inserts it with its report.
VectorIndex build_index(const std::vector<IndexSource>& sources, const ParamStore& params,
                        const EncoderConfig& config);

/// Top-k reports for every record of `data`, queried with `params`.
std::vector<RetrievedReports> retrieve_for_records(const Dataset& data, const VectorIndex& index,
                                                   const ParamStore& params, const EncoderConfig& config,
                                                   std::size_t k = kDefaultTopK);

}  // namespace ecgqa

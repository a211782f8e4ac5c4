#include "ecgqa/dataset.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/rng.hpp"

namespace ecgqa {

EcgRecord canonical_record(EcgRecord record, const std::string& name) {
  if (record.rate() != kCanonicalRate) record = resample(record, static_cast<int>(kCanonicalRate));
  if (!record.is_canonical()) {
    throw InvalidArgument(name + ": expected " + std::to_string(kCanonicalLength) + " samples at " +
                          std::to_string(kCanonicalRate) + " Hz, got " + std::to_string(record.length()));
  }
  return record;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.root = dir;
  const auto qa = load_qa_jsonl(dir / "qa.jsonl");
  std::map<std::string, std::size_t> loaded;
  for (std::size_t i = 0; i < qa.size(); ++i) {
    auto [it, fresh] = loaded.try_emplace(qa[i].ecg_ref, data.records.size());
    if (fresh) {
      data.record_refs.push_back(qa[i].ecg_ref);
      data.records.push_back(canonical_record(read_ecg(dir / qa[i].ecg_ref), qa[i].ecg_ref));
    }
    data.items.push_back({i, qa[i], it->second});
  }
  if (data.items.empty()) throw InvalidArgument(dir.string() + ": empty QA set");
  return data;
}

Dataset subset(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw InvalidArgument("subset fraction must be in (0, 1]");
  std::vector<std::size_t> order(data.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed({seed, 0x737562736574}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
  n = std::clamp<std::size_t>(n, 1, order.size());
  order.resize(n);
  std::sort(order.begin(), order.end());
  Dataset out;
  out.root = data.root;
  out.record_refs = data.record_refs;
  out.records = data.records;
  for (auto i : order) out.items.push_back(data.items[i]);
  return out;
}

std::vector<IndexSource> pair_index_sources(const std::filesystem::path& ecg_dir,
                                            const std::filesystem::path& report_dir) {
  auto stems = [](const std::filesystem::path& dir, const std::string& ext) {
    std::map<std::string, std::filesystem::path> out;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
      if (e.is_regular_file() && e.path().extension() == ext) out[e.path().stem().string()] = e.path();
    }
    if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
    return out;
  };
  const auto ecgs = stems(ecg_dir, ".ecgr");
  const auto reports = stems(report_dir, ".txt");
  std::vector<std::string> offenders;
  for (const auto& [id, path] : ecgs) {
    if (!reports.contains(id)) offenders.push_back(path.string() + " (no report)");
  }
  for (const auto& [id, path] : reports) {
    if (!ecgs.contains(id)) offenders.push_back(path.string() + " (no ECG)");
  }
  if (!offenders.empty()) {
    std::string msg = "unpaired index inputs:";
    for (const auto& o : offenders) msg += "\n  " + o;
    throw InvalidArgument(msg);
  }
  std::vector<IndexSource> out;
  for (const auto& [id, path] : ecgs) {
    std::string report = read_file(reports.at(id));
    while (!report.empty() && (report.back() == '\n' || report.back() == '\r')) report.pop_back();
    out.push_back({id, path, std::move(report)});
  }
  return out;
}

VectorIndex build_index(const std::vector<IndexSource>& sources, const ParamStore& params,
                        const EncoderConfig& config) {
  VectorIndex index(config.d_out);
  for (const auto& s : sources) {
    const EcgRecord record = canonical_record(read_ecg(s.ecg), s.ecg.string());
    index.add(encode(record, params, config).values, s.report);
  }
  return index;
}

std::vector<RetrievedReports> retrieve_for_records(const Dataset& data, const VectorIndex& index,
                                                   const ParamStore& params, const EncoderConfig& config,
                                                   std::size_t k) {
  std::vector<RetrievedReports> out;
  out.reserve(data.records.size());
  for (const auto& record : data.records) out.push_back(index.search(encode(record, params, config).values, k));
  return out;
}

}  // namespace ecgqa

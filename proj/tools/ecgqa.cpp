// Batch command-line front end: fixtures, index, training, evaluation.
// Exit codes: 0 success, 1 validation error, 2 IO or format error.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/dataset.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/gradcheck.hpp"
#include "ecgqa/metrics.hpp"
#include "ecgqa/model.hpp"
#include "ecgqa/synth.hpp"
#include "ecgqa/trainer.hpp"

namespace fs = std::filesystem;
using namespace ecgqa;

namespace {

struct Common {
  std::string vocab;
  std::string prompt_template;
};

Tokenizer load_tokenizer(const Common& c) {
  return c.vocab.empty() ? Tokenizer::from_corpus(synthetic_corpus_text()) : Tokenizer::load(c.vocab);
}

PromptTemplate load_template(const Common& c) {
  return c.prompt_template.empty() ? PromptTemplate::default_template() : PromptTemplate::load(c.prompt_template);
}

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw IoError(std::string(what) + " not found: " + path);
}

void require_vocab_matches(const Model& model, const Tokenizer& tok, const std::string& where) {
  if (model.config.decoder.vocab_size != tok.size()) {
    throw InvalidArgument(where + " expects a vocabulary of " + std::to_string(model.config.decoder.vocab_size) +
                          " tokens, the tokenizer has " + std::to_string(tok.size()));
  }
}

// The retrieval encoder lives next to the index so queries use the weights the
// index was built with.
fs::path encoder_path(const fs::path& index) { return index.string() + ".encoder.qhpt"; }

struct RetrievalEncoder {
  EncoderConfig config;
  ParamStore params;
};

RetrievalEncoder load_retrieval_encoder(const fs::path& index) {
  const auto path = encoder_path(index);
  RetrievalEncoder out;
  out.config = EncoderConfig::from_kv(read_manifest(path));
  for (auto& [name, t] : load_qhpt(path)) out.params.add(name, std::move(t));
  return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t n = 16;
  std::uint64_t seed = 7;
  std::size_t recordings = 1;
};

int cmd_synth(const SynthArgs& a) {
  if (a.n == 0) throw InvalidArgument("--n must be positive");
  const std::size_t lines = write_fixtures(a.out, a.n, a.seed, a.recordings);
  KeyValues kv;
  kv.set("synth.n", std::to_string(a.n));
  kv.set("synth.seed", std::to_string(a.seed));
  kv.set("synth.recordings", std::to_string(a.recordings));
  kv.set("synth.qa_lines", std::to_string(lines));
  write_manifest(fs::path(a.out) / "qa.jsonl", kv);
  std::printf("wrote %zu records and %zu QA items to %s\n", a.n, lines, a.out.c_str());
  return 0;
}

struct IndexArgs {
  std::string ecg_dir, report_dir, out;
  std::uint64_t seed = 1;
};

int cmd_build_index(const IndexArgs& a, const Common& common) {
  require_exists(a.ecg_dir, "ECG directory");
  require_exists(a.report_dir, "report directory");
  const auto sources = pair_index_sources(a.ecg_dir, a.report_dir);
  // Encoder weights come from the same seeded initialization the QA model uses.
  const Tokenizer tok = load_tokenizer(common);
  const Model model = init_model(ModelConfig::toy(tok.size()), a.seed);
  const VectorIndex index = build_index(sources, model.params, model.config.encoder);
  index.save(a.out);

  NamedTensors enc;
  for (const auto& name : model.params.names_with_prefix("encoder.")) enc.emplace(name, model.params.value(name));
  save_qhpt(enc, encoder_path(a.out));
  KeyValues enc_kv = model.config.encoder.to_kv();
  enc_kv.set("index.seed", std::to_string(a.seed));
  write_manifest(encoder_path(a.out), enc_kv);

  KeyValues kv;
  kv.set("index.seed", std::to_string(a.seed));
  kv.set("index.count", std::to_string(index.size()));
  kv.set("index.dim", std::to_string(index.dim()));
  kv.set("index.encoder_sha1", git_blob_sha1(read_file(encoder_path(a.out))));
  write_manifest(a.out, kv);
  std::printf("indexed %zu entries, dim %zu -> %s\n", index.size(), index.dim(), a.out.c_str());
  return 0;
}

struct AskArgs {
  std::string index, model, ecg, question, qtype = "single-verify", attributes;
  std::size_t k = kDefaultTopK;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size() && !text.empty()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    std::string part = text.substr(start, end - start);
    part.erase(0, part.find_first_not_of(' '));
    part.erase(part.find_last_not_of(' ') + 1);
    if (!part.empty()) out.push_back(part);
    start = end + 1;
  }
  return out;
}

int cmd_ask(const AskArgs& a, const Common& common) {
  require_exists(a.index, "index");
  require_exists(a.ecg, "ECG file");
  if (a.k == 0) throw InvalidArgument("--k must be at least 1");
  const VectorIndex index = VectorIndex::load(a.index);
  const RetrievalEncoder retr = load_retrieval_encoder(a.index);
  const EcgRecord record = canonical_record(read_ecg(a.ecg), a.ecg);
  const Embedding z = encode(record, retr.params, retr.config);
  const RetrievedReports hits = index.search(z.values, a.k);

  std::printf("retrieved %zu report(s)\n", hits.hits.size());
  for (const auto& h : hits.hits) std::printf("  [%llu] %.6f %s\n", static_cast<unsigned long long>(h.id), h.score, h.report.c_str());
  if (a.model.empty()) return 0;

  require_exists(a.model, "model checkpoint");
  const Model model = load_model(a.model);
  const Tokenizer tok = load_tokenizer(common);
  require_vocab_matches(model, tok, a.model);
  const PromptTemplate tmpl = load_template(common);
  const AblationFlags flags = AblationFlags::from_kv(read_manifest(a.model));
  QaItem item;
  item.question = a.question;
  item.qtype = parse_question_type(a.qtype);
  item.attributes = split_list(a.attributes);
  item.ecg_ref = a.ecg;
  const PromptContext ctx{tok, tmpl};
  const Answer ans = answer_question(model, record, item, hits, ctx, flags.retrieval_report);
  std::printf("prompt:\n%s\nanswer: %s\n", ans.prompt.c_str(), ans.text.c_str());
  return 0;
}

struct TrainArgs {
  std::string stage = "qa";
  std::string data, val, index, base, out, ablation = "full";
  std::uint64_t seed = 3, init_seed = 1;
  std::size_t steps = 500, batch = 8, epochs = 5, stop_after_epoch = 0;
  double lr = 5e-4, warmup = 0.1;
  bool resume = false;
  // base stage
  std::size_t corpus = 200;
};

int cmd_train_base(const TrainArgs& a, const Common& common) {
  const Tokenizer tok = load_tokenizer(common);
  const PromptTemplate tmpl = load_template(common);
  Model model = init_model(ModelConfig::toy(tok.size()), a.init_seed);
  WarmStartConfig ws;
  ws.steps = a.steps;
  ws.batch = a.batch;
  ws.lr = a.lr;
  ws.warmup_ratio = a.warmup;
  ws.seed = a.seed;
  ws.corpus_size = a.corpus;
  const auto log = warm_start_decoder(model, PromptContext{tok, tmpl}, ws);
  KeyValues kv;
  kv.set("base.steps", std::to_string(ws.steps));
  kv.set("base.batch", std::to_string(ws.batch));
  kv.set("base.lr", format_number(ws.lr));
  kv.set("base.warmup_ratio", format_number(ws.warmup_ratio));
  kv.set("base.seed", std::to_string(ws.seed));
  kv.set("base.init_seed", std::to_string(a.init_seed));
  kv.set("base.corpus_size", std::to_string(ws.corpus_size));
  kv.set("base.final_loss", format_number(log.back().train_loss));
  save_model(model, a.out, kv);
  tok.save(a.out + ".vocab");
  std::printf("base decoder: %zu steps, last batch loss %.4f -> %s\n", log.size(), log.back().train_loss, a.out.c_str());
  return 0;
}

QaData retrieval_for(const Dataset& data, const std::string& index_path) {
  const VectorIndex index = VectorIndex::load(index_path);
  const RetrievalEncoder retr = load_retrieval_encoder(index_path);
  return QaData{&data, retrieve_for_records(data, index, retr.params, retr.config)};
}

int cmd_train_qa(const TrainArgs& a, const Common& common) {
  require_exists(a.data, "dataset");
  require_exists(a.index, "index");
  require_exists(a.base, "base checkpoint");
  const Tokenizer tok = load_tokenizer(common);
  const PromptTemplate tmpl = load_template(common);
  const AblationFlags flags = AblationFlags::named(a.ablation);

  const Dataset data = load_dataset(a.data);
  const QaData train = retrieval_for(data, a.index);
  std::optional<Dataset> val_data;
  if (!a.val.empty()) val_data = load_dataset(a.val);
  const QaData val = val_data ? retrieval_for(*val_data, a.index) : train;

  // Encoder, lead branch and mapper start from the seeded initialization; the
  // decoder (base and adapters) comes from the warm-started checkpoint.
  ModelConfig cfg = ModelConfig::toy(tok.size());
  apply_ablation(cfg, flags);
  Model model = init_model(cfg, a.init_seed);
  const Model base = load_model(a.base);
  require_vocab_matches(base, tok, a.base);
  copy_group(model.params, base.params, "decoder.");

  TrainConfig tc = TrainConfig::toy();
  tc.lr = a.lr;
  tc.warmup_ratio = a.warmup;
  tc.epochs = a.epochs;
  tc.batch = a.batch;
  tc.max_steps = a.steps;
  tc.seed = a.seed;
  tc.stop_after_epoch = a.stop_after_epoch;

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train_qa(model, train, val, PromptContext{tok, tmpl}, tc, flags, a.out, a.resume);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double train_loss = evaluation_loss(model, train, PromptContext{tok, tmpl}, flags);
  std::printf("ablation %s: %zu/%zu steps, best val loss %.6f at step %zu, final train loss %.6f (%.1f s)\n",
              a.ablation.c_str(), r.steps_done, tc.total_steps(data.items.size()), r.best_val_loss, r.best_step,
              train_loss, secs);
  if (!r.finished) std::printf("stopped early; rerun with --resume to continue\n");
  return 0;
}

struct EvalArgs {
  std::string data, index, model, out;
  double subset = 1.0;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a, const Common& common) {
  require_exists(a.data, "dataset");
  require_exists(a.index, "index");
  require_exists(a.model, "model checkpoint");
  const Tokenizer tok = load_tokenizer(common);
  const PromptTemplate tmpl = load_template(common);
  const Model model = load_model(a.model);
  require_vocab_matches(model, tok, a.model);
  const AblationFlags flags = AblationFlags::from_kv(read_manifest(a.model));

  const Dataset full = load_dataset(a.data);
  const Dataset data = a.subset < 1.0 ? subset(full, a.subset, a.seed) : full;
  const QaData qd = retrieval_for(data, a.index);
  const PromptContext ctx{tok, tmpl};

  std::vector<EvalRecord> records;
  std::string lines;
  for (const auto& item : data.items) {
    const Answer ans =
        answer_question(model, data.records[item.record], item.qa, qd.retrieved[item.record], ctx, flags.retrieval_report);
    EvalRecord rec{item.qa.qtype, ans.text, item.qa.gold_answers};
    lines += format_eval_record(rec) + "\n";
    records.push_back(std::move(rec));
  }
  const MetricReport report = aggregate(records);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  write_file(out / "predictions.jsonl", lines);
  write_file(out / "report.json", format_report_json(report));
  const std::string table = format_report_table(report);
  write_file(out / "report.txt", table);
  KeyValues kv;
  kv.set("eval.items", std::to_string(data.items.size()));
  kv.set("eval.subset", format_number(a.subset));
  kv.set("eval.seed", std::to_string(a.seed));
  kv.set("eval.model_sha1", git_blob_sha1(read_file(a.model)));
  kv.merge(flags.to_kv());
  for (const char* f : {"predictions.jsonl", "report.json", "report.txt"}) write_manifest(out / f, kv);
  std::printf("%s", table.c_str());
  return 0;
}

struct GradArgs {
  std::size_t seeds = 5;
  double tolerance = 1e-5;
};

int cmd_grad_check(const GradArgs& a) {
  GradCheckOptions opt;
  opt.tolerance = a.tolerance;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= a.seeds; ++seed) {
    for (const auto& r : gradient_suite(seed, opt)) {
      std::printf("seed %llu %-24s rel %.3e probes %zu %s\n", static_cast<unsigned long long>(seed), r.name.c_str(),
                  r.max_rel_error, r.probes, r.passed ? "ok" : "FAIL");
      ok &= r.passed;
    }
  }
  return ok ? 0 : 1;
}

struct BenchArgs {
  std::size_t n = 10000, dim = 32, queries = 200, k = kDefaultTopK;
  std::uint64_t seed = 0;
};

int cmd_bench_index(const BenchArgs& a) {
  Rng rng(a.seed);
  VectorIndex index(a.dim);
  std::vector<double> v(a.dim);
  for (std::size_t i = 0; i < a.n; ++i) {
    for (double& x : v) x = rng.normal();
    index.add(v, "r" + std::to_string(i));
  }
  const auto t0 = std::chrono::steady_clock::now();
  double checksum = 0.0;
  for (std::size_t q = 0; q < a.queries; ++q) {
    for (double& x : v) x = rng.normal();
    for (const auto& h : index.search(v, a.k).hits) checksum += h.score;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("n=%zu dim=%zu k=%zu: %.3f ms/query (checksum %.6f)\n", a.n, a.dim, a.k,
              1e3 * secs / static_cast<double>(std::max<std::size_t>(a.queries, 1)), checksum);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG question answering toolkit: synthetic fixtures, retrieval index, prefix-tuned decoder."};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file; [section] or <command>.<flag> keys set command flags");
  Common common;
  app.add_option("--vocab", common.vocab, "tokenizer vocabulary, one token per line (default: built-in toy vocabulary)");
  app.add_option("--template", common.prompt_template, "prompt template file (default: built-in v1 template)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-fixtures", "write synthetic ECGs, reports and a QA JSONL set");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--n", synth.n, "number of records")->capture_default_str();
  s->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  s->add_option("--recordings", synth.recordings, "ECGs per record in the report archive (extra ones are re-recordings)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  IndexArgs idx;
  auto* bi = app.add_subcommand("build-index", "encode paired ECG/report files into a QHIX index");
  bi->add_option("--ecg-dir", idx.ecg_dir, "directory of <id>.ecgr files")->required();
  bi->add_option("--report-dir", idx.report_dir, "directory of <id>.txt reports")->required();
  bi->add_option("--out", idx.out, "index file to write")->required();
  bi->add_option("--seed", idx.seed, "encoder initialization seed")->capture_default_str();

  AskArgs ask;
  auto* as = app.add_subcommand("ask", "retrieve reports for one ECG and optionally answer a question");
  as->add_option("--index", ask.index, "index file")->required();
  as->add_option("--ecg", ask.ecg, "ECGR file")->required();
  as->add_option("--model", ask.model, "trained checkpoint; without it only retrieval runs");
  as->add_option("--question", ask.question, "question text");
  as->add_option("--qtype", ask.qtype, "single-verify, single-choose or single-query")->capture_default_str();
  as->add_option("--attributes", ask.attributes, "comma-separated attribute list for choose/other queries");
  as->add_option("--k", ask.k, "reports to retrieve")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "warm-start the base decoder (--stage base) or instruction-tune (--stage qa)");
  t->add_option("--stage", tr.stage, "base or qa")->check(CLI::IsMember({"base", "qa"}))->capture_default_str();
  t->add_option("--out", tr.out, "qa: output directory; base: checkpoint path")->required();
  t->add_option("--data", tr.data, "qa: dataset directory with qa.jsonl");
  t->add_option("--val", tr.val, "qa: validation dataset (default: the training set with evaluation prompts)");
  t->add_option("--index", tr.index, "qa: retrieval index");
  t->add_option("--base", tr.base, "qa: warm-started base checkpoint");
  t->add_option("--ablation", tr.ablation, "full, wo-dp, wo-retrieval, wo-et-mapper, wo-pos-encoder, frozen-llm, frozen-encoder")
      ->capture_default_str();
  t->add_option("--steps", tr.steps, "optimizer steps (0 = epochs x batches per epoch)")->capture_default_str();
  t->add_option("--epochs", tr.epochs, "epochs when --steps is 0")->capture_default_str();
  t->add_option("--batch", tr.batch, "batch size")->capture_default_str();
  t->add_option("--lr", tr.lr, "peak learning rate")->capture_default_str();
  t->add_option("--warmup", tr.warmup, "warmup fraction of total steps")->capture_default_str();
  t->add_option("--seed", tr.seed, "run seed (order, prompts, dropout)")->capture_default_str();
  t->add_option("--init-seed", tr.init_seed, "parameter initialization seed")->capture_default_str();
  t->add_option("--corpus", tr.corpus, "base: synthetic cases in the warm-start corpus")->capture_default_str();
  t->add_option("--stop-after-epoch", tr.stop_after_epoch, "qa: stop after this many epochs (0 = run to the end)");
  t->add_flag("--resume", tr.resume, "qa: continue from <out>/state.qhpt");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "answer every item and write metric reports");
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--index", ev.index, "retrieval index")->required();
  e->add_option("--model", ev.model, "trained checkpoint")->required();
  e->add_option("--out", ev.out, "report directory")->required();
  e->add_option("--subset", ev.subset, "fraction of items to sample")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  e->add_option("--seed", ev.seed, "subset sampling seed")->capture_default_str();

  GradArgs gr;
  auto* g = app.add_subcommand("grad-check", "central-difference gradient checks of every op and the composed path");
  g->add_option("--seeds", gr.seeds, "number of seeds")->capture_default_str();
  g->add_option("--tolerance", gr.tolerance, "relative error bound")->capture_default_str();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench-index", "time exhaustive search on a random index");
  b->add_option("--n", bench.n, "entries")->capture_default_str();
  b->add_option("--dim", bench.dim, "dimension")->capture_default_str();
  b->add_option("--queries", bench.queries, "queries")->capture_default_str();
  b->add_option("--k", bench.k, "hits per query")->capture_default_str();
  b->add_option("--seed", bench.seed, "seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*bi) return cmd_build_index(idx, common);
    if (*as) return cmd_ask(ask, common);
    if (*t) {
      if (tr.stage == "base") return cmd_train_base(tr, common);
      if (tr.data.empty() || tr.index.empty() || tr.base.empty()) {
        throw InvalidArgument("train --stage qa needs --data, --index and --base");
      }
      return cmd_train_qa(tr, common);
    }
    if (*e) return cmd_eval(ev, common);
    if (*g) return cmd_grad_check(gr);
    if (*b) return cmd_bench_index(bench);
  } catch (const FormatError& err) {
    std::fprintf(stderr, "format error: %s\n", err.what());
    return 2;
  } catch (const IoError& err) {
    std::fprintf(stderr, "io error: %s\n", err.what());
    return 2;
  } catch (const fs::filesystem_error& err) {
    std::fprintf(stderr, "io error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 1;
}

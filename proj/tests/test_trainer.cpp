#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"
#include "ecgqa/trainer.hpp"

using namespace ecgqa;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path dir = fs::temp_directory_path() / "ecgqa_trainer_fixture";
  Tokenizer tok = Tokenizer::from_corpus(synthetic_corpus_text());
  PromptTemplate tmpl = PromptTemplate::default_template();
  Dataset data;
  QaData qa;

  Fixture() {
    fs::remove_all(dir);
    write_fixtures(dir, 2, 41);
    data = load_dataset(dir);
    const Model retr = init_model(ModelConfig::toy(tok.size()), 1);
    const VectorIndex index =
        build_index(pair_index_sources(dir / "ecgs", dir / "reports"), retr.params, retr.config.encoder);
    qa = QaData{&data, retrieve_for_records(data, index, retr.params, retr.config.encoder)};
  }
  ~Fixture() { fs::remove_all(dir); }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

TrainConfig small_config() {
  TrainConfig c = TrainConfig::toy();
  c.batch = 4;
  c.max_steps = 6;
  c.seed = 2;
  return c;
}

}  // namespace

TEST_CASE("training is deterministic for a fixed seed") {
  auto& f = fixture();
  REQUIRE(f.data.items.size() == 8);
  const PromptContext ctx{f.tok, f.tmpl};
  const AblationFlags flags;
  Model a = init_model(ModelConfig::toy(f.tok.size()), 5);
  Model b = init_model(ModelConfig::toy(f.tok.size()), 5);
  const fs::path out_a = f.dir / "run_a", out_b = f.dir / "run_b";
  const auto ra = train_qa(a, f.qa, f.qa, ctx, small_config(), flags, out_a);
  const auto rb = train_qa(b, f.qa, f.qa, ctx, small_config(), flags, out_b);
  CHECK(ra.finished);
  CHECK(ra.steps_done == 6);
  CHECK(read_file(out_a / "log.csv") == read_file(out_b / "log.csv"));
  CHECK(read_file(out_a / "best.qhpt") == read_file(out_b / "best.qhpt"));
  for (const auto& n : a.params.names()) CHECK(a.params.value(n) == b.params.value(n));
  REQUIRE(ra.log.size() == 6);
  for (const auto& row : ra.log) {
    CHECK(row.lr == cosine_warmup_lr(row.step, 6, small_config().lr, small_config().warmup_ratio));
    CHECK(std::isfinite(row.train_loss));
  }
}

TEST_CASE("resume continues an interrupted run exactly") {
  auto& f = fixture();
  const PromptContext ctx{f.tok, f.tmpl};
  const AblationFlags flags;
  Model whole = init_model(ModelConfig::toy(f.tok.size()), 6);
  const auto full = train_qa(whole, f.qa, f.qa, ctx, small_config(), flags, f.dir / "whole");

  Model first = init_model(ModelConfig::toy(f.tok.size()), 6);
  TrainConfig stop = small_config();
  stop.stop_after_epoch = 1;
  const auto part = train_qa(first, f.qa, f.qa, ctx, stop, flags, f.dir / "split");
  CHECK_FALSE(part.finished);
  CHECK(part.steps_done == 2);

  Model second = init_model(ModelConfig::toy(f.tok.size()), 6);
  const auto rest = train_qa(second, f.qa, f.qa, ctx, small_config(), flags, f.dir / "split", true);
  CHECK(rest.finished);
  CHECK(read_file(f.dir / "split" / "log.csv") == read_file(f.dir / "whole" / "log.csv"));
  for (const auto& n : whole.params.names()) CHECK(second.params.value(n) == whole.params.value(n));
  CHECK(rest.best_val_loss == full.best_val_loss);

  // A different configuration refuses to resume.
  TrainConfig other = small_config();
  other.lr *= 2;
  Model third = init_model(ModelConfig::toy(f.tok.size()), 6);
  CHECK_THROWS(train_qa(third, f.qa, f.qa, ctx, other, flags, f.dir / "split", true));
}

TEST_CASE("frozen groups do not move") {
  auto& f = fixture();
  const PromptContext ctx{f.tok, f.tmpl};
  for (const char* name : {"frozen-llm", "frozen-encoder"}) {
    const AblationFlags flags = AblationFlags::named(name);
    ModelConfig cfg = ModelConfig::toy(f.tok.size());
    apply_ablation(cfg, flags);
    Model m = init_model(cfg, 7);
    const ParamStore before = m.params;
    TrainConfig c = small_config();
    c.max_steps = 2;
    train_qa(m, f.qa, f.qa, ctx, c, flags, f.dir / name);
    const std::string frozen = flags.train_llm ? "encoder." : "lora.";
    CAPTURE(name);
    for (const auto& n : m.params.names_with_prefix(frozen)) CHECK(m.params.value(n) == before.value(n));
    for (const auto& n : m.params.names_with_prefix("decoder.")) CHECK(m.params.value(n) == before.value(n));
    bool mapper_moved = false;
    for (const auto& n : m.params.names_with_prefix("mapper.")) mapper_moved |= !(m.params.value(n) == before.value(n));
    CHECK(mapper_moved);
  }
}

TEST_CASE("log csv round trip") {
  const std::vector<LogRow> rows = {{1, 1e-4, 2.5, std::nullopt}, {2, 2e-4, 1.25, 0.75}};
  const auto back = parse_log_csv(format_log_csv(rows));
  REQUIRE(back.size() == 2);
  CHECK(back[1].step == 2);
  CHECK(back[1].lr == 2e-4);
  CHECK(back[1].train_loss == 1.25);
  CHECK(back[1].val_loss == 0.75);
  CHECK_FALSE(back[0].val_loss.has_value());
  CHECK_THROWS_AS(parse_log_csv("step,lr\n1,x\n"), FormatError);
}

TEST_CASE("ablation names") {
  CHECK(AblationFlags::named("full").dynamic_prompting);
  CHECK_FALSE(AblationFlags::named("wo-dp").dynamic_prompting);
  CHECK_FALSE(AblationFlags::named("wo-retrieval").retrieval_report);
  CHECK_FALSE(AblationFlags::named("wo-et-mapper").et_mapper);
  CHECK_FALSE(AblationFlags::named("wo-pos-encoder").pos_encoder);
  CHECK_FALSE(AblationFlags::named("frozen-llm").train_llm);
  CHECK_FALSE(AblationFlags::named("frozen-encoder").train_encoder);
  CHECK_THROWS_AS(AblationFlags::named("wo-everything"), InvalidArgument);
  for (const auto& n : AblationFlags::names()) {
    const auto f = AblationFlags::named(n);
    const auto back = AblationFlags::from_kv(f.to_kv());
    CHECK(back.to_kv().format() == f.to_kv().format());
  }
}

TEST_CASE("fixtures with re-recordings") {
  const fs::path dir = fs::temp_directory_path() / "ecgqa_rerecordings";
  fs::remove_all(dir);
  CHECK(write_fixtures(dir, 2, 3, 3) == 8);
  const auto sources = pair_index_sources(dir / "ecgs", dir / "reports");
  REQUIRE(sources.size() == 6);
  CHECK(sources[0].id == "ecg_0000");
  CHECK(sources[1].id == "ecg_0000_r1");
  CHECK(sources[1].report == sources[0].report);
  CHECK_FALSE(read_file(sources[1].ecg) == read_file(sources[0].ecg));
  const Dataset data = load_dataset(dir);
  CHECK(data.records.size() == 2);
  CHECK_THROWS_AS(write_fixtures(dir, 2, 3, 0), InvalidArgument);
  fs::remove_all(dir);
}

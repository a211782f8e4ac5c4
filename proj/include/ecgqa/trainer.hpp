#pragma once

// Instruction tuning: DP prompts over retrieved reports, prefix from the ECG,
// answer-token cross-entropy, AdamW with a cosine warmup schedule. Also the
// text-only warm start of the base decoder and greedy answering.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ecgqa/dataset.hpp"
#include "ecgqa/kv_config.hpp"
#include "ecgqa/model.hpp"
#include "ecgqa/optim.hpp"
#include "ecgqa/prompting.hpp"
#include "ecgqa/synth.hpp"
#include "ecgqa/tokenizer.hpp"

namespace ecgqa {

struct TrainConfig {
  double lr = 5e-5;
  double warmup_ratio = 0.1;
  AdamWConfig adam;
  std::size_t epochs = 5;
  std::size_t batch = 32;
  /// When non-zero, overrides epochs · ceil(n / batch).
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
  /// Return after this many epochs (0 = run to the end). Used to exercise resume.
  std::size_t stop_after_epoch = 0;

  /// Scaled for the toy preset: lr ×10 and a fixed 500-step budget.
  static TrainConfig toy();
  void validate() const;
  std::size_t total_steps(std::size_t n_items) const;
  KeyValues to_kv() const;
  static TrainConfig from_kv(const KeyValues& kv);
};

/// One switch per ablation row; all on is the full model.
struct AblationFlags {
  bool dynamic_prompting = true;
  bool retrieval_report = true;
  bool et_mapper = true;
  bool pos_encoder = true;
  bool train_llm = true;
  bool train_encoder = true;

  /// "full", "wo-dp", "wo-retrieval", "wo-et-mapper", "wo-pos-encoder",
  /// "frozen-llm" or "frozen-encoder".
  static AblationFlags named(std::string_view name);
  static const std::vector<std::string>& names();
  KeyValues to_kv() const;
  static AblationFlags from_kv(const KeyValues& kv);
};

struct QaData {
  const Dataset* data = nullptr;
  std::vector<RetrievedReports> retrieved;  // per record
};

struct PromptContext {
  const Tokenizer& tokenizer;
  const PromptTemplate& prompt_template;
  std::size_t max_answer_tokens = 32;
};

struct LogRow {
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  std::vector<LogRow> log;
  double best_val_loss = 0.0;
  std::size_t best_step = 0;
  std::size_t steps_done = 0;
  bool finished = false;
};

/// Prompt text for one item under `dp`.
std::string render_prompt(const QaItem& item, const RetrievedReports& retrieved, const DynamicPromptConfig& dp,
                          const PromptTemplate& tmpl);
/// Gold answers as the target text, joined with ", ".
std::string answer_text(const QaItem& item);

/// Applies the model-shape ablations (ET-Mapper, lead positions) to `config`.
void apply_ablation(ModelConfig& config, const AblationFlags& flags);

/// Trains `model` in place. Writes into out_dir:
///   best.qhpt   lowest validation loss so far (+ manifest)
///   state.qhpt  parameters and optimizer state at the last finished epoch
///   log.csv     step,lr,train_loss,val_loss
/// With `resume`, continues from state.qhpt; the remaining curve matches an
/// uninterrupted run.
TrainResult train_qa(Model& model, const QaData& train, const QaData& val, const PromptContext& ctx,
                     const TrainConfig& config, const AblationFlags& flags, const std::filesystem::path& out_dir,
                     bool resume = false);

/// Mean answer loss of `data` with evaluation prompts and no dropout.
double evaluation_loss(const Model& model, const QaData& data, const PromptContext& ctx, const AblationFlags& flags);

struct WarmStartConfig {
  std::size_t steps = 300;
  std::size_t batch = 8;
  double lr = 2e-3;
  double warmup_ratio = 0.1;
  std::uint64_t seed = 0;
  std::size_t corpus_size = 200;
};

/// Text-only training of the base decoder (decoder.*) on a synthetic QA corpus
/// disjoint from any fixture seed in use, with an all-zero ECG prefix.
/// Stands in for starting from a pretrained instruction-following LM.
std::vector<LogRow> warm_start_decoder(Model& model, const PromptContext& ctx, const WarmStartConfig& config);

/// Greedy answer for one item with evaluation prompting.
struct Answer {
  std::string prompt;
  std::string text;
};
Answer answer_question(const Model& model, const EcgRecord& record, const QaItem& item,
                       const RetrievedReports& retrieved, const PromptContext& ctx, bool use_report = true);

std::string format_log_csv(const std::vector<LogRow>& log);
std::vector<LogRow> parse_log_csv(std::string_view text);

}  // namespace ecgqa

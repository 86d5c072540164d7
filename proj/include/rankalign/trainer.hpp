#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rankalign/dataset.hpp"
#include "rankalign/eval.hpp"
#include "rankalign/model.hpp"

namespace rankalign {

enum class LossVariant { simrrhf, raw_rrhf, raw_rrhf_weighted };

std::string_view variant_name(LossVariant v);
LossVariant variant_from_name(std::string_view name);

struct TrainConfig {
  LossVariant variant = LossVariant::simrrhf;
  LossWeights weights = LossWeights::standard();
  double learning_rate = 1e-5;
  int batch_size = 4;
  int max_steps = 1000;
  int ckpt_interval = 200;
  std::uint64_t seed = 0;
  GenerationConfig gen;

  /// Returns a copy with the variant's weight constraints applied: both
  /// raw variants force the similarity weight to 0.
  TrainConfig normalized() const;
  void validate() const;
};

/// Default weights of a variant when a config leaves them unspecified.
LossWeights default_weights(LossVariant v);

struct Checkpoint {
  std::int64_t step = 0;
  std::string params_path;
  std::optional<double> eval_accuracy;
  std::vector<LossBreakdown> loss_trace;  // recent history
};

struct StabilityReport {
  std::int64_t best_ckpt_step = 0;
  double best_acc = 0.0;
  std::vector<std::int64_t> window_steps;
  double acc_mean = 0.0;
  double acc_var_x1000 = 0.0;
};

struct AlignmentRunResult {
  std::vector<Checkpoint> checkpoints;
  ToyModelParams final_params;
  std::filesystem::path run_dir;
};

/// Runs the alignment loop: seeded shuffled batches, one gradient step per
/// batch, a checkpoint (with eval accuracy) every ckpt_interval steps and
/// always at the final step. Fully deterministic given the seed. Writes
/// checkpoints, a per-step loss trace and a config snapshot into run_dir.
AlignmentRunResult run_alignment(std::span<const ResponseSet> dataset,
                                 ToyModelParams base, const Tokenizer& tokenizer,
                                 const TrainConfig& config,
                                 std::span<const EvalItem> eval_set,
                                 const std::filesystem::path& run_dir);

/// Best checkpoint (ties to the earliest step) plus mean and 1000x
/// population variance of the five checkpoint accuracies around it, the
/// window shifting inward at the ends. Needs >= 5 evaluated checkpoints.
StabilityReport stability_report(std::span<const Checkpoint> checkpoints);

struct VariantResult {
  std::string name;
  StabilityReport stability;
  std::vector<Checkpoint> checkpoints;
};

/// Trains every config from the same base model and reports per-variant
/// stability rows. Needs >= 2 configs.
std::vector<VariantResult> compare_variants(
    std::span<const ResponseSet> dataset, std::span<const EvalItem> eval_set,
    const ToyModelParams& base_model, const Tokenizer& tokenizer,
    std::span<const TrainConfig> configs, const std::filesystem::path& run_dir);

/// Renders the best-checkpoint table (model_name | best_ckp | best_acc).
std::string render_best_ckpt_table(std::span<const VariantResult> rows);
/// Renders the stability table (model_name | acc_mean | acc_var*1000).
std::string render_stability_table(std::span<const VariantResult> rows);

void write_stability_report(const std::filesystem::path& path,
                            const StabilityReport& report);
StabilityReport load_stability_report(const std::filesystem::path& path);

// ----- supervised warmup -----

struct SftPair {
  std::string id;
  TokenSeq query;
  TokenSeq response;
};

struct SftConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int max_steps = 1000;
  std::uint64_t seed = 0;
  int probe_size = 16;  // frozen probe batch used for reporting
};

struct SftRunResult {
  ToyModelParams final_params;
  double initial_probe_nll = 0.0;
  double final_probe_nll = 0.0;
  std::vector<double> loss_trace;
};

/// Mean per-token NLL maximum-likelihood training on (query -> response)
/// pairs; the response's end token is part of the objective.
SftRunResult run_sft(std::span<const SftPair> pairs, ToyModelParams base,
                     const SftConfig& config);

/// Fraction of response pairs with distinct rewards whose
/// length-normalized score ordering matches the reward ordering.
double pairwise_ranking_accuracy(const ToyModelParams& params,
                                 std::span<const ResponseSet> dataset);

/// Mean total alignment loss over a frozen batch (generation included when
/// weights.sim > 0).
double probe_loss(const ToyModelParams& params,
                  std::span<const ResponseSet> probe,
                  const TrainConfig& config);

}  // namespace rankalign

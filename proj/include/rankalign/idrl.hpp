#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rankalign/dataset.hpp"
#include "rankalign/eval.hpp"
#include "rankalign/model.hpp"
#include "rankalign/trainer.hpp"

namespace rankalign {

struct RoundConfig {
  int target_size = 1000;
  double max_incorrect_fraction = 0.7;  // cap, not quota
  int round_index = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Provenance { carryover_incorrect, fresh };

struct RoundDataset {
  std::vector<LabeledAlignmentSample> samples;
  std::vector<Provenance> provenance;  // aligned with samples
  int n_incorrect = 0;
  int n_fresh = 0;
  std::vector<std::string> warnings;
};

/// Greedy-generates an answer per sample and keeps those whose extracted
/// answer is absent or differs from the gold answer. Order preserved;
/// generation failures count as incorrect.
std::vector<LabeledAlignmentSample> collect_incorrect(
    const ToyModelParams& params, const Tokenizer& tokenizer,
    std::span<const LabeledAlignmentSample> train_samples,
    const GenerationConfig& gen);

/// Builds the next round: up to floor(max_incorrect_fraction * target_size)
/// carried-over incorrect samples (seeded subsample when over the cap),
/// topped up with a seeded uniform draw from the fresh pool. The pool must
/// be disjoint from the incorrect list by sample id. Output order is a
/// seeded shuffle; a shortfall is recorded as a warning, not an error.
RoundDataset compose_next_round(
    std::span<const LabeledAlignmentSample> incorrect,
    std::span<const LabeledAlignmentSample> fresh_pool,
    const RoundConfig& config);

struct RoundResult {
  int round_index = 0;
  RoundDataset dataset;
  std::vector<Checkpoint> checkpoints;
  std::string best_checkpoint_path;
  EvalReport report;
  std::string manifest_path;
};

/// Multi-round relearning loop. Round 1 trains on round_sources[0] as-is;
/// each later round r harvests the incorrect samples of round r-1's
/// training data with that round's best checkpoint, composes them with the
/// fresh pool round_sources[r-1], and resumes training from the best
/// checkpoint. Writes one manifest per round under run_dir.
std::vector<RoundResult> run_idrl_rounds(
    ToyModelParams base, const Tokenizer& tokenizer,
    std::span<const std::vector<LabeledAlignmentSample>> round_sources,
    int n_rounds, const TrainConfig& train_config,
    const RoundConfig& round_config, std::span<const EvalItem> eval_set,
    const std::filesystem::path& run_dir);

}  // namespace rankalign

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rankalign/answer.hpp"
#include "rankalign/dataset.hpp"

namespace rankalign {

struct CandidateResult {
  std::string seed_id;
  std::string text;
  std::string source;
  std::optional<NormalizedAnswer> extracted_answer;
  int step_count = 0;
  double quality_score = 0.0;
};

/// Text-in/text-out reasoning generator. Returning nullopt marks a failed
/// call; the pipeline records it and moves on.
class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  virtual std::string name() const = 0;
  virtual std::optional<std::string> generate(const std::string& prompt,
                                              std::uint64_t seed) = 0;
  virtual bool deterministic() const { return true; }
};

/// Solves "a+b" prompts with an enumerated-steps derivation ending in a
/// final answer line. Used as the always-correct generator in tests and
/// synthetic pipelines.
class MockSolver : public GeneratorClient {
 public:
  std::string name() const override { return "mock"; }
  std::optional<std::string> generate(const std::string& prompt,
                                      std::uint64_t seed) override;
};

/// Seeded corruption of MockSolver: with probability corrupt_rate the final
/// answer is replaced by a wrong value of the same width.
class NoisySolver : public GeneratorClient {
 public:
  explicit NoisySolver(double corrupt_rate) : corrupt_rate_(corrupt_rate) {}
  std::string name() const override { return "noisy"; }
  std::optional<std::string> generate(const std::string& prompt,
                                      std::uint64_t seed) override;

 private:
  double corrupt_rate_;
  MockSolver base_;
};

/// Adapter for a generic HTTP completion endpoint: POSTs
/// {"prompt": ..., "seed": ...} and expects {"completion": ...} back.
class RemoteClient : public GeneratorClient {
 public:
  RemoteClient(std::string url, int timeout_ms = 2000, int retries = 1,
               std::string name = "remote");
  std::string name() const override { return name_; }
  bool deterministic() const override { return false; }
  std::optional<std::string> generate(const std::string& prompt,
                                      std::uint64_t seed) override;

 private:
  std::string name_;
  std::string host_;
  int port_ = 80;
  std::string path_;
  int timeout_ms_;
  int retries_;
};

struct DiscriminatorConfig {
  bool require_correct_answer = true;
  int min_steps = 0;
  double weight_steps = 1.0;          // quality feature weights, >= 0
  double weight_answer_marker = 1.0;

  void validate() const;
};

/// Substitutes the question into the single "{q}" placeholder.
std::string build_prompt(const SeedQA& seed, const std::string& prompt_template);

/// Lines that start with an enumerator (digits plus . ) or :) or with the
/// word "step".
int count_steps(const std::string& text);

/// Weighted combination of the step-count feature (saturating at 4 steps)
/// and the final-answer-marker feature, rescaled to [0, 1].
double quality_score(int step_count, bool has_answer_marker,
                     const DiscriminatorConfig& config = {});

struct HarvestResult {
  std::vector<CandidateResult> candidates;
  std::vector<std::string> failures;  // client names that produced nothing
};

/// One candidate per responsive client; failures become failure records,
/// never pipeline errors.
HarvestResult harvest_candidates(
    const SeedQA& seed,
    std::span<const std::unique_ptr<GeneratorClient>> clients,
    const std::string& prompt_template, std::uint64_t run_seed);

/// Recomputes quality scores with the config's feature weights.
void recompute_quality(std::vector<CandidateResult>& candidates,
                       const DiscriminatorConfig& config);

/// Keeps candidates with the gold answer (when required) and enough steps,
/// then picks the highest quality score; ties go to more steps, then the
/// lexicographically smaller source. Returns nullopt when nothing survives.
std::optional<CandidateResult> discriminate(
    std::span<const CandidateResult> candidates, const std::string& gold_answer,
    const DiscriminatorConfig& config);

struct AssemblyManifest {
  std::map<std::string, int> source_counts;
  int duplicates_dropped = 0;
  std::vector<std::string> warnings;
};

/// Merges discriminated results with extra corpus files into one SFT
/// dataset, deduplicating by (question, answer).
AssemblyManifest assemble_sft_dataset(
    std::span<const std::pair<SeedQA, CandidateResult>> selected,
    std::span<const std::filesystem::path> extra_corpora,
    const std::filesystem::path& out_path, const std::string& language = "en");

enum class ScoringMode { programmatic, external_file };

/// Reward a response so a correct answer always outranks an incorrect one:
/// 1.0 * answer_correct + 0.5 * quality_score.
double programmatic_reward(bool answer_correct, double quality);

/// Emits one alignment record per seed with >= 2 candidates. Programmatic
/// scoring uses programmatic_reward; external_file copies scores from the
/// sidecar entries and fails listing every missing (query, index) key.
AssemblyManifest assemble_alignment_dataset(
    std::span<const SeedQA> seeds,
    std::span<const std::vector<CandidateResult>> per_seed_candidates,
    ScoringMode scoring, std::span<const ScoreEntry> scores,
    const std::filesystem::path& out_path);

/// Synthetic two-digit addition seeds (sums kept to two digits so every
/// derivation has identical width).
std::vector<SeedQA> make_addition_seeds(int count, std::uint64_t seed);

}  // namespace rankalign

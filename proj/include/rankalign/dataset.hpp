#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rankalign/tokenizer.hpp"

namespace rankalign {

/// One candidate response with its scalar reward.
struct ScoredResponse {
  TokenSeq tokens;
  double reward = 0.0;
  std::string source;
};

/// One query with its k >= 2 scored responses; the unit of alignment
/// training.
struct ResponseSet {
  std::string query_id;
  TokenSeq query_tokens;
  std::vector<ScoredResponse> responses;

  /// Throws unless there are >= 2 responses, every response is non-empty
  /// and every reward is finite.
  void validate() const;

  std::vector<double> rewards() const;
};

/// Alignment sample plus the gold answer needed to judge correctness.
struct LabeledAlignmentSample {
  ResponseSet response_set;
  std::string gold_answer;

  const std::string& id() const { return response_set.query_id; }
};

// ----- file-level records (line-delimited JSON) -----

struct SeedQA {
  std::string id;
  std::string question;
  std::string gold_answer;
  std::string template_id;  // optional
};

struct EvalItem {
  std::string id;
  std::string question;
  std::string gold_answer;
};

struct SftRecord {
  std::string id;
  std::string question;
  std::string response_text;
  std::string answer;
  std::string source;
  std::string language;
};

struct AlignmentResponseRecord {
  std::string text;
  double reward = 0.0;
  std::string source;
};

struct AlignmentRecord {
  std::string id;
  std::string query;
  std::string gold_answer;
  std::vector<AlignmentResponseRecord> responses;
};

struct ScoreEntry {
  std::string query_id;
  int response_index = 0;
  double score = 0.0;
};

std::vector<SeedQA> load_seed_file(const std::filesystem::path& path);
void write_seed_file(const std::filesystem::path& path,
                     std::span<const SeedQA> seeds);

std::vector<EvalItem> load_eval_file(const std::filesystem::path& path);
void write_eval_file(const std::filesystem::path& path,
                     std::span<const EvalItem> items);

std::vector<SftRecord> load_sft_records(const std::filesystem::path& path);
void write_sft_records(const std::filesystem::path& path,
                       std::span<const SftRecord> records);

std::vector<AlignmentRecord> load_alignment_records(
    const std::filesystem::path& path);
void write_alignment_records(const std::filesystem::path& path,
                             std::span<const AlignmentRecord> records);

std::vector<ScoreEntry> load_score_file(const std::filesystem::path& path);
void write_score_file(const std::filesystem::path& path,
                      std::span<const ScoreEntry> entries);

/// Tokenizes a file record into a validated training sample.
LabeledAlignmentSample to_labeled_sample(const AlignmentRecord& record,
                                         const Tokenizer& tokenizer);

}  // namespace rankalign

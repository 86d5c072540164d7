#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rankalign/dataset.hpp"
#include "rankalign/model.hpp"

namespace rankalign {

struct EvalRecord {
  std::string item_id;
  std::string generated_text;
  std::optional<std::string> extracted_answer;  // canonical form
  bool correct = false;
  bool converged = false;
};

struct EvalReport {
  double accuracy = 0.0;
  double overall_noncvg_rate = 0.0;
  double positive_noncvg_rate = 0.0;
  std::vector<EvalRecord> records;
  int n = 0;
};

/// Computes the three rates from per-item records.
EvalReport report_from_records(std::vector<EvalRecord> records);

/// Greedy-generates an answer per item and scores it. Generation or
/// encoding failures count as non-converged and incorrect.
EvalReport evaluate(const ToyModelParams& params, const Tokenizer& tokenizer,
                    std::span<const EvalItem> eval_set,
                    const GenerationConfig& gen);

/// Renders one row per named report: accuracy and the two non-convergence
/// rates as percentages with two decimals.
std::string render_report(
    const std::vector<std::pair<std::string, EvalReport>>& reports);

void write_eval_report(const std::filesystem::path& path,
                       const EvalReport& report);
EvalReport load_eval_report(const std::filesystem::path& path);

}  // namespace rankalign

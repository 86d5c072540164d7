#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rankalign {

/// Weights of the three loss terms. All must be non-negative and they may
/// not all be zero.
struct LossWeights {
  double rank = 10.0;
  double sft = 1.0;
  double sim = 1.0;

  void validate() const;

  /// Default training weights (rank 10, sft 1, sim 1).
  static LossWeights standard() { return {10.0, 1.0, 1.0}; }
  /// Unweighted ranking baseline: rank 1, sft 1, no similarity term.
  static LossWeights rrhf_unweighted() { return {1.0, 1.0, 0.0}; }
  /// Weighted ranking baseline: rank 10, sft 1, no similarity term.
  static LossWeights rrhf_weighted() { return {10.0, 1.0, 0.0}; }
};

struct LossBreakdown {
  double rank = 0.0;
  double sft = 0.0;
  double sim = 0.0;
  double total = 0.0;
  LossWeights weights;
};

/// Mean of per-token conditional log-probabilities. The sequence must be
/// non-empty with all entries finite and <= 0.
double length_normalized_logprob(std::span<const double> token_logprobs);

/// Sum over ordered pairs (i, j) with rewards[i] < rewards[j] of
/// max(0, p[i] - p[j]). Equal rewards contribute nothing. Both spans must
/// have the same length >= 2.
double ranking_loss(std::span<const double> p,
                    std::span<const double> rewards);

/// Argmax of the reward list; ties resolve to the lowest index.
std::size_t best_response_index(std::span<const double> rewards);

/// -p[best_index].
double sft_loss(std::span<const double> p, std::size_t best_index);

/// 1 - cosine(e_best, e_model), in [0, 2]. Both vectors must have equal
/// dimension and strictly positive norm.
double similarity_loss(std::span<const double> e_best,
                       std::span<const double> e_model);

/// Combines the three terms: total = w.rank*rank + w.sft*sft + w.sim*sim.
/// Requires rank >= 0 and sim in [0, 2].
LossBreakdown total_loss(double rank, double sft, double sim,
                         const LossWeights& weights);

/// Ranking + sft baseline. weights.sim must be 0; the similarity component
/// of the result is identically 0.
LossBreakdown raw_rrhf_loss(std::span<const double> p,
                            std::span<const double> rewards,
                            const LossWeights& weights);

/// Numerically stable log-softmax of a logit vector.
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace rankalign

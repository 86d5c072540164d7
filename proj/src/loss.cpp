#include "rankalign/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rankalign {

void LossWeights::validate() const {
  if (rank < 0.0 || sft < 0.0 || sim < 0.0)
    throw std::invalid_argument("loss weights must be non-negative");
  if (rank == 0.0 && sft == 0.0 && sim == 0.0)
    throw std::invalid_argument("loss weights must not all be zero");
  if (!std::isfinite(rank) || !std::isfinite(sft) || !std::isfinite(sim))
    throw std::invalid_argument("loss weights must be finite");
}

double length_normalized_logprob(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw std::invalid_argument("empty response");
  double sum = 0.0;
  for (double lp : token_logprobs) {
    if (!std::isfinite(lp) || lp > 0.0)
      throw std::invalid_argument("log-probabilities must be finite and <= 0");
    sum += lp;
  }
  return sum / static_cast<double>(token_logprobs.size());
}

double ranking_loss(std::span<const double> p,
                    std::span<const double> rewards) {
  if (p.size() != rewards.size())
    throw std::invalid_argument("score/reward length mismatch");
  if (p.size() < 2)
    throw std::invalid_argument("ranking loss needs at least 2 responses");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (rewards[i] < rewards[j]) total += std::max(0.0, p[i] - p[j]);
    }
  }
  return total;
}

std::size_t best_response_index(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("empty reward list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    if (rewards[i] > rewards[best]) best = i;  // ties keep the lowest index
  }
  return best;
}

double sft_loss(std::span<const double> p, std::size_t best_index) {
  if (best_index >= p.size())
    throw std::out_of_range("best response index out of range");
  return -p[best_index];
}

double similarity_loss(std::span<const double> e_best,
                       std::span<const double> e_model) {
  if (e_best.size() != e_model.size())
    throw std::invalid_argument("embedding dimension mismatch");
  if (e_best.empty()) throw std::invalid_argument("empty embedding");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < e_best.size(); ++i) {
    dot += e_best[i] * e_model[i];
    na += e_best[i] * e_best[i];
    nb += e_model[i] * e_model[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("degenerate embedding");
  double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  cosine = std::clamp(cosine, -1.0, 1.0);
  return 1.0 - cosine;
}

LossBreakdown total_loss(double rank, double sft, double sim,
                         const LossWeights& weights) {
  weights.validate();
  if (rank < 0.0) throw std::invalid_argument("ranking loss must be >= 0");
  if (sim < 0.0 || sim > 2.0)
    throw std::invalid_argument("similarity loss must be in [0, 2]");
  LossBreakdown out;
  out.rank = rank;
  out.sft = sft;
  out.sim = sim;
  out.weights = weights;
  out.total = weights.rank * rank + weights.sft * sft + weights.sim * sim;
  return out;
}

LossBreakdown raw_rrhf_loss(std::span<const double> p,
                            std::span<const double> rewards,
                            const LossWeights& weights) {
  if (weights.sim != 0.0)
    throw std::invalid_argument(
        "raw ranking baseline requires a zero similarity weight");
  const double rank = ranking_loss(p, rewards);
  const double sft = sft_loss(p, best_response_index(rewards));
  return total_loss(rank, sft, 0.0, weights);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("empty logits");
  double max_val = logits[0];
  for (double v : logits) max_val = std::max(max_val, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - max_val);
  const double log_z = max_val + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

}  // namespace rankalign

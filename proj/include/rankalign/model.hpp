#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankalign/dataset.hpp"
#include "rankalign/loss.hpp"
#include "rankalign/tokenizer.hpp"

namespace rankalign {

enum class Arch { bigram, mlp, tiny_attention };

/// What response_embedding averages: the final-layer hidden states (the
/// default) or the raw token-embedding rows.
enum class EmbeddingSource { final_hidden, input_embedding };

std::string_view arch_name(Arch a);
Arch arch_from_name(std::string_view name);

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 0;
  int hidden_dim = 0;
  int context_len = 0;
  Arch arch = Arch::bigram;
  std::uint64_t seed = 0;
  EmbeddingSource embedding_source = EmbeddingSource::final_hidden;

  void validate() const;
};

/// Token window the mlp arch conditions on (current token plus the two
/// before it).
inline constexpr int kMlpWindow = 3;

struct ParamSegment {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }
};

/// Named layout of the flat parameter vector for a config.
class ParamLayout {
 public:
  static ParamLayout make(const ModelConfig& cfg);

  std::size_t total() const { return total_; }
  const std::vector<ParamSegment>& segments() const { return segments_; }
  const ParamSegment& segment(std::string_view name) const;

 private:
  std::vector<ParamSegment> segments_;
  std::size_t total_ = 0;
};

struct ToyModelParams {
  ModelConfig config;
  std::vector<double> values;
  std::int64_t step = 0;
};

/// Deterministic initialization: equal configs give bit-identical params.
ToyModelParams init_model(const ModelConfig& cfg);

std::span<double> param_view(ToyModelParams& params, std::string_view name);
std::span<const double> param_view(const ToyModelParams& params,
                                   std::string_view name);

/// Full conditional log distribution (over the vocabulary) at every
/// response position. exp-sums to 1 at each position.
std::vector<std::vector<double>> conditional_log_distributions(
    const ToyModelParams& params, std::span<const int> query_tokens,
    std::span<const int> response_tokens);

/// One conditional log-probability per response token; all <= 0.
std::vector<double> response_logprobs(const ToyModelParams& params,
                                      std::span<const int> query_tokens,
                                      std::span<const int> response_tokens);

/// Final-layer hidden state at every response position.
std::vector<std::vector<double>> response_hidden_states(
    const ToyModelParams& params, std::span<const int> query_tokens,
    std::span<const int> response_tokens);

/// Mean embedding of the response positions (source per config).
std::vector<double> response_embedding(const ToyModelParams& params,
                                       std::span<const int> query_tokens,
                                       std::span<const int> response_tokens);

struct GenerationConfig {
  enum class Mode { greedy, sample };

  int max_new_tokens = 64;
  Mode mode = Mode::greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  int repetition_window = 8;

  void validate(const ModelConfig& model) const;
};

struct GenerationResult {
  TokenSeq tokens;  // includes the end token when terminated
  bool terminated = false;
  bool repetition_detected = false;
};

/// Autoregressive decoding. Greedy mode is deterministic; sample mode is
/// deterministic given the config seed. Stops on the end token, on the
/// token cap, or when the trailing repetition window exactly repeats the
/// window before it.
GenerationResult generate(const ToyModelParams& params,
                          std::span<const int> query_tokens,
                          const GenerationConfig& gen);

/// Total alignment loss with the generated response held fixed.
/// `generated_tokens` may be empty only when weights.sim == 0.
LossBreakdown alignment_loss(const ToyModelParams& params,
                             const ResponseSet& response_set,
                             const LossWeights& weights,
                             std::span<const int> generated_tokens);

struct GradientResult {
  std::vector<double> gradient;
  LossBreakdown breakdown;
  TokenSeq generated;  // y_pi used for the similarity term (empty if unused)
};

/// Exact analytic gradient of the total alignment loss w.r.t. every
/// parameter. The similarity term regenerates y_pi greedily and treats the
/// generated token identities as constants; the embedding computation is
/// differentiated on both sides.
GradientResult simrrhf_gradient(const ToyModelParams& params,
                                const ResponseSet& response_set,
                                const LossWeights& weights,
                                const GenerationConfig& gen);

/// Mean next-token NLL over the response tokens plus the end token, and
/// its gradient (accumulated into `grad` when non-null).
double sft_nll(const ToyModelParams& params, std::span<const int> query_tokens,
               std::span<const int> response_tokens,
               std::span<double> grad = {});

/// params' = params - lr * gradient, with the step counter incremented.
/// Throws on non-finite gradient entries.
ToyModelParams sgd_step(ToyModelParams params, std::span<const double> gradient,
                        double learning_rate);

// ----- checkpoint file (self-describing, versioned, bit-exact) -----

void save_checkpoint(const ToyModelParams& params, const Tokenizer& tokenizer,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  ToyModelParams params;
  Tokenizer tokenizer;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rankalign

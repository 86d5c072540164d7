#pragma once

// Shared fixtures: rigged models with known behaviour, temp dirs, random
// model/response-set generators.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rankalign/dataset.hpp"
#include "rankalign/model.hpp"
#include "rankalign/rng.hpp"
#include "rankalign/tokenizer.hpp"

namespace testutil {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("rankalign_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Deterministic bigram rig: token t always transitions to next.at(t).
// Unmapped tokens fall through to pad, which triggers the repetition stop.
inline rankalign::ToyModelParams make_chain_model(
    const rankalign::Tokenizer& tokenizer, const std::map<int, int>& next,
    int context_len) {
  using namespace rankalign;
  const int v = tokenizer.vocab_size();
  ModelConfig cfg;
  cfg.vocab_size = v;
  cfg.embed_dim = v;
  cfg.hidden_dim = v;
  cfg.context_len = context_len;
  cfg.arch = Arch::bigram;
  cfg.seed = 0;
  ToyModelParams params;
  params.config = cfg;
  params.values.assign(ParamLayout::make(cfg).total(), 0.0);
  auto tok_embed = param_view(params, "tok_embed");
  auto hid_w = param_view(params, "hid_w");
  auto out_w = param_view(params, "out_w");
  for (int t = 0; t < v; ++t) {
    tok_embed[static_cast<std::size_t>(t) * v + t] = 1.0;
    hid_w[static_cast<std::size_t>(t) * v + t] = 5.0;
  }
  for (const auto& [from, to] : next)
    out_w[static_cast<std::size_t>(to) * v + from] = 10.0;
  return params;
}

// Chain that deterministically emits `output` (then the end token) after any
// query ending in `trigger`.
inline rankalign::ToyModelParams make_emitter_model(
    const rankalign::Tokenizer& tokenizer, char trigger,
    const std::string& output, int context_len) {
  std::map<int, int> next;
  int prev = tokenizer.encode(std::string(1, trigger))[0];
  for (char c : output) {
    const int id = tokenizer.encode(std::string(1, c))[0];
    next[prev] = id;
    prev = id;
  }
  next[prev] = rankalign::Tokenizer::kEnd;
  return make_chain_model(tokenizer, next, context_len);
}

// Model that emits the same token forever.
inline rankalign::ToyModelParams make_const_model(
    const rankalign::Tokenizer& tokenizer, int token, int context_len) {
  using namespace rankalign;
  const int v = tokenizer.vocab_size();
  ModelConfig cfg;
  cfg.vocab_size = v;
  cfg.embed_dim = 2;
  cfg.hidden_dim = 2;
  cfg.context_len = context_len;
  cfg.arch = Arch::bigram;
  cfg.seed = 0;
  ToyModelParams params;
  params.config = cfg;
  params.values.assign(ParamLayout::make(cfg).total(), 0.0);
  param_view(params, "out_b")[static_cast<std::size_t>(token)] = 10.0;
  return params;
}

inline rankalign::ModelConfig random_small_config(rankalign::Rng& rng,
                                                  rankalign::Arch arch) {
  rankalign::ModelConfig cfg;
  cfg.vocab_size = 5 + static_cast<int>(rng.uniform_int(4));
  cfg.embed_dim = 3 + static_cast<int>(rng.uniform_int(3));
  cfg.hidden_dim = 3 + static_cast<int>(rng.uniform_int(3));
  cfg.context_len = 14 + static_cast<int>(rng.uniform_int(4));
  cfg.arch = arch;
  cfg.seed = rng.next();
  return cfg;
}

inline rankalign::TokenSeq random_tokens(rankalign::Rng& rng,
                                         const rankalign::ModelConfig& cfg,
                                         int len) {
  rankalign::TokenSeq out;
  for (int i = 0; i < len; ++i)
    out.push_back(3 + static_cast<int>(rng.uniform_int(
                          static_cast<std::uint64_t>(cfg.vocab_size - 3))));
  return out;
}

inline rankalign::ResponseSet random_response_set(
    rankalign::Rng& rng, const rankalign::ModelConfig& cfg, int k) {
  rankalign::ResponseSet rs;
  rs.query_id = "fixture";
  rs.query_tokens = random_tokens(rng, cfg, 2);
  for (int i = 0; i < k; ++i) {
    rankalign::ScoredResponse r;
    r.tokens = random_tokens(rng, cfg, 3 + static_cast<int>(rng.uniform_int(3)));
    r.reward = static_cast<double>(i) + rng.uniform();  // distinct rewards
    r.source = "gen" + std::to_string(i);
    rs.responses.push_back(std::move(r));
  }
  return rs;
}

// Smallest gap between any two normalized scores; gradient checks need the
// hinge to be locally smooth.
inline double min_score_gap(const rankalign::ToyModelParams& params,
                            const rankalign::ResponseSet& rs) {
  std::vector<double> p;
  for (const auto& r : rs.responses)
    p.push_back(rankalign::length_normalized_logprob(
        rankalign::response_logprobs(params, rs.query_tokens, r.tokens)));
  double gap = 1e18;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j)
      gap = std::min(gap, std::abs(p[i] - p[j]));
  return gap;
}

}  // namespace testutil

#include "rankalign/idrl.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "rankalign/answer.hpp"
#include "rankalign/rng.hpp"

namespace rankalign {

namespace {
using nlohmann::ordered_json;
}

void RoundConfig::validate() const {
  if (target_size < 1) throw std::invalid_argument("target_size must be >= 1");
  if (!(max_incorrect_fraction > 0.0) || max_incorrect_fraction > 1.0)
    throw std::invalid_argument("max_incorrect_fraction must be in (0, 1]");
  if (round_index < 1) throw std::invalid_argument("round_index must be >= 1");
}

std::vector<LabeledAlignmentSample> collect_incorrect(
    const ToyModelParams& params, const Tokenizer& tokenizer,
    std::span<const LabeledAlignmentSample> train_samples,
    const GenerationConfig& gen) {
  if (train_samples.empty())
    throw std::invalid_argument("empty training sample list");
  GenerationConfig greedy = gen;  // correctness is judged on greedy decoding
  greedy.mode = GenerationConfig::Mode::greedy;

  std::vector<LabeledAlignmentSample> incorrect;
  for (const auto& sample : train_samples) {
    bool is_correct = false;
    try {
      const GenerationResult gr =
          generate(params, sample.response_set.query_tokens, greedy);
      const std::string text = tokenizer.decode(gr.tokens);
      if (auto extracted = extract_answer(text))
        is_correct = *extracted == normalize_answer(sample.gold_answer);
    } catch (const std::exception&) {
      is_correct = false;  // generation failures count as incorrect
    }
    if (!is_correct) incorrect.push_back(sample);
  }
  return incorrect;
}

RoundDataset compose_next_round(
    std::span<const LabeledAlignmentSample> incorrect,
    std::span<const LabeledAlignmentSample> fresh_pool,
    const RoundConfig& config) {
  config.validate();
  if (incorrect.empty() && fresh_pool.empty())
    throw std::invalid_argument("no samples available for the next round");
  {
    std::set<std::string> ids;
    for (const auto& s : incorrect) ids.insert(s.id());
    for (const auto& s : fresh_pool)
      if (ids.contains(s.id()))
        throw std::invalid_argument("fresh pool overlaps incorrect set: " +
                                    s.id());
  }

  const int cap = static_cast<int>(config.max_incorrect_fraction *
                                   static_cast<double>(config.target_size));
  Rng rng(derive_seed(config.seed,
                      "round" + std::to_string(config.round_index)));

  // carried-over incorrect samples, subsampled when over the cap
  std::vector<std::size_t> inc_idx(incorrect.size());
  for (std::size_t i = 0; i < inc_idx.size(); ++i) inc_idx[i] = i;
  if (static_cast<int>(incorrect.size()) > cap) {
    rng.shuffle(inc_idx);
    inc_idx.resize(static_cast<std::size_t>(std::max(cap, 0)));
    std::sort(inc_idx.begin(), inc_idx.end());
  }

  RoundDataset out;
  for (std::size_t i : inc_idx) {
    out.samples.push_back(incorrect[i]);
    out.provenance.push_back(Provenance::carryover_incorrect);
  }
  out.n_incorrect = static_cast<int>(out.samples.size());

  const int want_fresh = config.target_size - out.n_incorrect;
  std::vector<std::size_t> pool_idx(fresh_pool.size());
  for (std::size_t i = 0; i < pool_idx.size(); ++i) pool_idx[i] = i;
  if (static_cast<int>(fresh_pool.size()) > want_fresh) {
    rng.shuffle(pool_idx);
    pool_idx.resize(static_cast<std::size_t>(std::max(want_fresh, 0)));
    std::sort(pool_idx.begin(), pool_idx.end());
  }
  for (std::size_t i : pool_idx) {
    out.samples.push_back(fresh_pool[i]);
    out.provenance.push_back(Provenance::fresh);
  }
  out.n_fresh = static_cast<int>(out.samples.size()) - out.n_incorrect;

  if (static_cast<int>(out.samples.size()) < config.target_size)
    out.warnings.push_back(
        "round " + std::to_string(config.round_index) + " underfilled: " +
        std::to_string(out.samples.size()) + " of " +
        std::to_string(config.target_size) + " samples");

  // final order is a seeded shuffle of (sample, provenance) pairs
  std::vector<std::size_t> order(out.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<LabeledAlignmentSample> samples;
  std::vector<Provenance> provenance;
  samples.reserve(order.size());
  provenance.reserve(order.size());
  for (std::size_t i : order) {
    samples.push_back(std::move(out.samples[i]));
    provenance.push_back(out.provenance[i]);
  }
  out.samples = std::move(samples);
  out.provenance = std::move(provenance);
  return out;
}

namespace {

void write_round_manifest(const std::filesystem::path& path,
                          const RoundResult& round, std::uint64_t seed,
                          const std::string& source_checkpoint) {
  ordered_json carryover = ordered_json::array();
  ordered_json fresh = ordered_json::array();
  for (std::size_t i = 0; i < round.dataset.samples.size(); ++i) {
    const auto& id = round.dataset.samples[i].id();
    if (round.dataset.provenance[i] == Provenance::carryover_incorrect)
      carryover.push_back(id);
    else
      fresh.push_back(id);
  }
  ordered_json doc{{"round_index", round.round_index},
                   {"counts",
                    {{"incorrect", round.dataset.n_incorrect},
                     {"fresh", round.dataset.n_fresh}}},
                   {"carryover_ids", carryover},
                   {"fresh_ids", fresh},
                   {"seed", seed},
                   {"source_checkpoint", source_checkpoint},
                   {"warnings", round.dataset.warnings}};
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write round manifest: " + path.string());
  out << doc.dump(2) << "\n";
}

const Checkpoint& best_checkpoint(const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.empty()) throw std::runtime_error("no checkpoints saved");
  std::size_t best = 0;
  bool any_eval = false;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (!checkpoints[i].eval_accuracy) continue;
    if (!any_eval || *checkpoints[i].eval_accuracy >
                         *checkpoints[best].eval_accuracy) {
      best = i;
      any_eval = true;
    }
  }
  return any_eval ? checkpoints[best] : checkpoints.back();
}

}  // namespace

std::vector<RoundResult> run_idrl_rounds(
    ToyModelParams base, const Tokenizer& tokenizer,
    std::span<const std::vector<LabeledAlignmentSample>> round_sources,
    int n_rounds, const TrainConfig& train_config,
    const RoundConfig& round_config, std::span<const EvalItem> eval_set,
    const std::filesystem::path& run_dir) {
  if (n_rounds < 1) throw std::invalid_argument("n_rounds must be >= 1");
  if (round_sources.empty() ||
      static_cast<int>(round_sources.size()) < n_rounds)
    throw std::invalid_argument("need one sample source per round");
  round_config.validate();
  std::filesystem::create_directories(run_dir);

  std::vector<RoundResult> rounds;
  ToyModelParams params = std::move(base);
  std::vector<LabeledAlignmentSample> prev_train;
  std::string source_checkpoint = "base";

  for (int r = 1; r <= n_rounds; ++r) {
    RoundResult round;
    round.round_index = r;
    if (r == 1) {
      // round 1 trains on the provided dataset as-is
      round.dataset.samples = round_sources[0];
      round.dataset.provenance.assign(round.dataset.samples.size(),
                                      Provenance::fresh);
      round.dataset.n_fresh = static_cast<int>(round.dataset.samples.size());
    } else {
      const auto incorrect =
          collect_incorrect(params, tokenizer, prev_train, train_config.gen);
      RoundConfig rc = round_config;
      rc.round_index = r;
      round.dataset = compose_next_round(
          incorrect, round_sources[static_cast<std::size_t>(r - 1)], rc);
    }
    if (round.dataset.samples.empty())
      throw std::runtime_error("round " + std::to_string(r) + " has no samples");

    std::vector<ResponseSet> sets;
    sets.reserve(round.dataset.samples.size());
    for (const auto& s : round.dataset.samples) sets.push_back(s.response_set);

    const auto round_dir = run_dir / ("round_" + std::to_string(r));
    auto run = run_alignment(sets, params, tokenizer, train_config, eval_set,
                             round_dir);
    round.checkpoints = std::move(run.checkpoints);

    // the next round resumes from this round's best checkpoint
    const Checkpoint& best = best_checkpoint(round.checkpoints);
    round.best_checkpoint_path = best.params_path;
    params = load_checkpoint(best.params_path).params;
    if (!eval_set.empty())
      round.report = evaluate(params, tokenizer, eval_set, train_config.gen);

    const auto manifest_path = round_dir / "round_manifest.json";
    write_round_manifest(manifest_path, round, round_config.seed,
                         source_checkpoint);
    round.manifest_path = manifest_path.string();

    source_checkpoint = round.best_checkpoint_path;
    prev_train = round.dataset.samples;
    rounds.push_back(std::move(round));
  }
  return rounds;
}

}  // namespace rankalign

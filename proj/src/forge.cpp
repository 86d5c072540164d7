#include "rankalign/forge.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

#include "rankalign/rng.hpp"

namespace rankalign {

namespace {

struct AdditionProblem {
  long long a = 0;
  long long b = 0;
};

// First "a+b" occurrence in the prompt.
std::optional<AdditionProblem> find_addition(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
    std::size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])))
      ++j;
    if (j - i > 9) {
      i = j;
      continue;
    }
    std::size_t k = j;
    while (k < text.size() && text[k] == ' ') ++k;
    if (k >= text.size() || text[k] != '+') {
      i = j;
      continue;
    }
    ++k;
    while (k < text.size() && text[k] == ' ') ++k;
    if (k >= text.size() || !std::isdigit(static_cast<unsigned char>(text[k]))) {
      i = j;
      continue;
    }
    std::size_t m = k;
    while (m < text.size() && std::isdigit(static_cast<unsigned char>(text[m])))
      ++m;
    if (m - k > 9) {
      i = m;
      continue;
    }
    AdditionProblem p;
    p.a = std::stoll(text.substr(i, j - i));
    p.b = std::stoll(text.substr(k, m - k));
    return p;
  }
  return std::nullopt;
}

std::string addition_derivation(long long a, long long b) {
  const long long sum = a + b;
  std::ostringstream out;
  out << "1. units: " << a % 10 << "+" << b % 10 << ".\n";
  out << "2. tens: " << a / 10 << "+" << b / 10 << ".\n";
  out << "3. total: " << a << "+" << b << "=" << sum << ".\n";
  out << "Answer: " << sum;
  return out.str();
}

bool has_answer_marker(const std::string& text) {
  for (const auto& marker : default_answer_markers())
    if (text.find(marker) != std::string::npos) return true;
  return false;
}

}  // namespace

std::optional<std::string> MockSolver::generate(const std::string& prompt,
                                                std::uint64_t) {
  const auto problem = find_addition(prompt);
  if (!problem) return "I cannot solve this.";
  return addition_derivation(problem->a, problem->b);
}

std::optional<std::string> NoisySolver::generate(const std::string& prompt,
                                                 std::uint64_t seed) {
  auto text = base_.generate(prompt, seed);
  if (!text) return text;
  const auto problem = find_addition(prompt);
  if (!problem) return text;
  Rng rng(derive_seed(seed, "corrupt"));
  if (rng.uniform() >= corrupt_rate_) return text;

  // rotate the final answer's units digit so the value is wrong but keeps
  // its width
  const long long sum = problem->a + problem->b;
  const long long delta = 1 + static_cast<long long>(rng.uniform_int(8));
  const long long wrong = sum - sum % 10 + (sum % 10 + delta) % 10;
  const std::string marker = "Answer: ";
  const std::size_t pos = text->rfind(marker);
  if (pos == std::string::npos) return text;
  text->replace(pos + marker.size(), std::string::npos, std::to_string(wrong));
  return text;
}

RemoteClient::RemoteClient(std::string url, int timeout_ms, int retries,
                           std::string name)
    : name_(std::move(name)), timeout_ms_(timeout_ms), retries_(retries) {
  std::string rest = url;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) != 0)
    throw std::invalid_argument("remote client expects an http:// url");
  rest = rest.substr(scheme.size());
  const std::size_t slash = rest.find('/');
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  std::string host_port = rest.substr(0, slash);
  const std::size_t colon = host_port.find(':');
  if (colon != std::string::npos) {
    host_ = host_port.substr(0, colon);
    port_ = std::stoi(host_port.substr(colon + 1));
  } else {
    host_ = host_port;
  }
}

std::optional<std::string> RemoteClient::generate(const std::string& prompt,
                                                  std::uint64_t seed) {
  const nlohmann::ordered_json body{{"prompt", prompt}, {"seed", seed}};
  const std::string payload = body.dump();
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(timeout_ms_ / 1000,
                                  (timeout_ms_ % 1000) * 1000);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    auto res = client.Post(path_, payload, "application/json");
    if (!res || res->status != 200) continue;
    try {
      const auto doc = nlohmann::json::parse(res->body);
      return doc.at("completion").get<std::string>();
    } catch (const std::exception&) {
      continue;
    }
  }
  return std::nullopt;
}

void DiscriminatorConfig::validate() const {
  if (weight_steps < 0.0 || weight_answer_marker < 0.0)
    throw std::invalid_argument("quality weights must be non-negative");
  if (min_steps < 0) throw std::invalid_argument("min_steps must be >= 0");
}

std::string build_prompt(const SeedQA& seed,
                         const std::string& prompt_template) {
  const std::string placeholder = "{q}";
  const std::size_t first = prompt_template.find(placeholder);
  if (first == std::string::npos)
    throw std::invalid_argument("prompt template has no {q} placeholder");
  if (prompt_template.find(placeholder, first + 1) != std::string::npos)
    throw std::invalid_argument("prompt template has more than one {q} placeholder");
  std::string out = prompt_template;
  out.replace(first, placeholder.size(), seed.question);
  return out;
}

int count_steps(const std::string& text) {
  int steps = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t eol = text.find('\n', start);
    if (eol == std::string::npos) eol = text.size();
    std::size_t i = start;
    while (i < eol && (text[i] == ' ' || text[i] == '\t')) ++i;
    if (i < eol) {
      if (std::isdigit(static_cast<unsigned char>(text[i]))) {
        std::size_t j = i;
        while (j < eol && std::isdigit(static_cast<unsigned char>(text[j])))
          ++j;
        if (j < eol && (text[j] == '.' || text[j] == ')' || text[j] == ':'))
          ++steps;
      } else if (eol - i >= 4) {
        const auto word = text.substr(i, 4);
        if (word == "step" || word == "Step" || word == "STEP") ++steps;
      }
    }
    if (eol == text.size()) break;
    start = eol + 1;
  }
  return steps;
}

double quality_score(int step_count, bool has_marker,
                     const DiscriminatorConfig& config) {
  config.validate();
  const double denom = config.weight_steps + config.weight_answer_marker;
  if (denom == 0.0) return 0.0;
  const double step_feature =
      std::min(static_cast<double>(step_count), 4.0) / 4.0;
  return (config.weight_steps * step_feature +
          config.weight_answer_marker * (has_marker ? 1.0 : 0.0)) /
         denom;
}

HarvestResult harvest_candidates(
    const SeedQA& seed,
    std::span<const std::unique_ptr<GeneratorClient>> clients,
    const std::string& prompt_template, std::uint64_t run_seed) {
  if (clients.empty()) throw std::invalid_argument("no generator clients");
  const std::string prompt = build_prompt(seed, prompt_template);
  HarvestResult result;
  for (const auto& client : clients) {
    const std::uint64_t call_seed =
        derive_seed(run_seed, client->name() + "|" + seed.id);
    std::optional<std::string> text;
    try {
      text = client->generate(prompt, call_seed);
    } catch (const std::exception&) {
      text = std::nullopt;
    }
    if (!text) {
      result.failures.push_back(client->name());
      continue;
    }
    CandidateResult cand;
    cand.seed_id = seed.id;
    cand.text = std::move(*text);
    cand.source = client->name();
    cand.extracted_answer = extract_answer(cand.text);
    cand.step_count = count_steps(cand.text);
    cand.quality_score =
        quality_score(cand.step_count, has_answer_marker(cand.text));
    result.candidates.push_back(std::move(cand));
  }
  return result;
}

void recompute_quality(std::vector<CandidateResult>& candidates,
                       const DiscriminatorConfig& config) {
  for (auto& cand : candidates)
    cand.quality_score =
        quality_score(cand.step_count, has_answer_marker(cand.text), config);
}

std::optional<CandidateResult> discriminate(
    std::span<const CandidateResult> candidates, const std::string& gold_answer,
    const DiscriminatorConfig& config) {
  config.validate();
  const NormalizedAnswer gold = normalize_answer(gold_answer);
  const CandidateResult* best = nullptr;
  for (const auto& cand : candidates) {
    if (config.require_correct_answer &&
        (!cand.extracted_answer || *cand.extracted_answer != gold))
      continue;
    if (cand.step_count < config.min_steps) continue;
    if (!best) {
      best = &cand;
      continue;
    }
    // higher quality wins; ties prefer more steps, then the smaller source
    if (cand.quality_score > best->quality_score ||
        (cand.quality_score == best->quality_score &&
         (cand.step_count > best->step_count ||
          (cand.step_count == best->step_count &&
           cand.source < best->source))))
      best = &cand;
  }
  if (!best) return std::nullopt;
  return *best;
}

AssemblyManifest assemble_sft_dataset(
    std::span<const std::pair<SeedQA, CandidateResult>> selected,
    std::span<const std::filesystem::path> extra_corpora,
    const std::filesystem::path& out_path, const std::string& language) {
  AssemblyManifest manifest;
  std::vector<SftRecord> records;
  std::set<std::string> seen;
  auto push_record = [&](SftRecord record, const std::string& bucket) {
    const std::string key = record.question + "\x1f" + record.answer;
    if (!seen.insert(key).second) {
      ++manifest.duplicates_dropped;
      return;
    }
    ++manifest.source_counts[bucket];
    records.push_back(std::move(record));
  };

  for (const auto& [seed, cand] : selected) {
    SftRecord record;
    record.id = seed.id;
    record.question = seed.question;
    record.response_text = cand.text;
    record.answer =
        cand.extracted_answer ? cand.extracted_answer->to_string() : "";
    record.source = cand.source;
    record.language = language;
    push_record(std::move(record), "forge");
  }
  for (const auto& corpus : extra_corpora) {
    std::vector<SftRecord> extra;
    try {
      extra = load_sft_records(corpus);
    } catch (const std::exception& e) {
      throw std::runtime_error("cannot read corpus " + corpus.string() + ": " +
                               e.what());
    }
    for (auto& record : extra)
      push_record(std::move(record), corpus.stem().string());
  }
  write_sft_records(out_path, records);
  if (manifest.duplicates_dropped > 0)
    manifest.warnings.push_back(
        std::to_string(manifest.duplicates_dropped) +
        " duplicate (question, answer) records dropped");
  return manifest;
}

double programmatic_reward(bool answer_correct, double quality) {
  return (answer_correct ? 1.0 : 0.0) + 0.5 * quality;
}

AssemblyManifest assemble_alignment_dataset(
    std::span<const SeedQA> seeds,
    std::span<const std::vector<CandidateResult>> per_seed_candidates,
    ScoringMode scoring, std::span<const ScoreEntry> scores,
    const std::filesystem::path& out_path) {
  if (seeds.size() != per_seed_candidates.size())
    throw std::invalid_argument("one candidate list per seed required");
  std::map<std::pair<std::string, int>, double> score_map;
  for (const auto& e : scores)
    score_map[{e.query_id, e.response_index}] = e.score;

  AssemblyManifest manifest;
  std::vector<AlignmentRecord> records;
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& seed = seeds[i];
    const auto& cands = per_seed_candidates[i];
    if (cands.size() < 2) {
      manifest.warnings.push_back("query " + seed.id +
                                  " dropped: fewer than 2 candidates");
      continue;
    }
    const NormalizedAnswer gold = normalize_answer(seed.gold_answer);
    AlignmentRecord record;
    record.id = seed.id;
    record.query = seed.question;
    record.gold_answer = seed.gold_answer;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      double reward = 0.0;
      if (scoring == ScoringMode::programmatic) {
        const bool correct =
            cands[j].extracted_answer && *cands[j].extracted_answer == gold;
        reward = programmatic_reward(correct, cands[j].quality_score);
      } else {
        const auto it = score_map.find({seed.id, static_cast<int>(j)});
        if (it == score_map.end()) {
          missing.push_back(seed.id + "[" + std::to_string(j) + "]");
          continue;
        }
        reward = it->second;
      }
      record.responses.push_back({cands[j].text, reward, cands[j].source});
    }
    records.push_back(std::move(record));
  }
  if (!missing.empty()) {
    std::string msg = "missing external scores for:";
    for (const auto& key : missing) msg += " " + key;
    throw std::runtime_error(msg);
  }
  write_alignment_records(out_path, records);
  manifest.source_counts["records"] = static_cast<int>(records.size());
  return manifest;
}

std::vector<SeedQA> make_addition_seeds(int count, std::uint64_t seed) {
  // all two-digit operand pairs whose sum stays two-digit
  std::vector<AdditionProblem> pool;
  for (long long a = 10; a <= 89; ++a)
    for (long long b = 10; a + b <= 99; ++b) pool.push_back({a, b});
  if (count < 0 || static_cast<std::size_t>(count) > pool.size())
    throw std::invalid_argument("at most " + std::to_string(pool.size()) +
                                " distinct addition seeds available");
  Rng rng(derive_seed(seed, "addition_seeds"));
  rng.shuffle(pool);
  std::vector<SeedQA> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SeedQA s;
    char id[16];
    std::snprintf(id, sizeof(id), "add-%04d", i);
    s.id = id;
    s.question = std::to_string(pool[static_cast<std::size_t>(i)].a) + "+" +
                 std::to_string(pool[static_cast<std::size_t>(i)].b);
    s.gold_answer = std::to_string(pool[static_cast<std::size_t>(i)].a +
                                   pool[static_cast<std::size_t>(i)].b);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rankalign

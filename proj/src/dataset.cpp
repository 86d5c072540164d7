#include "rankalign/dataset.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rankalign {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Parses a JSONL file, invoking fn(record, line_no) per non-empty line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": invalid record: " + e.what());
    }
    fn(record, line_no);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);  // binary: stable newlines
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  return out;
}

}  // namespace

void ResponseSet::validate() const {
  if (responses.size() < 2)
    throw std::invalid_argument("response set " + query_id +
                                " needs at least 2 responses");
  for (const auto& r : responses) {
    if (r.tokens.empty())
      throw std::invalid_argument("response set " + query_id +
                                  " has an empty response");
    if (!std::isfinite(r.reward))
      throw std::invalid_argument("response set " + query_id +
                                  " has a non-finite reward");
  }
}

std::vector<double> ResponseSet::rewards() const {
  std::vector<double> out;
  out.reserve(responses.size());
  for (const auto& r : responses) out.push_back(r.reward);
  return out;
}

std::vector<SeedQA> load_seed_file(const std::filesystem::path& path) {
  std::vector<SeedQA> out;
  for_each_record(path, [&](const json& r, int) {
    SeedQA s;
    s.id = r.at("id").get<std::string>();
    s.question = r.at("question").get<std::string>();
    s.gold_answer = r.at("gold_answer").get<std::string>();
    if (r.contains("template_id")) s.template_id = r["template_id"].get<std::string>();
    if (s.question.empty() || s.gold_answer.empty())
      throw std::runtime_error("seed " + s.id +
                               ": question and gold_answer must be non-empty");
    out.push_back(std::move(s));
  });
  return out;
}

void write_seed_file(const std::filesystem::path& path,
                     std::span<const SeedQA> seeds) {
  auto out = open_out(path);
  for (const auto& s : seeds) {
    ordered_json r{{"id", s.id},
                   {"question", s.question},
                   {"gold_answer", s.gold_answer}};
    if (!s.template_id.empty()) r["template_id"] = s.template_id;
    out << r.dump() << "\n";
  }
}

std::vector<EvalItem> load_eval_file(const std::filesystem::path& path) {
  std::vector<EvalItem> out;
  for_each_record(path, [&](const json& r, int) {
    out.push_back({r.at("id").get<std::string>(),
                   r.at("question").get<std::string>(),
                   r.at("gold_answer").get<std::string>()});
  });
  return out;
}

void write_eval_file(const std::filesystem::path& path,
                     std::span<const EvalItem> items) {
  auto out = open_out(path);
  for (const auto& i : items)
    out << ordered_json{{"id", i.id},
                        {"question", i.question},
                        {"gold_answer", i.gold_answer}}
               .dump()
        << "\n";
}

std::vector<SftRecord> load_sft_records(const std::filesystem::path& path) {
  std::vector<SftRecord> out;
  for_each_record(path, [&](const json& r, int) {
    SftRecord rec;
    rec.id = r.at("id").get<std::string>();
    rec.question = r.at("question").get<std::string>();
    rec.response_text = r.at("response_text").get<std::string>();
    rec.answer = r.value("answer", "");
    rec.source = r.value("source", "");
    rec.language = r.value("language", "");
    out.push_back(std::move(rec));
  });
  return out;
}

void write_sft_records(const std::filesystem::path& path,
                       std::span<const SftRecord> records) {
  auto out = open_out(path);
  for (const auto& r : records)
    out << ordered_json{{"id", r.id},
                        {"question", r.question},
                        {"response_text", r.response_text},
                        {"answer", r.answer},
                        {"source", r.source},
                        {"language", r.language}}
               .dump()
        << "\n";
}

std::vector<AlignmentRecord> load_alignment_records(
    const std::filesystem::path& path) {
  std::vector<AlignmentRecord> out;
  for_each_record(path, [&](const json& r, int line_no) {
    AlignmentRecord rec;
    rec.id = r.at("id").get<std::string>();
    rec.query = r.at("query").get<std::string>();
    rec.gold_answer = r.value("gold_answer", "");
    for (const auto& resp : r.at("responses")) {
      AlignmentResponseRecord rr;
      rr.text = resp.at("text").get<std::string>();
      rr.reward = resp.at("reward").get<double>();
      rr.source = resp.value("source", "");
      rec.responses.push_back(std::move(rr));
    }
    if (rec.responses.size() < 2)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": record " + rec.id + " has fewer than 2 responses");
    out.push_back(std::move(rec));
  });
  return out;
}

void write_alignment_records(const std::filesystem::path& path,
                             std::span<const AlignmentRecord> records) {
  auto out = open_out(path);
  for (const auto& r : records) {
    ordered_json responses = ordered_json::array();
    for (const auto& resp : r.responses)
      responses.push_back({{"text", resp.text},
                           {"reward", resp.reward},
                           {"source", resp.source}});
    out << ordered_json{{"id", r.id},
                        {"query", r.query},
                        {"gold_answer", r.gold_answer},
                        {"responses", responses}}
               .dump()
        << "\n";
  }
}

std::vector<ScoreEntry> load_score_file(const std::filesystem::path& path) {
  std::vector<ScoreEntry> out;
  for_each_record(path, [&](const json& r, int) {
    out.push_back({r.at("query_id").get<std::string>(),
                   r.at("response_index").get<int>(),
                   r.at("score").get<double>()});
  });
  return out;
}

void write_score_file(const std::filesystem::path& path,
                      std::span<const ScoreEntry> entries) {
  auto out = open_out(path);
  for (const auto& e : entries)
    out << ordered_json{{"query_id", e.query_id},
                        {"response_index", e.response_index},
                        {"score", e.score}}
               .dump()
        << "\n";
}

LabeledAlignmentSample to_labeled_sample(const AlignmentRecord& record,
                                         const Tokenizer& tokenizer) {
  LabeledAlignmentSample sample;
  sample.response_set.query_id = record.id;
  sample.response_set.query_tokens = tokenizer.encode(record.query);
  for (const auto& r : record.responses)
    sample.response_set.responses.push_back(
        {tokenizer.encode(r.text), r.reward, r.source});
  sample.gold_answer = record.gold_answer;
  sample.response_set.validate();
  if (sample.gold_answer.empty())
    throw std::invalid_argument("record " + record.id + " has no gold answer");
  return sample;
}

}  // namespace rankalign

#include "rankalign/eval.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rankalign/answer.hpp"

namespace rankalign {

namespace {

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * x);
  return buf;
}

}  // namespace

EvalReport report_from_records(std::vector<EvalRecord> records) {
  EvalReport report;
  report.n = static_cast<int>(records.size());
  if (report.n == 0) throw std::invalid_argument("no evaluation records");
  int correct = 0, noncvg = 0, positive_noncvg = 0;
  for (const auto& r : records) {
    if (r.correct && !r.extracted_answer)
      throw std::invalid_argument("record " + r.item_id +
                                  " marked correct without an extracted answer");
    correct += r.correct ? 1 : 0;
    if (!r.converged) {
      ++noncvg;
      if (r.correct) ++positive_noncvg;
    }
  }
  report.accuracy = static_cast<double>(correct) / report.n;
  report.overall_noncvg_rate = static_cast<double>(noncvg) / report.n;
  report.positive_noncvg_rate = static_cast<double>(positive_noncvg) / report.n;
  report.records = std::move(records);
  return report;
}

EvalReport evaluate(const ToyModelParams& params, const Tokenizer& tokenizer,
                    std::span<const EvalItem> eval_set,
                    const GenerationConfig& gen) {
  if (eval_set.empty()) throw std::invalid_argument("empty evaluation set");
  std::vector<EvalRecord> records;
  records.reserve(eval_set.size());
  for (const auto& item : eval_set) {
    EvalRecord rec;
    rec.item_id = item.id;
    try {
      const TokenSeq query = tokenizer.encode(item.question);
      const GenerationResult gr = generate(params, query, gen);
      rec.generated_text = tokenizer.decode(gr.tokens);
      rec.converged = gr.terminated && !gr.repetition_detected;
      if (auto extracted = extract_answer(rec.generated_text)) {
        rec.extracted_answer = extracted->to_string();
        rec.correct = *extracted == normalize_answer(item.gold_answer);
      }
    } catch (const std::exception&) {
      rec.converged = false;
      rec.correct = false;
    }
    records.push_back(std::move(rec));
  }
  return report_from_records(std::move(records));
}

std::string render_report(
    const std::vector<std::pair<std::string, EvalReport>>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to render");
  std::size_t width = std::string("model_name").size();
  for (const auto& [name, report] : reports) {
    if (name.empty()) throw std::invalid_argument("report name must be non-empty");
    width = std::max(width, name.size());
  }
  std::string out;
  auto row = [&](std::string_view name, std::string_view a, std::string_view b,
                 std::string_view c) {
    out += name;
    out.append(width - name.size(), ' ');
    out += " | ";
    out += a;
    out += " | ";
    out += b;
    out += " | ";
    out += c;
    out += "\n";
  };
  row("model_name", "accuracy", "overall non-convergence rate",
      "positive non-convergence rate");
  for (const auto& [name, report] : reports)
    row(name, percent(report.accuracy), percent(report.overall_noncvg_rate),
        percent(report.positive_noncvg_rate));
  return out;
}

void write_eval_report(const std::filesystem::path& path,
                       const EvalReport& report) {
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    nlohmann::ordered_json rec{{"item_id", r.item_id},
                               {"generated_text", r.generated_text},
                               {"correct", r.correct},
                               {"converged", r.converged}};
    if (r.extracted_answer) rec["extracted_answer"] = *r.extracted_answer;
    records.push_back(std::move(rec));
  }
  nlohmann::ordered_json doc{{"n", report.n},
                             {"accuracy", report.accuracy},
                             {"overall_noncvg_rate", report.overall_noncvg_rate},
                             {"positive_noncvg_rate", report.positive_noncvg_rate},
                             {"records", records}};
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << doc.dump(2) << "\n";
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path.string());
  const auto doc = nlohmann::json::parse(in);
  EvalReport report;
  report.n = doc.at("n").get<int>();
  report.accuracy = doc.at("accuracy").get<double>();
  report.overall_noncvg_rate = doc.at("overall_noncvg_rate").get<double>();
  report.positive_noncvg_rate = doc.at("positive_noncvg_rate").get<double>();
  for (const auto& rec : doc.at("records")) {
    EvalRecord r;
    r.item_id = rec.at("item_id").get<std::string>();
    r.generated_text = rec.value("generated_text", "");
    r.correct = rec.at("correct").get<bool>();
    r.converged = rec.at("converged").get<bool>();
    if (rec.contains("extracted_answer"))
      r.extracted_answer = rec["extracted_answer"].get<std::string>();
    report.records.push_back(std::move(r));
  }
  return report;
}

}  // namespace rankalign

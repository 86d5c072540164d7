#include <doctest.h>

#include <string>
#include <vector>

#include "rankalign/answer.hpp"
#include "rankalign/eval.hpp"
#include "rankalign/rng.hpp"
#include "helpers.hpp"

using namespace rankalign;
using testutil::TempDir;

TEST_CASE("numeric normalization equivalences") {
  CHECK(normalize_answer("  3.50 ") == normalize_answer("3.5"));
  CHECK(normalize_answer("1/2") == normalize_answer("0.5"));
  CHECK(normalize_answer("50%") == normalize_answer("0.5"));
  CHECK(normalize_answer("42") == normalize_answer("42.0"));
  CHECK(normalize_answer("-4") == normalize_answer("-4"));
  CHECK(normalize_answer("2/4") == normalize_answer("1/2"));
  // coarser-precision comparison
  CHECK(normalize_answer("1/3") == normalize_answer("0.33"));
  CHECK(normalize_answer("0.333") == normalize_answer("0.3330"));
  CHECK(normalize_answer("42") != normalize_answer("42.4"));
  CHECK(normalize_answer("7") != normalize_answer("8"));
  CHECK(normalize_answer("1/3") != normalize_answer("1/4"));
}

TEST_CASE("text normalization") {
  CHECK(normalize_answer(" Yes ") == normalize_answer("yes"));
  CHECK(normalize_answer("two  apples") == normalize_answer("Two Apples"));
  CHECK(normalize_answer("apple") != normalize_answer("pear"));
  CHECK(normalize_answer("42") != normalize_answer("forty two"));
}

TEST_CASE("normalization is idempotent") {
  const std::vector<std::string> samples{
      "3.50", "1/2",  "50%",   "abc  DEF", "-4",   "42",
      "0.33", "7/21", "33.3%", "  hi there ", "1234", "-0.25"};
  for (const auto& s : samples) {
    const auto once = normalize_answer(s);
    const auto twice = normalize_answer(once.to_string());
    CHECK(once == twice);
    CHECK(once.to_string() == twice.to_string());
  }
}

TEST_CASE("answer extraction with markers") {
  auto a = extract_answer("step 1 ok\nstep 2 fine\nAnswer: 42");
  REQUIRE(a);
  CHECK(*a == normalize_answer("42"));

  auto last_wins = extract_answer("Answer: 10\nrethinking...\nAnswer: 12.");
  REQUIRE(last_wins);
  CHECK(*last_wins == normalize_answer("12"));

  auto chinese = extract_answer("推理过程……\n答案：7");
  REQUIRE(chinese);
  CHECK(*chinese == normalize_answer("7"));

  auto text_answer = extract_answer("Answer: forty two");
  REQUIRE(text_answer);
  CHECK(*text_answer == normalize_answer("forty two"));
}

TEST_CASE("answer extraction without markers") {
  auto a = extract_answer("so we get 7 apples then 9 total");
  REQUIRE(a);
  CHECK(*a == normalize_answer("9"));
  CHECK(!extract_answer("I cannot solve this."));
  CHECK(!extract_answer(""));

  // a marker with no value falls back to earlier evidence
  auto fallback = extract_answer("the count is 5\nAnswer:");
  REQUIRE(fallback);
  CHECK(*fallback == normalize_answer("5"));
}

TEST_CASE("extraction picks the value after the final marker") {
  auto a = extract_answer("Answer: 1\nanswer: 2\n答案: 3");
  REQUIRE(a);
  CHECK(*a == normalize_answer("3"));
}

TEST_CASE("report arithmetic on the hand-built fixture") {
  // 20 records: 9 correct, 3 non-converged, 1 of those also correct
  std::vector<EvalRecord> records;
  for (int i = 0; i < 20; ++i) {
    EvalRecord r;
    r.item_id = "item-" + std::to_string(i);
    r.correct = i < 9;
    if (r.correct) r.extracted_answer = "42";
    r.converged = true;
    records.push_back(r);
  }
  records[0].converged = false;   // correct but rambling
  records[12].converged = false;  // wrong and rambling
  records[13].converged = false;

  const auto report = report_from_records(records);
  CHECK(report.n == 20);
  CHECK(report.accuracy == 0.45);
  CHECK(report.overall_noncvg_rate == 0.15);
  CHECK(report.positive_noncvg_rate == 0.05);
}

TEST_CASE("positive non-convergence never exceeds overall") {
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    std::vector<EvalRecord> records;
    for (int i = 0; i < n; ++i) {
      EvalRecord r;
      r.item_id = std::to_string(i);
      r.correct = rng.uniform() < 0.5;
      if (r.correct) r.extracted_answer = "1";
      r.converged = rng.uniform() < 0.7;
      records.push_back(r);
    }
    const auto report = report_from_records(records);
    CHECK(report.positive_noncvg_rate <= report.overall_noncvg_rate);
    CHECK(report.accuracy >= 0.0);
    CHECK(report.accuracy <= 1.0);
    CHECK(report.overall_noncvg_rate <= 1.0);
  }
}

TEST_CASE("report rejects inconsistent records") {
  EvalRecord r;
  r.item_id = "x";
  r.correct = true;  // no extracted answer
  r.converged = true;
  CHECK_THROWS(report_from_records({r}));
  CHECK_THROWS(report_from_records({}));
}

TEST_CASE("evaluate with a model that answers everything correctly") {
  Tokenizer tok("q Answer:42");
  const auto params = testutil::make_emitter_model(tok, 'q', "Answer: 42", 64);
  std::vector<EvalItem> items;
  for (int i = 0; i < 5; ++i)
    items.push_back({"item-" + std::to_string(i), "q", "42"});
  GenerationConfig gen;
  gen.max_new_tokens = 32;
  const auto report = evaluate(params, tok, items, gen);
  CHECK(report.accuracy == 1.0);
  CHECK(report.overall_noncvg_rate == 0.0);
  CHECK(report.positive_noncvg_rate == 0.0);
  CHECK(report.records[0].generated_text == "Answer: 42");
}

TEST_CASE("evaluate with a looping model counts non-convergence") {
  Tokenizer tok("qx");
  const auto params = testutil::make_const_model(tok, tok.encode("x")[0], 64);
  std::vector<EvalItem> items{{"a", "q", "42"}, {"b", "q", "7"}};
  GenerationConfig gen;
  gen.max_new_tokens = 32;
  gen.repetition_window = 4;
  const auto report = evaluate(params, tok, items, gen);
  CHECK(report.accuracy == 0.0);
  CHECK(report.overall_noncvg_rate == 1.0);
  CHECK(report.positive_noncvg_rate == 0.0);
}

TEST_CASE("evaluate treats unencodable questions as failures") {
  Tokenizer tok("q Answer:42");
  const auto params = testutil::make_emitter_model(tok, 'q', "Answer: 42", 64);
  std::vector<EvalItem> items{{"good", "q", "42"}, {"bad", "München?", "1"}};
  GenerationConfig gen;
  gen.max_new_tokens = 32;
  const auto report = evaluate(params, tok, items, gen);
  CHECK(report.accuracy == 0.5);
  CHECK(report.overall_noncvg_rate == 0.5);
}

TEST_CASE("rendered report row format") {
  EvalReport r;
  r.accuracy = 0.5;
  r.overall_noncvg_rate = 0.01;
  r.positive_noncvg_rate = 0.0;
  r.n = 100;
  const auto text = render_report({{"toy", r}});
  CHECK(text.find("model_name") != std::string::npos);
  CHECK(text.find("accuracy") != std::string::npos);
  CHECK(text.find("overall non-convergence rate") != std::string::npos);
  CHECK(text.find("positive non-convergence rate") != std::string::npos);
  CHECK(text.find("50.00% | 1.00% | 0.00%") != std::string::npos);

  CHECK_THROWS(render_report({{"", r}}));
  const auto two = render_report({{"first", r}, {"second", r}});
  CHECK(two.find("first") < two.find("second"));
}

TEST_CASE("eval report file round trip") {
  TempDir dir;
  EvalReport r;
  r.n = 2;
  r.accuracy = 0.5;
  r.overall_noncvg_rate = 0.5;
  r.positive_noncvg_rate = 0.0;
  EvalRecord rec;
  rec.item_id = "a";
  rec.generated_text = "Answer: 1";
  rec.extracted_answer = "1";
  rec.correct = true;
  rec.converged = true;
  r.records.push_back(rec);
  rec = EvalRecord{};
  rec.item_id = "b";
  r.records.push_back(rec);

  const auto path = dir.path / "report.json";
  write_eval_report(path, r);
  const auto loaded = load_eval_report(path);
  CHECK(loaded.n == r.n);
  CHECK(loaded.accuracy == r.accuracy);
  CHECK(loaded.records.size() == 2);
  CHECK(loaded.records[0].extracted_answer == std::optional<std::string>("1"));
  CHECK(!loaded.records[1].extracted_answer);
}

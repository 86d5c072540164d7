#include "rankalign/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "rankalign/answer.hpp"
#include "rankalign/dataset.hpp"
#include "rankalign/eval.hpp"
#include "rankalign/forge.hpp"
#include "rankalign/idrl.hpp"
#include "rankalign/manifest.hpp"
#include "rankalign/model.hpp"
#include "rankalign/rng.hpp"
#include "rankalign/trainer.hpp"

namespace rankalign {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

struct CliError : std::runtime_error {
  std::string category;
  CliError(std::string cat, const std::string& msg)
      : std::runtime_error(msg), category(std::move(cat)) {}
};

struct CommandContext {
  json config;
  fs::path config_dir;
  fs::path out_dir;
  std::uint64_t seed = 0;
  bool verbose = false;
  RunManifest manifest;
  std::chrono::steady_clock::time_point started =
      std::chrono::steady_clock::now();

  fs::path input_path(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : config_dir / path;
  }
  fs::path output_path(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : out_dir / path;
  }
  void note(const std::string& line) const {
    if (verbose) std::cout << line << "\n";
  }
};

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CliError("config", "cannot open config: " + path.string());
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw CliError("config", "invalid config " + path.string() + ": " + e.what());
  }
}

CommandContext make_context(const std::string& command,
                            const std::string& config_path,
                            const std::string& out_dir,
                            std::optional<std::uint64_t> seed_override,
                            bool verbose) {
  CommandContext ctx;
  const fs::path cfg_path(config_path);
  ctx.config = load_config_file(cfg_path);
  ctx.config_dir = cfg_path.has_parent_path() ? cfg_path.parent_path()
                                              : fs::path(".");
  ctx.out_dir = out_dir.empty() ? ctx.config_dir : fs::path(out_dir);
  fs::create_directories(ctx.out_dir);
  if (seed_override) ctx.config["seed"] = *seed_override;
  ctx.seed = ctx.config.value("seed", 0ull);
  ctx.verbose = verbose;
  ctx.manifest.command = command;
  ctx.manifest.seed = ctx.seed;
  ctx.manifest.started_at = now_iso8601();
  return ctx;
}

void finish_manifest(CommandContext& ctx) {
  ctx.manifest.config_json = ctx.config.dump();
  ctx.manifest.duration_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - ctx.started)
          .count();
  write_manifest(ctx.manifest,
                 ctx.out_dir / (ctx.manifest.command + "_manifest.json"));
}

GenerationConfig parse_gen(const json& j, std::uint64_t default_seed) {
  GenerationConfig gen;
  gen.max_new_tokens = j.value("max_new_tokens", 64);
  const std::string mode = j.value("mode", "greedy");
  if (mode == "greedy")
    gen.mode = GenerationConfig::Mode::greedy;
  else if (mode == "sample")
    gen.mode = GenerationConfig::Mode::sample;
  else
    throw CliError("config", "unknown generation mode: " + mode);
  gen.temperature = j.value("temperature", 1.0);
  gen.seed = j.value("seed", default_seed);
  gen.repetition_window = j.value("repetition_window", 8);
  return gen;
}

TrainConfig parse_train(const json& j, std::uint64_t default_seed) {
  TrainConfig cfg;
  cfg.variant = variant_from_name(j.value("variant", "simrrhf"));
  cfg.weights = default_weights(cfg.variant);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    cfg.weights.rank = w.value("rank", cfg.weights.rank);
    cfg.weights.sft = w.value("sft", cfg.weights.sft);
    cfg.weights.sim = w.value("sim", cfg.weights.sim);
  }
  cfg.learning_rate = j.value("learning_rate", 1e-5);
  cfg.batch_size = j.value("batch_size", 4);
  cfg.max_steps = j.value("max_steps", 1000);
  cfg.ckpt_interval = j.value("ckpt_interval", 200);
  cfg.seed = j.value("seed", default_seed);
  cfg.gen = parse_gen(j.contains("gen") ? j["gen"] : json::object(),
                      derive_seed(cfg.seed, "gen"));
  return cfg.normalized();
}

std::vector<std::unique_ptr<GeneratorClient>> parse_clients(const json& list) {
  std::vector<std::unique_ptr<GeneratorClient>> clients;
  for (const auto& c : list) {
    const std::string type = c.at("type").get<std::string>();
    if (type == "mock") {
      clients.push_back(std::make_unique<MockSolver>());
    } else if (type == "noisy") {
      clients.push_back(
          std::make_unique<NoisySolver>(c.value("corrupt_rate", 0.5)));
    } else if (type == "remote") {
      clients.push_back(std::make_unique<RemoteClient>(
          c.at("url").get<std::string>(), c.value("timeout_ms", 2000),
          c.value("retries", 1), c.value("name", std::string("remote"))));
    } else {
      throw CliError("config", "unknown client type: " + type);
    }
  }
  if (clients.empty()) throw CliError("config", "no generator clients configured");
  return clients;
}

DiscriminatorConfig parse_discriminator(const json& j) {
  DiscriminatorConfig cfg;
  cfg.require_correct_answer = j.value("require_correct_answer", true);
  cfg.min_steps = j.value("min_steps", 0);
  if (j.contains("quality_weights")) {
    cfg.weight_steps = j["quality_weights"].value("steps", 1.0);
    cfg.weight_answer_marker = j["quality_weights"].value("answer_marker", 1.0);
  }
  cfg.validate();
  return cfg;
}

// ----- forge -----

int cmd_forge(CommandContext& ctx) {
  std::vector<SeedQA> seeds;
  if (ctx.config.contains("seed_file")) {
    const auto path = ctx.input_path(ctx.config["seed_file"].get<std::string>());
    if (!fs::exists(path))
      throw CliError("io", "seed file not found: " + path.string());
    ctx.manifest.add_input(path);
    seeds = load_seed_file(path);
  } else if (ctx.config.contains("synthetic")) {
    const auto& syn = ctx.config["synthetic"];
    const std::string kind = syn.value("kind", "addition2");
    if (kind != "addition2")
      throw CliError("config", "unknown synthetic seed kind: " + kind);
    seeds = make_addition_seeds(syn.value("count", 100),
                                syn.value("seed", ctx.seed));
  } else {
    throw CliError("config", "forge config needs seed_file or synthetic");
  }

  const std::string prompt_template =
      ctx.config.value("template", std::string("Q: {q}\nReason step by step.\n"));
  auto clients = parse_clients(ctx.config.value("clients", json::array(
                                                               {{{"type", "mock"}}})));
  const auto disc = parse_discriminator(
      ctx.config.contains("discriminator") ? ctx.config["discriminator"]
                                           : json::object());
  const std::string scoring_name = ctx.config.value("scoring", "programmatic");
  ScoringMode scoring;
  if (scoring_name == "programmatic")
    scoring = ScoringMode::programmatic;
  else if (scoring_name == "external_file")
    scoring = ScoringMode::external_file;
  else
    throw CliError("config", "unknown scoring mode: " + scoring_name);
  std::vector<ScoreEntry> scores;
  if (scoring == ScoringMode::external_file) {
    const auto path =
        ctx.input_path(ctx.config.at("score_file").get<std::string>());
    if (!fs::exists(path))
      throw CliError("io", "score file not found: " + path.string());
    ctx.manifest.add_input(path);
    scores = load_score_file(path);
  }

  int n_candidates = 0, n_failures = 0;
  std::vector<std::pair<SeedQA, CandidateResult>> selected;
  std::vector<std::vector<CandidateResult>> per_seed(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    auto harvest = harvest_candidates(seeds[i], clients, prompt_template,
                                      ctx.seed);
    recompute_quality(harvest.candidates, disc);
    n_candidates += static_cast<int>(harvest.candidates.size());
    n_failures += static_cast<int>(harvest.failures.size());
    if (auto pick = discriminate(harvest.candidates, seeds[i].gold_answer, disc))
      selected.emplace_back(seeds[i], std::move(*pick));
    per_seed[i] = std::move(harvest.candidates);
  }

  const auto& outputs = ctx.config.at("outputs");
  const auto sft_path = ctx.output_path(outputs.at("sft").get<std::string>());
  const auto align_path =
      ctx.output_path(outputs.at("alignment").get<std::string>());
  std::vector<fs::path> extra;
  for (const auto& p : ctx.config.value("extra_corpora", json::array())) {
    const auto path = ctx.input_path(p.get<std::string>());
    if (!fs::exists(path))
      throw CliError("io", "extra corpus not found: " + path.string());
    ctx.manifest.add_input(path);
    extra.push_back(path);
  }
  const auto sft_manifest = assemble_sft_dataset(
      selected, extra, sft_path, ctx.config.value("language", "en"));
  const auto align_manifest = assemble_alignment_dataset(
      seeds, per_seed, scoring, scores, align_path);

  int sft_count = 0;
  for (const auto& [source, count] : sft_manifest.source_counts)
    sft_count += count;
  std::cout << "[forge] seeds=" << seeds.size()
            << " candidates=" << n_candidates << " failures=" << n_failures
            << " discriminated=" << selected.size()
            << " sft_records=" << sft_count << " alignment_records="
            << align_manifest.source_counts.at("records") << "\n";
  for (const auto& w : sft_manifest.warnings) ctx.note("[forge] " + w);
  for (const auto& w : align_manifest.warnings) ctx.note("[forge] " + w);

  ordered_json counts;
  for (const auto& [source, count] : sft_manifest.source_counts)
    counts[source] = count;
  ordered_json summary{{"seeds", seeds.size()},
                       {"candidates", n_candidates},
                       {"failures", n_failures},
                       {"discriminated", selected.size()},
                       {"sft_counts", counts},
                       {"sft_duplicates_dropped",
                        sft_manifest.duplicates_dropped},
                       {"alignment_records",
                        align_manifest.source_counts.at("records")},
                       {"warnings", align_manifest.warnings}};
  std::ofstream out(ctx.out_dir / "forge_summary.json", std::ios::binary);
  out << summary.dump(2) << "\n";

  ctx.manifest.outputs.push_back(sft_path.string());
  ctx.manifest.outputs.push_back(align_path.string());
  finish_manifest(ctx);
  return 0;
}

// ----- sft -----

ModelConfig parse_model_config(const json& j, int vocab_size,
                               std::uint64_t default_seed) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.embed_dim = j.value("embed_dim", 16);
  cfg.hidden_dim = j.value("hidden_dim", 24);
  cfg.context_len = j.value("context_len", 96);
  cfg.arch = arch_from_name(j.value("arch", "tiny_attention"));
  cfg.seed = j.value("seed", default_seed);
  if (j.value("embedding_source", "final_hidden") == "input_embedding")
    cfg.embedding_source = EmbeddingSource::input_embedding;
  cfg.validate();
  return cfg;
}

int cmd_sft(CommandContext& ctx) {
  const auto dataset_path =
      ctx.input_path(ctx.config.at("dataset").get<std::string>());
  if (!fs::exists(dataset_path))
    throw CliError("io", "sft dataset not found: " + dataset_path.string());
  ctx.manifest.add_input(dataset_path);
  const auto records = load_sft_records(dataset_path);
  if (records.empty())
    throw CliError("data", "sft dataset is empty: " + dataset_path.string());

  std::vector<std::string> corpus;
  for (const auto& r : records) {
    corpus.push_back(r.question);
    corpus.push_back(r.response_text);
  }
  corpus.push_back(ctx.config.value("alphabet_extra", ""));
  const Tokenizer tokenizer = Tokenizer::from_corpus(corpus);

  const ModelConfig model_cfg = parse_model_config(
      ctx.config.contains("model") ? ctx.config["model"] : json::object(),
      tokenizer.vocab_size(), ctx.seed);

  std::vector<SftPair> pairs;
  int skipped = 0;
  for (const auto& r : records) {
    SftPair pair{r.id, tokenizer.encode(r.question),
                 tokenizer.encode(r.response_text)};
    if (2 + pair.query.size() + pair.response.size() >
        static_cast<std::size_t>(model_cfg.context_len)) {
      ++skipped;
      continue;
    }
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty())
    throw CliError("data", "no sft records fit the model context");

  SftConfig sft_cfg;
  sft_cfg.learning_rate = ctx.config.value("learning_rate", 1e-4);
  sft_cfg.batch_size = ctx.config.value("batch_size", 8);
  sft_cfg.max_steps = ctx.config.value("max_steps", 1000);
  sft_cfg.seed = ctx.seed;
  sft_cfg.probe_size = ctx.config.value("probe_size", 16);

  auto result = run_sft(pairs, init_model(model_cfg), sft_cfg);
  const auto ckpt_path = ctx.output_path(
      ctx.config.value("out_checkpoint", std::string("sft_ckpt.bin")));
  save_checkpoint(result.final_params, tokenizer, ckpt_path);

  std::cout << "[sft] records=" << records.size() << " used=" << pairs.size()
            << " skipped=" << skipped << " probe_nll "
            << result.initial_probe_nll << " -> " << result.final_probe_nll
            << "\n";
  ordered_json summary{{"records", records.size()},
                       {"used", pairs.size()},
                       {"skipped_too_long", skipped},
                       {"initial_probe_nll", result.initial_probe_nll},
                       {"final_probe_nll", result.final_probe_nll},
                       {"steps", sft_cfg.max_steps},
                       {"checkpoint", ckpt_path.string()}};
  std::ofstream out(ctx.out_dir / "sft_summary.json", std::ios::binary);
  out << summary.dump(2) << "\n";

  ctx.manifest.outputs.push_back(ckpt_path.string());
  finish_manifest(ctx);
  return 0;
}

// ----- align / idrl / eval / report -----

struct AlignInputs {
  LoadedCheckpoint base;
  std::vector<LabeledAlignmentSample> samples;
  std::vector<ResponseSet> sets;
  std::vector<EvalItem> eval_items;
};

std::vector<LabeledAlignmentSample> load_samples(const fs::path& path,
                                                 const Tokenizer& tokenizer) {
  std::vector<LabeledAlignmentSample> samples;
  for (const auto& record : load_alignment_records(path))
    samples.push_back(to_labeled_sample(record, tokenizer));
  return samples;
}

AlignInputs load_align_inputs(CommandContext& ctx) {
  AlignInputs in;
  const auto ckpt_path =
      ctx.input_path(ctx.config.at("base_checkpoint").get<std::string>());
  if (!fs::exists(ckpt_path))
    throw CliError("io", "checkpoint not found: " + ckpt_path.string());
  ctx.manifest.add_input(ckpt_path);
  in.base = load_checkpoint(ckpt_path);

  const auto data_path =
      ctx.input_path(ctx.config.at("dataset").get<std::string>());
  if (!fs::exists(data_path))
    throw CliError("io", "alignment dataset not found: " + data_path.string());
  ctx.manifest.add_input(data_path);
  in.samples = load_samples(data_path, in.base.tokenizer);
  for (const auto& s : in.samples) in.sets.push_back(s.response_set);

  if (ctx.config.contains("eval_file")) {
    const auto eval_path =
        ctx.input_path(ctx.config["eval_file"].get<std::string>());
    if (!fs::exists(eval_path))
      throw CliError("io", "eval file not found: " + eval_path.string());
    ctx.manifest.add_input(eval_path);
    in.eval_items = load_eval_file(eval_path);
  }
  return in;
}

int cmd_align(CommandContext& ctx) {
  auto in = load_align_inputs(ctx);

  if (ctx.config.contains("variants")) {
    std::vector<TrainConfig> configs;
    for (const auto& v : ctx.config["variants"]) {
      json merged = ctx.config;
      merged.erase("variants");
      merged.update(v);
      configs.push_back(parse_train(merged, ctx.seed));
    }
    auto rows = compare_variants(in.sets, in.eval_items, in.base.params,
                                 in.base.tokenizer, configs, ctx.out_dir);
    const std::string tables =
        render_best_ckpt_table(rows) + "\n" + render_stability_table(rows);
    std::cout << tables;
    std::ofstream tab_out(ctx.out_dir / "stability_tables.txt",
                          std::ios::binary);
    tab_out << tables;
    for (const auto& row : rows)
      write_stability_report(ctx.out_dir / ("stability_" + row.name + ".json"),
                             row.stability);
    ctx.manifest.outputs.push_back(
        (ctx.out_dir / "stability_tables.txt").string());
    finish_manifest(ctx);
    return 0;
  }

  const TrainConfig cfg = parse_train(ctx.config, ctx.seed);
  auto run = run_alignment(in.sets, in.base.params, in.base.tokenizer, cfg,
                           in.eval_items, ctx.out_dir);

  const Checkpoint* best = nullptr;
  for (const auto& ck : run.checkpoints)
    if (ck.eval_accuracy && (!best || *ck.eval_accuracy > *best->eval_accuracy))
      best = &ck;
  ordered_json summary{{"checkpoints", run.checkpoints.size()},
                       {"final_step", run.final_params.step}};
  if (best) {
    summary["best_ckpt_step"] = best->step;
    summary["best_acc"] = *best->eval_accuracy;
    summary["best_ckpt_path"] = best->params_path;
  }
  std::ofstream out(ctx.out_dir / "align_summary.json", std::ios::binary);
  out << summary.dump(2) << "\n";
  std::cout << "[align] steps=" << run.final_params.step
            << " checkpoints=" << run.checkpoints.size();
  if (best) std::cout << " best_step=" << best->step;
  std::cout << "\n";

  try {
    write_stability_report(ctx.out_dir / "stability.json",
                           stability_report(run.checkpoints));
  } catch (const std::invalid_argument&) {
    // fewer than 5 evaluated checkpoints; nothing to report
  }
  for (const auto& ck : run.checkpoints)
    ctx.manifest.outputs.push_back(ck.params_path);
  finish_manifest(ctx);
  return 0;
}

int cmd_idrl(CommandContext& ctx) {
  auto ckpt_path =
      ctx.input_path(ctx.config.at("base_checkpoint").get<std::string>());
  if (!fs::exists(ckpt_path))
    throw CliError("io", "checkpoint not found: " + ckpt_path.string());
  ctx.manifest.add_input(ckpt_path);
  auto base = load_checkpoint(ckpt_path);

  std::vector<std::vector<LabeledAlignmentSample>> sources;
  for (const auto& p : ctx.config.at("round_sources")) {
    const auto path = ctx.input_path(p.get<std::string>());
    if (!fs::exists(path))
      throw CliError("io", "round source not found: " + path.string());
    ctx.manifest.add_input(path);
    sources.push_back(load_samples(path, base.tokenizer));
  }
  const int n_rounds = ctx.config.value("n_rounds", 2);

  std::vector<EvalItem> eval_items;
  if (ctx.config.contains("eval_file")) {
    const auto path = ctx.input_path(ctx.config["eval_file"].get<std::string>());
    if (!fs::exists(path))
      throw CliError("io", "eval file not found: " + path.string());
    ctx.manifest.add_input(path);
    eval_items = load_eval_file(path);
  }

  const TrainConfig train_cfg = parse_train(ctx.config, ctx.seed);
  RoundConfig round_cfg;
  const auto& rc = ctx.config.contains("round") ? ctx.config["round"]
                                                : json::object();
  round_cfg.target_size = rc.value("target_size", 1000);
  round_cfg.max_incorrect_fraction = rc.value("max_incorrect_fraction", 0.7);
  round_cfg.seed = rc.value("seed", derive_seed(ctx.seed, "round"));

  auto rounds = run_idrl_rounds(base.params, base.tokenizer, sources, n_rounds,
                                train_cfg, round_cfg, eval_items, ctx.out_dir);
  ordered_json summary = ordered_json::array();
  for (const auto& round : rounds) {
    if (!eval_items.empty())
      write_eval_report(ctx.out_dir / ("round_" +
                                       std::to_string(round.round_index) +
                                       "_eval.json"),
                        round.report);
    summary.push_back(
        {{"round", round.round_index},
         {"incorrect", round.dataset.n_incorrect},
         {"fresh", round.dataset.n_fresh},
         {"best_checkpoint", round.best_checkpoint_path},
         {"accuracy", eval_items.empty() ? json() : json(round.report.accuracy)}});
    std::cout << "[idrl] round=" << round.round_index
              << " incorrect=" << round.dataset.n_incorrect
              << " fresh=" << round.dataset.n_fresh << "\n";
  }
  std::ofstream out(ctx.out_dir / "idrl_summary.json", std::ios::binary);
  out << summary.dump(2) << "\n";
  for (const auto& round : rounds)
    ctx.manifest.outputs.push_back(round.manifest_path);
  finish_manifest(ctx);
  return 0;
}

int cmd_eval(CommandContext& ctx) {
  const auto ckpt_path =
      ctx.input_path(ctx.config.at("checkpoint").get<std::string>());
  if (!fs::exists(ckpt_path))
    throw CliError("io", "checkpoint not found: " + ckpt_path.string());
  ctx.manifest.add_input(ckpt_path);
  const auto ckpt = load_checkpoint(ckpt_path);

  const auto eval_path =
      ctx.input_path(ctx.config.at("eval_file").get<std::string>());
  if (!fs::exists(eval_path))
    throw CliError("io", "eval file not found: " + eval_path.string());
  ctx.manifest.add_input(eval_path);
  const auto items = load_eval_file(eval_path);

  const GenerationConfig gen =
      parse_gen(ctx.config.contains("gen") ? ctx.config["gen"] : json::object(),
                derive_seed(ctx.seed, "gen"));
  const auto report = evaluate(ckpt.params, ckpt.tokenizer, items, gen);
  const std::string name = ctx.config.value("name", "model");
  std::cout << render_report({{name, report}});

  const auto report_path = ctx.output_path(
      ctx.config.value("out_report", std::string("eval_report.json")));
  write_eval_report(report_path, report);
  ctx.manifest.outputs.push_back(report_path.string());
  finish_manifest(ctx);
  return 0;
}

int cmd_report(CommandContext& ctx) {
  std::string text;
  if (ctx.config.contains("eval")) {
    std::vector<std::pair<std::string, EvalReport>> reports;
    for (const auto& entry : ctx.config["eval"]) {
      const auto path = ctx.input_path(entry.at("path").get<std::string>());
      if (!fs::exists(path))
        throw CliError("io", "eval report not found: " + path.string());
      ctx.manifest.add_input(path);
      reports.emplace_back(entry.at("name").get<std::string>(),
                           load_eval_report(path));
    }
    if (!reports.empty()) text += render_report(reports) + "\n";
  }
  if (ctx.config.contains("stability")) {
    std::vector<VariantResult> rows;
    for (const auto& entry : ctx.config["stability"]) {
      const auto path = ctx.input_path(entry.at("path").get<std::string>());
      if (!fs::exists(path))
        throw CliError("io", "stability report not found: " + path.string());
      ctx.manifest.add_input(path);
      VariantResult row;
      row.name = entry.at("name").get<std::string>();
      row.stability = load_stability_report(path);
      rows.push_back(std::move(row));
    }
    if (!rows.empty())
      text += render_best_ckpt_table(rows) + "\n" + render_stability_table(rows);
  }
  if (text.empty())
    throw CliError("config", "report config needs eval or stability entries");
  std::cout << text;
  const auto out_path = ctx.output_path(
      ctx.config.value("out", std::string("report.txt")));
  std::ofstream out(out_path, std::ios::binary);
  out << text;
  ctx.manifest.outputs.push_back(out_path.string());
  finish_manifest(ctx);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"ranking-based alignment toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed_override;
  bool verbose = false;

  const std::vector<std::string> names = {"forge", "sft",  "align",
                                          "idrl",  "eval", "report"};
  const std::vector<std::string> descriptions = {
      "construct sft and alignment datasets from seeds",
      "supervised warmup training",
      "alignment training (single variant or comparison)",
      "multi-round incorrect-data relearning",
      "evaluate a checkpoint",
      "render stored reports as tables"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto* sub = app.add_subcommand(names[i], descriptions[i]);
    sub->add_option("--config", config_path, "config file (json)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed_override, "override the config seed");
    sub->add_flag("--verbose", verbose, "chatty progress output");
  }

  std::vector<const char*> argv;
  argv.push_back("rankalign");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << "error category=usage message=\"" << e.what() << "\"\n";
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    CommandContext ctx =
        make_context(command, config_path, out_dir, seed_override, verbose);
    if (command == "forge") return cmd_forge(ctx);
    if (command == "sft") return cmd_sft(ctx);
    if (command == "align") return cmd_align(ctx);
    if (command == "idrl") return cmd_idrl(ctx);
    if (command == "eval") return cmd_eval(ctx);
    if (command == "report") return cmd_report(ctx);
    std::cerr << "error category=usage message=\"unknown command\"\n";
    return 2;
  } catch (const CliError& e) {
    std::cerr << "error category=" << e.category << " message=\"" << e.what()
              << "\"\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error category=config message=\"" << e.what() << "\"\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error category=data message=\"" << e.what() << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error category=runtime message=\"" << e.what() << "\"\n";
    return 1;
  }
}

}  // namespace rankalign

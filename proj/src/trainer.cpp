#include "rankalign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "rankalign/rng.hpp"

namespace rankalign {

namespace {

using nlohmann::ordered_json;

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * x);
  return buf;
}

std::string ckpt_filename(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06lld.bin",
                static_cast<long long>(step));
  return buf;
}

}  // namespace

std::string_view variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::simrrhf: return "simrrhf";
    case LossVariant::raw_rrhf: return "raw_rrhf";
    case LossVariant::raw_rrhf_weighted: return "raw_rrhf_weighted";
  }
  throw std::logic_error("unknown loss variant");
}

LossVariant variant_from_name(std::string_view name) {
  if (name == "simrrhf") return LossVariant::simrrhf;
  if (name == "raw_rrhf") return LossVariant::raw_rrhf;
  if (name == "raw_rrhf_weighted") return LossVariant::raw_rrhf_weighted;
  throw std::invalid_argument("unknown loss variant: " + std::string(name));
}

LossWeights default_weights(LossVariant v) {
  switch (v) {
    case LossVariant::simrrhf: return LossWeights::standard();
    case LossVariant::raw_rrhf: return LossWeights::rrhf_unweighted();
    case LossVariant::raw_rrhf_weighted: return LossWeights::rrhf_weighted();
  }
  throw std::logic_error("unknown loss variant");
}

TrainConfig TrainConfig::normalized() const {
  TrainConfig out = *this;
  if (out.variant != LossVariant::simrrhf) out.weights.sim = 0.0;
  return out;
}

void TrainConfig::validate() const {
  weights.validate();
  if (variant != LossVariant::simrrhf && weights.sim != 0.0)
    throw std::invalid_argument("raw ranking variants require a zero similarity weight");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning rate must be finite and >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be positive");
  if (ckpt_interval < 1)
    throw std::invalid_argument("ckpt_interval must be positive");
}

AlignmentRunResult run_alignment(std::span<const ResponseSet> dataset,
                                 ToyModelParams base, const Tokenizer& tokenizer,
                                 const TrainConfig& raw_config,
                                 std::span<const EvalItem> eval_set,
                                 const std::filesystem::path& run_dir) {
  if (dataset.empty()) throw std::invalid_argument("empty alignment dataset");
  for (const auto& rs : dataset) rs.validate();
  const TrainConfig config = raw_config.normalized();
  config.validate();
  config.gen.validate(base.config);

  std::filesystem::create_directories(run_dir);
  {
    ordered_json snapshot{{"variant", std::string(variant_name(config.variant))},
                          {"weights",
                           {{"rank", config.weights.rank},
                            {"sft", config.weights.sft},
                            {"sim", config.weights.sim}}},
                          {"learning_rate", config.learning_rate},
                          {"batch_size", config.batch_size},
                          {"max_steps", config.max_steps},
                          {"ckpt_interval", config.ckpt_interval},
                          {"seed", config.seed}};
    std::ofstream out(run_dir / "train_config.json", std::ios::binary);
    out << snapshot.dump(2) << "\n";
  }
  std::ofstream trace_out(run_dir / "loss_trace.jsonl", std::ios::binary);
  if (!trace_out)
    throw std::runtime_error("cannot write loss trace in " + run_dir.string());

  Rng shuffle_rng(derive_seed(config.seed, "batch_order"));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_rng.shuffle(order);
  std::size_t cursor = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      shuffle_rng.shuffle(order);
      cursor = 0;
    }
    return order[cursor++];
  };

  AlignmentRunResult result;
  result.run_dir = run_dir;
  ToyModelParams params = std::move(base);
  const std::size_t n_params = params.values.size();
  std::vector<double> grad(n_params);
  std::vector<LossBreakdown> recent;

  auto save_ckpt = [&](std::int64_t step) {
    Checkpoint ck;
    ck.step = step;
    const auto path = run_dir / ckpt_filename(step);
    save_checkpoint(params, tokenizer, path);
    ck.params_path = path.string();
    if (!eval_set.empty())
      ck.eval_accuracy =
          evaluate(params, tokenizer, eval_set, config.gen).accuracy;
    ck.loss_trace = recent;
    result.checkpoints.push_back(std::move(ck));
  };

  for (int step = 1; step <= config.max_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    LossBreakdown batch{};
    batch.weights = config.weights;
    for (int b = 0; b < config.batch_size; ++b) {
      const std::size_t idx = next_index();
      GradientResult gr;
      try {
        gr = simrrhf_gradient(params, dataset[idx], config.weights, config.gen);
      } catch (const std::exception& e) {
        throw std::runtime_error("training failed on example " +
                                 dataset[idx].query_id + ": " + e.what());
      }
      if (!std::isfinite(gr.breakdown.total))
        throw std::runtime_error("non-finite loss on example " +
                                 dataset[idx].query_id);
      for (std::size_t i = 0; i < n_params; ++i) grad[i] += gr.gradient[i];
      batch.rank += gr.breakdown.rank;
      batch.sft += gr.breakdown.sft;
      batch.sim += gr.breakdown.sim;
      batch.total += gr.breakdown.total;
    }
    const double inv_b = 1.0 / config.batch_size;
    for (double& g : grad) g *= inv_b;
    batch.rank *= inv_b;
    batch.sft *= inv_b;
    batch.sim *= inv_b;
    batch.total *= inv_b;

    params = sgd_step(std::move(params), grad, config.learning_rate);
    trace_out << ordered_json{{"step", step},
                              {"rank", batch.rank},
                              {"sft", batch.sft},
                              {"sim", batch.sim},
                              {"total", batch.total}}
                     .dump()
              << "\n";
    recent.push_back(batch);
    if (recent.size() > 32) recent.erase(recent.begin());
    if (step % config.ckpt_interval == 0 || step == config.max_steps)
      save_ckpt(step);
  }
  result.final_params = std::move(params);
  return result;
}

StabilityReport stability_report(std::span<const Checkpoint> checkpoints) {
  std::vector<const Checkpoint*> evaluated;
  std::int64_t prev_step = -1;
  for (const auto& ck : checkpoints) {
    if (ck.step <= prev_step)
      throw std::invalid_argument("checkpoint steps must strictly increase");
    prev_step = ck.step;
    if (ck.eval_accuracy) evaluated.push_back(&ck);
  }
  if (evaluated.size() < 5)
    throw std::invalid_argument(
        "stability report needs at least 5 evaluated checkpoints");

  std::size_t best = 0;
  for (std::size_t i = 1; i < evaluated.size(); ++i) {
    if (*evaluated[i]->eval_accuracy > *evaluated[best]->eval_accuracy)
      best = i;  // ties keep the earliest step
  }
  std::size_t lo = best >= 2 ? best - 2 : 0;
  lo = std::min(lo, evaluated.size() - 5);

  StabilityReport report;
  report.best_ckpt_step = evaluated[best]->step;
  report.best_acc = *evaluated[best]->eval_accuracy;
  double mean = 0.0;
  for (std::size_t i = lo; i < lo + 5; ++i) {
    report.window_steps.push_back(evaluated[i]->step);
    mean += *evaluated[i]->eval_accuracy;
  }
  mean /= 5.0;
  double var = 0.0;
  for (std::size_t i = lo; i < lo + 5; ++i) {
    const double d = *evaluated[i]->eval_accuracy - mean;
    var += d * d;
  }
  var /= 5.0;  // population variance
  report.acc_mean = mean;
  report.acc_var_x1000 = 1000.0 * var;
  return report;
}

std::vector<VariantResult> compare_variants(
    std::span<const ResponseSet> dataset, std::span<const EvalItem> eval_set,
    const ToyModelParams& base_model, const Tokenizer& tokenizer,
    std::span<const TrainConfig> configs,
    const std::filesystem::path& run_dir) {
  if (configs.size() < 2)
    throw std::invalid_argument("variant comparison needs at least 2 configs");
  std::vector<VariantResult> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    VariantResult row;
    row.name = std::string(variant_name(configs[i].variant));
    const auto dir = run_dir / (std::to_string(i) + "_" + row.name);
    auto run = run_alignment(dataset, base_model, tokenizer, configs[i],
                             eval_set, dir);
    row.stability = stability_report(run.checkpoints);
    row.checkpoints = std::move(run.checkpoints);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_best_ckpt_table(std::span<const VariantResult> rows) {
  std::size_t width = std::string("model_name").size();
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::string out = "model_name";
  out.append(width - 10, ' ');
  out += " | best_ckp | best_acc\n";
  for (const auto& r : rows) {
    out += r.name;
    out.append(width - r.name.size(), ' ');
    out += " | " + std::to_string(r.stability.best_ckpt_step) + " | " +
           percent(r.stability.best_acc) + "\n";
  }
  return out;
}

std::string render_stability_table(std::span<const VariantResult> rows) {
  std::size_t width = std::string("model_name").size();
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::string out = "model_name";
  out.append(width - 10, ' ');
  out += " | acc_mean | acc_var*1000\n";
  for (const auto& r : rows) {
    char var_buf[32];
    std::snprintf(var_buf, sizeof(var_buf), "%.3f", r.stability.acc_var_x1000);
    out += r.name;
    out.append(width - r.name.size(), ' ');
    out += " | " + percent(r.stability.acc_mean) + " | " + var_buf + "\n";
  }
  return out;
}

void write_stability_report(const std::filesystem::path& path,
                            const StabilityReport& report) {
  ordered_json doc{{"best_ckpt_step", report.best_ckpt_step},
                   {"best_acc", report.best_acc},
                   {"window_steps", report.window_steps},
                   {"acc_mean", report.acc_mean},
                   {"acc_var_x1000", report.acc_var_x1000}};
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << doc.dump(2) << "\n";
}

StabilityReport load_stability_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path.string());
  const auto doc = nlohmann::json::parse(in);
  StabilityReport report;
  report.best_ckpt_step = doc.at("best_ckpt_step").get<std::int64_t>();
  report.best_acc = doc.at("best_acc").get<double>();
  report.window_steps = doc.at("window_steps").get<std::vector<std::int64_t>>();
  report.acc_mean = doc.at("acc_mean").get<double>();
  report.acc_var_x1000 = doc.at("acc_var_x1000").get<double>();
  return report;
}

SftRunResult run_sft(std::span<const SftPair> pairs, ToyModelParams base,
                     const SftConfig& config) {
  if (pairs.empty()) throw std::invalid_argument("empty sft dataset");
  if (config.batch_size < 1 || config.max_steps < 1)
    throw std::invalid_argument("batch_size and max_steps must be positive");

  const std::size_t probe_n =
      std::min(pairs.size(), static_cast<std::size_t>(
                                 std::max(1, config.probe_size)));
  auto probe_nll = [&](const ToyModelParams& params) {
    double sum = 0.0;
    for (std::size_t i = 0; i < probe_n; ++i)
      sum += sft_nll(params, pairs[i].query, pairs[i].response);
    return sum / static_cast<double>(probe_n);
  };

  SftRunResult result;
  result.initial_probe_nll = probe_nll(base);

  Rng shuffle_rng(derive_seed(config.seed, "sft_batch_order"));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_rng.shuffle(order);
  std::size_t cursor = 0;

  ToyModelParams params = std::move(base);
  std::vector<double> grad(params.values.size());
  for (int step = 1; step <= config.max_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      const auto& pair = pairs[order[cursor++]];
      loss += sft_nll(params, pair.query, pair.response, grad);
    }
    const double inv_b = 1.0 / config.batch_size;
    for (double& g : grad) g *= inv_b;
    result.loss_trace.push_back(loss * inv_b);
    params = sgd_step(std::move(params), grad, config.learning_rate);
  }
  result.final_probe_nll = probe_nll(params);
  result.final_params = std::move(params);
  return result;
}

double pairwise_ranking_accuracy(const ToyModelParams& params,
                                 std::span<const ResponseSet> dataset) {
  long long matched = 0, total = 0;
  for (const auto& rs : dataset) {
    rs.validate();
    std::vector<double> p(rs.responses.size());
    for (std::size_t i = 0; i < rs.responses.size(); ++i)
      p[i] = length_normalized_logprob(response_logprobs(
          params, rs.query_tokens, rs.responses[i].tokens));
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = i + 1; j < p.size(); ++j) {
        const double dr = rs.responses[i].reward - rs.responses[j].reward;
        if (dr == 0.0) continue;
        ++total;
        const double dp = p[i] - p[j];
        if ((dr > 0.0 && dp > 0.0) || (dr < 0.0 && dp < 0.0)) ++matched;
      }
    }
  }
  if (total == 0)
    throw std::invalid_argument("no response pairs with distinct rewards");
  return static_cast<double>(matched) / static_cast<double>(total);
}

double probe_loss(const ToyModelParams& params,
                  std::span<const ResponseSet> probe,
                  const TrainConfig& raw_config) {
  if (probe.empty()) throw std::invalid_argument("empty probe batch");
  const TrainConfig config = raw_config.normalized();
  double sum = 0.0;
  for (const auto& rs : probe) {
    TokenSeq generated;
    if (config.weights.sim > 0.0) {
      GenerationConfig greedy = config.gen;
      greedy.mode = GenerationConfig::Mode::greedy;
      generated = generate(params, rs.query_tokens, greedy).tokens;
    }
    sum += alignment_loss(params, rs, config.weights, generated).total;
  }
  return sum / static_cast<double>(probe.size());
}

}  // namespace rankalign

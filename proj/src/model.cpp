#include "rankalign/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rankalign/rng.hpp"

namespace rankalign {

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

void matvec(std::span<const double> w, int rows, int cols,
            std::span<const double> x, std::span<double> out) {
  for (int r = 0; r < rows; ++r) {
    double sum = 0.0;
    const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) sum += wr[c] * x[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = sum;
  }
}

// out += W^T y
void matvec_t_add(std::span<const double> w, int rows, int cols,
                  std::span<const double> y, std::span<double> out) {
  for (int r = 0; r < rows; ++r) {
    const double yr = y[static_cast<std::size_t>(r)];
    if (yr == 0.0) continue;
    const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c)] += wr[c] * yr;
  }
}

// W += y x^T
void outer_add(std::span<double> w, int rows, int cols,
               std::span<const double> y, std::span<const double> x) {
  for (int r = 0; r < rows; ++r) {
    const double yr = y[static_cast<std::size_t>(r)];
    if (yr == 0.0) continue;
    double* wr = w.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) wr[c] += yr * x[static_cast<std::size_t>(c)];
  }
}

void add_to(std::span<double> out, std::span<const double> x) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += x[i];
}

bool all_zero(std::span<const double> v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

std::span<const double> seg_view(const ToyModelParams& p, const ParamLayout& l,
                                 std::string_view name) {
  const auto& s = l.segment(name);
  return std::span<const double>(p.values).subspan(s.offset, s.size());
}

std::span<double> seg_view(std::span<double> buf, const ParamLayout& l,
                           std::string_view name) {
  const auto& s = l.segment(name);
  return buf.subspan(s.offset, s.size());
}

// Parameter spans resolved once per forward/backward call.
struct ModelView {
  const ModelConfig& cfg;
  ParamLayout layout;
  std::span<const double> tok_embed, out_w, out_b;
  std::span<const double> hid_w, hid_b;  // bigram / mlp
  std::span<const double> pos_embed, attn_q, attn_k, attn_v, ctx_w, cur_w;

  explicit ModelView(const ToyModelParams& p)
      : cfg(p.config), layout(ParamLayout::make(p.config)) {
    if (p.values.size() != layout.total())
      throw std::invalid_argument("parameter vector size does not match layout");
    tok_embed = seg_view(p, layout, "tok_embed");
    out_w = seg_view(p, layout, "out_w");
    out_b = seg_view(p, layout, "out_b");
    switch (cfg.arch) {
      case Arch::bigram:
      case Arch::mlp:
        hid_w = seg_view(p, layout, "hid_w");
        hid_b = seg_view(p, layout, "hid_b");
        break;
      case Arch::tiny_attention:
        pos_embed = seg_view(p, layout, "pos_embed");
        attn_q = seg_view(p, layout, "attn_q");
        attn_k = seg_view(p, layout, "attn_k");
        attn_v = seg_view(p, layout, "attn_v");
        ctx_w = seg_view(p, layout, "ctx_w");
        cur_w = seg_view(p, layout, "cur_w");
        hid_b = seg_view(p, layout, "hid_b");
        break;
    }
  }

  std::span<const double> embed_row(int token) const {
    return tok_embed.subspan(
        static_cast<std::size_t>(token) * static_cast<std::size_t>(cfg.embed_dim),
        static_cast<std::size_t>(cfg.embed_dim));
  }
};

void check_tokens(const ModelConfig& cfg, std::span<const int> tokens) {
  for (int t : tokens)
    if (t < 0 || t >= cfg.vocab_size)
      throw std::invalid_argument("token id out of range: " + std::to_string(t));
}

std::vector<int> build_sequence(const ModelConfig& cfg,
                                std::span<const int> query,
                                std::span<const int> response,
                                int extra_slots = 0) {
  check_tokens(cfg, query);
  check_tokens(cfg, response);
  const std::size_t len = 1 + query.size() + response.size() +
                          static_cast<std::size_t>(extra_slots);
  if (len > static_cast<std::size_t>(cfg.context_len))
    throw std::invalid_argument("context overflow: sequence of " +
                                std::to_string(len) + " tokens exceeds " +
                                std::to_string(cfg.context_len));
  std::vector<int> seq;
  seq.reserve(len);
  seq.push_back(Tokenizer::kBegin);
  seq.insert(seq.end(), query.begin(), query.end());
  seq.insert(seq.end(), response.begin(), response.end());
  return seq;
}

// Effective mlp window token at offset back from position t (pad before start).
int window_token(const std::vector<int>& seq, int t, int back) {
  const int idx = t - back;
  return idx >= 0 ? seq[static_cast<std::size_t>(idx)] : Tokenizer::kPad;
}

struct Trace {
  std::vector<int> seq;
  Mat hidden;  // n x H
  Mat logits;  // n x V
  // attention only
  Mat embed;  // n x D (token + positional)
  Mat q, k, v, ctx;
  std::vector<Vec> attn;  // row t holds t+1 weights
};

void forward_position(const ModelView& m, Trace& tr, int t) {
  const int D = m.cfg.embed_dim;
  const int H = m.cfg.hidden_dim;
  const int V = m.cfg.vocab_size;
  Vec z(static_cast<std::size_t>(H), 0.0);
  switch (m.cfg.arch) {
    case Arch::bigram: {
      matvec(m.hid_w, H, D, m.embed_row(tr.seq[static_cast<std::size_t>(t)]), z);
      break;
    }
    case Arch::mlp: {
      Vec xcat(static_cast<std::size_t>(kMlpWindow) * D);
      for (int wdx = 0; wdx < kMlpWindow; ++wdx) {
        const int tok = window_token(tr.seq, t, kMlpWindow - 1 - wdx);
        const auto row = m.embed_row(tok);
        std::copy(row.begin(), row.end(),
                  xcat.begin() + static_cast<std::size_t>(wdx) * D);
      }
      matvec(m.hid_w, H, kMlpWindow * D, xcat, z);
      break;
    }
    case Arch::tiny_attention: {
      Vec e(static_cast<std::size_t>(D));
      const auto tok_row = m.embed_row(tr.seq[static_cast<std::size_t>(t)]);
      for (int i = 0; i < D; ++i)
        e[static_cast<std::size_t>(i)] =
            tok_row[static_cast<std::size_t>(i)] +
            m.pos_embed[static_cast<std::size_t>(t) * D + i];
      Vec qv(static_cast<std::size_t>(H)), kv(static_cast<std::size_t>(H)),
          vv(static_cast<std::size_t>(H));
      matvec(m.attn_q, H, D, e, qv);
      matvec(m.attn_k, H, D, e, kv);
      matvec(m.attn_v, H, D, e, vv);
      tr.embed.push_back(std::move(e));
      tr.k.push_back(std::move(kv));
      tr.v.push_back(std::move(vv));

      const double scale = 1.0 / std::sqrt(static_cast<double>(H));
      Vec scores(static_cast<std::size_t>(t) + 1);
      for (int u = 0; u <= t; ++u) {
        double s = 0.0;
        for (int i = 0; i < H; ++i)
          s += qv[static_cast<std::size_t>(i)] *
               tr.k[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)];
        scores[static_cast<std::size_t>(u)] = s * scale;
      }
      Vec weights = log_softmax(scores);
      for (double& w : weights) w = std::exp(w);
      Vec c(static_cast<std::size_t>(H), 0.0);
      for (int u = 0; u <= t; ++u) {
        const double a = weights[static_cast<std::size_t>(u)];
        const auto& vu = tr.v[static_cast<std::size_t>(u)];
        for (int i = 0; i < H; ++i)
          c[static_cast<std::size_t>(i)] += a * vu[static_cast<std::size_t>(i)];
      }
      matvec(m.ctx_w, H, H, c, z);
      Vec z2(static_cast<std::size_t>(H));
      matvec(m.cur_w, H, D, tr.embed.back(), z2);
      for (int i = 0; i < H; ++i) z[static_cast<std::size_t>(i)] += z2[static_cast<std::size_t>(i)];
      tr.q.push_back(std::move(qv));
      tr.attn.push_back(std::move(weights));
      tr.ctx.push_back(std::move(c));
      break;
    }
  }
  if (!m.hid_b.empty())
    for (int i = 0; i < H; ++i) z[static_cast<std::size_t>(i)] += m.hid_b[static_cast<std::size_t>(i)];
  for (double& x : z) x = std::tanh(x);
  Vec logits(static_cast<std::size_t>(V));
  matvec(m.out_w, V, H, z, logits);
  for (int i = 0; i < V; ++i) logits[static_cast<std::size_t>(i)] += m.out_b[static_cast<std::size_t>(i)];
  tr.hidden.push_back(std::move(z));
  tr.logits.push_back(std::move(logits));
}

Trace forward_trace(const ModelView& m, std::vector<int> seq) {
  Trace tr;
  tr.seq = std::move(seq);
  const int n = static_cast<int>(tr.seq.size());
  tr.hidden.reserve(static_cast<std::size_t>(n));
  tr.logits.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) forward_position(m, tr, t);
  return tr;
}

// Accumulates d(loss)/d(params) for a single traced sequence given the
// adjoints of the logits and of the hidden states per position.
void backward_trace(const ModelView& m, const Trace& tr, const Mat& dlogits,
                    const Mat& dhidden, std::span<double> grad) {
  const int n = static_cast<int>(tr.seq.size());
  const int D = m.cfg.embed_dim;
  const int H = m.cfg.hidden_dim;
  const int V = m.cfg.vocab_size;
  auto g_tok = seg_view(grad, m.layout, "tok_embed");
  auto g_out_w = seg_view(grad, m.layout, "out_w");
  auto g_out_b = seg_view(grad, m.layout, "out_b");

  Mat dq, dk, dv, de;
  if (m.cfg.arch == Arch::tiny_attention) {
    dq.assign(static_cast<std::size_t>(n), Vec(static_cast<std::size_t>(H), 0.0));
    dk.assign(static_cast<std::size_t>(n), Vec(static_cast<std::size_t>(H), 0.0));
    dv.assign(static_cast<std::size_t>(n), Vec(static_cast<std::size_t>(H), 0.0));
    de.assign(static_cast<std::size_t>(n), Vec(static_cast<std::size_t>(D), 0.0));
  }

  for (int t = 0; t < n; ++t) {
    Vec dh(static_cast<std::size_t>(H), 0.0);
    if (!dhidden.empty() && !dhidden[static_cast<std::size_t>(t)].empty())
      dh = dhidden[static_cast<std::size_t>(t)];
    if (!dlogits.empty() && !dlogits[static_cast<std::size_t>(t)].empty()) {
      const Vec& dl = dlogits[static_cast<std::size_t>(t)];
      outer_add(g_out_w, V, H, dl, tr.hidden[static_cast<std::size_t>(t)]);
      add_to(g_out_b, dl);
      matvec_t_add(m.out_w, V, H, dl, dh);
    }
    if (all_zero(dh)) continue;

    // through tanh
    const Vec& h = tr.hidden[static_cast<std::size_t>(t)];
    Vec dz(static_cast<std::size_t>(H));
    for (int i = 0; i < H; ++i)
      dz[static_cast<std::size_t>(i)] =
          dh[static_cast<std::size_t>(i)] *
          (1.0 - h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)]);

    switch (m.cfg.arch) {
      case Arch::bigram: {
        auto g_hid_w = seg_view(grad, m.layout, "hid_w");
        auto g_hid_b = seg_view(grad, m.layout, "hid_b");
        const auto e = m.embed_row(tr.seq[static_cast<std::size_t>(t)]);
        outer_add(g_hid_w, H, D, dz, e);
        add_to(g_hid_b, dz);
        Vec dxe(static_cast<std::size_t>(D), 0.0);
        matvec_t_add(m.hid_w, H, D, dz, dxe);
        auto g_row = g_tok.subspan(
            static_cast<std::size_t>(tr.seq[static_cast<std::size_t>(t)]) * D,
            static_cast<std::size_t>(D));
        add_to(g_row, dxe);
        break;
      }
      case Arch::mlp: {
        auto g_hid_w = seg_view(grad, m.layout, "hid_w");
        auto g_hid_b = seg_view(grad, m.layout, "hid_b");
        Vec xcat(static_cast<std::size_t>(kMlpWindow) * D);
        for (int wdx = 0; wdx < kMlpWindow; ++wdx) {
          const int tok = window_token(tr.seq, t, kMlpWindow - 1 - wdx);
          const auto row = m.embed_row(tok);
          std::copy(row.begin(), row.end(),
                    xcat.begin() + static_cast<std::size_t>(wdx) * D);
        }
        outer_add(g_hid_w, H, kMlpWindow * D, dz, xcat);
        add_to(g_hid_b, dz);
        Vec dxcat(static_cast<std::size_t>(kMlpWindow) * D, 0.0);
        matvec_t_add(m.hid_w, H, kMlpWindow * D, dz, dxcat);
        for (int wdx = 0; wdx < kMlpWindow; ++wdx) {
          const int tok = window_token(tr.seq, t, kMlpWindow - 1 - wdx);
          auto g_row = g_tok.subspan(static_cast<std::size_t>(tok) * D,
                                     static_cast<std::size_t>(D));
          for (int i = 0; i < D; ++i)
            g_row[static_cast<std::size_t>(i)] +=
                dxcat[static_cast<std::size_t>(wdx) * D + i];
        }
        break;
      }
      case Arch::tiny_attention: {
        auto g_ctx_w = seg_view(grad, m.layout, "ctx_w");
        auto g_cur_w = seg_view(grad, m.layout, "cur_w");
        auto g_hid_b = seg_view(grad, m.layout, "hid_b");
        outer_add(g_ctx_w, H, H, dz, tr.ctx[static_cast<std::size_t>(t)]);
        outer_add(g_cur_w, H, D, dz, tr.embed[static_cast<std::size_t>(t)]);
        add_to(g_hid_b, dz);
        Vec dc(static_cast<std::size_t>(H), 0.0);
        matvec_t_add(m.ctx_w, H, H, dz, dc);
        matvec_t_add(m.cur_w, H, D, dz, de[static_cast<std::size_t>(t)]);

        const Vec& a = tr.attn[static_cast<std::size_t>(t)];
        Vec da(static_cast<std::size_t>(t) + 1);
        double mix = 0.0;
        for (int u = 0; u <= t; ++u) {
          double s = 0.0;
          const auto& vu = tr.v[static_cast<std::size_t>(u)];
          for (int i = 0; i < H; ++i)
            s += vu[static_cast<std::size_t>(i)] * dc[static_cast<std::size_t>(i)];
          da[static_cast<std::size_t>(u)] = s;
          mix += a[static_cast<std::size_t>(u)] * s;
        }
        const double scale = 1.0 / std::sqrt(static_cast<double>(H));
        for (int u = 0; u <= t; ++u) {
          const double au = a[static_cast<std::size_t>(u)];
          const double ds = au * (da[static_cast<std::size_t>(u)] - mix) * scale;
          const auto& ku = tr.k[static_cast<std::size_t>(u)];
          const auto& qt = tr.q[static_cast<std::size_t>(t)];
          for (int i = 0; i < H; ++i) {
            dq[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] +=
                ds * ku[static_cast<std::size_t>(i)];
            dk[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)] +=
                ds * qt[static_cast<std::size_t>(i)];
            dv[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)] +=
                au * dc[static_cast<std::size_t>(i)];
          }
        }
        break;
      }
    }
  }

  if (m.cfg.arch == Arch::tiny_attention) {
    auto g_q = seg_view(grad, m.layout, "attn_q");
    auto g_k = seg_view(grad, m.layout, "attn_k");
    auto g_v = seg_view(grad, m.layout, "attn_v");
    auto g_pos = seg_view(grad, m.layout, "pos_embed");
    for (int u = 0; u < n; ++u) {
      const std::size_t su = static_cast<std::size_t>(u);
      if (!all_zero(dq[su])) {
        outer_add(g_q, H, D, dq[su], tr.embed[su]);
        matvec_t_add(m.attn_q, H, D, dq[su], de[su]);
      }
      if (!all_zero(dk[su])) {
        outer_add(g_k, H, D, dk[su], tr.embed[su]);
        matvec_t_add(m.attn_k, H, D, dk[su], de[su]);
      }
      if (!all_zero(dv[su])) {
        outer_add(g_v, H, D, dv[su], tr.embed[su]);
        matvec_t_add(m.attn_v, H, D, dv[su], de[su]);
      }
      if (all_zero(de[su])) continue;
      auto g_row = g_tok.subspan(static_cast<std::size_t>(tr.seq[su]) * D,
                                 static_cast<std::size_t>(D));
      add_to(g_row, de[su]);
      for (int i = 0; i < D; ++i)
        g_pos[su * static_cast<std::size_t>(D) + static_cast<std::size_t>(i)] +=
            de[su][static_cast<std::size_t>(i)];
    }
  }
}

Vec softmax_from_logits(const Vec& logits) {
  Vec p = log_softmax(logits);
  for (double& x : p) x = std::exp(x);
  return p;
}

}  // namespace

std::string_view arch_name(Arch a) {
  switch (a) {
    case Arch::bigram: return "bigram";
    case Arch::mlp: return "mlp";
    case Arch::tiny_attention: return "tiny_attention";
  }
  throw std::logic_error("unknown arch");
}

Arch arch_from_name(std::string_view name) {
  if (name == "bigram") return Arch::bigram;
  if (name == "mlp") return Arch::mlp;
  if (name == "tiny_attention") return Arch::tiny_attention;
  throw std::invalid_argument("unknown arch: " + std::string(name));
}

void ModelConfig::validate() const {
  if (vocab_size < 4)
    throw std::invalid_argument("vocab_size must be >= 4 (pad/begin/end plus content)");
  if (embed_dim < 1 || hidden_dim < 1)
    throw std::invalid_argument("embedding and hidden dims must be positive");
  if (context_len < 2)
    throw std::invalid_argument("context_len must be >= 2");
}

ParamLayout ParamLayout::make(const ModelConfig& cfg) {
  cfg.validate();
  ParamLayout l;
  auto add = [&l](std::string name, int rows, int cols) {
    ParamSegment s{std::move(name), rows, cols, l.total_};
    l.total_ += s.size();
    l.segments_.push_back(std::move(s));
  };
  add("tok_embed", cfg.vocab_size, cfg.embed_dim);
  switch (cfg.arch) {
    case Arch::bigram:
      add("hid_w", cfg.hidden_dim, cfg.embed_dim);
      add("hid_b", cfg.hidden_dim, 1);
      break;
    case Arch::mlp:
      add("hid_w", cfg.hidden_dim, kMlpWindow * cfg.embed_dim);
      add("hid_b", cfg.hidden_dim, 1);
      break;
    case Arch::tiny_attention:
      add("pos_embed", cfg.context_len, cfg.embed_dim);
      add("attn_q", cfg.hidden_dim, cfg.embed_dim);
      add("attn_k", cfg.hidden_dim, cfg.embed_dim);
      add("attn_v", cfg.hidden_dim, cfg.embed_dim);
      add("ctx_w", cfg.hidden_dim, cfg.hidden_dim);
      add("cur_w", cfg.hidden_dim, cfg.embed_dim);
      add("hid_b", cfg.hidden_dim, 1);
      break;
  }
  add("out_w", cfg.vocab_size, cfg.hidden_dim);
  add("out_b", cfg.vocab_size, 1);
  return l;
}

const ParamSegment& ParamLayout::segment(std::string_view name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw std::invalid_argument("no parameter segment named " + std::string(name));
}

ToyModelParams init_model(const ModelConfig& cfg) {
  cfg.validate();
  const ParamLayout layout = ParamLayout::make(cfg);
  ToyModelParams p;
  p.config = cfg;
  p.values.assign(layout.total(), 0.0);
  Rng rng(derive_seed(cfg.seed, "init"));
  constexpr double kInitStd = 0.08;
  for (const auto& s : layout.segments()) {
    if (s.name == "hid_b" || s.name == "out_b") continue;  // biases start at 0
    for (std::size_t i = 0; i < s.size(); ++i)
      p.values[s.offset + i] = kInitStd * rng.normal();
  }
  return p;
}

std::span<double> param_view(ToyModelParams& params, std::string_view name) {
  const ParamLayout layout = ParamLayout::make(params.config);
  const auto& s = layout.segment(name);
  return std::span<double>(params.values).subspan(s.offset, s.size());
}

std::span<const double> param_view(const ToyModelParams& params,
                                   std::string_view name) {
  const ParamLayout layout = ParamLayout::make(params.config);
  const auto& s = layout.segment(name);
  return std::span<const double>(params.values).subspan(s.offset, s.size());
}

std::vector<std::vector<double>> conditional_log_distributions(
    const ToyModelParams& params, std::span<const int> query_tokens,
    std::span<const int> response_tokens) {
  if (response_tokens.empty()) throw std::invalid_argument("empty response");
  const ModelView m(params);
  Trace tr = forward_trace(m, build_sequence(params.config, query_tokens,
                                             response_tokens));
  std::vector<std::vector<double>> out;
  out.reserve(response_tokens.size());
  const std::size_t first = 1 + query_tokens.size();
  for (std::size_t j = 0; j < response_tokens.size(); ++j)
    out.push_back(log_softmax(tr.logits[first + j - 1]));
  return out;
}

std::vector<double> response_logprobs(const ToyModelParams& params,
                                      std::span<const int> query_tokens,
                                      std::span<const int> response_tokens) {
  const auto dists = conditional_log_distributions(params, query_tokens,
                                                   response_tokens);
  std::vector<double> out(response_tokens.size());
  for (std::size_t j = 0; j < response_tokens.size(); ++j)
    out[j] = dists[j][static_cast<std::size_t>(response_tokens[j])];
  return out;
}

std::vector<std::vector<double>> response_hidden_states(
    const ToyModelParams& params, std::span<const int> query_tokens,
    std::span<const int> response_tokens) {
  if (response_tokens.empty()) throw std::invalid_argument("empty response");
  const ModelView m(params);
  Trace tr = forward_trace(m, build_sequence(params.config, query_tokens,
                                             response_tokens));
  const std::size_t first = 1 + query_tokens.size();
  std::vector<std::vector<double>> out(
      tr.hidden.begin() + static_cast<std::ptrdiff_t>(first), tr.hidden.end());
  return out;
}

std::vector<double> response_embedding(const ToyModelParams& params,
                                       std::span<const int> query_tokens,
                                       std::span<const int> response_tokens) {
  if (response_tokens.empty()) throw std::invalid_argument("empty response");
  const std::size_t len = response_tokens.size();
  if (params.config.embedding_source == EmbeddingSource::input_embedding) {
    const ModelView m(params);
    check_tokens(params.config, response_tokens);
    std::vector<double> out(static_cast<std::size_t>(params.config.embed_dim), 0.0);
    for (int tok : response_tokens) {
      const auto row = m.embed_row(tok);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += row[i];
    }
    for (double& x : out) x /= static_cast<double>(len);
    return out;
  }
  const auto hs = response_hidden_states(params, query_tokens, response_tokens);
  std::vector<double> out(hs[0].size(), 0.0);
  for (const auto& h : hs)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += h[i];
  for (double& x : out) x /= static_cast<double>(len);
  return out;
}

void GenerationConfig::validate(const ModelConfig& model) const {
  if (max_new_tokens < 1)
    throw std::invalid_argument("max_new_tokens must be positive");
  if (max_new_tokens > model.context_len)
    throw std::invalid_argument("max_new_tokens must be <= context_len");
  if (temperature <= 0.0)
    throw std::invalid_argument("temperature must be positive");
  if (repetition_window < 1)
    throw std::invalid_argument("repetition_window must be positive");
}

GenerationResult generate(const ToyModelParams& params,
                          std::span<const int> query_tokens,
                          const GenerationConfig& gen) {
  gen.validate(params.config);
  check_tokens(params.config, query_tokens);
  const int context_len = params.config.context_len;
  if (1 + static_cast<int>(query_tokens.size()) >= context_len)
    throw std::invalid_argument("query does not fit in context");

  const ModelView m(params);
  Trace tr;
  tr.seq.reserve(static_cast<std::size_t>(context_len));
  tr.seq.push_back(Tokenizer::kBegin);
  tr.seq.insert(tr.seq.end(), query_tokens.begin(), query_tokens.end());
  for (int t = 0; t < static_cast<int>(tr.seq.size()); ++t)
    forward_position(m, tr, t);

  Rng rng(gen.seed);
  GenerationResult result;
  const int w = gen.repetition_window;
  while (true) {
    const Vec& logits = tr.logits.back();
    int token = 0;
    if (gen.mode == GenerationConfig::Mode::greedy) {
      for (int i = 1; i < params.config.vocab_size; ++i)
        if (logits[static_cast<std::size_t>(i)] >
            logits[static_cast<std::size_t>(token)])
          token = i;
    } else {
      Vec scaled(logits);
      for (double& x : scaled) x /= gen.temperature;
      const Vec probs = softmax_from_logits(scaled);
      const double u = rng.uniform();
      double cum = 0.0;
      token = params.config.vocab_size - 1;
      for (int i = 0; i < params.config.vocab_size; ++i) {
        cum += probs[static_cast<std::size_t>(i)];
        if (u < cum) {
          token = i;
          break;
        }
      }
    }
    result.tokens.push_back(token);
    if (token == Tokenizer::kEnd) {
      result.terminated = true;
      break;
    }
    const auto& out = result.tokens;
    if (static_cast<int>(out.size()) >= 2 * w &&
        std::equal(out.end() - w, out.end(), out.end() - 2 * w)) {
      result.repetition_detected = true;
      break;
    }
    if (static_cast<int>(out.size()) >= gen.max_new_tokens) break;
    if (1 + static_cast<int>(query_tokens.size() + out.size()) >= context_len)
      break;
    tr.seq.push_back(token);
    forward_position(m, tr, static_cast<int>(tr.seq.size()) - 1);
  }
  return result;
}

namespace {

struct ScoredResponseForward {
  Trace trace;
  std::size_t first_pos = 0;  // index of the first response token in seq
  std::size_t len = 0;
  double p = 0.0;
};

ScoredResponseForward score_response(const ModelView& m, const ModelConfig& cfg,
                                     std::span<const int> query,
                                     std::span<const int> response) {
  if (response.empty()) throw std::invalid_argument("empty response");
  ScoredResponseForward out;
  out.trace = forward_trace(m, build_sequence(cfg, query, response));
  out.first_pos = 1 + query.size();
  out.len = response.size();
  std::vector<double> lps(out.len);
  for (std::size_t j = 0; j < out.len; ++j) {
    const Vec lsm = log_softmax(out.trace.logits[out.first_pos + j - 1]);
    lps[j] = lsm[static_cast<std::size_t>(response[j])];
  }
  out.p = length_normalized_logprob(lps);
  return out;
}

std::vector<double> trace_embedding(const ModelConfig& cfg, const ModelView& m,
                                    const ScoredResponseForward& sf) {
  std::vector<double> out;
  if (cfg.embedding_source == EmbeddingSource::input_embedding) {
    out.assign(static_cast<std::size_t>(cfg.embed_dim), 0.0);
    for (std::size_t j = 0; j < sf.len; ++j) {
      const auto row = m.embed_row(sf.trace.seq[sf.first_pos + j]);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += row[i];
    }
  } else {
    out.assign(static_cast<std::size_t>(cfg.hidden_dim), 0.0);
    for (std::size_t j = 0; j < sf.len; ++j) {
      const auto& h = sf.trace.hidden[sf.first_pos + j];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += h[i];
    }
  }
  for (double& x : out) x /= static_cast<double>(sf.len);
  return out;
}

// d(1 - cos(a, b))/da and /db
void cosine_partials(const std::vector<double>& a, const std::vector<double>& b,
                     std::vector<double>& da, std::vector<double>& db) {
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na2 += a[i] * a[i];
    nb2 += b[i] * b[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double cosv = dot / (na * nb);
  da.assign(a.size(), 0.0);
  db.assign(b.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    da[i] = -(b[i] / (na * nb) - cosv * a[i] / na2);
    db[i] = -(a[i] / (na * nb) - cosv * b[i] / nb2);
  }
}

}  // namespace

LossBreakdown alignment_loss(const ToyModelParams& params,
                             const ResponseSet& response_set,
                             const LossWeights& weights,
                             std::span<const int> generated_tokens) {
  response_set.validate();
  weights.validate();
  const ModelView m(params);
  const std::size_t k = response_set.responses.size();
  std::vector<double> p(k);
  std::vector<ScoredResponseForward> scored(k);
  for (std::size_t i = 0; i < k; ++i) {
    scored[i] = score_response(m, params.config, response_set.query_tokens,
                               response_set.responses[i].tokens);
    p[i] = scored[i].p;
  }
  const std::vector<double> rewards = response_set.rewards();
  const double rank = ranking_loss(p, rewards);
  const std::size_t best = best_response_index(rewards);
  const double sft = sft_loss(p, best);
  double sim = 0.0;
  if (weights.sim > 0.0) {
    if (generated_tokens.empty())
      throw std::invalid_argument(
          "similarity term requires a generated response");
    const auto gen_fwd = score_response(m, params.config,
                                        response_set.query_tokens,
                                        generated_tokens);
    sim = similarity_loss(trace_embedding(params.config, m, scored[best]),
                          trace_embedding(params.config, m, gen_fwd));
  }
  return total_loss(rank, sft, sim, weights);
}

GradientResult simrrhf_gradient(const ToyModelParams& params,
                                const ResponseSet& response_set,
                                const LossWeights& weights,
                                const GenerationConfig& gen) {
  response_set.validate();
  weights.validate();
  const ModelView m(params);
  const ModelConfig& cfg = params.config;
  const std::size_t k = response_set.responses.size();

  GradientResult result;
  if (weights.sim > 0.0) {
    GenerationConfig greedy = gen;  // y_pi always comes from greedy decoding
    greedy.mode = GenerationConfig::Mode::greedy;
    result.generated = generate(params, response_set.query_tokens, greedy).tokens;
  }

  std::vector<ScoredResponseForward> scored(k);
  std::vector<double> p(k);
  for (std::size_t i = 0; i < k; ++i) {
    scored[i] = score_response(m, cfg, response_set.query_tokens,
                               response_set.responses[i].tokens);
    p[i] = scored[i].p;
  }
  const std::vector<double> rewards = response_set.rewards();
  const double rank = ranking_loss(p, rewards);
  const std::size_t best = best_response_index(rewards);
  const double sft = sft_loss(p, best);

  // dL/dp per response: hinge pairs plus the sft pick
  std::vector<double> dp(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (rewards[i] < rewards[j] && p[i] > p[j]) {
        dp[i] += weights.rank;
        dp[j] -= weights.rank;
      }
    }
  }
  dp[best] -= weights.sft;

  double sim = 0.0;
  ScoredResponseForward gen_fwd;
  std::vector<double> d_emb_best, d_emb_gen;
  if (weights.sim > 0.0) {
    gen_fwd = score_response(m, cfg, response_set.query_tokens, result.generated);
    const auto e_best = trace_embedding(cfg, m, scored[best]);
    const auto e_gen = trace_embedding(cfg, m, gen_fwd);
    sim = similarity_loss(e_best, e_gen);
    cosine_partials(e_best, e_gen, d_emb_best, d_emb_gen);
    for (double& x : d_emb_best) x *= weights.sim;
    for (double& x : d_emb_gen) x *= weights.sim;
  }

  const ParamLayout layout = ParamLayout::make(cfg);
  result.gradient.assign(layout.total(), 0.0);
  auto g_tok = seg_view(std::span<double>(result.gradient), layout, "tok_embed");

  auto scatter_embedding_grad = [&](const ScoredResponseForward& sf,
                                    const std::vector<double>& d_emb,
                                    Mat& dhidden) {
    const double inv_len = 1.0 / static_cast<double>(sf.len);
    if (cfg.embedding_source == EmbeddingSource::input_embedding) {
      for (std::size_t j = 0; j < sf.len; ++j) {
        auto g_row = g_tok.subspan(
            static_cast<std::size_t>(sf.trace.seq[sf.first_pos + j]) *
                static_cast<std::size_t>(cfg.embed_dim),
            static_cast<std::size_t>(cfg.embed_dim));
        for (std::size_t i = 0; i < d_emb.size(); ++i)
          g_row[i] += inv_len * d_emb[i];
      }
    } else {
      dhidden.assign(sf.trace.seq.size(), Vec());
      for (std::size_t j = 0; j < sf.len; ++j) {
        Vec dh(d_emb.size());
        for (std::size_t i = 0; i < d_emb.size(); ++i)
          dh[i] = inv_len * d_emb[i];
        dhidden[sf.first_pos + j] = std::move(dh);
      }
    }
  };

  for (std::size_t i = 0; i < k; ++i) {
    const auto& sf = scored[i];
    Mat dlogits, dhidden;
    const double coeff = dp[i] / static_cast<double>(sf.len);
    if (coeff != 0.0) {
      dlogits.assign(sf.trace.seq.size(), Vec());
      for (std::size_t j = 0; j < sf.len; ++j) {
        const std::size_t pos = sf.first_pos + j - 1;
        Vec dl = softmax_from_logits(sf.trace.logits[pos]);
        for (double& x : dl) x *= -coeff;
        dl[static_cast<std::size_t>(sf.trace.seq[sf.first_pos + j])] += coeff;
        dlogits[pos] = std::move(dl);
      }
    }
    if (i == best && weights.sim > 0.0)
      scatter_embedding_grad(sf, d_emb_best, dhidden);
    if (!dlogits.empty() || !dhidden.empty())
      backward_trace(m, sf.trace, dlogits, dhidden, result.gradient);
  }
  if (weights.sim > 0.0) {
    Mat dlogits, dhidden;
    scatter_embedding_grad(gen_fwd, d_emb_gen, dhidden);
    if (!dhidden.empty())
      backward_trace(m, gen_fwd.trace, dlogits, dhidden, result.gradient);
  }

  result.breakdown = total_loss(rank, sft, sim, weights);
  return result;
}

double sft_nll(const ToyModelParams& params, std::span<const int> query_tokens,
               std::span<const int> response_tokens, std::span<double> grad) {
  if (response_tokens.empty()) throw std::invalid_argument("empty response");
  const ModelView m(params);
  std::vector<int> seq =
      build_sequence(params.config, query_tokens, response_tokens, 1);
  seq.push_back(Tokenizer::kEnd);
  Trace tr = forward_trace(m, seq);

  const std::size_t first = 1 + query_tokens.size();
  const std::size_t targets = response_tokens.size() + 1;  // includes end
  const double inv = 1.0 / static_cast<double>(targets);
  double nll = 0.0;
  Mat dlogits;
  if (!grad.empty()) dlogits.assign(tr.seq.size(), Vec());
  for (std::size_t j = 0; j < targets; ++j) {
    const std::size_t pos = first + j - 1;
    const int target = tr.seq[first + j];
    const Vec lsm = log_softmax(tr.logits[pos]);
    nll -= inv * lsm[static_cast<std::size_t>(target)];
    if (!grad.empty()) {
      Vec dl(lsm.size());
      for (std::size_t i = 0; i < lsm.size(); ++i)
        dl[i] = inv * std::exp(lsm[i]);
      dl[static_cast<std::size_t>(target)] -= inv;
      dlogits[pos] = std::move(dl);
    }
  }
  if (!grad.empty()) backward_trace(m, tr, dlogits, Mat(), grad);
  return nll;
}

ToyModelParams sgd_step(ToyModelParams params, std::span<const double> gradient,
                        double learning_rate) {
  if (gradient.size() != params.values.size())
    throw std::invalid_argument("gradient size does not match parameters");
  for (double g : gradient)
    if (!std::isfinite(g))
      throw std::runtime_error("non-finite gradient entry; aborting training");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0)
    throw std::invalid_argument("learning rate must be finite and >= 0");
  for (std::size_t i = 0; i < gradient.size(); ++i)
    params.values[i] -= learning_rate * gradient[i];
  params.step += 1;
  return params;
}

// ----- checkpoint io -----

namespace {
constexpr char kCheckpointMagic[8] = {'R', 'K', 'A', 'L', 'N', 'C', 'K', '1'};

std::string_view embedding_source_name(EmbeddingSource s) {
  return s == EmbeddingSource::final_hidden ? "final_hidden" : "input_embedding";
}

EmbeddingSource embedding_source_from_name(std::string_view name) {
  if (name == "final_hidden") return EmbeddingSource::final_hidden;
  if (name == "input_embedding") return EmbeddingSource::input_embedding;
  throw std::invalid_argument("unknown embedding source: " + std::string(name));
}
}  // namespace

void save_checkpoint(const ToyModelParams& params, const Tokenizer& tokenizer,
                     const std::filesystem::path& path) {
  const ParamLayout layout = ParamLayout::make(params.config);
  if (params.values.size() != layout.total())
    throw std::invalid_argument("parameter vector size does not match layout");

  nlohmann::ordered_json header;
  header["format_version"] = 1;
  header["arch"] = std::string(arch_name(params.config.arch));
  header["vocab_size"] = params.config.vocab_size;
  header["embed_dim"] = params.config.embed_dim;
  header["hidden_dim"] = params.config.hidden_dim;
  header["context_len"] = params.config.context_len;
  header["seed"] = params.config.seed;
  header["embedding_source"] =
      std::string(embedding_source_name(params.config.embedding_source));
  header["alphabet"] = tokenizer.alphabet();
  header["step"] = params.step;
  header["param_count"] = layout.total();
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& s : layout.segments())
    segs.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  header["segments"] = segs;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
  const auto header = nlohmann::json::parse(header_str);

  LoadedCheckpoint ck;
  ck.params.config.arch = arch_from_name(header.at("arch").get<std::string>());
  ck.params.config.vocab_size = header.at("vocab_size").get<int>();
  ck.params.config.embed_dim = header.at("embed_dim").get<int>();
  ck.params.config.hidden_dim = header.at("hidden_dim").get<int>();
  ck.params.config.context_len = header.at("context_len").get<int>();
  ck.params.config.seed = header.at("seed").get<std::uint64_t>();
  ck.params.config.embedding_source = embedding_source_from_name(
      header.at("embedding_source").get<std::string>());
  ck.params.step = header.at("step").get<std::int64_t>();
  ck.tokenizer = Tokenizer(header.at("alphabet").get<std::string>());

  const auto expected = ParamLayout::make(ck.params.config).total();
  const auto count = header.at("param_count").get<std::uint64_t>();
  if (count != expected)
    throw std::runtime_error("checkpoint parameter count mismatch");
  ck.params.values.resize(count);
  in.read(reinterpret_cast<char*>(ck.params.values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
  return ck;
}

}  // namespace rankalign

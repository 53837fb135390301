#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uapt/blocks.hpp"
#include "uapt/rng.hpp"
#include "uapt/tensor.hpp"
#include "uapt/tokenizer.hpp"

// Frozen toy backbones: a seeded affine image encoder, a bag-of-embeddings
// context encoder, and a small decoder-only causal LM with tied input/output
// embeddings. Interfaces (not weights) mirror the production-scale stand-ins
// they replace.

namespace uapt {

constexpr int kImageFeatureDim = 128;

// Training aborted because a loss or gradient went non-finite.
struct DivergenceError : std::runtime_error {
  long step;
  DivergenceError(long s, const std::string& what)
      : std::runtime_error(what), step(s) {}
};

template <typename T>
void freeze_params(ParamSet<T>& params) {
  for (auto& [name, p] : params) {
    p->requires_grad = false;
    p->grad.reset();
  }
}

// Fixed seeded affine map: raw image features (128) -> tokens x d_enc.
template <typename T>
struct ImageEncoder {
  int tokens = 16;
  int d_enc = 64;
  Tensor<T> w, b;  // (128, tokens*d_enc), (tokens*d_enc)

  void init(int n_tokens, int enc_dim, uint64_t seed) {
    if (n_tokens < 1 || enc_dim < 1)
      throw std::invalid_argument("image_encoder: bad dims");
    tokens = n_tokens;
    d_enc = enc_dim;
    Rng rng(seed);
    const T in_scale = T(1) / static_cast<T>(std::sqrt(double(kImageFeatureDim)));
    w = Tensor<T>::randn({kImageFeatureDim, tokens * d_enc}, rng, in_scale);
    b = Tensor<T>::randn({tokens * d_enc}, rng, T(0.1));
  }

  // feats -> (tokens, d_enc); purely frozen, never on the tape
  Tensor<T> encode(const std::vector<T>& feats) const {
    if (static_cast<int>(feats.size()) != kImageFeatureDim)
      throw std::invalid_argument("image_encoder: feature dim != 128");
    Tensor<T> x({1, kImageFeatureDim}, feats);
    Tensor<T> flat = bias_add(matmul(x, w), b);
    return Tensor<T>({tokens, d_enc}, *flat.values);
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }
};

// Frozen bag-of-embeddings pooling followed by a fixed affine map.
template <typename T>
struct ContextEncoder {
  int d_enc = 64;
  Tensor<T> emb;   // (vocab, d_enc)
  Tensor<T> w, b;  // (d_enc, d_enc), (d_enc)

  void init(int vocab, int enc_dim, uint64_t seed) {
    if (vocab < 1 || enc_dim < 1)
      throw std::invalid_argument("context_encoder: bad dims");
    d_enc = enc_dim;
    Rng rng(seed);
    emb = Tensor<T>::randn({vocab, d_enc}, rng, T(1));
    const T in_scale = T(1) / static_cast<T>(std::sqrt(double(d_enc)));
    w = Tensor<T>::randn({d_enc, d_enc}, rng, in_scale);
    b = Tensor<T>::randn({d_enc}, rng, T(0.1));
  }

  // token ids -> pooled (1, d_enc); order-free up to float summation noise
  Tensor<T> encode(const std::vector<int>& ids) const {
    if (ids.empty()) throw std::invalid_argument("context_encoder: no input tokens");
    Tensor<T> rows = embedding_lookup(emb, ids);
    Tensor<T> ones({1, static_cast<int>(ids.size())},
                   std::vector<T>(ids.size(), T(1)));
    Tensor<T> mean = scale(matmul(ones, rows), T(1) / static_cast<T>(ids.size()));
    return bias_add(matmul(mean, w), b);
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".emb", &emb);
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }
};

struct LmConfig {
  int vocab = 0;
  int d = 64;
  int depth = 4;
  int heads = 4;
  int ff = 256;
  int max_seq = 64;

  void validate() const {
    if (vocab <= kNumReservedIds)
      throw std::invalid_argument("lm: vocab too small");
    if (max_seq < 2) throw std::invalid_argument("lm: max_seq too small");
    AttentionConfig a{depth, heads, d, ff, 0.0};
    a.validate();
  }
};

// Decoder-only causal LM. Output head is tied to the token embedding table.
template <typename T>
struct FrozenLM {
  LmConfig cfg;
  Tensor<T> tok_emb;  // (vocab, d)
  Tensor<T> pos_emb;  // (max_seq, d)
  SelfAttentionStack<T> stack;

  void init(const LmConfig& c, uint64_t seed, bool trainable) {
    c.validate();
    cfg = c;
    Rng rng(seed);
    tok_emb = Tensor<T>::randn({cfg.vocab, cfg.d}, rng, T(0.02), trainable);
    pos_emb = Tensor<T>::randn({cfg.max_seq, cfg.d}, rng, T(0.01), trainable);
    AttentionConfig a{cfg.depth, cfg.heads, cfg.d, cfg.ff, 0.0};
    stack.init(a, rng, trainable);
  }

  // Degenerate "uniform head" variant: a zero embedding table makes every
  // logit row identically zero, i.e. an exactly uniform next-token law.
  static FrozenLM uniform(const LmConfig& c, uint64_t seed) {
    FrozenLM lm;
    lm.init(c, seed, false);
    std::fill(lm.tok_emb.values->begin(), lm.tok_emb.values->end(), T(0));
    return lm;
  }

  Tensor<T> embed_tokens(const std::vector<int>& ids) const {
    return embedding_lookup(tok_emb, ids);
  }

  // (n, d) input embeddings -> (n, vocab) logits, causal over the sequence
  Tensor<T> forward_embedded(const Tensor<T>& embs) const {
    if (embs.rank() != 2 || embs.dim(1) != cfg.d)
      throw std::invalid_argument("lm: input dim != model dim");
    const int n = embs.dim(0);
    if (n > cfg.max_seq) throw std::invalid_argument("lm: sequence exceeds max_seq");
    Tensor<T> h = add(embs, slice(pos_emb, 0, 0, n));
    h = stack.forward(h, /*causal=*/true);
    return matmul(h, transpose(tok_emb));
  }

  // [prefix ; embedded caption ids] -> logits over the whole sequence.
  // Gradients flow into `prefix`; the LM's own tensors stay frozen.
  Tensor<T> lm_forward(const Tensor<T>& prefix, const std::vector<int>& ids) const {
    Tensor<T> seq;
    if (prefix.numel() == 0) {
      if (ids.empty()) throw std::invalid_argument("lm: empty input");
      seq = embed_tokens(ids);
    } else {
      if (prefix.rank() != 2 || prefix.dim(1) != cfg.d)
        throw std::invalid_argument("lm: prefix dim != model dim");
      seq = ids.empty() ? prefix : concat(prefix, embed_tokens(ids), 0);
    }
    return forward_embedded(seq);
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".tok_emb", &tok_emb);
    out.emplace_back(prefix + ".pos_emb", &pos_emb);
    stack.collect(out, prefix + ".stack");
  }

  void freeze() {
    ParamSet<T> ps;
    collect(ps, "lm");
    freeze_params(ps);
  }
};

// ---------------------------------------------------------------------------
// LM pretraining

struct PretrainOptions {
  long steps = 1500;
  int batch_size = 32;
  double peak_lr = 1e-3;
  double weight_decay = 0.005;
  long warmup = 50;
  int max_len = 20;  // caption truncation, tokens
  uint64_t seed = 1;
};

struct PretrainReport {
  double initial_heldout_nll = 0.0;
  double final_heldout_nll = 0.0;
  long steps = 0;
};

namespace detail {

// Teacher-forced next-token loss over whole captions: input [BOS c_1..c_k],
// targets [c_1..c_k EOS]; per-sample token mean, then batch mean, realized as
// one mask-weighted cross entropy (weights 1/(n_i * B) sum to exactly 1).
template <typename T>
Tensor<T> lm_batch_nll(const FrozenLM<T>& lm,
                       const std::vector<std::vector<int>>& captions,
                       const std::vector<size_t>& batch, int max_len) {
  if (batch.empty()) throw std::invalid_argument("lm: empty batch");
  std::vector<Tensor<T>> logit_parts;
  std::vector<int> targets;
  std::vector<T> weights;
  logit_parts.reserve(batch.size());
  for (size_t idx : batch) {
    const std::vector<int>& cap = captions[idx];
    if (cap.empty()) throw std::invalid_argument("lm: empty caption");
    const int k = std::min<int>(static_cast<int>(cap.size()), max_len);
    std::vector<int> input;
    input.reserve(static_cast<size_t>(k) + 1);
    input.push_back(kBosId);
    for (int i = 0; i < k; ++i) input.push_back(cap[static_cast<size_t>(i)]);
    logit_parts.push_back(lm.lm_forward(Tensor<T>{}, input));
    const T w = T(1) / (static_cast<T>(k + 1) * static_cast<T>(batch.size()));
    for (int i = 0; i < k; ++i) {
      targets.push_back(cap[static_cast<size_t>(i)]);
      weights.push_back(w);
    }
    targets.push_back(kEosId);
    weights.push_back(w);
  }
  Tensor<T> logits = logit_parts.size() == 1 ? logit_parts[0] : concat(logit_parts, 0);
  return cross_entropy(logits, targets, weights);
}

}  // namespace detail

// Trains a fresh LM on the caption corpus, evaluates a held-out slice before
// and after, freezes the result. Every 10th caption is held out.
template <typename T>
std::pair<FrozenLM<T>, PretrainReport> pretrain_lm(
    const LmConfig& cfg, const std::vector<std::vector<int>>& captions,
    const PretrainOptions& opt) {
  if (captions.empty()) throw std::invalid_argument("pretrain_lm: empty corpus");

  std::vector<size_t> train_idx, held_idx;
  for (size_t i = 0; i < captions.size(); ++i)
    (i % 10 == 9 ? held_idx : train_idx).push_back(i);
  if (train_idx.empty()) throw std::invalid_argument("pretrain_lm: corpus too small");
  if (held_idx.empty()) held_idx.push_back(0);  // tiny corpus: reuse a train item

  Rng master(opt.seed);
  Rng init_rng = master.fork(1);
  Rng shuffle_rng = master.fork(2);

  FrozenLM<T> lm;
  lm.init(cfg, init_rng.next_u64(), /*trainable=*/true);

  auto heldout_nll = [&]() {
    NoGradGuard ng;
    return static_cast<double>(
        detail::lm_batch_nll(lm, captions, held_idx, opt.max_len).scalar());
  };

  PretrainReport report;
  report.initial_heldout_nll = heldout_nll();
  report.steps = opt.steps;

  if (opt.steps > 0) {
    OptimizerConfig ocfg;
    ocfg.weight_decay = opt.weight_decay;
    ocfg.peak_lr = opt.peak_lr;
    ocfg.total_steps = opt.steps;
    ocfg.warmup_steps = std::max<long>(1, std::min(opt.warmup, opt.steps > 1 ? opt.steps - 1 : 1));
    ocfg.batch_size = opt.batch_size;

    ParamSet<T> params;
    lm.collect(params, "lm");
    AdamW<T> adamw(ocfg, params);

    std::vector<size_t> order = train_idx;
    shuffle_rng.shuffle(order);
    size_t cursor = 0;
    for (long step = 1; step <= opt.steps; ++step) {
      std::vector<size_t> batch;
      batch.reserve(static_cast<size_t>(opt.batch_size));
      for (int b = 0; b < opt.batch_size; ++b) {
        if (cursor == order.size()) {
          shuffle_rng.shuffle(order);
          cursor = 0;
        }
        batch.push_back(order[cursor++]);
      }
      try {
        adamw.zero_grad();
        Tensor<T> loss = detail::lm_batch_nll(lm, captions, batch, opt.max_len);
        backward(loss);
        adamw.step(lr_at(step, ocfg));
      } catch (const NonFiniteError& e) {
        throw DivergenceError(step, std::string("pretrain_lm: ") + e.what());
      }
    }
  }

  report.final_heldout_nll = heldout_nll();
  if (opt.steps > 0 && !(report.final_heldout_nll < report.initial_heldout_nll))
    throw std::runtime_error("pretrain_lm: held-out loss did not improve");

  lm.freeze();
  return {std::move(lm), report};
}

}  // namespace uapt

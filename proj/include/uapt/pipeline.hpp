#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "uapt/backbones.hpp"
#include "uapt/blocks.hpp"
#include "uapt/data.hpp"
#include "uapt/tensor.hpp"
#include "uapt/tokenizer.hpp"
#include "uapt/user_context.hpp"

// The trainable heart: a query-guided mapping network turns frozen visual
// tokens into L_q prefix slots, a fusion network mixes them with L_u user
// context tokens into the prefix P fed to the frozen LM, and the training
// loop minimizes teacher-forced caption NLL over theta only.

namespace uapt {

enum class Ablation { none, no_context, no_mapping, no_fusion, no_query };

std::string ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);  // throws on unknown

struct PipelineConfig {
  int d = 64;      // mapping/fusion width
  int d_lm = 64;   // frozen LM embedding dim
  int d_enc = 64;  // frozen encoder output dim
  int l_q = 16;    // learnable queries = visual prefix slots
  int l_u = 4;     // user context tokens
  int visual_tokens = 16;
  int mapping_depth = 4;
  int mapping_heads = 4;
  int fusion_depth = 4;
  int fusion_heads = 4;
  int ff = 256;
  int max_caption_len = 20;  // L: supervised tokens per caption incl. EOS
  int keyword_k = 16;
  Ablation ablation = Ablation::none;

  int prefix_len() const {
    return ablation == Ablation::no_context ? l_q : l_u + l_q;
  }

  void validate() const {
    if (d < 1 || d_lm < 1 || d_enc < 1)
      throw std::invalid_argument("pipeline: non-positive dim");
    if (l_q < 1 || l_u < 1 || visual_tokens < 1)
      throw std::invalid_argument("pipeline: non-positive token count");
    if (max_caption_len < 2)
      throw std::invalid_argument("pipeline: max_caption_len < 2");
    if (keyword_k < 1) throw std::invalid_argument("pipeline: keyword_k < 1");
    if (ablation != Ablation::no_mapping) {
      AttentionConfig m{mapping_depth, mapping_heads, d, ff, 0.0};
      m.validate();
    }
    if (ablation != Ablation::no_fusion) {
      AttentionConfig f{fusion_depth, fusion_heads, d, ff, 0.0};
      f.validate();
    }
    if (ablation == Ablation::no_mapping && visual_tokens != l_q)
      throw std::invalid_argument(
          "pipeline: no_mapping needs visual_tokens == l_q (affine is per-token)");
  }
};

// Eq-2-style mapping: concatenate projected visual tokens with learnable
// queries, run one full self-attention stack, read the query positions.
template <typename T>
struct MappingNetwork {
  Ablation mode = Ablation::none;
  int l_q = 16;
  Tensor<T> queries;  // (l_q, d); zero and frozen under no_query
  Linear<T> in_proj;  // d_enc -> d
  SelfAttentionStack<T> stack;

  void init(const PipelineConfig& cfg, Rng& rng) {
    mode = cfg.ablation;
    l_q = cfg.l_q;
    in_proj.init(cfg.d_enc, cfg.d, rng, /*trainable=*/true);
    if (mode == Ablation::no_mapping) return;  // single affine, no stack
    if (mode == Ablation::no_query) {
      queries = Tensor<T>::zeros({cfg.l_q, cfg.d}, /*rg=*/false);
    } else {
      queries = Tensor<T>::randn({cfg.l_q, cfg.d}, rng, T(0.02), /*rg=*/true);
    }
    AttentionConfig a{cfg.mapping_depth, cfg.mapping_heads, cfg.d, cfg.ff, 0.0};
    stack.init(a, rng, /*trainable=*/true);
  }

  // visual tokens (n_v, d_enc) -> V (l_q, d)
  Tensor<T> forward(const Tensor<T>& visual) const {
    Tensor<T> x = in_proj.forward(visual);
    if (mode == Ablation::no_mapping) return x;
    Tensor<T> seq = concat(x, queries, 0);
    Tensor<T> out = stack.forward(seq, /*causal=*/false);
    return slice(out, 0, visual.dim(0), l_q);
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    if (mode != Ablation::no_mapping) out.emplace_back(prefix + ".queries", &queries);
    in_proj.collect(out, prefix + ".in_proj");
    if (mode != Ablation::no_mapping) stack.collect(out, prefix + ".stack");
  }
};

// Eq-3-style fusion: full (unmasked) self-attention over [context ; V] with
// learned positions, projected into the LM embedding space.
template <typename T>
struct FusionNetwork {
  Ablation mode = Ablation::none;
  int n_in = 20;
  Tensor<T> pos_emb;   // (n_in, d)
  SelfAttentionStack<T> stack;
  Linear<T> out_proj;  // d -> d_lm

  void init(const PipelineConfig& cfg, Rng& rng) {
    mode = cfg.ablation;
    n_in = cfg.prefix_len();
    out_proj.init(cfg.d, cfg.d_lm, rng, /*trainable=*/true);
    if (mode == Ablation::no_fusion) return;  // identity + projection
    pos_emb = Tensor<T>::randn({n_in, cfg.d}, rng, T(0.01), /*rg=*/true);
    AttentionConfig a{cfg.fusion_depth, cfg.fusion_heads, cfg.d, cfg.ff, 0.0};
    stack.init(a, rng, /*trainable=*/true);
  }

  // (n_in, d) -> prefix (n_in, d_lm)
  Tensor<T> forward(const Tensor<T>& seq) const {
    if (seq.dim(0) != n_in)
      throw std::invalid_argument("fusion: unexpected input length");
    if (mode == Ablation::no_fusion) return out_proj.forward(seq);
    Tensor<T> h = add(seq, pos_emb);
    h = stack.forward(h, /*causal=*/false);
    return out_proj.forward(h);
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    if (mode != Ablation::no_fusion) {
      out.emplace_back(prefix + ".pos_emb", &pos_emb);
      stack.collect(out, prefix + ".stack");
    }
    out_proj.collect(out, prefix + ".out_proj");
  }
};

// Full bundle: frozen backbones plus the trainable prefix machinery.
template <typename T>
struct UaptModel {
  PipelineConfig cfg;
  ImageEncoder<T> image_enc;
  ContextEncoder<T> context_enc;
  FrozenLM<T> lm;
  MappingNetwork<T> mapping;
  ContextAdapter<T> adapter;
  FusionNetwork<T> fusion;

  void init(const PipelineConfig& c, FrozenLM<T> frozen_lm, uint64_t seed) {
    c.validate();
    if (frozen_lm.cfg.d != c.d_lm)
      throw std::invalid_argument("pipeline: LM dim != d_lm");
    cfg = c;
    lm = std::move(frozen_lm);
    Rng master(seed);
    image_enc.init(cfg.visual_tokens, cfg.d_enc, master.next_u64());
    context_enc.init(static_cast<int>(lm.cfg.vocab), cfg.d_enc, master.next_u64());
    Rng init_rng = master.fork(3);
    mapping.init(cfg, init_rng);
    if (cfg.ablation != Ablation::no_context)
      adapter.init(cfg.d_enc, cfg.l_u, cfg.d, init_rng);
    fusion.init(cfg, init_rng);
  }

  // image features + pooled user vector -> prefix P (prefix_len, d_lm)
  Tensor<T> make_prefix(const std::vector<T>& image_feats,
                        const Tensor<T>& pooled_ctx) const {
    Tensor<T> v = mapping.forward(image_enc.encode(image_feats));
    if (cfg.ablation == Ablation::no_context) return fusion.forward(v);
    Tensor<T> ctx = adapter.forward(pooled_ctx);
    return fusion.forward(concat(ctx, v, 0));
  }

  // every pipeline-owned parameter, trainable or not (checkpoint contents)
  void collect_model_params(ParamSet<T>& out) {
    mapping.collect(out, "mapping");
    if (cfg.ablation != Ablation::no_context)
      adapter.collect(out, "context_adapter");
    fusion.collect(out, "fusion");
  }

  void collect_backbone_params(ParamSet<T>& out) {
    image_enc.collect(out, "image_enc");
    context_enc.collect(out, "context_enc");
    lm.collect(out, "lm");
  }

  // theta: exactly the parameters the optimizer updates
  ParamSet<T> trainable_params() {
    ParamSet<T> all, theta;
    collect_model_params(all);
    for (auto& [name, p] : all)
      if (p->requires_grad) theta.emplace_back(name, p);
    return theta;
  }
};

// ---------------------------------------------------------------------------
// data plumbing

template <typename T>
struct TrainSample {
  std::string user_id;
  std::vector<T> image;
  std::vector<int> caption;  // content tokens, truncated to L-1 (EOS implied)
};

template <typename T>
std::vector<TrainSample<T>> prepare_samples(const Dataset& data, Split split,
                                            const Tokenizer& tok, int max_caption_len) {
  std::vector<TrainSample<T>> out;
  for (const Record& r : data) {
    if (r.split != split) continue;
    TrainSample<T> s;
    s.user_id = r.user_id;
    s.image.assign(r.image.begin(), r.image.end());
    s.caption = tok.encode(r.caption);
    if (s.caption.empty())
      throw std::invalid_argument("pipeline: empty caption in split");
    const size_t keep = static_cast<size_t>(max_caption_len - 1);
    if (s.caption.size() > keep) s.caption.resize(keep);
    out.push_back(std::move(s));
  }
  return out;
}

// frozen pooled context vector per user, built from train-split posts only
template <typename T>
std::map<std::string, Tensor<T>> build_user_pools(const Dataset& data,
                                                  const Tokenizer& tok,
                                                  const ContextEncoder<T>& enc,
                                                  int keyword_k) {
  auto docs = user_documents(data, Split::train);
  if (docs.empty()) throw std::invalid_argument("pipeline: no train-split posts");
  std::vector<std::vector<std::string>> doc_list;
  doc_list.reserve(docs.size());
  for (const auto& [user, doc] : docs) doc_list.push_back(doc);
  TfIdfModel model = fit_tfidf(doc_list);

  NoGradGuard ng;
  std::map<std::string, Tensor<T>> pools;
  for (const auto& [user, doc] : docs) {
    auto kws = user_keywords(doc, model, keyword_k);
    std::vector<int> ids;
    ids.reserve(kws.size());
    for (const Keyword& kw : kws) ids.push_back(tok.id_of(kw.word));
    pools.emplace(user, enc.encode(ids));
  }
  return pools;
}

// keyword dump for the CLI: user -> ranked (word, weight) list
std::map<std::string, std::vector<Keyword>> user_keyword_table(const Dataset& data,
                                                               int keyword_k);

// ---------------------------------------------------------------------------
// Eq-1 loss

// Teacher-forced NLL over a batch: input [P ; BOS, c_1..c_k], targets
// [c_1..c_k, EOS]; prefix rows masked out; per-sample token mean then batch
// mean realized as a single weighted cross entropy (weights sum to 1).
template <typename T>
Tensor<T> caption_nll(const UaptModel<T>& model,
                      const std::vector<TrainSample<T>>& samples,
                      const std::vector<size_t>& batch,
                      const std::map<std::string, Tensor<T>>& pools) {
  if (batch.empty()) throw std::invalid_argument("caption_nll: empty batch");
  static const Tensor<T> kNoPool;  // unused under no_context
  std::vector<Tensor<T>> logit_parts;
  std::vector<int> targets;
  std::vector<T> weights;
  logit_parts.reserve(batch.size());
  for (size_t idx : batch) {
    const TrainSample<T>& s = samples[idx];
    const Tensor<T>* pooled = &kNoPool;
    if (model.cfg.ablation != Ablation::no_context) {
      auto it = pools.find(s.user_id);
      if (it == pools.end())
        throw std::invalid_argument("caption_nll: no context pool for user " +
                                    s.user_id);
      pooled = &it->second;
    }
    Tensor<T> prefix = model.make_prefix(s.image, *pooled);
    std::vector<int> input;
    input.reserve(s.caption.size() + 1);
    input.push_back(kBosId);
    input.insert(input.end(), s.caption.begin(), s.caption.end());
    logit_parts.push_back(model.lm.lm_forward(prefix, input));

    const int p = prefix.dim(0);
    const int k = static_cast<int>(s.caption.size());
    const T w = T(1) / (static_cast<T>(k + 1) * static_cast<T>(batch.size()));
    for (int i = 0; i < p; ++i) {  // prefix rows predict BOS, which is given
      targets.push_back(kPadId);
      weights.push_back(T(0));
    }
    for (int i = 0; i < k; ++i) {  // row p+i predicts c_{i+1}
      targets.push_back(s.caption[static_cast<size_t>(i)]);
      weights.push_back(w);
    }
    targets.push_back(kEosId);
    weights.push_back(w);
  }
  Tensor<T> logits =
      logit_parts.size() == 1 ? logit_parts[0] : concat(logit_parts, 0);
  return cross_entropy(logits, targets, weights);
}

// ---------------------------------------------------------------------------
// training loop

struct TrainOptions {
  OptimizerConfig opt;  // total_steps == 0 derives epochs * steps_per_epoch
  uint64_t seed = 0;
};

struct CurvePoint {
  long step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  double initial_loss = 0.0;  // full train split, before the first step
  double final_loss = 0.0;    // full train split, after the last step
  long steps = 0;
};

template <typename T>
TrainResult train(UaptModel<T>& model, const std::vector<TrainSample<T>>& samples,
                  const std::map<std::string, Tensor<T>>& pools,
                  const TrainOptions& options) {
  if (samples.empty()) throw std::invalid_argument("train: no samples");
  OptimizerConfig ocfg = options.opt;
  ocfg.validate();

  const size_t n = samples.size();
  const size_t batch_size = std::min<size_t>(static_cast<size_t>(ocfg.batch_size), n);
  const long steps_per_epoch = std::max<long>(1, static_cast<long>(n / batch_size));
  if (ocfg.total_steps == 0) ocfg.total_steps = steps_per_epoch * ocfg.epochs;
  ocfg.warmup_steps = std::min(ocfg.warmup_steps, std::max<long>(1, ocfg.total_steps - 1));

  std::vector<size_t> all_idx(n);
  for (size_t i = 0; i < n; ++i) all_idx[i] = i;

  auto full_loss = [&]() {
    NoGradGuard ng;
    return static_cast<double>(caption_nll(model, samples, all_idx, pools).scalar());
  };

  TrainResult result;
  result.initial_loss = full_loss();
  result.steps = ocfg.total_steps;

  if (ocfg.total_steps > 0) {
    ParamSet<T> theta = model.trainable_params();
    AdamW<T> adamw(ocfg, theta);
    Rng shuffle_rng = Rng(options.seed).fork(7);

    std::vector<size_t> order = all_idx;
    shuffle_rng.shuffle(order);
    size_t cursor = 0;
    for (long step = 1; step <= ocfg.total_steps; ++step) {
      std::vector<size_t> batch;
      batch.reserve(batch_size);
      for (size_t b = 0; b < batch_size; ++b) {
        if (cursor == order.size()) {
          shuffle_rng.shuffle(order);
          cursor = 0;
        }
        batch.push_back(order[cursor++]);
      }
      const double lr = lr_at(step, ocfg);
      try {
        adamw.zero_grad();
        Tensor<T> loss = caption_nll(model, samples, batch, pools);
        backward(loss);
        adamw.step(lr);
        result.curve.push_back({step, lr, static_cast<double>(loss.scalar())});
      } catch (const NonFiniteError& e) {
        throw DivergenceError(step, std::string("train: ") + e.what());
      }
    }
  }

  result.final_loss = full_loss();
  return result;
}

void save_loss_curve(const std::string& path, const std::vector<CurvePoint>& curve);

}  // namespace uapt

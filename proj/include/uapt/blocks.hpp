#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uapt/rng.hpp"
#include "uapt/tensor.hpp"

// Transformer building blocks (pre-norm residual, multi-head self-attention,
// gelu MLP), the AdamW optimizer, and the warmup-cosine learning-rate
// schedule. Everything is templated on the scalar type so the same code runs
// in float (training) and double (finite-difference verification).

namespace uapt {

struct AttentionConfig {
  int depth = 1;
  int heads = 1;
  int model_dim = 8;
  int ff_dim = 32;
  double dropout_rate = 0.0;

  void validate() const {
    if (depth < 1) throw std::invalid_argument("attention: depth must be >= 1");
    if (heads < 1 || model_dim % heads != 0)
      throw std::invalid_argument("attention: model_dim must divide by heads");
    if (ff_dim < 1) throw std::invalid_argument("attention: ff_dim must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("attention: dropout_rate must be in [0,1)");
  }
};

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.96;
  double weight_decay = 0.005;
  double eps = 1e-8;
  double peak_lr = 6e-4;
  long warmup_steps = 6000;
  long total_steps = 0;  // 0 = derived from epochs * steps per epoch
  int batch_size = 50;
  int epochs = 6;

  void validate() const {
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
      throw std::invalid_argument("optimizer: betas must be in (0,1)");
    if (weight_decay < 0.0) throw std::invalid_argument("optimizer: negative weight_decay");
    if (eps <= 0.0) throw std::invalid_argument("optimizer: eps must be > 0");
    if (peak_lr <= 0.0) throw std::invalid_argument("optimizer: peak_lr must be > 0");
    if (batch_size < 1 || epochs < 0)
      throw std::invalid_argument("optimizer: bad batch_size/epochs");
    if (total_steps > 0 && warmup_steps >= total_steps)
      throw std::invalid_argument("optimizer: warmup_steps must be < total_steps");
  }
};

// Linear warmup to peak_lr, then cosine decay to zero at total_steps.
inline double lr_at(long step, const OptimizerConfig& cfg) {
  if (step < 1 || step > cfg.total_steps)
    throw std::invalid_argument("lr_at: step out of range");
  if (step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const double t = static_cast<double>(step - cfg.warmup_steps) /
                   static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

// Named references to parameter tensors; the unit of checkpointing,
// optimization and digesting.
template <typename T>
using ParamSet = std::vector<std::pair<std::string, Tensor<T>*>>;

namespace nninit {

template <typename T>
Tensor<T> linear_weight(int in, int out, Rng& rng, bool trainable) {
  return Tensor<T>::randn({in, out}, rng, T(0.02), trainable);
}

template <typename T>
Tensor<T> zeros_vec(int n, bool trainable) {
  return Tensor<T>::zeros({n}, trainable);
}

template <typename T>
Tensor<T> ones_vec(int n, bool trainable) {
  return Tensor<T>::full({n}, T(1), trainable);
}

}  // namespace nninit

// One affine map y = x W + b (bias optional).
template <typename T>
struct Linear {
  Tensor<T> w, b;
  bool has_bias = true;

  void init(int in, int out, Rng& rng, bool trainable, bool with_bias = true) {
    has_bias = with_bias;
    w = nninit::linear_weight<T>(in, out, rng, trainable);
    if (has_bias) b = nninit::zeros_vec<T>(out, trainable);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = matmul(x, w);
    return has_bias ? bias_add(y, b) : y;
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w", &w);
    if (has_bias) out.emplace_back(prefix + ".b", &b);
  }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gain, bias;

  void init(int d, bool trainable) {
    gain = nninit::ones_vec<T>(d, trainable);
    bias = nninit::zeros_vec<T>(d, trainable);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return layer_norm(x, gain, bias, T(1e-5));
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".gain", &gain);
    out.emplace_back(prefix + ".bias", &bias);
  }
};

// One pre-norm block: x + attn(ln1(x)), then x + mlp(ln2(x)).
template <typename T>
struct TransformerBlock {
  LayerNormParams<T> ln1, ln2;
  Linear<T> wq, wk, wv, wo;  // attention projections
  Linear<T> fc1, fc2;        // gelu MLP
  int heads = 1;

  void init(const AttentionConfig& cfg, Rng& rng, bool trainable) {
    heads = cfg.heads;
    ln1.init(cfg.model_dim, trainable);
    ln2.init(cfg.model_dim, trainable);
    wq.init(cfg.model_dim, cfg.model_dim, rng, trainable);
    // no key bias: a constant added to every key shifts each softmax row
    // uniformly, so such a bias could never affect the output
    wk.init(cfg.model_dim, cfg.model_dim, rng, trainable, /*with_bias=*/false);
    wv.init(cfg.model_dim, cfg.model_dim, rng, trainable);
    wo.init(cfg.model_dim, cfg.model_dim, rng, trainable);
    fc1.init(cfg.model_dim, cfg.ff_dim, rng, trainable);
    fc2.init(cfg.ff_dim, cfg.model_dim, rng, trainable);
  }

  Tensor<T> attention(const Tensor<T>& x, bool causal) const {
    const int d = x.dim(1);
    const int dh = d / heads;
    const T inv_sqrt_dh = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    Tensor<T> q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
    std::vector<Tensor<T>> ctx;
    ctx.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor<T> qh = slice(q, 1, h * dh, dh);
      Tensor<T> kh = slice(k, 1, h * dh, dh);
      Tensor<T> vh = slice(v, 1, h * dh, dh);
      Tensor<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
      Tensor<T> att = causal ? causal_softmax(scores) : softmax(scores);
      ctx.push_back(matmul(att, vh));
    }
    Tensor<T> merged = heads == 1 ? ctx[0] : concat(ctx, 1);
    return wo.forward(merged);
  }

  Tensor<T> forward(const Tensor<T>& x, bool causal, T dropout_rate,
                    Rng* drop_rng) const {
    Tensor<T> a = attention(ln1.forward(x), causal);
    if (drop_rng && dropout_rate > T(0)) a = dropout(a, dropout_rate, *drop_rng);
    Tensor<T> h = add(x, a);
    Tensor<T> m = fc2.forward(gelu(fc1.forward(ln2.forward(h))));
    if (drop_rng && dropout_rate > T(0)) m = dropout(m, dropout_rate, *drop_rng);
    return add(h, m);
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    ln1.collect(out, prefix + ".ln1");
    ln2.collect(out, prefix + ".ln2");
    wq.collect(out, prefix + ".wq");
    wk.collect(out, prefix + ".wk");
    wv.collect(out, prefix + ".wv");
    wo.collect(out, prefix + ".wo");
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
  }
};

// Stack of pre-norm blocks with a final layer norm.
template <typename T>
struct SelfAttentionStack {
  AttentionConfig cfg;
  std::vector<TransformerBlock<T>> blocks;
  LayerNormParams<T> final_ln;

  void init(const AttentionConfig& c, Rng& rng, bool trainable) {
    c.validate();
    cfg = c;
    blocks.assign(static_cast<size_t>(cfg.depth), {});
    for (auto& b : blocks) b.init(cfg, rng, trainable);
    final_ln.init(cfg.model_dim, trainable);
  }

  // x: (n, model_dim). Pass drop_rng only in training mode.
  Tensor<T> forward(const Tensor<T>& x, bool causal = false,
                    Rng* drop_rng = nullptr) const {
    if (x.rank() != 2 || x.dim(1) != cfg.model_dim)
      throw std::invalid_argument("self_attention_stack: input dim mismatch");
    Tensor<T> h = x;
    for (const auto& b : blocks)
      h = b.forward(h, causal, static_cast<T>(cfg.dropout_rate), drop_rng);
    return final_ln.forward(h);
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(out, prefix + ".l" + std::to_string(i));
    final_ln.collect(out, prefix + ".final_ln");
  }
};

// AdamW with decoupled weight decay and bias-corrected moments. Parameter
// order is fixed at construction; updates are sequential and bit-deterministic.
template <typename T>
class AdamW {
 public:
  AdamW(OptimizerConfig cfg, ParamSet<T> params)
      : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    slots_.reserve(params_.size());
    for (auto& [name, p] : params_) {
      if (!p->requires_grad)
        throw std::invalid_argument("adamw: frozen tensor in optimizer set: " + name);
      p->ensure_grad();
      slots_.push_back(Slot{std::vector<T>(p->numel(), T(0)),
                            std::vector<T>(p->numel(), T(0))});
    }
  }

  // One update over all parameters at learning rate `lr`.
  void step(double lr) {
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T eps = static_cast<T>(cfg_.eps);
    const T wd = static_cast<T>(cfg_.weight_decay);
    const T lrt = static_cast<T>(lr);
    for (size_t s = 0; s < slots_.size(); ++s) {
      Tensor<T>& p = *params_[s].second;
      const std::vector<T>& g = *p.grad;
      std::vector<T>& m = slots_[s].m;
      std::vector<T>& v = slots_[s].v;
      T* pv = p.values->data();
      for (size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i]))
          throw NonFiniteError("adamw: non-finite gradient in " + params_[s].first);
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = m[i] / c1;
        const T vhat = v[i] / c2;
        pv[i] -= lrt * (mhat / (std::sqrt(vhat) + eps) + wd * pv[i]);
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  long steps_taken() const { return t_; }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  OptimizerConfig cfg_;
  ParamSet<T> params_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

}  // namespace uapt

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uapt/tensor.hpp"

// Central finite-difference verification of the autodiff engine, in double
// precision. Used by the unit tests, the acceptance suite and the `gradcheck`
// CLI subcommand.

namespace uapt {

struct GradCheckResult {
  std::string name;
  size_t n_checked = 0;
  double max_rel_err = 0.0;
  bool ok = false;
};

// Compares analytic gradients of `loss_fn` w.r.t. `params` against central
// differences (f(x+h) - f(x-h)) / 2h. `loss_fn` must rebuild the graph from
// the current parameter values on every call (any internal randomness has to
// be reseeded inside so all evaluations see the same function).
//
// `denom_floor` caps how small the relative-error denominator may get: for
// elements with |g_fd| below it the comparison is effectively absolute, at
// tol * denom_floor. Central differences carry a few ulps of evaluation
// noise amplified by 1/(2h) (~1e-10 for |f|~1 at h=1e-5), so partials below
// noise/tol cannot be certified in relative terms by any choice of h; deep
// end-to-end graphs always contain a few such elements and need a floor at
// the FD resolution limit (~1e-6) instead of the default.
inline GradCheckResult grad_check(const std::string& name,
                                  const std::vector<TensorD*>& params,
                                  const std::function<TensorD()>& loss_fn,
                                  double h = 1e-5, double tol = 1e-4,
                                  double denom_floor = 1e-8) {
  GradCheckResult r;
  r.name = name;

  for (auto* p : params) {
    p->requires_grad = true;
    p->ensure_grad();
    p->zero_grad();
  }
  TensorD loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(*p->grad);

  NoGradGuard ng;  // finite-difference evaluations stay off the tape
  for (size_t pi = 0; pi < params.size(); ++pi) {
    TensorD& p = *params[pi];
    for (size_t i = 0; i < p.numel(); ++i) {
      const double orig = (*p.values)[i];
      (*p.values)[i] = orig + h;
      const double up = loss_fn().scalar();
      (*p.values)[i] = orig - h;
      const double dn = loss_fn().scalar();
      (*p.values)[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double rel =
          std::abs(analytic[pi][i] - fd) / std::max(denom_floor, std::abs(fd));
      ++r.n_checked;
      if (rel > r.max_rel_err) r.max_rel_err = rel;
    }
  }
  r.ok = r.max_rel_err < tol;
  return r;
}

namespace detail {

// Sum of elementwise product with a fixed random weight tensor: turns any
// op output into a scalar loss with distinct per-element cotangents.
inline TensorD weighted_sum(const TensorD& t, uint64_t seed) {
  Rng rng(seed);
  TensorD w = TensorD::randn(t.dims, rng, 1.0);
  return sum(mul(t, w));
}

inline TensorD rand_tensor(std::vector<int> dims, uint64_t seed, bool rg = true) {
  Rng rng(seed);
  return TensorD::randn(std::move(dims), rng, 1.0, rg);
}

}  // namespace detail

// One finite-difference check per op kind in the engine.
inline std::vector<GradCheckResult> op_grad_checks() {
  using detail::rand_tensor;
  using detail::weighted_sum;
  std::vector<GradCheckResult> out;

  {
    TensorD a = rand_tensor({3, 4}, 101), b = rand_tensor({4, 2}, 102);
    out.push_back(grad_check("matmul", {&a, &b},
                             [&] { return weighted_sum(matmul(a, b), 1); }));
  }
  {
    TensorD a = rand_tensor({3, 4}, 103), b = rand_tensor({3, 4}, 104);
    out.push_back(grad_check("add", {&a, &b},
                             [&] { return weighted_sum(add(a, b), 2); }));
  }
  {
    TensorD x = rand_tensor({3, 4}, 105), b = rand_tensor({4}, 106);
    out.push_back(grad_check("bias_add", {&x, &b},
                             [&] { return weighted_sum(bias_add(x, b), 3); }));
  }
  {
    TensorD a = rand_tensor({3, 4}, 107), b = rand_tensor({3, 4}, 108);
    out.push_back(grad_check("mul", {&a, &b},
                             [&] { return weighted_sum(mul(a, b), 4); }));
  }
  {
    TensorD a = rand_tensor({3, 4}, 109);
    out.push_back(grad_check("scale", {&a},
                             [&] { return weighted_sum(scale(a, 1.7), 5); }));
  }
  {
    TensorD a = rand_tensor({2, 3}, 110), b = rand_tensor({4, 3}, 111);
    out.push_back(grad_check("concat_axis0", {&a, &b},
                             [&] { return weighted_sum(concat(a, b, 0), 6); }));
  }
  {
    TensorD a = rand_tensor({3, 2}, 112), b = rand_tensor({3, 5}, 113);
    out.push_back(grad_check("concat_axis1", {&a, &b},
                             [&] { return weighted_sum(concat(a, b, 1), 7); }));
  }
  {
    TensorD x = rand_tensor({5, 4}, 114);
    out.push_back(grad_check("slice_axis0", {&x},
                             [&] { return weighted_sum(slice(x, 0, 1, 3), 8); }));
    out.push_back(grad_check("slice_axis1", {&x},
                             [&] { return weighted_sum(slice(x, 1, 2, 2), 9); }));
  }
  {
    TensorD x = rand_tensor({3, 5}, 115);
    out.push_back(grad_check("transpose", {&x},
                             [&] { return weighted_sum(transpose(x), 10); }));
    out.push_back(grad_check("reshape", {&x}, [&] {
      return weighted_sum(reshape(x, {5, 3}), 23);
    }));
  }
  {
    TensorD x = rand_tensor({4, 6}, 116);
    out.push_back(grad_check("softmax", {&x},
                             [&] { return weighted_sum(softmax(x), 11); }));
  }
  {
    TensorD x = rand_tensor({6}, 117);
    out.push_back(grad_check("softmax_rank1", {&x},
                             [&] { return weighted_sum(softmax(x), 12); }));
  }
  {
    TensorD x = rand_tensor({4, 4}, 118);
    out.push_back(grad_check("causal_softmax", {&x},
                             [&] { return weighted_sum(causal_softmax(x), 13); }));
  }
  {
    TensorD x = rand_tensor({3, 7}, 119);  // rectangular: n_k > n_q
    out.push_back(grad_check("causal_softmax_rect", {&x},
                             [&] { return weighted_sum(causal_softmax(x), 14); }));
  }
  {
    TensorD x = rand_tensor({3, 5}, 120);
    TensorD g = rand_tensor({5}, 121), b = rand_tensor({5}, 122);
    out.push_back(grad_check("layer_norm", {&x, &g, &b}, [&] {
      return weighted_sum(layer_norm(x, g, b, 1e-5), 15);
    }));
  }
  {
    TensorD x = rand_tensor({3, 4}, 123);
    out.push_back(grad_check("gelu", {&x},
                             [&] { return weighted_sum(gelu(x), 16); }));
  }
  {
    TensorD table = rand_tensor({6, 4}, 124);
    std::vector<int> ids = {1, 4, 1, 0};  // repeated id exercises accumulation
    out.push_back(grad_check("embedding_lookup", {&table}, [&] {
      return weighted_sum(embedding_lookup(table, ids), 17);
    }));
  }
  {
    TensorD logits = rand_tensor({4, 5}, 125);
    std::vector<int> targets = {2, 0, 4, 1};
    std::vector<double> mask = {1.0, 0.0, 1.0, 0.5};  // one fully masked row
    out.push_back(grad_check("cross_entropy", {&logits}, [&] {
      return cross_entropy(logits, targets, mask);
    }));
  }
  {
    TensorD x = rand_tensor({3, 4}, 126);
    out.push_back(grad_check("sum", {&x}, [&] { return sum(x); }));
  }
  {
    TensorD x = rand_tensor({4, 4}, 127);
    out.push_back(grad_check("dropout", {&x}, [&] {
      Rng rng(9001);  // reseeded per call: identical mask on every evaluation
      return weighted_sum(dropout(x, 0.5, rng), 18);
    }));
  }
  return out;
}

// Random 3-layer pre-norm block (one-head attention + gelu MLP), d=8, seq=4,
// built from raw ops only. Checks that gradients survive a deep composition.
inline GradCheckResult composed_block_check() {
  constexpr int d = 8, seq = 4, hidden = 16, layers = 3;
  Rng rng(777);
  TensorD x0 = TensorD::randn({seq, d}, rng, 1.0, true);

  struct Layer {
    TensorD ln1_g, ln1_b, wq, wk, wv, wo;
    TensorD ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::vector<Layer> ls;
  ls.reserve(layers);  // params holds pointers into ls; no reallocation allowed
  std::vector<TensorD*> params = {&x0};
  for (int l = 0; l < layers; ++l) {
    Layer lay{TensorD::full({d}, 1.0, true),  TensorD::zeros({d}, true),
              TensorD::randn({d, d}, rng, 0.4, true),
              TensorD::randn({d, d}, rng, 0.4, true),
              TensorD::randn({d, d}, rng, 0.4, true),
              TensorD::randn({d, d}, rng, 0.4, true),
              TensorD::full({d}, 1.0, true),  TensorD::zeros({d}, true),
              TensorD::randn({d, hidden}, rng, 0.4, true),
              TensorD::zeros({hidden}, true),
              TensorD::randn({hidden, d}, rng, 0.4, true),
              TensorD::zeros({d}, true)};
    ls.push_back(std::move(lay));
    Layer& r = ls.back();
    for (TensorD* p : {&r.ln1_g, &r.ln1_b, &r.wq, &r.wk, &r.wv, &r.wo,
                       &r.ln2_g, &r.ln2_b, &r.w1, &r.b1, &r.w2, &r.b2})
      params.push_back(p);
  }

  auto forward = [&]() -> TensorD {
    TensorD x = x0;
    for (const Layer& l : ls) {
      TensorD h = layer_norm(x, l.ln1_g, l.ln1_b, 1e-5);
      TensorD q = matmul(h, l.wq), k = matmul(h, l.wk), v = matmul(h, l.wv);
      TensorD att = causal_softmax(scale(matmul(q, transpose(k)),
                                         1.0 / std::sqrt(double(d))));
      x = add(x, matmul(matmul(att, v), l.wo));
      TensorD m = layer_norm(x, l.ln2_g, l.ln2_b, 1e-5);
      m = matmul(gelu(bias_add(matmul(m, l.w1), l.b1)), l.w2);
      x = add(x, bias_add(m, l.b2));
    }
    return detail::weighted_sum(x, 31);
  };
  return grad_check("composed_block_d8", params, forward);
}

}  // namespace uapt

#pragma once

#include <utility>
#include <vector>

#include "uapt/gradcheck.hpp"
#include "uapt/pipeline.hpp"

// The gradient verification suite behind the `gradcheck` command: every
// primitive op, a composed attention block, and an end-to-end micro model,
// each against central finite differences in double precision.

namespace uapt {

// Micro pipeline (d=8, depth 1, three samples over two users) checked
// end-to-end through prefix construction and the caption loss. ~1.5k
// partials span several decades; a handful always land below the FD
// resolution limit (noise ~1e-10 at h=1e-5, so |g| < 1e-6 cannot be
// certified in relative terms). The raised denominator floor checks those
// in absolute terms at 1e-10 while everything resolvable stays at 1e-4
// relative.
inline GradCheckResult micro_pipeline_check() {
  PipelineConfig cfg;
  cfg.d = 8;
  cfg.d_lm = 8;
  cfg.d_enc = 8;
  cfg.l_q = 2;
  cfg.l_u = 2;
  cfg.visual_tokens = 2;
  cfg.mapping_depth = 1;
  cfg.mapping_heads = 2;
  cfg.fusion_depth = 1;
  cfg.fusion_heads = 2;
  cfg.ff = 16;
  cfg.max_caption_len = 6;

  LmConfig lmc;
  lmc.vocab = 12;
  lmc.d = 8;
  lmc.depth = 1;
  lmc.heads = 2;
  lmc.ff = 16;
  lmc.max_seq = 12;
  FrozenLM<double> lm;
  lm.init(lmc, 77, /*trainable=*/false);

  UaptModel<double> model;
  model.init(cfg, std::move(lm), 23);

  // two users so the check covers per-user context routing
  std::vector<TrainSample<double>> samples(3);
  const char* uids[] = {"u", "v", "u"};
  const int lens[] = {3, 4, 3};
  Rng rng(34);
  for (size_t k = 0; k < samples.size(); ++k) {
    auto& s = samples[k];
    s.user_id = uids[k];
    s.image.resize(128);
    for (auto& v : s.image) v = rng.next_normal();
    s.caption.resize(lens[k]);
    for (auto& t : s.caption) t = 4 + static_cast<int>(rng.next_below(8));
  }
  std::map<std::string, Tensor<double>> pools;
  pools.emplace("u", TensorD::randn({1, 8}, rng, 1.0));
  pools.emplace("v", TensorD::randn({1, 8}, rng, 1.0));

  ParamSet<double> theta = model.trainable_params();
  // move parameters off their tiny init so gradients are well scaled
  for (auto& [name, p] : theta)
    for (auto& v : *p->values) v += rng.next_normal(0.0, 0.3);

  std::vector<TensorD*> ptrs;
  for (auto& [name, p] : theta) ptrs.push_back(p);
  return grad_check(
      "uapt_micro", ptrs,
      [&] { return caption_nll(model, samples, {0, 1, 2}, pools); }, 1e-5,
      1e-4, /*denom_floor=*/1e-6);
}

// ops + composed block + micro pipeline, in that order
inline std::vector<GradCheckResult> run_verification() {
  std::vector<GradCheckResult> results = op_grad_checks();
  results.push_back(composed_block_check());
  results.push_back(micro_pipeline_check());
  return results;
}

}  // namespace uapt

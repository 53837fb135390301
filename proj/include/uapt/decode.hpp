#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "uapt/backbones.hpp"

// Deterministic beam-search / greedy caption decoding on top of the frozen
// language model. Scores are log softmax(logits / temperature); there is no
// sampling anywhere. PAD and BOS are never candidate tokens; EOS finishes a
// hypothesis. At each step the top beam_size candidates (finished and
// unfinished compete for the same slots) are kept, ranked by
// score / |tokens|^alpha with ties broken by smaller token id, then earlier
// parent beam index. Selected finished hypotheses are held aside, never
// extended, and compared with the surviving actives at termination. Slot
// competition makes beam_size=1 reduce exactly to greedy decoding: the
// single slot finishes iff EOS is the step argmax, which is greedy's stop
// rule.

namespace uapt {

struct DecodeConfig {
  int beam_size = 3;
  double temperature = 0.8;
  int max_len = 20;
  double alpha = 0.0;  // length-penalty exponent; 0 = pure log-prob sum

  void validate() const;
};

struct Hypothesis {
  std::vector<int> tokens;  // includes the trailing EOS when finished
  double logprob = 0.0;     // sum of per-token log probabilities
  bool finished = false;    // true iff tokens ends with EOS
};

namespace detail {

// Raw next-token logits (full vocabulary row) for a token history that does
// not include BOS. Lets the search core run against hand-built tables.
using StepFn = std::function<std::vector<double>(const std::vector<int>&)>;

std::vector<double> log_softmax_scaled(const std::vector<double>& logits,
                                       double temperature);

Hypothesis beam_search_core(const StepFn& next_logits, int vocab,
                            const DecodeConfig& cfg);
Hypothesis greedy_core(const StepFn& next_logits, int vocab,
                       const DecodeConfig& cfg);

template <typename T>
StepFn lm_step_fn(const Tensor<T>& prefix, const FrozenLM<T>& lm) {
  return [&prefix, &lm](const std::vector<int>& tokens) {
    NoGradGuard ng;
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    ids.push_back(kBosId);
    ids.insert(ids.end(), tokens.begin(), tokens.end());
    const Tensor<T> logits = lm.lm_forward(prefix, ids);
    const int rows = logits.dim(0), vocab = logits.dim(1);
    std::vector<double> row(vocab);
    const size_t base = static_cast<size_t>(rows - 1) * vocab;
    for (int v = 0; v < vocab; ++v)
      row[v] = static_cast<double>((*logits.values)[base + v]);
    return row;
  };
}

template <typename T>
void check_decode_fits(const Tensor<T>& prefix, const FrozenLM<T>& lm,
                       const DecodeConfig& cfg) {
  cfg.validate();
  const int p = prefix.numel() ? prefix.dim(0) : 0;
  if (p + 1 + cfg.max_len > lm.cfg.max_seq)
    throw std::invalid_argument(
        "decode: prefix rows + BOS + max_len exceed the lm max_seq");
}

}  // namespace detail

// Best caption hypothesis for a prefix under beam search. The returned
// token ids never contain PAD or BOS and never exceed max_len entries.
template <typename T>
Hypothesis beam_search(const Tensor<T>& prefix, const FrozenLM<T>& lm,
                       const DecodeConfig& cfg) {
  detail::check_decode_fits(prefix, lm, cfg);
  return detail::beam_search_core(detail::lm_step_fn(prefix, lm),
                                  lm.cfg.vocab, cfg);
}

// Step-wise argmax decoding (beam_size is ignored); stops at EOS or max_len.
template <typename T>
Hypothesis greedy_decode(const Tensor<T>& prefix, const FrozenLM<T>& lm,
                         const DecodeConfig& cfg) {
  detail::check_decode_fits(prefix, lm, cfg);
  return detail::greedy_core(detail::lm_step_fn(prefix, lm), lm.cfg.vocab,
                             cfg);
}

// Content tokens of a hypothesis: the ids fed to the tokenizer, without the
// trailing EOS.
inline std::vector<int> caption_ids(const Hypothesis& h) {
  std::vector<int> out = h.tokens;
  if (h.finished && !out.empty()) out.pop_back();
  return out;
}

}  // namespace uapt

#include "uapt/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uapt {

void DecodeConfig::validate() const {
  if (beam_size < 1)
    throw std::invalid_argument("DecodeConfig: beam_size must be >= 1");
  if (!(temperature > 0.0))
    throw std::invalid_argument("DecodeConfig: temperature must be > 0");
  if (max_len < 1)
    throw std::invalid_argument("DecodeConfig: max_len must be >= 1");
  if (alpha < 0.0)
    throw std::invalid_argument("DecodeConfig: alpha must be >= 0");
}

namespace detail {

std::vector<double> log_softmax_scaled(const std::vector<double>& logits,
                                       double temperature) {
  std::vector<double> s(logits.size());
  for (size_t i = 0; i < s.size(); ++i) s[i] = logits[i] / temperature;
  double m = -std::numeric_limits<double>::infinity();
  for (double x : s) m = std::max(m, x);
  double acc = 0.0;
  for (double x : s) acc += std::exp(x - m);
  const double lse = m + std::log(acc);
  for (double& x : s) x -= lse;
  return s;
}

namespace {

struct Cand {
  Hypothesis hyp;
  double score = 0.0;  // logprob / |tokens|^alpha
  int last = -1;
  int order = 0;  // parent beam index per step; insertion order at the end
};

// "better than": higher normalized score, then smaller token id, then
// earlier beam index / insertion order.
bool better(const Cand& a, const Cand& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.last != b.last) return a.last < b.last;
  return a.order < b.order;
}

double norm_score(double logprob, size_t len, double alpha) {
  return logprob / std::pow(static_cast<double>(len), alpha);
}

void check_vocab(int vocab) {
  if (vocab <= kEosId)
    throw std::invalid_argument("decode: vocabulary lacks an EOS id");
}

std::vector<double> scored_row(const StepFn& next_logits,
                               const std::vector<int>& tokens, int vocab,
                               double temperature) {
  std::vector<double> row = next_logits(tokens);
  if (static_cast<int>(row.size()) != vocab)
    throw std::invalid_argument("decode: logit row width != vocab");
  return log_softmax_scaled(row, temperature);
}

}  // namespace

Hypothesis beam_search_core(const StepFn& next_logits, int vocab,
                            const DecodeConfig& cfg) {
  cfg.validate();
  check_vocab(vocab);

  std::vector<Hypothesis> active{Hypothesis{}};
  std::vector<Cand> held;  // selected finished hypotheses, never extended
  int ins = 0;

  for (int step = 0; step < cfg.max_len && !active.empty(); ++step) {
    std::vector<Cand> pool;
    pool.reserve(active.size() * static_cast<size_t>(vocab));
    for (size_t bi = 0; bi < active.size(); ++bi) {
      const Hypothesis& h = active[bi];
      const std::vector<double> lp =
          scored_row(next_logits, h.tokens, vocab, cfg.temperature);
      for (int v = 0; v < vocab; ++v) {
        if (v == kPadId || v == kBosId) continue;
        Cand c;
        c.hyp.tokens = h.tokens;
        c.hyp.tokens.push_back(v);
        c.hyp.logprob = h.logprob + lp[v];
        c.hyp.finished = (v == kEosId);
        c.score = norm_score(c.hyp.logprob, c.hyp.tokens.size(), cfg.alpha);
        c.last = v;
        c.order = static_cast<int>(bi);
        pool.push_back(std::move(c));
      }
    }
    std::sort(pool.begin(), pool.end(), better);
    if (static_cast<int>(pool.size()) > cfg.beam_size)
      pool.resize(static_cast<size_t>(cfg.beam_size));
    active.clear();
    for (Cand& c : pool) {
      if (c.hyp.finished) {
        c.order = ins++;
        held.push_back(std::move(c));
      } else {
        active.push_back(std::move(c.hyp));
      }
    }
  }

  std::vector<Cand> final_pool = std::move(held);
  for (Hypothesis& h : active) {
    Cand c;
    c.score = norm_score(h.logprob, h.tokens.size(), cfg.alpha);
    c.last = h.tokens.back();
    c.order = ins++;
    c.hyp = std::move(h);
    final_pool.push_back(std::move(c));
  }
  if (final_pool.empty())
    throw std::logic_error("beam_search: no hypotheses produced");
  return std::min_element(final_pool.begin(), final_pool.end(),
                          [](const Cand& a, const Cand& b) {
                            return better(a, b);
                          })
      ->hyp;
}

Hypothesis greedy_core(const StepFn& next_logits, int vocab,
                       const DecodeConfig& cfg) {
  cfg.validate();
  check_vocab(vocab);

  Hypothesis h;
  for (int step = 0; step < cfg.max_len; ++step) {
    const std::vector<double> lp =
        scored_row(next_logits, h.tokens, vocab, cfg.temperature);
    int best = -1;
    for (int v = 0; v < vocab; ++v) {
      if (v == kPadId || v == kBosId) continue;
      if (best < 0 || lp[v] > lp[best]) best = v;
    }
    h.tokens.push_back(best);
    h.logprob += lp[best];
    if (best == kEosId) {
      h.finished = true;
      break;
    }
  }
  return h;
}

}  // namespace detail
}  // namespace uapt

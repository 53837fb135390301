#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uapt/data.hpp"

// Caption evaluation: corpus BLEU-1..4 (clipped n-gram precision, uniform
// weights, brevity penalty, no smoothing), mean ROUGE-L F (beta = 1.2),
// single-reference CIDEr-D (raw counts x ln(N/df), clipped cosine, Gaussian
// length penalty sigma = 6, x10, mean over n = 1..4), and METEOR-lite
// (exact unigram matches only - no stemming or synonym resources, which
// every report records as a deviation flag). Also the corpus statistics
// table: post/user counts plus intra-/inter-user TF-IDF cosine similarity
// of captions.

namespace uapt {

struct EvalPair {
  std::vector<std::string> candidate;
  std::vector<std::string> reference;  // exactly one reference per post
};

// Corpus-level BLEU-n, n in 1..4. Throws on empty pair set, empty
// reference, or n out of range. Returns 0 when any order-k precision is 0.
double bleu(const std::vector<EvalPair>& pairs, int n);

// Mean per-pair ROUGE-L F score; an empty candidate scores 0 for its pair.
double rouge_l(const std::vector<EvalPair>& pairs);

// Mean per-pair CIDEr-D; idf statistics come from the pairs' references
// (one reference document per image).
double cider_d(const std::vector<EvalPair>& pairs);

// Mean per-pair METEOR-lite; a pair with no exact unigram match scores 0.
double meteor_lite(const std::vector<EvalPair>& pairs);

// Exact-match unigram alignment: `matches` maximized first, then `chunks`
// minimized over every maximum matching (exhaustive search; throws
// std::length_error if the search space exceeds ~1M alignments).
struct MeteorAlignment {
  int matches = 0;
  int chunks = 0;
};
MeteorAlignment meteor_alignment(const std::vector<std::string>& candidate,
                                 const std::vector<std::string>& reference);

struct MetricReport {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double meteor_lite = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  size_t n_pairs = 0;
  size_t candidate_tokens = 0;
  size_t reference_tokens = 0;
  bool meteor_exact_match_only = true;  // no stem/synonym resources
};

MetricReport evaluate(const std::vector<EvalPair>& pairs);

std::string metric_report_json(const MetricReport& r, bool pretty = false);
std::string metric_report_csv_header();
std::string metric_report_csv_row(const MetricReport& r);

// ---------------------------------------------------------------------------
// corpus statistics (dataset table: counts + caption similarity)

struct StatsOptions {
  int max_intra_pairs_per_user = 200;  // subsample cap, seeded
  int max_inter_pairs = 20000;
  uint64_t seed = 0;
};

struct CorpusStats {
  size_t posts = 0;
  size_t users = 0;
  double posts_per_user = 0.0;
  double words_per_post = 0.0;
  double intra_class = 0.0;  // mean TF-IDF cosine of same-user caption pairs
  double inter_class = 0.0;  // mean TF-IDF cosine of cross-user caption pairs
  size_t intra_pairs = 0;
  size_t inter_pairs = 0;
};

// Caption-level TF-IDF (one document per caption, tf normalized by length,
// idf = ln(N/df)); pair sets are enumerated exhaustively when they fit the
// caps and subsampled with the seeded generator otherwise. Users with fewer
// than two captions are skipped for intra.
CorpusStats corpus_stats(const Dataset& data, const StatsOptions& opts = {});

std::string corpus_stats_json(const CorpusStats& s, bool pretty = false);

}  // namespace uapt

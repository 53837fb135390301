#include "uapt/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "uapt/rng.hpp"
#include "uapt/tokenizer.hpp"
#include "uapt/user_context.hpp"

namespace uapt {

namespace {

using nlohmann::json;

// n-grams are keyed by their tokens joined with a separator that cannot
// appear inside a token (captions are whitespace-tokenized).
constexpr char kSep = '\x1f';

std::unordered_map<std::string, int> ngram_counts(
    const std::vector<std::string>& tokens, int n) {
  std::unordered_map<std::string, int> counts;
  if (n <= 0 || tokens.size() < static_cast<size_t>(n)) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key += kSep;
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

void validate_pairs(const std::vector<EvalPair>& pairs, const char* who) {
  if (pairs.empty())
    throw std::invalid_argument(std::string(who) + ": empty pair set");
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].reference.empty())
      throw std::invalid_argument(std::string(who) + ": pair " +
                                  std::to_string(i) +
                                  " has an empty reference");
  }
}

size_t lcs_length(const std::vector<std::string>& a,
                  const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// TF-IDF weighted n-gram vector for CIDEr-D: raw count x ln(N / df) with
// the document frequency clipped below at 1.
std::map<std::string, double> cider_vector(
    const std::vector<std::string>& tokens, int n, double log_n,
    const std::unordered_map<std::string, int>& df) {
  std::map<std::string, double> vec;
  for (const auto& [key, cnt] : ngram_counts(tokens, n)) {
    auto it = df.find(key);
    double d = it == df.end() ? 1.0 : std::max(1.0, double(it->second));
    vec[key] = double(cnt) * (log_n - std::log(d));
  }
  return vec;
}

double vec_norm(const std::map<std::string, double>& v) {
  double s = 0.0;
  for (const auto& [key, w] : v) {
    (void)key;
    s += w * w;
  }
  return std::sqrt(s);
}

// Positions (0-based) of `word` in `tokens`.
std::vector<int> positions_of(const std::vector<std::string>& tokens,
                              const std::string& word) {
  std::vector<int> pos;
  for (size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == word) pos.push_back(static_cast<int>(i));
  return pos;
}

// All size-k subsets of `pool`, in lexicographic order.
std::vector<std::vector<int>> k_subsets(const std::vector<int>& pool, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void(size_t)> rec = [&](size_t start) {
    if (static_cast<int>(cur.size()) == k) {
      out.push_back(cur);
      return;
    }
    for (size_t i = start; i < pool.size(); ++i) {
      cur.push_back(pool[i]);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

int chunk_count(std::vector<std::pair<int, int>> pairs) {
  std::sort(pairs.begin(), pairs.end());
  int chunks = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    bool adjacent = i > 0 && pairs[i].first == pairs[i - 1].first + 1 &&
                    pairs[i].second == pairs[i - 1].second + 1;
    if (!adjacent) ++chunks;
  }
  return chunks;
}

double meteor_pair(const std::vector<std::string>& cand,
                   const std::vector<std::string>& ref) {
  if (cand.empty()) return 0.0;
  MeteorAlignment a = meteor_alignment(cand, ref);
  if (a.matches == 0) return 0.0;
  double m = a.matches;
  double p = m / double(cand.size());
  double r = m / double(ref.size());
  double f = 10.0 * p * r / (r + 9.0 * p);
  double frag = double(a.chunks) / m;
  double penalty = 0.5 * frag * frag * frag;
  return f * (1.0 - penalty);
}

// One caption-level TF-IDF vector: tf = count / length, weighted by the
// shared idf model. Returns the vector and its Euclidean norm.
std::pair<std::map<std::string, double>, double> caption_vector(
    const std::vector<std::string>& words, const TfIdfModel& model) {
  std::map<std::string, double> vec;
  if (words.empty()) return {vec, 0.0};
  std::map<std::string, int> counts;
  for (const std::string& w : words) ++counts[w];
  double len = double(words.size());
  double sq = 0.0;
  for (const auto& [w, cnt] : counts) {
    double v = (double(cnt) / len) * model.idf(w);
    vec[w] = v;
    sq += v * v;
  }
  return {vec, std::sqrt(sq)};
}

double cosine(const std::pair<std::map<std::string, double>, double>& a,
              const std::pair<std::map<std::string, double>, double>& b) {
  if (a.second == 0.0 || b.second == 0.0) return 0.0;
  const auto& small = a.first.size() <= b.first.size() ? a.first : b.first;
  const auto& big = a.first.size() <= b.first.size() ? b.first : a.first;
  double dot = 0.0;
  for (const auto& [w, v] : small) {
    auto it = big.find(w);
    if (it != big.end()) dot += v * it->second;
  }
  return dot / (a.second * b.second);
}

}  // namespace

double bleu(const std::vector<EvalPair>& pairs, int n) {
  validate_pairs(pairs, "bleu");
  if (n < 1 || n > 4)
    throw std::invalid_argument("bleu: order must be in 1..4, got " +
                                std::to_string(n));
  long long cand_len = 0, ref_len = 0;
  std::vector<long long> num(n, 0), den(n, 0);
  for (const EvalPair& p : pairs) {
    cand_len += static_cast<long long>(p.candidate.size());
    ref_len += static_cast<long long>(p.reference.size());
    for (int k = 1; k <= n; ++k) {
      auto cc = ngram_counts(p.candidate, k);
      auto rc = ngram_counts(p.reference, k);
      for (const auto& [key, cnt] : cc) {
        auto it = rc.find(key);
        int clip = it == rc.end() ? 0 : std::min(cnt, it->second);
        num[k - 1] += clip;
        den[k - 1] += cnt;
      }
    }
  }
  double log_prec = 0.0;
  for (int k = 0; k < n; ++k) {
    if (num[k] == 0 || den[k] == 0) return 0.0;
    log_prec += std::log(double(num[k]) / double(den[k])) / double(n);
  }
  double bp = 1.0;
  if (cand_len == 0) return 0.0;
  if (cand_len < ref_len)
    bp = std::exp(1.0 - double(ref_len) / double(cand_len));
  return bp * std::exp(log_prec);
}

double rouge_l(const std::vector<EvalPair>& pairs) {
  validate_pairs(pairs, "rouge_l");
  constexpr double kBeta = 1.2;
  double total = 0.0;
  for (const EvalPair& p : pairs) {
    if (p.candidate.empty()) continue;  // contributes 0
    double l = double(lcs_length(p.candidate, p.reference));
    if (l == 0.0) continue;
    double prec = l / double(p.candidate.size());
    double rec = l / double(p.reference.size());
    double b2 = kBeta * kBeta;
    total += (1.0 + b2) * prec * rec / (rec + b2 * prec);
  }
  return total / double(pairs.size());
}

double cider_d(const std::vector<EvalPair>& pairs) {
  validate_pairs(pairs, "cider_d");
  double log_n = std::log(double(pairs.size()));
  // Document frequency: number of images (= references) containing each
  // n-gram at least once.
  std::array<std::unordered_map<std::string, int>, 4> df;
  for (const EvalPair& p : pairs) {
    for (int n = 1; n <= 4; ++n) {
      for (const auto& [key, cnt] : ngram_counts(p.reference, n)) {
        (void)cnt;
        ++df[n - 1][key];
      }
    }
  }
  double total = 0.0;
  for (const EvalPair& p : pairs) {
    double delta =
        double(p.candidate.size()) - double(p.reference.size());
    double penalty = std::exp(-delta * delta / 72.0);
    double score = 0.0;
    for (int n = 1; n <= 4; ++n) {
      auto wc = cider_vector(p.candidate, n, log_n, df[n - 1]);
      auto wr = cider_vector(p.reference, n, log_n, df[n - 1]);
      double nc = vec_norm(wc), nr = vec_norm(wr);
      if (nc == 0.0 || nr == 0.0) continue;
      double dot = 0.0;
      for (const auto& [key, w] : wc) {
        auto it = wr.find(key);
        if (it != wr.end()) dot += std::min(w, it->second) * it->second;
      }
      score += dot / (nc * nr) * penalty;
    }
    total += 10.0 * score / 4.0;
  }
  return total / double(pairs.size());
}

MeteorAlignment meteor_alignment(const std::vector<std::string>& candidate,
                                 const std::vector<std::string>& reference) {
  // Count exact unigram matches; any maximum matching realizes exactly
  // min(count_c, count_r) pairs per word, so `matches` is fixed and only
  // `chunks` needs the search.
  std::map<std::string, int> cc, rc;
  for (const std::string& w : candidate) ++cc[w];
  for (const std::string& w : reference) ++rc[w];

  struct WordChoice {
    // Each entry is one way to pair up this word's occurrences.
    std::vector<std::vector<std::pair<int, int>>> pairings;
  };
  std::vector<WordChoice> words;
  int matches = 0;
  double space = 1.0;
  constexpr double kMaxSpace = 1e6;
  for (const auto& [w, c_cnt] : cc) {
    auto it = rc.find(w);
    if (it == rc.end()) continue;
    int k = std::min(c_cnt, it->second);
    matches += k;
    std::vector<int> cpos = positions_of(candidate, w);
    std::vector<int> rpos = positions_of(reference, w);
    // Bound the search space before enumerating anything: this word alone
    // contributes C(|cpos|, k) * P(|rpos|, k) pairings.
    double word_space = 1.0;
    for (int i = 0; i < k; ++i) {
      word_space *= double(cpos.size() - i) / double(i + 1);  // C(nc, k)
      word_space *= double(rpos.size() - i);                  // P(nr, k)
      if (space * word_space > kMaxSpace)
        throw std::length_error(
            "meteor_alignment: alignment search space exceeds 1e6");
    }
    space *= word_space;
    WordChoice choice;
    for (const auto& csel : k_subsets(cpos, k)) {
      for (auto rsel : k_subsets(rpos, k)) {
        // rsel is sorted; walk every permutation of it.
        do {
          std::vector<std::pair<int, int>> pairing(k);
          for (int i = 0; i < k; ++i) pairing[i] = {csel[i], rsel[i]};
          choice.pairings.push_back(std::move(pairing));
        } while (std::next_permutation(rsel.begin(), rsel.end()));
      }
    }
    words.push_back(std::move(choice));
  }
  if (matches == 0) return {0, 0};

  int best = matches + 1;  // upper bound: every pair its own chunk + 1
  std::vector<std::pair<int, int>> assembled;
  std::function<void(size_t)> rec = [&](size_t wi) {
    if (wi == words.size()) {
      best = std::min(best, chunk_count(assembled));
      return;
    }
    for (const auto& pairing : words[wi].pairings) {
      size_t before = assembled.size();
      assembled.insert(assembled.end(), pairing.begin(), pairing.end());
      rec(wi + 1);
      assembled.resize(before);
    }
  };
  rec(0);
  return {matches, best};
}

double meteor_lite(const std::vector<EvalPair>& pairs) {
  validate_pairs(pairs, "meteor_lite");
  double total = 0.0;
  for (const EvalPair& p : pairs) total += meteor_pair(p.candidate, p.reference);
  return total / double(pairs.size());
}

MetricReport evaluate(const std::vector<EvalPair>& pairs) {
  MetricReport r;
  r.bleu1 = bleu(pairs, 1);
  r.bleu2 = bleu(pairs, 2);
  r.bleu3 = bleu(pairs, 3);
  r.bleu4 = bleu(pairs, 4);
  r.meteor_lite = meteor_lite(pairs);
  r.rouge_l = rouge_l(pairs);
  r.cider_d = cider_d(pairs);
  r.n_pairs = pairs.size();
  for (const EvalPair& p : pairs) {
    r.candidate_tokens += p.candidate.size();
    r.reference_tokens += p.reference.size();
  }
  return r;
}

std::string metric_report_json(const MetricReport& r, bool pretty) {
  json j;
  j["bleu1"] = r.bleu1;
  j["bleu2"] = r.bleu2;
  j["bleu3"] = r.bleu3;
  j["bleu4"] = r.bleu4;
  j["meteor_lite"] = r.meteor_lite;
  j["rouge_l"] = r.rouge_l;
  j["cider_d"] = r.cider_d;
  j["n_pairs"] = r.n_pairs;
  j["candidate_tokens"] = r.candidate_tokens;
  j["reference_tokens"] = r.reference_tokens;
  j["meteor_exact_match_only"] = r.meteor_exact_match_only;
  return pretty ? j.dump(2) : j.dump();
}

std::string metric_report_csv_header() {
  return "bleu1,bleu2,bleu3,bleu4,meteor_lite,rouge_l,cider_d,n_pairs,"
         "candidate_tokens,reference_tokens,meteor_exact_match_only";
}

std::string metric_report_csv_row(const MetricReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << r.bleu1 << ',' << r.bleu2 << ',' << r.bleu3 << ',' << r.bleu4 << ','
     << r.meteor_lite << ',' << r.rouge_l << ',' << r.cider_d << ','
     << r.n_pairs << ',' << r.candidate_tokens << ',' << r.reference_tokens
     << ',' << (r.meteor_exact_match_only ? 1 : 0);
  return os.str();
}

// ---------------------------------------------------------------------------
// corpus statistics

CorpusStats corpus_stats(const Dataset& data, const StatsOptions& opts) {
  if (data.empty())
    throw std::invalid_argument("corpus_stats: empty dataset");
  if (opts.max_intra_pairs_per_user < 0 || opts.max_inter_pairs < 0)
    throw std::invalid_argument("corpus_stats: negative pair cap");

  const size_t n = data.size();
  std::vector<std::vector<std::string>> docs(n);
  size_t total_words = 0;
  for (size_t i = 0; i < n; ++i) {
    docs[i] = Tokenizer::normalize(data[i].caption);
    total_words += docs[i].size();
  }
  TfIdfModel model = fit_tfidf(docs);

  std::vector<std::pair<std::map<std::string, double>, double>> vecs(n);
  for (size_t i = 0; i < n; ++i) vecs[i] = caption_vector(docs[i], model);

  std::map<std::string, std::vector<size_t>> groups = user_index(data);

  CorpusStats s;
  s.posts = n;
  s.users = groups.size();
  s.posts_per_user = double(n) / double(groups.size());
  s.words_per_post = double(total_words) / double(n);

  Rng master(opts.seed);
  const size_t intra_cap = static_cast<size_t>(opts.max_intra_pairs_per_user);
  const size_t inter_cap = static_cast<size_t>(opts.max_inter_pairs);

  // Intra-user: all same-user caption pairs, capped per user with a
  // per-user fork so adding users never changes earlier users' samples.
  double intra_sum = 0.0;
  size_t intra_count = 0;
  size_t user_ordinal = 0;
  for (const auto& [uid, idxs] : groups) {
    (void)uid;
    const size_t m = idxs.size();
    if (m >= 2 && intra_cap > 0) {
      const size_t total = m * (m - 1) / 2;
      std::vector<std::pair<size_t, size_t>> all;
      all.reserve(total);
      for (size_t a = 0; a < m; ++a)
        for (size_t b = a + 1; b < m; ++b) all.emplace_back(idxs[a], idxs[b]);
      size_t take = total;
      if (total > intra_cap) {
        Rng rng = master.fork(1000 + user_ordinal);
        for (size_t i = 0; i < intra_cap; ++i) {
          size_t j = i + static_cast<size_t>(rng.next_below(all.size() - i));
          std::swap(all[i], all[j]);
        }
        take = intra_cap;
      }
      for (size_t i = 0; i < take; ++i) {
        intra_sum += cosine(vecs[all[i].first], vecs[all[i].second]);
        ++intra_count;
      }
    }
    ++user_ordinal;
  }
  s.intra_pairs = intra_count;
  s.intra_class = intra_count ? intra_sum / double(intra_count) : 0.0;

  // Inter-user: exhaustive when the cross-user pair count fits the cap,
  // sampled (with rejection of same-user and duplicate-index draws,
  // without retry) otherwise.
  size_t same_user_pairs = 0;
  for (const auto& [uid, idxs] : groups) {
    (void)uid;
    same_user_pairs += idxs.size() * (idxs.size() - 1) / 2;
  }
  const size_t total_inter = n * (n - 1) / 2 - same_user_pairs;
  double inter_sum = 0.0;
  size_t inter_count = 0;
  if (inter_cap > 0) {
    if (total_inter <= inter_cap) {
      for (size_t a = 0; a < n; ++a) {
        for (size_t b = a + 1; b < n; ++b) {
          if (data[a].user_id == data[b].user_id) continue;
          inter_sum += cosine(vecs[a], vecs[b]);
          ++inter_count;
        }
      }
    } else {
      Rng rng = master.fork(1);
      for (size_t attempt = 0; attempt < inter_cap; ++attempt) {
        size_t a = static_cast<size_t>(rng.next_below(n));
        size_t b = static_cast<size_t>(rng.next_below(n));
        if (a == b || data[a].user_id == data[b].user_id) continue;
        inter_sum += cosine(vecs[a], vecs[b]);
        ++inter_count;
      }
    }
  }
  s.inter_pairs = inter_count;
  s.inter_class = inter_count ? inter_sum / double(inter_count) : 0.0;
  return s;
}

std::string corpus_stats_json(const CorpusStats& s, bool pretty) {
  json j;
  j["posts"] = s.posts;
  j["users"] = s.users;
  j["posts_per_user"] = s.posts_per_user;
  j["words_per_post"] = s.words_per_post;
  j["intra_class"] = s.intra_class;
  j["inter_class"] = s.inter_class;
  j["intra_pairs"] = s.intra_pairs;
  j["inter_pairs"] = s.inter_pairs;
  return pretty ? j.dump(2) : j.dump();
}

}  // namespace uapt

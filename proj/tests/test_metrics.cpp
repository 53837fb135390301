#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "uapt/data.hpp"
#include "uapt/metrics.hpp"
#include "uapt/rng.hpp"

using namespace uapt;

TEST_SUITE_BEGIN("metrics");

namespace {

std::vector<std::string> words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

EvalPair pair_of(const std::string& cand, const std::string& ref) {
  return {words(cand), words(ref)};
}

// Expected values below come from tests/fixtures/metrics_oracle.py.
std::vector<EvalPair> mixed_corpus() {
  return {
      pair_of("a quick fox jumps over logs",
              "the quick fox jumps over the logs"),
      pair_of("birds sing in the morning",
              "birds sing songs in the early morning"),
      pair_of("rain falls on the green hills", "heavy rain falls on green hills"),
  };
}

Record record(const std::string& user, const std::string& caption) {
  Record r;
  r.user_id = user;
  r.image.assign(128, 0.0f);
  r.caption = caption;
  return r;
}

}  // namespace

TEST_CASE("bleu clips repeated n-grams against the reference") {
  std::vector<EvalPair> p = {pair_of("the the the", "the cat")};
  CHECK(bleu(p, 1) == doctest::Approx(0.3333333333333333).epsilon(1e-12));
  CHECK(bleu(p, 2) == doctest::Approx(0.0));
}

TEST_CASE("bleu matches the oracle on a mixed corpus") {
  auto p = mixed_corpus();
  CHECK(bleu(p, 1) == doctest::Approx(0.7396089109614705).epsilon(1e-12));
  CHECK(bleu(p, 2) == doctest::Approx(0.5951986559109059).epsilon(1e-12));
  CHECK(bleu(p, 3) == doctest::Approx(0.4326507060944034).epsilon(1e-12));
  CHECK(bleu(p, 4) == doctest::Approx(0.30350826019038046).epsilon(1e-12));
}

TEST_CASE("bleu order never increases with n") {
  auto p = mixed_corpus();
  double prev = 2.0;
  for (int n = 1; n <= 4; ++n) {
    double b = bleu(p, n);
    CHECK(b <= prev + 1e-15);
    prev = b;
  }
}

TEST_CASE("bleu brevity penalty punishes short candidates") {
  // Perfect 1-gram precision but half the reference length.
  std::vector<EvalPair> p = {pair_of("the cat", "the cat sat on mat")};
  double expected = std::exp(1.0 - 5.0 / 2.0) * 1.0;
  CHECK(bleu(p, 1) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("self evaluation is exact: bleu 1, rouge 1, cider 10") {
  std::vector<EvalPair> p;
  for (const EvalPair& q : mixed_corpus()) p.push_back({q.reference, q.reference});
  for (int n = 1; n <= 4; ++n)
    CHECK(bleu(p, n) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rouge_l(p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cider_d(p) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("rouge_l single pair and mixed mean match the oracle") {
  std::vector<EvalPair> one = {pair_of("the cat sat", "the dog sat")};
  CHECK(rouge_l(one) == doctest::Approx(0.6666666666666666).epsilon(1e-12));

  std::vector<EvalPair> mix = {
      pair_of("the cat sat", "the dog sat"),
      pair_of("a b c d", "a x b y c z d"),
      {{}, words("non empty ref")},  // empty candidate scores 0
  };
  CHECK(rouge_l(mix) == doctest::Approx(0.45328282828282823).epsilon(1e-12));
}

TEST_CASE("cider_d matches the oracle on a micro corpus") {
  std::vector<EvalPair> p = {
      pair_of("red bird flies high today", "red bird flies high today"),
      pair_of("green fish swims far today", "green fish swims deep today"),
      pair_of("blue fox today", "blue fox runs far today"),
  };
  CHECK(cider_d(p) == doctest::Approx(5.488895721767277).epsilon(1e-9));

  std::vector<EvalPair> self;
  for (const EvalPair& q : p) self.push_back({q.reference, q.reference});
  CHECK(cider_d(self) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("cider_d per-n similarity never exceeds 1 (score capped at 10)") {
  Rng rng(77);
  std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f"};
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<EvalPair> p;
    for (int i = 0; i < 4; ++i) {
      EvalPair q;
      int lc = 2 + int(rng.next_below(6));
      int lr = 2 + int(rng.next_below(6));
      for (int t = 0; t < lc; ++t)
        q.candidate.push_back(vocab[rng.next_below(vocab.size())]);
      for (int t = 0; t < lr; ++t)
        q.reference.push_back(vocab[rng.next_below(vocab.size())]);
      p.push_back(q);
    }
    double s = cider_d(p);
    CHECK(s >= 0.0);
    CHECK(s <= 10.0 + 1e-9);
  }
}

TEST_CASE("meteor alignment: matches and minimum chunks from the oracle") {
  struct Case {
    const char* cand;
    const char* ref;
    int m;
    int chunks;
    double score;
  };
  const Case cases[] = {
      {"the cat sat on mat", "the cat mat", 3, 2, 0.7986111111111112},
      {"b a b a b", "a b a b", 4, 1, 0.9679878048780489},
      {"c d e", "e d c", 3, 3, 0.5},
      {"w x y z", "w x y z", 4, 1, 0.9921875},
      {"p q", "r s", 0, 0, 0.0},
  };
  for (const Case& c : cases) {
    CAPTURE(c.cand);
    MeteorAlignment a = meteor_alignment(words(c.cand), words(c.ref));
    CHECK(a.matches == c.m);
    CHECK(a.chunks == c.chunks);
    std::vector<EvalPair> one = {pair_of(c.cand, c.ref)};
    CHECK(meteor_lite(one) == doctest::Approx(c.score).epsilon(1e-12));
  }
}

TEST_CASE("meteor_lite corpus mean matches the oracle") {
  std::vector<EvalPair> p = {
      pair_of("the cat sat on mat", "the cat mat"),
      pair_of("b a b a b", "a b a b"),
      pair_of("c d e", "e d c"),
      pair_of("w x y z", "w x y z"),
      pair_of("p q", "r s"),
  };
  CHECK(meteor_lite(p) == doctest::Approx(0.651757283197832).epsilon(1e-12));
}

TEST_CASE("meteor alignment search space is bounded") {
  // 10 identical tokens on both sides -> 10! maximum matchings.
  std::vector<std::string> many(10, "a");
  CHECK_THROWS_AS((void)meteor_alignment(many, many), std::length_error);
  // 30 on each side must throw quickly too (the bound is computed before
  // enumeration starts, not after).
  std::vector<std::string> more(30, "a");
  CHECK_THROWS_AS((void)meteor_alignment(more, more), std::length_error);
}

TEST_CASE("metrics are invariant to pair order") {
  auto p = mixed_corpus();
  auto q = p;
  std::reverse(q.begin(), q.end());
  for (int n = 1; n <= 4; ++n)
    CHECK(bleu(p, n) == doctest::Approx(bleu(q, n)).epsilon(1e-12));
  CHECK(rouge_l(p) == doctest::Approx(rouge_l(q)).epsilon(1e-12));
  CHECK(cider_d(p) == doctest::Approx(cider_d(q)).epsilon(1e-12));
  CHECK(meteor_lite(p) == doctest::Approx(meteor_lite(q)).epsilon(1e-12));
}

TEST_CASE("metric argument validation") {
  std::vector<EvalPair> empty;
  CHECK_THROWS_AS((void)bleu(empty, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)rouge_l(empty), std::invalid_argument);
  CHECK_THROWS_AS((void)cider_d(empty), std::invalid_argument);
  CHECK_THROWS_AS((void)meteor_lite(empty), std::invalid_argument);

  std::vector<EvalPair> good = {pair_of("a b", "a b")};
  CHECK_THROWS_AS((void)bleu(good, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)bleu(good, 5), std::invalid_argument);

  std::vector<EvalPair> bad_ref = {{words("a b"), {}}};
  CHECK_THROWS_AS((void)bleu(bad_ref, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)rouge_l(bad_ref), std::invalid_argument);
  CHECK_THROWS_AS((void)cider_d(bad_ref), std::invalid_argument);
  CHECK_THROWS_AS((void)meteor_lite(bad_ref), std::invalid_argument);
}

TEST_CASE("evaluate aggregates every metric plus token counts") {
  auto p = mixed_corpus();
  MetricReport r = evaluate(p);
  CHECK(r.bleu1 == doctest::Approx(bleu(p, 1)).epsilon(1e-15));
  CHECK(r.bleu4 == doctest::Approx(bleu(p, 4)).epsilon(1e-15));
  CHECK(r.rouge_l == doctest::Approx(rouge_l(p)).epsilon(1e-15));
  CHECK(r.cider_d == doctest::Approx(cider_d(p)).epsilon(1e-15));
  CHECK(r.meteor_lite == doctest::Approx(meteor_lite(p)).epsilon(1e-15));
  CHECK(r.n_pairs == 3);
  CHECK(r.candidate_tokens == 6 + 5 + 6);
  CHECK(r.reference_tokens == 7 + 7 + 6);
  CHECK(r.meteor_exact_match_only);
}

TEST_CASE("metric report serializes to json and csv") {
  MetricReport r = evaluate(mixed_corpus());

  auto j = nlohmann::json::parse(metric_report_json(r));
  CHECK(j["bleu4"].get<double>() == doctest::Approx(r.bleu4).epsilon(1e-15));
  CHECK(j["cider_d"].get<double>() == doctest::Approx(r.cider_d).epsilon(1e-15));
  CHECK(j["n_pairs"].get<size_t>() == 3);
  CHECK(j["meteor_exact_match_only"].get<bool>());
  // pretty form parses to the same object
  CHECK(nlohmann::json::parse(metric_report_json(r, true)) == j);

  std::string header = metric_report_csv_header();
  std::string row = metric_report_csv_row(r);
  auto commas = [](const std::string& s) {
    return std::count(s.begin(), s.end(), ',');
  };
  CHECK(commas(header) == 10);
  CHECK(commas(row) == 10);
  CHECK(header.substr(0, 5) == "bleu1");
  // row round-trips bleu1 at full precision
  double b1 = std::stod(row.substr(0, row.find(',')));
  CHECK(b1 == doctest::Approx(r.bleu1).epsilon(1e-15));
}

TEST_CASE("corpus_stats matches the hand-computed two-user fixture") {
  Dataset data = {
      record("ann", "misty sunrise over quiet misty hills"),
      record("ann", "quiet morning walk in the misty light"),
      record("bob", "loud engines at the race track"),
      record("bob", "fast cars roar down the track"),
  };
  CorpusStats s = corpus_stats(data);
  CHECK(s.posts == 4);
  CHECK(s.users == 2);
  CHECK(s.posts_per_user == doctest::Approx(2.0));
  CHECK(s.words_per_post == doctest::Approx(6.25).epsilon(1e-12));
  CHECK(s.intra_pairs == 2);
  CHECK(s.inter_pairs == 4);
  CHECK(s.intra_class == doctest::Approx(0.11947418186797575).epsilon(1e-9));
  CHECK(s.inter_class == doctest::Approx(0.0048755832495333195).epsilon(1e-9));
}

TEST_CASE("corpus_stats skips single-caption users for intra") {
  Dataset data = {
      record("solo", "one lonely caption here"),
      record("duo", "first duo caption today"),
      record("duo", "second duo caption today"),
  };
  CorpusStats s = corpus_stats(data);
  CHECK(s.users == 2);  // solo + duo
  CHECK(s.intra_pairs == 1);
  CHECK(s.inter_pairs == 2);  // (solo,duo0), (solo,duo1)
}

TEST_CASE("corpus_stats json carries every field") {
  Dataset data = {
      record("u", "alpha beta"),
      record("u", "beta gamma"),
      record("v", "delta epsilon"),
  };
  CorpusStats s = corpus_stats(data);
  auto j = nlohmann::json::parse(corpus_stats_json(s));
  CHECK(j["posts"].get<size_t>() == 3);
  CHECK(j["users"].get<size_t>() == 2);
  CHECK(j["intra_class"].get<double>() ==
        doctest::Approx(s.intra_class).epsilon(1e-15));
  CHECK(j["inter_pairs"].get<size_t>() == s.inter_pairs);
  CHECK(nlohmann::json::parse(corpus_stats_json(s, true)) == j);
}

TEST_CASE("corpus_stats sampling path is deterministic and seed-sensitive") {
  SynthSpec spec;
  spec.n_users = 20;
  spec.posts_per_user = 50;
  spec.seed = 11;
  Dataset data = generate_synthetic(spec).data;

  StatsOptions opts;  // caps 200/user and 20000 total are both exceeded
  CorpusStats a = corpus_stats(data, opts);
  CorpusStats b = corpus_stats(data, opts);
  CHECK(a.intra_pairs == 20 * 200);
  CHECK(a.inter_pairs < 20000);  // rejected draws are not retried
  CHECK(a.inter_pairs > 17000);  // ~5% of draws hit the same user
  CHECK(a.intra_class == b.intra_class);
  CHECK(a.inter_class == b.inter_class);
  CHECK(a.inter_pairs == b.inter_pairs);

  StatsOptions other = opts;
  other.seed = 99;
  CorpusStats c = corpus_stats(data, other);
  CHECK(c.intra_class != a.intra_class);

  // The planted style signal must make same-user captions measurably
  // closer than cross-user ones.
  CHECK(a.intra_class > a.inter_class);
  CHECK(c.intra_class > c.inter_class);
}

TEST_CASE("corpus_stats validation") {
  CHECK_THROWS_AS((void)corpus_stats({}), std::invalid_argument);
  Dataset data = {record("u", "a b"), record("v", "c d")};
  StatsOptions bad;
  bad.max_inter_pairs = -1;
  CHECK_THROWS_AS((void)corpus_stats(data, bad), std::invalid_argument);
}

TEST_SUITE_END();

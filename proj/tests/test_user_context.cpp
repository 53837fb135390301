#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "uapt/data.hpp"
#include "uapt/user_context.hpp"

using namespace uapt;

namespace {

std::vector<std::string> words(const std::string& text) {
  return Tokenizer::normalize(text);
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

TEST_SUITE_BEGIN("user_context");

// oracle values from tests/fixtures/tfidf_oracle.py

TEST_CASE("two-user fixture: tf*idf weights and tie order") {
  TfIdfModel model = fit_tfidf({words("sunset beach sunset coffee"),
                                words("code review")});
  CHECK(model.n_docs == 2);
  CHECK(model.df.at("sunset") == 1);
  CHECK(model.df.at("beach") == 1);

  auto top = user_keywords(words("sunset beach sunset coffee"), model, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].word == "sunset");
  CHECK(top[0].weight == doctest::Approx(0.34657359027997264).epsilon(1e-12));
  // beach and coffee tie at 0.1733...; lexicographically smaller first
  CHECK(top[1].word == "beach");
  CHECK(top[1].weight == doctest::Approx(0.17328679513998632).epsilon(1e-12));
  CHECK(top[2].word == "coffee");
  CHECK(top[2].weight == doctest::Approx(0.17328679513998632).epsilon(1e-12));

  auto top_b = user_keywords(words("code review"), model, 3);
  REQUIRE(top_b.size() == 2);  // k larger than vocabulary -> all words
  CHECK(top_b[0].word == "code");
  CHECK(top_b[1].word == "review");
  CHECK(top_b[0].weight == doctest::Approx(0.34657359027997264).epsilon(1e-12));
}

TEST_CASE("three-user fixture: df counts and rankings") {
  std::vector<std::vector<std::string>> docs = {
      words("sunset beach sunset coffee"),
      words("code review code"),
      words("beach code sunset beach"),
  };
  TfIdfModel model = fit_tfidf(docs);
  CHECK(model.n_docs == 3);
  CHECK(model.df.at("beach") == 2);
  CHECK(model.df.at("code") == 2);
  CHECK(model.df.at("coffee") == 1);
  CHECK(model.df.at("review") == 1);
  CHECK(model.df.at("sunset") == 2);

  auto a = user_keywords(docs[0], model, 3);
  REQUIRE(a.size() == 3);
  CHECK(a[0].word == "coffee");
  CHECK(a[0].weight == doctest::Approx(0.27465307216702745).epsilon(1e-12));
  CHECK(a[1].word == "sunset");
  CHECK(a[1].weight == doctest::Approx(0.20273255405408219).epsilon(1e-12));
  CHECK(a[2].word == "beach");
  CHECK(a[2].weight == doctest::Approx(0.1013662770270411).epsilon(1e-12));

  auto c = user_keywords(docs[2], model, 4);
  REQUIRE(c.size() == 3);  // only 3 distinct words
  CHECK(c[0].word == "beach");
  CHECK(c[1].word == "code");  // ties with sunset; lexicographic order
  CHECK(c[2].word == "sunset");
  CHECK(c[1].weight == doctest::Approx(0.1013662770270411).epsilon(1e-12));

  // purity: repeated calls agree exactly
  auto again = user_keywords(docs[0], model, 3);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(again[i].word == a[i].word);
    CHECK(again[i].weight == a[i].weight);
  }
}

TEST_CASE("single-document corpus falls back to raw term frequency") {
  TfIdfModel model = fit_tfidf({words("red red blue green green green")});
  CHECK(model.idf("red") == 0.0);
  auto top = user_keywords(words("red red blue green green green"), model, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].word == "green");
  CHECK(top[0].weight == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(top[1].word == "red");
  CHECK(top[1].weight == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(top[2].word == "blue");
  CHECK(top[2].weight == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("tfidf input validation") {
  CHECK_THROWS_AS(fit_tfidf({}), std::invalid_argument);
  CHECK_THROWS_AS(fit_tfidf({{}}), std::invalid_argument);

  TfIdfModel unfitted;
  CHECK_THROWS_AS(user_keywords(words("a b"), unfitted, 2), std::logic_error);
  CHECK_THROWS_AS(unfitted.idf("a"), std::logic_error);

  TfIdfModel model = fit_tfidf({words("a b")});
  CHECK_THROWS_AS(user_keywords(words("a b"), model, 0), std::invalid_argument);
  CHECK_THROWS_AS(user_keywords({}, model, 1), std::invalid_argument);
}

TEST_CASE("user documents come from one split, normalized, in file order") {
  Dataset data;
  Record r1;
  r1.user_id = "u1";
  r1.image.assign(128, 0.0f);
  r1.caption = "Sunset BEACH";
  r1.split = Split::train;
  Record r2 = r1;
  r2.caption = "coffee time";
  Record r3 = r1;
  r3.caption = "should not appear";
  r3.split = Split::test;
  Record r4 = r1;
  r4.user_id = "u2";
  r4.caption = "Code Review";
  data = {r1, r2, r3, r4};

  auto docs = user_documents(data, Split::train);
  REQUIRE(docs.size() == 2);
  CHECK(docs["u1"] == std::vector<std::string>{"sunset", "beach", "coffee", "time"});
  CHECK(docs["u2"] == std::vector<std::string>{"code", "review"});
}

TEST_CASE("context adapter emits L_u x d tokens and owns all gradients") {
  Tokenizer tok = Tokenizer::build({"golden misty sunset beach"}, 100);
  ContextEncoder<float> enc;
  enc.init(static_cast<int>(tok.vocab_size()), 24, 7);
  ContextAdapter<float> adapter;
  Rng rng(8);
  adapter.init(24, 4, 16, rng);

  std::vector<Keyword> kws = {{"golden", 0.5}, {"misty", 0.25}, {"sunset", 0.1}};
  TensorF ctx = encode_context(kws, tok, enc, adapter);
  CHECK(ctx.dims == std::vector<int>{4, 16});

  // determinism: bitwise identical on repeat
  TensorF ctx2 = encode_context(kws, tok, enc, adapter);
  CHECK(*ctx2.values == *ctx.values);

  // permutation of the keyword set changes nothing beyond float noise
  std::vector<Keyword> rev = {{"sunset", 0.1}, {"misty", 0.25}, {"golden", 0.5}};
  TensorF ctx3 = encode_context(rev, tok, enc, adapter);
  for (size_t i = 0; i < ctx.numel(); ++i)
    CHECK((*ctx3.values)[i] ==
          doctest::Approx((*ctx.values)[i]).epsilon(1e-6));

  // gradients reach only the adapter
  TensorF loss = sum(ctx);
  backward(loss);
  REQUIRE(adapter.proj.w.grad != nullptr);
  float asum = 0.0f;
  for (float g : *adapter.proj.w.grad) asum += std::abs(g);
  CHECK(asum > 0.0f);
  CHECK_FALSE(enc.emb.requires_grad);
  CHECK(enc.emb.grad == nullptr);
  CHECK(enc.w.grad == nullptr);

  ParamSet<float> ps;
  adapter.collect(ps, "ctx_adapter");
  CHECK(ps.size() == 2);  // proj.w, proj.b

  CHECK_THROWS_AS(encode_context({}, tok, enc, adapter), std::invalid_argument);
}

TEST_CASE("disjoint style lexicons produce separated pooled vectors") {
  SynthSpec spec;  // default 20 users
  SynthResult synth = generate_synthetic(spec);
  auto docs = user_documents(synth.data, Split::train);
  std::vector<std::vector<std::string>> doc_list;
  for (const auto& [user, doc] : docs) doc_list.push_back(doc);
  TfIdfModel model = fit_tfidf(doc_list);

  std::vector<std::string> corpus;
  for (const Record& r : synth.data)
    if (r.split == Split::train) corpus.push_back(r.caption);
  Tokenizer tok = Tokenizer::build(corpus, 4096);

  ContextEncoder<float> enc;
  enc.init(static_cast<int>(tok.vocab_size()), 32, 11);

  std::vector<std::vector<float>> pooled;
  for (const auto& [user, doc] : docs) {
    auto kws = user_keywords(doc, model, 5);
    std::vector<int> ids;
    for (const auto& kw : kws) ids.push_back(tok.id_of(kw.word));
    pooled.push_back(*enc.encode(ids).values);
  }
  REQUIRE(pooled.size() == 20);
  for (size_t i = 0; i < pooled.size(); ++i)
    for (size_t j = i + 1; j < pooled.size(); ++j)
      CHECK(cosine(pooled[i], pooled[j]) < 0.99);
}

TEST_SUITE_END();

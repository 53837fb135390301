#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "uapt/backbones.hpp"
#include "uapt/blocks.hpp"
#include "uapt/data.hpp"
#include "uapt/tensor.hpp"
#include "uapt/tokenizer.hpp"

// Per-user style signal: TF-IDF keywords over each user's post history
// (one document per user) and their encoding into L_u trainable context
// tokens via the frozen context encoder plus a trainable adapter.

namespace uapt {

struct TfIdfModel {
  std::unordered_map<std::string, int> df;  // word -> documents containing it
  int n_docs = 0;
  bool fitted = false;

  // ln(n_docs / df); words never seen at fit time get the max (df = 1)
  double idf(const std::string& word) const;
};

struct Keyword {
  std::string word;
  double weight;
};

// one document per user; each document is the user's concatenated post words
TfIdfModel fit_tfidf(const std::vector<std::vector<std::string>>& docs);

// top-k by tf*idf (tf normalized by document length), descending weight,
// ties broken lexicographically; an all-zero idf corpus falls back to raw tf
std::vector<Keyword> user_keywords(const std::vector<std::string>& doc,
                                   const TfIdfModel& model, int k);

// user -> normalized words of their posts in `split`, in file order
std::map<std::string, std::vector<std::string>> user_documents(const Dataset& data,
                                                               Split split);

// Trainable affine adapter: pooled encoder vector (1, d_enc) -> L_u x d
// context tokens. This is the only trainable parameter set in the module.
template <typename T>
struct ContextAdapter {
  int l_u = 4;
  int d = 64;
  Linear<T> proj;  // d_enc -> l_u * d

  void init(int enc_dim, int n_tokens, int model_dim, Rng& rng) {
    if (enc_dim < 1 || n_tokens < 1 || model_dim < 1)
      throw std::invalid_argument("context_adapter: bad dims");
    l_u = n_tokens;
    d = model_dim;
    proj.init(enc_dim, l_u * d, rng, /*trainable=*/true);
  }

  Tensor<T> forward(const Tensor<T>& pooled) const {
    if (pooled.rank() != 2 || pooled.dim(0) != 1)
      throw std::invalid_argument("context_adapter: expected a (1, d_enc) input");
    return reshape(proj.forward(pooled), {l_u, d});
  }

  void collect(ParamSet<T>& out, const std::string& prefix) {
    proj.collect(out, prefix + ".proj");
  }
};

// keywords -> pooled frozen encoding -> L_u x d trainable tokens
template <typename T>
Tensor<T> encode_context(const std::vector<Keyword>& keywords,
                         const Tokenizer& tok, const ContextEncoder<T>& enc,
                         const ContextAdapter<T>& adapter) {
  if (keywords.empty())
    throw std::invalid_argument("encode_context: empty keyword list");
  std::vector<int> ids;
  ids.reserve(keywords.size());
  for (const Keyword& kw : keywords) ids.push_back(tok.id_of(kw.word));
  return adapter.forward(enc.encode(ids));
}

}  // namespace uapt

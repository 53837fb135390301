#include "uapt/user_context.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace uapt {

double TfIdfModel::idf(const std::string& word) const {
  if (!fitted) throw std::logic_error("tfidf: model not fitted");
  auto it = df.find(word);
  const int d = it == df.end() ? 1 : it->second;
  return std::log(static_cast<double>(n_docs) / static_cast<double>(d));
}

TfIdfModel fit_tfidf(const std::vector<std::vector<std::string>>& docs) {
  if (docs.empty()) throw std::invalid_argument("tfidf: empty corpus");
  TfIdfModel model;
  model.n_docs = static_cast<int>(docs.size());
  for (const auto& doc : docs) {
    if (doc.empty()) throw std::invalid_argument("tfidf: empty document");
    std::set<std::string> distinct(doc.begin(), doc.end());
    for (const std::string& w : distinct) ++model.df[w];
  }
  model.fitted = true;
  return model;
}

std::vector<Keyword> user_keywords(const std::vector<std::string>& doc,
                                   const TfIdfModel& model, int k) {
  if (!model.fitted) throw std::logic_error("tfidf: model not fitted");
  if (k < 1) throw std::invalid_argument("tfidf: k < 1");
  if (doc.empty()) throw std::invalid_argument("tfidf: empty document");

  std::map<std::string, int> counts;  // ordered map fixes the tie order
  for (const std::string& w : doc) ++counts[w];
  const double n = static_cast<double>(doc.size());

  std::vector<Keyword> scored;
  scored.reserve(counts.size());
  bool any_nonzero = false;
  for (const auto& [w, c] : counts) {
    const double s = (static_cast<double>(c) / n) * model.idf(w);
    any_nonzero = any_nonzero || s != 0.0;
    scored.push_back({w, s});
  }
  if (!any_nonzero)  // degenerate corpus (idf all zero): rank by raw tf
    for (auto& kw : scored) kw.weight = static_cast<double>(counts[kw.word]) / n;

  std::stable_sort(scored.begin(), scored.end(),
                   [](const Keyword& a, const Keyword& b) {
                     if (a.weight != b.weight) return a.weight > b.weight;
                     return a.word < b.word;
                   });
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<size_t>(k));
  return scored;
}

std::map<std::string, std::vector<std::string>> user_documents(const Dataset& data,
                                                               Split split) {
  std::map<std::string, std::vector<std::string>> docs;
  for (const Record& r : data) {
    if (r.split != split) continue;
    std::vector<std::string> words = Tokenizer::normalize(r.caption);
    auto& doc = docs[r.user_id];
    doc.insert(doc.end(), words.begin(), words.end());
  }
  return docs;
}

}  // namespace uapt

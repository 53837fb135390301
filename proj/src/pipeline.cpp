#include "uapt/pipeline.hpp"

#include <fstream>
#include <iomanip>

namespace uapt {

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_context: return "no_context";
    case Ablation::no_mapping: return "no_mapping";
    case Ablation::no_fusion: return "no_fusion";
    case Ablation::no_query: return "no_query";
  }
  throw std::invalid_argument("ablation: bad enum value");
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "none") return Ablation::none;
  if (name == "no_context") return Ablation::no_context;
  if (name == "no_mapping") return Ablation::no_mapping;
  if (name == "no_fusion") return Ablation::no_fusion;
  if (name == "no_query") return Ablation::no_query;
  throw std::invalid_argument("unknown ablation mode: " + name);
}

std::map<std::string, std::vector<Keyword>> user_keyword_table(const Dataset& data,
                                                               int keyword_k) {
  auto docs = user_documents(data, Split::train);
  if (docs.empty()) throw std::invalid_argument("keywords: no train-split posts");
  std::vector<std::vector<std::string>> doc_list;
  doc_list.reserve(docs.size());
  for (const auto& [user, doc] : docs) doc_list.push_back(doc);
  TfIdfModel model = fit_tfidf(doc_list);

  std::map<std::string, std::vector<Keyword>> table;
  for (const auto& [user, doc] : docs)
    table.emplace(user, user_keywords(doc, model, keyword_k));
  return table;
}

void save_loss_curve(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ofstream f(path, std::ios::trunc);
  if (!f.good()) throw std::runtime_error("cannot open loss curve file: " + path);
  f << "step,lr,loss\n";
  f << std::setprecision(17);
  for (const CurvePoint& p : curve)
    f << p.step << "," << p.lr << "," << p.loss << "\n";
  if (!f.good()) throw std::runtime_error("loss curve write failed: " + path);
}

}  // namespace uapt

// Python bindings. The surface mirrors the CLI: run() dispatches the exact
// command-line verbs, and the direct helpers (metrics, corpus statistics,
// synthesis, keyword tables, gradient verification) return plain Python
// structures so notebooks can poke at results without file round-trips.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <utility>
#include <vector>

#include "uapt/cli.hpp"
#include "uapt/data.hpp"
#include "uapt/metrics.hpp"
#include "uapt/pipeline.hpp"
#include "uapt/tokenizer.hpp"
#include "uapt/verify.hpp"

namespace py = pybind11;

namespace {

using RawPairs = std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>;

std::vector<uapt::EvalPair> to_pairs(const RawPairs& raw) {
  std::vector<uapt::EvalPair> out;
  out.reserve(raw.size());
  for (const auto& [cand, ref] : raw) out.push_back({cand, ref});
  return out;
}

py::dict report_dict(const uapt::MetricReport& r) {
  py::dict d;
  d["bleu1"] = r.bleu1;
  d["bleu2"] = r.bleu2;
  d["bleu3"] = r.bleu3;
  d["bleu4"] = r.bleu4;
  d["meteor_lite"] = r.meteor_lite;
  d["rouge_l"] = r.rouge_l;
  d["cider_d"] = r.cider_d;
  d["n_pairs"] = r.n_pairs;
  d["candidate_tokens"] = r.candidate_tokens;
  d["reference_tokens"] = r.reference_tokens;
  d["meteor_exact_match_only"] = r.meteor_exact_match_only;
  return d;
}

py::dict stats_dict(const uapt::CorpusStats& s) {
  py::dict d;
  d["posts"] = s.posts;
  d["users"] = s.users;
  d["posts_per_user"] = s.posts_per_user;
  d["words_per_post"] = s.words_per_post;
  d["intra_class"] = s.intra_class;
  d["inter_class"] = s.inter_class;
  d["intra_pairs"] = s.intra_pairs;
  d["inter_pairs"] = s.inter_pairs;
  return d;
}

py::list dataset_list(const uapt::Dataset& data) {
  py::list out;
  for (const uapt::Record& rec : data) {
    py::dict d;
    d["user_id"] = rec.user_id;
    d["image"] = rec.image;
    d["caption"] = rec.caption;
    d["split"] = uapt::split_name(rec.split);
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "User-aware prefix-tuning captioner (C++ core)";
  m.attr("__version__") = "0.1.0";

  m.def(
      "run",
      [](const std::vector<std::string>& args) { return uapt::cli_dispatch(args); },
      py::arg("args"), py::call_guard<py::gil_scoped_release>(),
      "Dispatch a CLI invocation (argv without the program name); returns the exit code.");

  m.def("normalize", &uapt::Tokenizer::normalize, py::arg("text"),
        "Lowercase + whitespace-split a string into caption tokens.");

  // --- caption metrics ------------------------------------------------------
  m.def(
      "bleu", [](const RawPairs& pairs, int n) { return uapt::bleu(to_pairs(pairs), n); },
      py::arg("pairs"), py::arg("n") = 4,
      "Corpus BLEU-n over (candidate_tokens, reference_tokens) pairs.");
  m.def(
      "rouge_l", [](const RawPairs& pairs) { return uapt::rouge_l(to_pairs(pairs)); },
      py::arg("pairs"));
  m.def(
      "cider_d", [](const RawPairs& pairs) { return uapt::cider_d(to_pairs(pairs)); },
      py::arg("pairs"));
  m.def(
      "meteor_lite", [](const RawPairs& pairs) { return uapt::meteor_lite(to_pairs(pairs)); },
      py::arg("pairs"));
  m.def(
      "evaluate", [](const RawPairs& pairs) { return report_dict(uapt::evaluate(to_pairs(pairs))); },
      py::arg("pairs"), "Full metric report as a dict.");

  // --- datasets -------------------------------------------------------------
  m.def(
      "load_dataset", [](const std::string& path) { return dataset_list(uapt::load_dataset(path)); },
      py::arg("path"), "Load a JSON-lines dataset into a list of record dicts.");

  m.def(
      "synth",
      [](int users, int posts_per_user, int style_words_per_user, int content_concepts,
         double noise_rate, uint64_t seed) {
        uapt::SynthSpec spec;
        spec.n_users = users;
        spec.posts_per_user = posts_per_user;
        spec.style_words_per_user = style_words_per_user;
        spec.content_concepts = content_concepts;
        spec.noise_rate = noise_rate;
        spec.seed = seed;
        spec.validate();
        uapt::SynthResult res = uapt::generate_synthetic(spec);
        return py::make_tuple(dataset_list(res.data), py::cast(res.styles));
      },
      py::arg("users") = 20, py::arg("posts_per_user") = 50,
      py::arg("style_words_per_user") = 5, py::arg("content_concepts") = 12,
      py::arg("noise_rate") = 0.0, py::arg("seed") = 0,
      "Generate the synthetic corpus; returns (records, styles).");

  m.def(
      "corpus_stats",
      [](const std::string& path, int max_intra_pairs_per_user, int max_inter_pairs,
         uint64_t seed) {
        uapt::StatsOptions opts;
        opts.max_intra_pairs_per_user = max_intra_pairs_per_user;
        opts.max_inter_pairs = max_inter_pairs;
        opts.seed = seed;
        return stats_dict(uapt::corpus_stats(uapt::load_dataset(path), opts));
      },
      py::arg("path"), py::arg("max_intra_pairs_per_user") = 200,
      py::arg("max_inter_pairs") = 20000, py::arg("seed") = 0,
      "Corpus statistics (counts + intra/inter-user TF-IDF cosine) for a dataset file.");

  m.def(
      "keyword_table",
      [](const std::string& path, int k) {
        py::dict out;
        for (const auto& [user, kws] : uapt::user_keyword_table(uapt::load_dataset(path), k)) {
          py::list lst;
          for (const uapt::Keyword& kw : kws) lst.append(py::make_tuple(kw.word, kw.weight));
          out[py::cast(user)] = lst;
        }
        return out;
      },
      py::arg("path"), py::arg("k") = 16,
      "Ranked per-user TF-IDF keywords from a dataset file's train split.");

  // --- verification ---------------------------------------------------------
  m.def(
      "gradcheck",
      []() {
        std::vector<uapt::GradCheckResult> results;
        {
          py::gil_scoped_release release;
          results = uapt::run_verification();
        }
        py::list out;
        for (const uapt::GradCheckResult& r : results) {
          py::dict d;
          d["name"] = r.name;
          d["n_checked"] = r.n_checked;
          d["max_rel_err"] = r.max_rel_err;
          d["ok"] = r.ok;
          out.append(d);
        }
        return out;
      },
      "Finite-difference verification of every op, a composed block, and the "
      "end-to-end micro model; returns a list of result dicts.");
}

#include "uapt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "uapt/checkpoint.hpp"
#include "uapt/metrics.hpp"
#include "uapt/verify.hpp"

namespace uapt {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct MissingInput : std::runtime_error {
  explicit MissingInput(const std::string& path)
      : std::runtime_error("missing input file: " + path) {}
};

void require_input(const std::string& path) {
  if (!fs::exists(path)) throw MissingInput(path);
}

std::string read_file(const std::string& path) {
  require_input(path);
  std::ifstream f(path);
  if (!f.good()) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f.good()) throw std::runtime_error("cannot open for write: " + path);
  f << text;
  if (!f.good()) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// config plumbing

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(trim(value));
  T out{};
  is >> out;
  if (is.fail() || !(is >> std::ws).eof())
    throw ConfigError("config: bad value for " + key + ": '" + value + "'");
  return out;
}

RunConfig layered_config(const std::string& config_path,
                         const std::string& preset_flag) {
  if (config_path.empty())
    return RunConfig::preset(preset_flag.empty() ? "desk" : preset_flag);
  return build_run_config(read_file(config_path), preset_flag);
}

// ---------------------------------------------------------------------------
// checkpoint schemas

json lm_config_json(const LmConfig& c) {
  return json{{"vocab", c.vocab}, {"d", c.d},   {"depth", c.depth},
              {"heads", c.heads}, {"ff", c.ff}, {"max_seq", c.max_seq}};
}

LmConfig lm_config_from_json(const json& j) {
  LmConfig c;
  c.vocab = j.at("vocab").get<int>();
  c.d = j.at("d").get<int>();
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff = j.at("ff").get<int>();
  c.max_seq = j.at("max_seq").get<int>();
  return c;
}

json pipeline_config_json(const PipelineConfig& c) {
  return json{{"d", c.d},
              {"d_lm", c.d_lm},
              {"d_enc", c.d_enc},
              {"l_q", c.l_q},
              {"l_u", c.l_u},
              {"visual_tokens", c.visual_tokens},
              {"mapping_depth", c.mapping_depth},
              {"mapping_heads", c.mapping_heads},
              {"fusion_depth", c.fusion_depth},
              {"fusion_heads", c.fusion_heads},
              {"ff", c.ff},
              {"max_caption_len", c.max_caption_len},
              {"keyword_k", c.keyword_k},
              {"ablation", ablation_name(c.ablation)}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  c.d = j.at("d").get<int>();
  c.d_lm = j.at("d_lm").get<int>();
  c.d_enc = j.at("d_enc").get<int>();
  c.l_q = j.at("l_q").get<int>();
  c.l_u = j.at("l_u").get<int>();
  c.visual_tokens = j.at("visual_tokens").get<int>();
  c.mapping_depth = j.at("mapping_depth").get<int>();
  c.mapping_heads = j.at("mapping_heads").get<int>();
  c.fusion_depth = j.at("fusion_depth").get<int>();
  c.fusion_heads = j.at("fusion_heads").get<int>();
  c.ff = j.at("ff").get<int>();
  c.max_caption_len = j.at("max_caption_len").get<int>();
  c.keyword_k = j.at("keyword_k").get<int>();
  c.ablation = ablation_from_name(j.at("ablation").get<std::string>());
  return c;
}

json checkpoint_meta(const CheckpointData& data, const char* expected_kind) {
  json meta = json::parse(data.config_text, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded() || !meta.is_object() ||
      meta.value("kind", "") != expected_kind)
    throw std::invalid_argument(std::string("checkpoint is not a '") +
                                expected_kind + "' checkpoint");
  return meta;
}

struct LoadedLm {
  FrozenLM<float> lm;
  Tokenizer tok;
  std::string digest;  // of the LM parameter tensors
};

LoadedLm load_lm(const std::string& path) {
  require_input(path);
  CheckpointData data = read_checkpoint(path);
  json meta = checkpoint_meta(data, "lm");
  LoadedLm out;
  out.lm.init(lm_config_from_json(meta.at("lm")), 0, /*trainable=*/false);
  ParamSet<float> ps;
  out.lm.collect(ps, "lm");
  assign_checkpoint(data, ps);
  out.tok = Tokenizer::deserialize(meta.at("tokenizer").get<std::string>());
  if (static_cast<int>(out.tok.vocab_size()) != out.lm.cfg.vocab)
    throw std::invalid_argument("lm checkpoint: tokenizer/vocab size mismatch");
  out.digest = param_digest(ps);
  return out;
}

void save_lm(const std::string& path, FrozenLM<float>& lm,
             const Tokenizer& tok, const PretrainReport& report,
             uint64_t seed) {
  json meta{{"kind", "lm"},
            {"lm", lm_config_json(lm.cfg)},
            {"tokenizer", tok.serialize()},
            {"seed", seed},
            {"report",
             {{"initial_heldout_nll", report.initial_heldout_nll},
              {"final_heldout_nll", report.final_heldout_nll},
              {"steps", report.steps}}}};
  ParamSet<float> ps;
  lm.collect(ps, "lm");
  write_checkpoint(path, meta.dump(), ps);
}

struct LoadedModel {
  UaptModel<float> model;
  Tokenizer tok;
};

LoadedModel load_model(const std::string& model_path,
                       const std::string& lm_path) {
  LoadedLm llm = load_lm(lm_path);
  require_input(model_path);
  CheckpointData data = read_checkpoint(model_path);
  json meta = checkpoint_meta(data, "uapt");
  if (meta.at("lm_digest").get<std::string>() != llm.digest)
    throw std::invalid_argument(
        "model checkpoint was trained against a different LM checkpoint");
  LoadedModel out;
  out.tok = std::move(llm.tok);
  out.model.init(pipeline_config_from_json(meta.at("pipeline")),
                 std::move(llm.lm), meta.at("seed").get<uint64_t>());
  ParamSet<float> ps;
  out.model.collect_model_params(ps);
  assign_checkpoint(data, ps);
  return out;
}

void save_model(const std::string& path, UaptModel<float>& model,
                const std::string& lm_digest, uint64_t seed,
                const TrainResult& result) {
  json meta{{"kind", "uapt"},
            {"pipeline", pipeline_config_json(model.cfg)},
            {"seed", seed},
            {"lm_digest", lm_digest},
            {"train",
             {{"initial_loss", result.initial_loss},
              {"final_loss", result.final_loss},
              {"steps", result.steps}}}};
  ParamSet<float> ps;
  model.collect_model_params(ps);
  write_checkpoint(path, meta.dump(), ps);
}

// ---------------------------------------------------------------------------
// shared generation loop

struct GeneratedCaption {
  size_t record = 0;
  std::string user_id;
  std::string caption;
  double logprob = 0.0;
};

std::vector<GeneratedCaption> generate_captions(const UaptModel<float>& model,
                                                const Tokenizer& tok,
                                                const Dataset& data, Split split,
                                                const DecodeConfig& dcfg) {
  dcfg.validate();
  NoGradGuard ng;
  std::map<std::string, Tensor<float>> pools;
  if (model.cfg.ablation != Ablation::no_context)
    pools = build_user_pools(data, tok, model.context_enc, model.cfg.keyword_k);
  static const Tensor<float> kNoPool;

  std::vector<GeneratedCaption> out;
  for (size_t i = 0; i < data.size(); ++i) {
    const Record& r = data[i];
    if (r.split != split) continue;
    const Tensor<float>* pooled = &kNoPool;
    if (model.cfg.ablation != Ablation::no_context) {
      auto it = pools.find(r.user_id);
      if (it == pools.end())
        throw std::invalid_argument("no train-split context for user " +
                                    r.user_id);
      pooled = &it->second;
    }
    std::vector<float> image(r.image.begin(), r.image.end());
    Tensor<float> prefix = model.make_prefix(image, *pooled);
    Hypothesis h = beam_search(prefix, model.lm, dcfg);
    out.push_back({i, r.user_id, tok.decode(caption_ids(h)), h.logprob});
  }
  return out;
}

// ---------------------------------------------------------------------------
// commands

struct SynthArgs {
  std::string out, styles;
  SynthSpec spec;
};

int cmd_synth(const SynthArgs& a) {
  SynthResult result = generate_synthetic(a.spec);
  save_dataset(a.out, result.data);
  if (!a.styles.empty()) save_styles(a.styles, result.styles);
  json summary{{"records", result.data.size()},
               {"users", result.styles.size()},
               {"out", a.out}};
  std::cout << summary.dump() << "\n";
  return exit_code::ok;
}

struct PretrainArgs {
  std::string data, out;
  RunConfig rc;
};

int cmd_pretrain_lm(const PretrainArgs& a) {
  require_input(a.data);
  Dataset data = load_dataset(a.data);
  std::vector<std::string> corpus;
  for (const Record& r : data)
    if (r.split == Split::train) corpus.push_back(r.caption);
  if (corpus.empty()) throw std::invalid_argument("no train-split captions");
  Tokenizer tok =
      Tokenizer::build(corpus, static_cast<size_t>(a.rc.lm_vocab_cap));
  std::vector<std::vector<int>> captions;
  captions.reserve(corpus.size());
  for (const std::string& c : corpus) captions.push_back(tok.encode(c));

  LmConfig cfg = a.rc.lm_config(static_cast<int>(tok.vocab_size()));
  auto [lm, report] = pretrain_lm<float>(cfg, captions, a.rc.pretrain_options());
  save_lm(a.out, lm, tok, report, a.rc.seed);
  json summary{{"vocab", tok.vocab_size()},
               {"initial_heldout_nll", report.initial_heldout_nll},
               {"final_heldout_nll", report.final_heldout_nll},
               {"steps", report.steps},
               {"out", a.out}};
  std::cout << summary.dump() << "\n";
  return exit_code::ok;
}

struct TrainArgs {
  std::string data, lm, out, curve;
  RunConfig rc;
};

int cmd_train(const TrainArgs& a) {
  require_input(a.data);
  Dataset data = load_dataset(a.data);
  LoadedLm llm = load_lm(a.lm);

  PipelineConfig cfg = a.rc.pipeline_config();
  cfg.d_lm = llm.lm.cfg.d;
  UaptModel<float> model;
  model.init(cfg, std::move(llm.lm), a.rc.seed);

  auto samples =
      prepare_samples<float>(data, Split::train, llm.tok, cfg.max_caption_len);
  std::map<std::string, Tensor<float>> pools;
  if (cfg.ablation != Ablation::no_context)
    pools = build_user_pools(data, llm.tok, model.context_enc, cfg.keyword_k);

  TrainOptions topt;
  topt.opt = a.rc.optimizer_config();
  topt.seed = a.rc.seed;
  TrainResult result = train(model, samples, pools, topt);

  save_model(a.out, model, llm.digest, a.rc.seed, result);
  if (!a.curve.empty()) save_loss_curve(a.curve, result.curve);
  json summary{{"initial_loss", result.initial_loss},
               {"final_loss", result.final_loss},
               {"steps", result.steps},
               {"ablation", ablation_name(cfg.ablation)},
               {"out", a.out}};
  std::cout << summary.dump() << "\n";
  return exit_code::ok;
}

struct GenerateArgs {
  std::string data, lm, model, out, split = "test";
  RunConfig rc;
};

int cmd_generate(const GenerateArgs& a) {
  require_input(a.data);
  Dataset data = load_dataset(a.data);
  LoadedModel lm = load_model(a.model, a.lm);
  auto rows = generate_captions(lm.model, lm.tok, data,
                                split_from_name(a.split), a.rc.decode_config());
  std::ostringstream os;
  for (const GeneratedCaption& g : rows) {
    json line{{"user_id", g.user_id},
              {"caption", g.caption},
              {"logprob", g.logprob}};
    os << line.dump() << "\n";
  }
  write_file(a.out, os.str());
  json summary{{"captions", rows.size()}, {"out", a.out}};
  std::cout << summary.dump() << "\n";
  return exit_code::ok;
}

struct EvalArgs {
  std::string data, captions, lm, model, out, csv, split = "test";
  bool pretty = false;
  RunConfig rc;
};

int cmd_eval(const EvalArgs& a) {
  require_input(a.data);
  Dataset data = load_dataset(a.data);
  Split split = split_from_name(a.split);
  std::vector<size_t> refs = split_view(data, split);

  // candidate captions: either a pre-generated file or a fresh decode
  std::vector<std::string> captions;
  if (!a.captions.empty()) {
    std::istringstream is(read_file(a.captions));
    std::string line;
    size_t ln = 0;
    while (std::getline(is, line)) {
      ++ln;
      if (trim(line).empty()) continue;
      json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded() || !j.is_object() || !j.contains("caption") ||
          !j.contains("user_id"))
        throw std::invalid_argument("captions file line " + std::to_string(ln) +
                                    ": expected {user_id, caption}");
      size_t k = captions.size();
      if (k >= refs.size())
        throw std::invalid_argument("captions file has more lines than the '" +
                                    a.split + "' split has posts");
      if (j.at("user_id").get<std::string>() != data[refs[k]].user_id)
        throw std::invalid_argument("captions file line " + std::to_string(ln) +
                                    ": user_id does not match the split order");
      captions.push_back(j.at("caption").get<std::string>());
    }
  } else {
    LoadedModel lm = load_model(a.model, a.lm);
    for (const GeneratedCaption& g :
         generate_captions(lm.model, lm.tok, data, split, a.rc.decode_config()))
      captions.push_back(g.caption);
  }
  if (captions.size() != refs.size())
    throw std::invalid_argument(
        "caption count does not match the '" + a.split + "' split (" +
        std::to_string(captions.size()) + " vs " + std::to_string(refs.size()) +
        ")");

  std::vector<EvalPair> pairs(refs.size());
  for (size_t k = 0; k < refs.size(); ++k) {
    pairs[k].candidate = Tokenizer::normalize(captions[k]);
    pairs[k].reference = Tokenizer::normalize(data[refs[k]].caption);
  }
  MetricReport report = evaluate(pairs);
  write_file(a.out, metric_report_json(report, a.pretty) + "\n");
  if (!a.csv.empty())
    write_file(a.csv,
               metric_report_csv_header() + "\n" + metric_report_csv_row(report) + "\n");
  std::cout << metric_report_json(report) << "\n";
  return exit_code::ok;
}

struct StatsArgs {
  std::string data, out;
  bool pretty = false;
  StatsOptions opts;
};

int cmd_stats(const StatsArgs& a) {
  require_input(a.data);
  Dataset data = load_dataset(a.data);
  CorpusStats s = corpus_stats(data, a.opts);
  std::string text = corpus_stats_json(s, a.pretty) + "\n";
  if (a.out.empty())
    std::cout << text;
  else {
    write_file(a.out, text);
    std::cout << corpus_stats_json(s) << "\n";
  }
  return exit_code::ok;
}

int cmd_gradcheck() {
  bool all_ok = true;
  for (const GradCheckResult& r : run_verification()) {
    all_ok = all_ok && r.ok;
    std::cout << (r.ok ? "[PASS] " : "[FAIL] ") << std::left << std::setw(24)
              << r.name << " n=" << std::setw(6) << r.n_checked
              << " max_rel_err=" << std::scientific << std::setprecision(3)
              << r.max_rel_err << std::defaultfloat << "\n";
  }
  if (!all_ok) {
    std::cerr << "gradcheck: finite-difference tolerance exceeded\n";
    return exit_code::gradcheck_failed;
  }
  std::cout << "gradcheck: all checks passed\n";
  return exit_code::ok;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig rc;  // field defaults are the desk preset
  if (name == "desk") return rc;
  if (name == "paper") {
    rc.preset_name = "paper";
    rc.mapping_depth = 5;
    rc.mapping_heads = 8;
    rc.fusion_depth = 5;
    rc.fusion_heads = 8;
    rc.l_q = 16;
    rc.l_u = 4;
    rc.beta1 = 0.9;
    rc.beta2 = 0.96;
    rc.weight_decay = 0.005;
    rc.peak_lr = 6e-4;
    rc.warmup = 6000;
    rc.batch = 50;
    rc.epochs = 6;
    rc.beam = 3;
    rc.temperature = 0.8;
    return rc;
  }
  throw ConfigError("config: unknown preset '" + name + "'");
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "seed") {
    seed = parse_number<uint64_t>(key, v);
  } else if (key == "model.d") {
    d = parse_number<int>(key, v);
  } else if (key == "model.l_q") {
    l_q = parse_number<int>(key, v);
  } else if (key == "model.l_u") {
    l_u = parse_number<int>(key, v);
  } else if (key == "model.visual_tokens") {
    visual_tokens = parse_number<int>(key, v);
  } else if (key == "model.mapping_depth") {
    mapping_depth = parse_number<int>(key, v);
  } else if (key == "model.mapping_heads") {
    mapping_heads = parse_number<int>(key, v);
  } else if (key == "model.fusion_depth") {
    fusion_depth = parse_number<int>(key, v);
  } else if (key == "model.fusion_heads") {
    fusion_heads = parse_number<int>(key, v);
  } else if (key == "model.ff") {
    ff = parse_number<int>(key, v);
  } else if (key == "model.max_caption_len") {
    max_caption_len = parse_number<int>(key, v);
  } else if (key == "model.keyword_k") {
    keyword_k = parse_number<int>(key, v);
  } else if (key == "model.ablation") {
    try {
      ablation_from_name(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    ablation = v;
  } else if (key == "lm.d") {
    lm_d = parse_number<int>(key, v);
  } else if (key == "lm.depth") {
    lm_depth = parse_number<int>(key, v);
  } else if (key == "lm.heads") {
    lm_heads = parse_number<int>(key, v);
  } else if (key == "lm.ff") {
    lm_ff = parse_number<int>(key, v);
  } else if (key == "lm.max_seq") {
    lm_max_seq = parse_number<int>(key, v);
  } else if (key == "lm.vocab_cap") {
    lm_vocab_cap = parse_number<int>(key, v);
  } else if (key == "lm.steps") {
    lm_steps = parse_number<long>(key, v);
  } else if (key == "lm.batch") {
    lm_batch = parse_number<int>(key, v);
  } else if (key == "lm.peak_lr") {
    lm_peak_lr = parse_number<double>(key, v);
  } else if (key == "lm.warmup") {
    lm_warmup = parse_number<long>(key, v);
  } else if (key == "opt.peak_lr") {
    peak_lr = parse_number<double>(key, v);
  } else if (key == "opt.weight_decay") {
    weight_decay = parse_number<double>(key, v);
  } else if (key == "opt.beta1") {
    beta1 = parse_number<double>(key, v);
  } else if (key == "opt.beta2") {
    beta2 = parse_number<double>(key, v);
  } else if (key == "opt.warmup") {
    warmup = parse_number<long>(key, v);
  } else if (key == "opt.total_steps") {
    total_steps = parse_number<long>(key, v);
  } else if (key == "opt.epochs") {
    epochs = parse_number<int>(key, v);
  } else if (key == "opt.batch") {
    batch = parse_number<int>(key, v);
  } else if (key == "decode.beam") {
    beam = parse_number<int>(key, v);
  } else if (key == "decode.temperature") {
    temperature = parse_number<double>(key, v);
  } else if (key == "decode.max_len") {
    max_len = parse_number<int>(key, v);
  } else if (key == "decode.alpha") {
    alpha = parse_number<double>(key, v);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

PipelineConfig RunConfig::pipeline_config() const {
  PipelineConfig c;
  c.d = d;
  c.d_lm = d;  // callers bind the real LM dim after loading it
  c.d_enc = d;
  c.l_q = l_q;
  c.l_u = l_u;
  c.visual_tokens = visual_tokens;
  c.mapping_depth = mapping_depth;
  c.mapping_heads = mapping_heads;
  c.fusion_depth = fusion_depth;
  c.fusion_heads = fusion_heads;
  c.ff = ff;
  c.max_caption_len = max_caption_len;
  c.keyword_k = keyword_k;
  c.ablation = ablation_from_name(ablation);
  return c;
}

OptimizerConfig RunConfig::optimizer_config() const {
  OptimizerConfig c;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.weight_decay = weight_decay;
  c.peak_lr = peak_lr;
  c.warmup_steps = warmup;
  c.total_steps = total_steps;
  c.batch_size = batch;
  c.epochs = epochs;
  return c;
}

DecodeConfig RunConfig::decode_config() const {
  DecodeConfig c;
  c.beam_size = beam;
  c.temperature = temperature;
  c.max_len = max_len;
  c.alpha = alpha;
  return c;
}

PretrainOptions RunConfig::pretrain_options() const {
  PretrainOptions o;
  o.steps = lm_steps;
  o.batch_size = lm_batch;
  o.peak_lr = lm_peak_lr;
  o.weight_decay = weight_decay;
  o.warmup = lm_warmup;
  o.max_len = max_caption_len;
  o.seed = seed;
  return o;
}

LmConfig RunConfig::lm_config(int vocab) const {
  LmConfig c;
  c.vocab = vocab;
  c.d = lm_d;
  c.depth = lm_depth;
  c.heads = lm_heads;
  c.ff = lm_ff;
  c.max_seq = lm_max_seq;
  return c;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  long ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(ln) +
                        ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(ln) +
                        ": empty key or value");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

RunConfig build_run_config(const std::string& config_text,
                           const std::string& preset_flag) {
  auto entries = parse_config_text(config_text);
  std::string preset = preset_flag;
  for (const auto& [key, value] : entries)
    if (key == "preset" && preset.empty()) preset = trim(value);
  RunConfig rc = RunConfig::preset(preset.empty() ? "desk" : preset);
  for (const auto& [key, value] : entries) {
    if (key == "preset") continue;  // already resolved
    rc.apply(key, value);
  }
  return rc;
}

// ---------------------------------------------------------------------------
// dispatch

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"user-aware prefix-tuning captioner"};
  app.require_subcommand(1);

  // RunConfig-backed flags shared by several subcommands. Each subcommand
  // registers the subset it understands; values are applied over the
  // preset+config layers only when the flag was actually given.
  struct Flags {
    std::string config, preset, ablation;
    uint64_t seed = 0;
    int epochs = 0, batch = 0, beam = 0, max_len = 0;
    long warmup = 0, total_steps = 0, steps = 0;
    double peak_lr = 0, weight_decay = 0, temperature = 0, alpha = 0;
  } fl;
  struct FlagOpts {
    CLI::Option *seed = nullptr, *epochs = nullptr, *batch = nullptr,
                *beam = nullptr, *max_len = nullptr, *warmup = nullptr,
                *total_steps = nullptr, *steps = nullptr, *peak_lr = nullptr,
                *weight_decay = nullptr, *temperature = nullptr,
                *alpha = nullptr, *ablation = nullptr;
  };
  std::map<CLI::App*, FlagOpts> opts;

  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", fl.config, "key = value configuration file");
    sub->add_option("--preset", fl.preset, "configuration preset")
        ->check(CLI::IsMember({"desk", "paper"}));
  };
  auto add_seed_flag = [&](CLI::App* sub) {
    opts[sub].seed = sub->add_option("--seed", fl.seed, "master random seed");
  };
  auto add_train_flags = [&](CLI::App* sub) {
    FlagOpts& o = opts[sub];
    o.ablation = sub->add_option("--ablation", fl.ablation, "ablation variant")
                     ->check(CLI::IsMember({"none", "no_context", "no_mapping",
                                            "no_fusion", "no_query"}));
    o.epochs = sub->add_option("--epochs", fl.epochs, "training epochs");
    o.batch = sub->add_option("--batch", fl.batch, "batch size");
    o.peak_lr = sub->add_option("--peak-lr", fl.peak_lr, "peak learning rate");
    o.weight_decay =
        sub->add_option("--weight-decay", fl.weight_decay, "AdamW weight decay");
    o.warmup = sub->add_option("--warmup", fl.warmup, "linear warmup steps");
    o.total_steps = sub->add_option("--total-steps", fl.total_steps,
                                    "override epochs * steps per epoch");
  };
  auto add_decode_flags = [&](CLI::App* sub) {
    FlagOpts& o = opts[sub];
    o.beam = sub->add_option("--beam", fl.beam, "beam size");
    o.temperature =
        sub->add_option("--temperature", fl.temperature, "softmax temperature");
    o.alpha = sub->add_option("--alpha", fl.alpha, "length-normalization power");
    o.max_len = sub->add_option("--max-len", fl.max_len, "max generated tokens");
  };
  auto apply_flags = [&](CLI::App* sub, RunConfig& rc) {
    const FlagOpts& o = opts[sub];
    if (o.seed && o.seed->count()) rc.seed = fl.seed;
    if (o.ablation && o.ablation->count()) rc.ablation = fl.ablation;
    if (o.epochs && o.epochs->count()) rc.epochs = fl.epochs;
    if (o.batch && o.batch->count()) rc.batch = fl.batch;
    if (o.peak_lr && o.peak_lr->count()) rc.peak_lr = fl.peak_lr;
    if (o.weight_decay && o.weight_decay->count())
      rc.weight_decay = fl.weight_decay;
    if (o.warmup && o.warmup->count()) rc.warmup = fl.warmup;
    if (o.total_steps && o.total_steps->count()) rc.total_steps = fl.total_steps;
    if (o.beam && o.beam->count()) rc.beam = fl.beam;
    if (o.temperature && o.temperature->count()) rc.temperature = fl.temperature;
    if (o.alpha && o.alpha->count()) rc.alpha = fl.alpha;
    if (o.max_len && o.max_len->count()) rc.max_len = fl.max_len;
  };

  // synth
  SynthArgs synth;
  CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  c_synth->add_option("--out", synth.out, "dataset JSONL path")->required();
  c_synth->add_option("--styles", synth.styles, "style ground-truth JSON path");
  c_synth->add_option("--users", synth.spec.n_users, "number of users");
  c_synth->add_option("--posts", synth.spec.posts_per_user, "posts per user");
  c_synth->add_option("--style-words", synth.spec.style_words_per_user,
                      "style words per user");
  c_synth->add_option("--concepts", synth.spec.content_concepts,
                      "content concepts per corpus");
  c_synth->add_option("--noise", synth.spec.noise_rate, "noise word rate");
  c_synth->add_option("--seed", synth.spec.seed, "generator seed");

  // pretrain-lm
  PretrainArgs pre;
  CLI::App* c_pre =
      app.add_subcommand("pretrain-lm", "pretrain and freeze the caption LM");
  c_pre->add_option("--data", pre.data, "dataset JSONL path")->required();
  c_pre->add_option("--out", pre.out, "LM checkpoint path")->required();
  add_config_flags(c_pre);
  add_seed_flag(c_pre);
  opts[c_pre].steps = c_pre->add_option("--steps", fl.steps, "pretraining steps");
  opts[c_pre].batch = c_pre->add_option("--batch", fl.batch, "batch size");
  opts[c_pre].peak_lr =
      c_pre->add_option("--peak-lr", fl.peak_lr, "peak learning rate");
  opts[c_pre].warmup =
      c_pre->add_option("--warmup", fl.warmup, "linear warmup steps");

  // train
  TrainArgs tr;
  CLI::App* c_train =
      app.add_subcommand("train", "train the prefix machinery (theta)");
  c_train->add_option("--data", tr.data, "dataset JSONL path")->required();
  c_train->add_option("--lm", tr.lm, "frozen LM checkpoint")->required();
  c_train->add_option("--out", tr.out, "model checkpoint path")->required();
  c_train->add_option("--curve", tr.curve, "loss curve CSV path");
  add_config_flags(c_train);
  add_seed_flag(c_train);
  add_train_flags(c_train);

  // generate
  GenerateArgs gen;
  CLI::App* c_gen =
      app.add_subcommand("generate", "beam-search captions for a split");
  c_gen->add_option("--data", gen.data, "dataset JSONL path")->required();
  c_gen->add_option("--lm", gen.lm, "frozen LM checkpoint")->required();
  c_gen->add_option("--model", gen.model, "model checkpoint")->required();
  c_gen->add_option("--out", gen.out, "captions JSONL path")->required();
  c_gen->add_option("--split", gen.split, "dataset split")
      ->check(CLI::IsMember({"train", "val", "test"}));
  add_config_flags(c_gen);
  add_decode_flags(c_gen);

  // eval
  EvalArgs ev;
  CLI::App* c_eval =
      app.add_subcommand("eval", "score captions against references");
  c_eval->add_option("--data", ev.data, "dataset JSONL path")->required();
  c_eval->add_option("--captions", ev.captions,
                     "pre-generated captions JSONL (skips decoding)");
  c_eval->add_option("--lm", ev.lm, "frozen LM checkpoint");
  c_eval->add_option("--model", ev.model, "model checkpoint");
  c_eval->add_option("--out", ev.out, "metric report JSON path")->required();
  c_eval->add_option("--csv", ev.csv, "metric report CSV path");
  c_eval->add_option("--split", ev.split, "dataset split")
      ->check(CLI::IsMember({"train", "val", "test"}));
  c_eval->add_flag("--pretty", ev.pretty, "indent the JSON report");
  add_config_flags(c_eval);
  add_decode_flags(c_eval);

  // stats
  StatsArgs st;
  CLI::App* c_stats =
      app.add_subcommand("stats", "corpus statistics (counts + similarity)");
  c_stats->add_option("--data", st.data, "dataset JSONL path")->required();
  c_stats->add_option("--out", st.out, "stats JSON path (default: stdout)");
  c_stats->add_option("--max-intra", st.opts.max_intra_pairs_per_user,
                      "intra-user pair cap");
  c_stats->add_option("--max-inter", st.opts.max_inter_pairs,
                      "inter-user pair cap");
  c_stats->add_option("--seed", st.opts.seed, "pair-sampling seed");
  c_stats->add_flag("--pretty", st.pretty, "indent the JSON report");

  // gradcheck
  CLI::App* c_grad = app.add_subcommand(
      "gradcheck", "finite-difference verification of every gradient");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return exit_code::usage;
  }

  try {
    if (app.got_subcommand(c_synth)) {
      return cmd_synth(synth);
    }
    if (app.got_subcommand(c_pre)) {
      pre.rc = layered_config(fl.config, fl.preset);
      apply_flags(c_pre, pre.rc);
      if (opts[c_pre].steps->count()) pre.rc.lm_steps = fl.steps;
      if (opts[c_pre].batch->count()) pre.rc.lm_batch = fl.batch;
      if (opts[c_pre].peak_lr->count()) pre.rc.lm_peak_lr = fl.peak_lr;
      if (opts[c_pre].warmup->count()) pre.rc.lm_warmup = fl.warmup;
      return cmd_pretrain_lm(pre);
    }
    if (app.got_subcommand(c_train)) {
      tr.rc = layered_config(fl.config, fl.preset);
      apply_flags(c_train, tr.rc);
      return cmd_train(tr);
    }
    if (app.got_subcommand(c_gen)) {
      gen.rc = layered_config(fl.config, fl.preset);
      apply_flags(c_gen, gen.rc);
      return cmd_generate(gen);
    }
    if (app.got_subcommand(c_eval)) {
      if (ev.captions.empty() && (ev.lm.empty() || ev.model.empty())) {
        std::cerr << "eval: need either --captions or both --lm and --model\n";
        return exit_code::usage;
      }
      ev.rc = layered_config(fl.config, fl.preset);
      apply_flags(c_eval, ev.rc);
      return cmd_eval(ev);
    }
    if (app.got_subcommand(c_stats)) {
      return cmd_stats(st);
    }
    if (app.got_subcommand(c_grad)) {
      return cmd_gradcheck();
    }
    std::cerr << "no subcommand\n";
    return exit_code::usage;
  } catch (const MissingInput& e) {
    std::cerr << e.what() << "\n";
    return exit_code::missing_input;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return exit_code::config_parse;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged at step " << e.step << ": " << e.what() << "\n";
    return exit_code::divergence;
  } catch (const DataError& e) {
    std::cerr << e.what() << "\n";
    return exit_code::bad_data;
  } catch (const CheckpointError& e) {
    std::cerr << e.what() << "\n";
    return e.kind == CheckpointError::Kind::io ? exit_code::missing_input
                                               : exit_code::bad_data;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return exit_code::bad_data;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return exit_code::other;
  }
}

}  // namespace uapt

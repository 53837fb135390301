#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uapt/backbones.hpp"
#include "uapt/blocks.hpp"
#include "uapt/decode.hpp"
#include "uapt/pipeline.hpp"

// Operator surface: subcommands synth / pretrain-lm / train / generate /
// eval / stats / gradcheck. Configuration is layered: preset defaults,
// then `--config` key=value text, then explicit flags. Every failure class
// has its own exit code and a one-line message on stderr.

namespace uapt {

namespace exit_code {
constexpr int ok = 0;
constexpr int other = 1;             // unexpected error
constexpr int usage = 2;             // unknown flag/subcommand/flag value
constexpr int missing_input = 3;     // declared input file does not exist
constexpr int config_parse = 4;      // malformed config text or bad key/value
constexpr int bad_data = 5;          // invalid dataset/checkpoint content
constexpr int divergence = 6;        // non-finite training loss
constexpr int gradcheck_failed = 7;  // finite-difference tolerance breach
}  // namespace exit_code

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat run configuration; field defaults are the "desk" preset.
struct RunConfig {
  std::string preset_name = "desk";
  uint64_t seed = 0;

  // prefix machinery (mapping + fusion geometry)
  int d = 64;
  int l_q = 16;
  int l_u = 4;
  int visual_tokens = 16;
  int mapping_depth = 4;
  int mapping_heads = 4;
  int fusion_depth = 4;
  int fusion_heads = 4;
  int ff = 256;
  int max_caption_len = 20;
  int keyword_k = 16;
  std::string ablation = "none";

  // frozen LM (pretrain-lm only); max_seq must cover prefix + BOS + max_len
  int lm_d = 64;
  int lm_depth = 4;
  int lm_heads = 4;
  int lm_ff = 256;
  int lm_max_seq = 48;
  int lm_vocab_cap = 2000;
  long lm_steps = 1500;
  int lm_batch = 32;
  double lm_peak_lr = 1e-3;
  long lm_warmup = 50;

  // prefix-tuning optimizer
  double peak_lr = 6e-4;
  double weight_decay = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.96;
  long warmup = 10;
  long total_steps = 0;  // 0 = epochs * steps per epoch
  int epochs = 6;
  int batch = 16;

  // decoding
  int beam = 3;
  double temperature = 0.8;
  int max_len = 20;
  double alpha = 0.0;

  // "desk" (the defaults above) or "paper" (depth 5, heads 8, L_q 16,
  // L_u 4, betas (0.9, 0.96), wd 0.005, peak lr 6e-4, warmup 6000,
  // batch 50, epochs 6, beam 3, temperature 0.8); throws ConfigError
  // on an unknown name.
  static RunConfig preset(const std::string& name);

  // one dotted key (e.g. "opt.peak_lr"); throws ConfigError on unknown
  // keys or unparseable values
  void apply(const std::string& key, const std::string& value);

  PipelineConfig pipeline_config() const;  // d_lm = d until an LM is bound
  OptimizerConfig optimizer_config() const;
  DecodeConfig decode_config() const;
  PretrainOptions pretrain_options() const;
  LmConfig lm_config(int vocab) const;
};

// `key = value` lines, `#` comments, blank lines ignored; returned in file
// order. Throws ConfigError with a line number on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_config_text(
    const std::string& text);

// Layered construction: preset (flag wins over a `preset` key in the file),
// then remaining file keys in order. Flag overrides are applied by the
// caller afterwards.
RunConfig build_run_config(const std::string& config_text,
                           const std::string& preset_flag);

// argv without the program name; returns a process exit code, never throws
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace uapt

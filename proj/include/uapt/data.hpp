#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

// Dataset file format (JSON lines), split views, user grouping, and the
// synthetic personalized-captioning corpus generator. Records are immutable
// once loaded; iteration order is file order throughout.

namespace uapt {

enum class Split { train, val, test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);  // throws on unknown tag

struct Record {
  std::string user_id;
  std::vector<float> image;  // always length 128
  std::string caption;
  Split split = Split::train;
};

using Dataset = std::vector<Record>;

// Raised for malformed dataset files; carries the 1-based line number
// (0 when the problem is not tied to a specific line).
struct DataError : std::runtime_error {
  long line;
  DataError(long ln, const std::string& what) : std::runtime_error(what), line(ln) {}
};

Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& data);

// record indices per split, in file order
std::vector<size_t> split_view(const Dataset& data, Split s);

// user_id -> record indices (file order); map keys give a stable user order
std::map<std::string, std::vector<size_t>> user_index(const Dataset& data);

// every test-split user must also have train-split posts
void check_split_coverage(const Dataset& data);

// ---------------------------------------------------------------------------
// synthetic corpus

struct SynthSpec {
  int n_users = 20;
  int posts_per_user = 50;
  int style_words_per_user = 5;
  int content_concepts = 12;
  double noise_rate = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

// user_id -> the style words planted for that user
using StyleTable = std::map<std::string, std::vector<std::string>>;

struct SynthResult {
  Dataset data;
  StyleTable styles;
};

// Plants a measurable personalization signal: users share a global pool of
// content concepts (each image deterministically encodes its concept set) but
// weave pairwise-disjoint style words into their captions. With noise_rate=0
// the whole corpus is a pure function of the seed.
SynthResult generate_synthetic(const SynthSpec& spec);

void check_disjoint_styles(const StyleTable& styles);  // throws on overlap

// styles.json ground truth: {"user_id": ["word", ...], ...}
void save_styles(const std::string& path, const StyleTable& styles);
StyleTable load_styles(const std::string& path);

}  // namespace uapt

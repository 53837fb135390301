#include "uapt/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "uapt/rng.hpp"

namespace uapt {

namespace {

constexpr int kImageDim = 128;

using nlohmann::json;

// Word pools for the generator. Content concepts are shared by every user;
// style words are handed out in disjoint slices; noise words are rare
// distractors; filler words are template glue with no personal signal.
const std::array<const char*, 40> kConceptPool = {
    "sunset",   "beach",    "coffee",     "mountain", "garden",  "city",
    "river",    "forest",   "breakfast",  "bicycle",  "concert", "museum",
    "harbor",   "snow",     "market",     "bridge",   "desert",  "library",
    "festival", "rooftop",  "waterfall",  "vineyard", "lighthouse", "meadow",
    "canyon",   "skyline",  "orchard",    "campfire", "aquarium", "ballpark",
    "bakery",   "trail",    "studio",     "plaza",    "island",  "glacier",
    "temple",   "arcade",   "pier",       "lagoon"};

const std::array<const char*, 120> kStylePool = {
    "golden",     "dreamy",    "cozy",      "serene",    "majestic",
    "radiant",    "blissful",  "gentle",    "shimmering", "velvet",
    "amber",      "rustic",    "quaint",    "vivid",     "tranquil",
    "luminous",   "misty",     "dusky",     "gilded",    "mellow",
    "breezy",     "sunlit",    "moonlit",   "starry",    "frosty",
    "crisp",      "hazy",      "glowing",   "sparkling", "drifting",
    "wandering",  "roaming",   "strolling", "gleaming",  "twinkling",
    "whispering", "floating",  "soaring",   "dancing",   "glittering",
    "pastel",     "scarlet",   "indigo",    "emerald",   "sapphire",
    "crimson",    "ivory",     "cobalt",    "coral",     "lavender",
    "silken",     "dappled",   "speckled",  "burnished", "weathered",
    "sunbaked",   "windswept", "rainwashed", "dewy",     "verdant",
    "lush",       "wildest",   "blooming",  "fading",    "endless",
    "boundless",  "timeless",  "quiet",     "hushed",    "mellowed",
    "softest",    "warmest",   "coolest",   "brightest", "deepest",
    "calmest",    "sweetest",  "purest",    "freshest",  "finest",
    "charming",   "graceful",  "elegant",   "delicate",  "humble",
    "noble",      "vintage",   "retro",     "classic",   "modern",
    "minimal",    "ornate",    "faded",     "polished",  "matte",
    "glossy",     "textured",  "layered",   "woven",     "braided",
    "smoky",      "spiced",    "honeyed",   "buttery",   "salted",
    "toasted",    "roasted",   "chilled",   "frozen",    "melted",
    "secret",     "hidden",    "forgotten", "remembered", "cherished",
    "beloved",    "treasured", "sacred",    "mythic",    "storied"};

const std::array<const char*, 40> kNoisePool = {
    "omg",        "wow",       "lol",        "yay",       "hehe",
    "nofilter",   "tbt",       "fomo",       "squad",     "goals",
    "mood",       "vibesonly", "instagood",  "photodump", "picoftheday",
    "bestday",    "sunkissed", "daily",      "weekend",   "holiday",
    "throwback",  "memories",  "moments",    "adventures", "explore",
    "discover",   "journey",   "escape",     "paradise",  "heaven",
    "dreamland",  "wonder",    "magichour",  "bliss",     "flashback",
    "snapshots",  "postcard",  "scenes",     "frames",    "captured"};

json record_to_json(const Record& r) {
  json j;
  j["user_id"] = r.user_id;
  j["image"] = r.image;
  j["caption"] = r.caption;
  j["split"] = split_name(r.split);
  return j;
}

Record record_from_json(const json& j, long line) {
  if (!j.is_object()) throw DataError(line, "record is not a JSON object");
  Record r;
  if (!j.contains("user_id") || !j["user_id"].is_string())
    throw DataError(line, "missing or non-string user_id");
  r.user_id = j["user_id"].get<std::string>();
  if (!j.contains("caption") || !j["caption"].is_string())
    throw DataError(line, "missing or non-string caption");
  r.caption = j["caption"].get<std::string>();
  if (!j.contains("image") || !j["image"].is_array())
    throw DataError(line, "missing or non-array image");
  const json& img = j["image"];
  if (img.size() != static_cast<size_t>(kImageDim))
    throw DataError(line, "image length != 128");
  r.image.reserve(kImageDim);
  for (const json& v : img) {
    if (!v.is_number()) throw DataError(line, "non-numeric image element");
    r.image.push_back(v.get<float>());
  }
  if (!j.contains("split") || !j["split"].is_string())
    throw DataError(line, "missing or non-string split");
  try {
    r.split = split_from_name(j["split"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw DataError(line, e.what());
  }
  return r;
}

}  // namespace

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw std::invalid_argument("split: bad enum value");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split tag: " + name);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f.good()) throw DataError(0, "cannot open dataset file: " + path);
  Dataset data;
  std::string line;
  long ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw DataError(ln, "malformed JSON");
    data.push_back(record_from_json(j, ln));
  }
  if (data.empty()) throw DataError(0, "empty dataset: " + path);
  check_split_coverage(data);
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream f(path, std::ios::trunc);
  if (!f.good()) throw DataError(0, "cannot open dataset file for write: " + path);
  for (const Record& r : data) f << record_to_json(r).dump() << "\n";
  if (!f.good()) throw DataError(0, "write failed: " + path);
}

std::vector<size_t> split_view(const Dataset& data, Split s) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < data.size(); ++i)
    if (data[i].split == s) idx.push_back(i);
  return idx;
}

std::map<std::string, std::vector<size_t>> user_index(const Dataset& data) {
  std::map<std::string, std::vector<size_t>> by_user;
  for (size_t i = 0; i < data.size(); ++i) by_user[data[i].user_id].push_back(i);
  return by_user;
}

void check_split_coverage(const Dataset& data) {
  std::set<std::string> train_users;
  for (const Record& r : data)
    if (r.split == Split::train) train_users.insert(r.user_id);
  for (const Record& r : data)
    if (r.split == Split::test && !train_users.count(r.user_id))
      throw DataError(0, "test-split user has no train posts: " + r.user_id);
}

// ---------------------------------------------------------------------------
// synthetic corpus

void SynthSpec::validate() const {
  if (n_users < 1) throw std::invalid_argument("synth: n_users < 1");
  if (posts_per_user < 1) throw std::invalid_argument("synth: posts_per_user < 1");
  if (style_words_per_user < 1)
    throw std::invalid_argument("synth: style_words_per_user < 1");
  if (content_concepts < 3 ||
      content_concepts > static_cast<int>(kConceptPool.size()))
    throw std::invalid_argument("synth: content_concepts out of range");
  if (noise_rate < 0.0 || noise_rate > 1.0)
    throw std::invalid_argument("synth: noise_rate out of [0,1]");
  const long need = static_cast<long>(n_users) * style_words_per_user;
  if (need > static_cast<long>(kStylePool.size()))
    throw std::invalid_argument(
        "synth: style pool exhausted; user lexicons would overlap");
}

void check_disjoint_styles(const StyleTable& styles) {
  std::set<std::string> seen;
  for (const auto& [user, words] : styles)
    for (const std::string& w : words)
      if (!seen.insert(w).second)
        throw std::invalid_argument("style lexicons overlap on word: " + w);
}

SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng master(spec.seed);
  Rng sig_rng = master.fork(1);

  // fixed unit-scale signature per concept; an image is the mean of its
  // concepts' signatures, so identical concept sets give identical images
  std::vector<std::vector<float>> signatures(
      static_cast<size_t>(spec.content_concepts));
  for (auto& s : signatures) {
    s.resize(kImageDim);
    for (float& v : s) v = static_cast<float>(sig_rng.next_normal());
  }

  // disjoint style slices, one per user, in user order
  StyleTable styles;
  std::vector<std::string> user_ids;
  for (int u = 0; u < spec.n_users; ++u) {
    std::ostringstream name;
    name << "user" << (u < 10 ? "0" : "") << u;
    user_ids.push_back(name.str());
    std::vector<std::string> lex;
    for (int k = 0; k < spec.style_words_per_user; ++k)
      lex.push_back(kStylePool[static_cast<size_t>(u * spec.style_words_per_user + k)]);
    styles[user_ids.back()] = lex;
  }
  check_disjoint_styles(styles);

  const int n_train = std::max(1, (spec.posts_per_user * 8) / 10);
  const int n_val = spec.posts_per_user / 10;

  Dataset data;
  data.reserve(static_cast<size_t>(spec.n_users) * spec.posts_per_user);
  for (int u = 0; u < spec.n_users; ++u) {
    Rng rng = master.fork(100 + static_cast<uint64_t>(u));
    const std::vector<std::string>& lex = styles[user_ids[static_cast<size_t>(u)]];
    for (int p = 0; p < spec.posts_per_user; ++p) {
      // 2 or 3 distinct concepts
      const int n_c = 2 + static_cast<int>(rng.next_below(2));
      std::vector<int> concepts;
      while (static_cast<int>(concepts.size()) < n_c) {
        const int c = static_cast<int>(rng.next_below(
            static_cast<uint64_t>(spec.content_concepts)));
        if (std::find(concepts.begin(), concepts.end(), c) == concepts.end())
          concepts.push_back(c);
      }
      std::sort(concepts.begin(), concepts.end());

      Record r;
      r.user_id = user_ids[static_cast<size_t>(u)];
      r.image.assign(kImageDim, 0.0f);
      for (int c : concepts)
        for (int i = 0; i < kImageDim; ++i)
          r.image[static_cast<size_t>(i)] +=
              signatures[static_cast<size_t>(c)][static_cast<size_t>(i)] /
              static_cast<float>(n_c);

      // style slots rotate with a content hash so identical content always
      // selects the same slot indices into each user's own lexicon
      size_t h = 0;
      for (int c : concepts) h = h * 131 + static_cast<size_t>(c) + 7;
      const size_t L = lex.size();
      const std::string& sa = lex[h % L];
      const std::string& sb = lex[(h + 1) % L];
      const std::string& sc = lex[(h + 2) % L];

      std::vector<std::string> words;
      words.push_back(sa);
      words.push_back(kConceptPool[static_cast<size_t>(concepts[0])]);
      if (n_c == 3) words.push_back(kConceptPool[static_cast<size_t>(concepts[1])]);
      words.push_back("and");
      words.push_back(kConceptPool[static_cast<size_t>(concepts[n_c - 1])]);
      words.push_back("with");
      words.push_back(sb);
      words.push_back(sc);
      words.push_back("today");

      // optional distractor words from the shared noise pool
      for (int t = 0; t < 2; ++t)
        if (rng.next_double() < spec.noise_rate) {
          const size_t w = static_cast<size_t>(rng.next_below(kNoisePool.size()));
          const size_t pos = static_cast<size_t>(rng.next_below(words.size() + 1));
          words.insert(words.begin() + static_cast<long>(pos), kNoisePool[w]);
        }

      std::string caption;
      for (size_t i = 0; i < words.size(); ++i) {
        if (i) caption += ' ';
        caption += words[i];
      }
      r.caption = caption;
      r.split = p < n_train            ? Split::train
                : p < n_train + n_val ? Split::val
                                      : Split::test;
      data.push_back(std::move(r));
    }
  }
  check_split_coverage(data);
  return {std::move(data), std::move(styles)};
}

void save_styles(const std::string& path, const StyleTable& styles) {
  json j = json::object();
  for (const auto& [user, words] : styles) j[user] = words;
  std::ofstream f(path, std::ios::trunc);
  if (!f.good()) throw DataError(0, "cannot open styles file for write: " + path);
  f << j.dump(2) << "\n";
}

StyleTable load_styles(const std::string& path) {
  std::ifstream f(path);
  if (!f.good()) throw DataError(0, "cannot open styles file: " + path);
  json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) throw DataError(0, "malformed styles file");
  StyleTable styles;
  for (auto& [user, words] : j.items()) {
    if (!words.is_array()) throw DataError(0, "styles entry is not an array");
    styles[user] = words.get<std::vector<std::string>>();
  }
  return styles;
}

}  // namespace uapt

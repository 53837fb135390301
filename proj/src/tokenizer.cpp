#include "uapt/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace uapt {

Tokenizer::Tokenizer() {
  for (const char* w : {"<pad>", "<bos>", "<eos>", "<unk>"}) add_word(w);
}

void Tokenizer::add_word(const std::string& w) {
  ids_.emplace(w, static_cast<int>(words_.size()));
  words_.push_back(w);
}

std::vector<std::string> Tokenizer::normalize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& corpus, size_t cap) {
  if (cap < kNumReservedIds + 1)
    throw std::invalid_argument("tokenizer: cap leaves no room for words");
  std::unordered_map<std::string, long> freq;
  for (const std::string& text : corpus)
    for (const std::string& w : normalize(text)) ++freq[w];

  std::vector<std::pair<std::string, long>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Tokenizer tok;
  const size_t keep = std::min(ranked.size(), cap - kNumReservedIds);
  for (size_t i = 0; i < keep; ++i)
    if (!tok.ids_.count(ranked[i].first)) tok.add_word(ranked[i].first);
  return tok;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> out;
  for (const std::string& w : normalize(text)) out.push_back(id_of(w));
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += word_of(ids[i]);
  }
  return out;
}

int Tokenizer::id_of(const std::string& word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Tokenizer::word_of(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= words_.size())
    throw std::out_of_range("tokenizer: id out of range");
  return words_[static_cast<size_t>(id)];
}

std::string Tokenizer::serialize() const {
  std::string out;
  for (size_t i = kNumReservedIds; i < words_.size(); ++i) {
    if (i > kNumReservedIds) out.push_back(' ');
    out += words_[i];
  }
  return out;
}

Tokenizer Tokenizer::deserialize(const std::string& line) {
  Tokenizer tok;
  for (const std::string& w : normalize(line))
    if (!tok.ids_.count(w)) tok.add_word(w);
  return tok;
}

}  // namespace uapt

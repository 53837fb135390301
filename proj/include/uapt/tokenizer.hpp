#pragma once

#include <string>
#include <unordered_map>
#include <vector>

// Whitespace + lowercase tokenizer with a frequency-ranked vocabulary.
// Ids 0..3 are reserved: PAD, BOS, EOS, UNK.

namespace uapt {

constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;
constexpr int kNumReservedIds = 4;

class Tokenizer {
 public:
  Tokenizer();  // reserved entries only

  // lowercase and split on whitespace runs
  static std::vector<std::string> normalize(const std::string& text);

  // Vocabulary from a corpus: words ranked by frequency (descending), ties
  // broken lexicographically; truncated so total size (with the 4 reserved
  // ids) never exceeds `cap`.
  static Tokenizer build(const std::vector<std::string>& corpus, size_t cap);

  std::vector<int> encode(const std::string& text) const;  // OOV -> UNK
  std::string decode(const std::vector<int>& ids) const;   // space-joined

  int id_of(const std::string& word) const;   // UNK id if absent
  const std::string& word_of(int id) const;   // throws std::out_of_range
  size_t vocab_size() const { return words_.size(); }

  // single-line word list (ids 4.. in order); reserved entries are implicit
  std::string serialize() const;
  static Tokenizer deserialize(const std::string& line);

 private:
  void add_word(const std::string& w);

  std::vector<std::string> words_;            // id -> word
  std::unordered_map<std::string, int> ids_;  // word -> id
};

}  // namespace uapt

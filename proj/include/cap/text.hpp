#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace cap {

/// Whitespace/punctuation word tokenizer with a frequency-built vocabulary.
/// Reserved ids: pad=0, bos=1, eos=2, unk=3, sep=4. Sentence-final
/// punctuation (. ! ?) is kept as single-token words; all other punctuation
/// separates words and is dropped.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSep = 4;
  static constexpr int kReserved = 5;

  /// Builds from raw texts keeping at most `max_words` content tokens by
  /// descending frequency; ties break lexicographically.
  static Vocab build(const std::vector<std::string>& corpus_texts, int max_words);

  /// Reconstructs from a content-token list (checkpoint loading).
  static Vocab from_tokens(const std::vector<std::string>& content_tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool is_sentence_punct(int id) const;

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;  // skips reserved ids

  /// Content tokens in id order (for serialization).
  std::vector<std::string> content_tokens() const;

  /// Lowercases and splits text into word tokens; sentence punctuation
  /// becomes its own token, other punctuation is dropped.
  static std::vector<std::string> word_split(const std::string& text);
  static bool is_sentence_punct_token(const std::string& tok);

 private:
  Vocab() = default;
  void add_reserved();
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

std::vector<int> tokenize(const std::string& text, const Vocab& vocab);
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace cap

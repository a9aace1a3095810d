#include "cap/text.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "cap/util.hpp"

namespace cap {

namespace {
const char* kReservedTokens[Vocab::kReserved] = {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>"};

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }
bool is_sentence_punct_char(char c) { return c == '.' || c == '!' || c == '?'; }
}  // namespace

std::vector<std::string> Vocab::word_split(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
    if (is_sentence_punct_char(raw)) out.emplace_back(1, raw);
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool Vocab::is_sentence_punct_token(const std::string& tok) {
  return tok.size() == 1 && is_sentence_punct_char(tok[0]);
}

void Vocab::add_reserved() {
  for (int i = 0; i < kReserved; ++i) {
    id_to_token_.emplace_back(kReservedTokens[i]);
    token_to_id_[kReservedTokens[i]] = i;
  }
}

Vocab Vocab::build(const std::vector<std::string>& corpus_texts, int max_words) {
  if (max_words < 1) fail("build_vocab: max_words must be at least 1");
  std::map<std::string, long> counts;  // ordered map gives the lexicographic tie-break
  for (const auto& text : corpus_texts)
    for (const auto& tok : word_split(text)) ++counts[tok];
  if (counts.empty()) fail("build_vocab: empty corpus");

  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab v;
  v.add_reserved();
  const int keep = std::min<int>(max_words, static_cast<int>(ranked.size()));
  for (int i = 0; i < keep; ++i) {
    v.token_to_id_[ranked[static_cast<std::size_t>(i)].first] = v.size();
    v.id_to_token_.push_back(ranked[static_cast<std::size_t>(i)].first);
  }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& content_tokens) {
  Vocab v;
  v.add_reserved();
  for (const auto& tok : content_tokens) {
    if (v.token_to_id_.count(tok)) fail("vocab: duplicate token '" + tok + "'");
    v.token_to_id_[tok] = v.size();
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) fail("vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocab::is_sentence_punct(int id) const {
  if (id < kReserved || id >= size()) return false;
  return is_sentence_punct_token(id_to_token_[static_cast<std::size_t>(id)]);
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& tok : word_split(text)) out.push_back(id(tok));
  return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> toks;
  for (int i : ids) {
    if (i >= kReserved && i < size()) toks.push_back(token(i));
  }
  return join(toks, " ");
}

std::vector<std::string> Vocab::content_tokens() const {
  return {id_to_token_.begin() + kReserved, id_to_token_.end()};
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  return vocab.encode(text);
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  return vocab.decode(ids);
}

}  // namespace cap

#include "mf/vocab.hpp"

#include <algorithm>
#include <set>

namespace mf {

Vocabulary::Vocabulary() { register_word(kPaddingWord); }

int Vocabulary::register_word(const std::string& word) {
  check(!word.empty(), "register_word: empty word");
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  int idx = static_cast<int>(words_.size());
  words_.push_back(word);
  index_.emplace(word, idx);
  return idx;
}

int Vocabulary::index_of(const std::string& word) const {
  auto it = index_.find(word);
  check(it != index_.end(), "unknown vocabulary word: \"", word, "\"");
  return it->second;
}

bool Vocabulary::contains(const std::string& word) const {
  return index_.count(word) > 0;
}

const std::string& Vocabulary::word_at(int index) const {
  check(index >= 0 && index < size(), "word_at: index ", index,
        " outside vocabulary of ", size(), " words");
  return words_[static_cast<size_t>(index)];
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  check(!words.empty() && words[0] == kPaddingWord,
        "vocabulary word list must start with the padding word");
  for (const auto& w : words) v.register_word(w);
  check(v.size() == static_cast<int>(words.size()),
        "vocabulary word list contains duplicates");
  return v;
}

Signature Signature::make(const Vocabulary& vocab,
                          const std::vector<std::string>& words,
                          SignatureKind kind) {
  check(!words.empty() && words.size() <= 8, "signature must have 1..8 words, got ",
        words.size());
  Signature sig;
  sig.kind = kind;
  for (const auto& w : words) sig.word_indices.push_back(vocab.index_of(w));
  std::sort(sig.word_indices.begin(), sig.word_indices.end());
  sig.word_indices.erase(
      std::unique(sig.word_indices.begin(), sig.word_indices.end()),
      sig.word_indices.end());
  return sig;
}

std::string signature_key(const Vocabulary& vocab, const Signature& sig) {
  std::set<std::string> sorted;
  for (int idx : sig.word_indices) sorted.insert(vocab.word_at(idx));
  std::string key;
  for (const auto& w : sorted) {
    if (!key.empty()) key += '/';
    key += w;
  }
  return key;
}

int SignatureSet::intern(const Signature& sig) {
  std::string k;
  for (int idx : sig.word_indices) {
    k += std::to_string(idx);
    k += ',';
  }
  k += '#';
  k += std::to_string(static_cast<int>(sig.kind));
  auto it = lookup_.find(k);
  if (it != lookup_.end()) return it->second;
  int id = static_cast<int>(sigs_.size());
  sigs_.push_back(sig);
  lookup_.emplace(std::move(k), id);
  return id;
}

const Signature& SignatureSet::at(int id) const {
  check(id >= 0 && id < size(), "SignatureSet: id ", id, " out of range");
  return sigs_[static_cast<size_t>(id)];
}

}  // namespace mf

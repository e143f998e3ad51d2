#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "mf/ops.hpp"
#include "mf/rng.hpp"

namespace mf {

// Shared word set whose summed embeddings identify every sensory channel and
// actuator. Index 0 is always the reserved padding word.
class Vocabulary {
 public:
  static constexpr const char* kPaddingWord = "padding";
  static constexpr int kPaddingIndex = 0;

  Vocabulary();

  // Idempotent: returns the existing index if the word is known.
  int register_word(const std::string& word);
  int index_of(const std::string& word) const;  // hard error if unknown
  bool contains(const std::string& word) const;
  const std::string& word_at(int index) const;
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  static Vocabulary from_words(const std::vector<std::string>& words);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

enum class SignatureKind { sensor, actuator, value };

// Word list identifying one scalar channel or actuator. Equality is
// set-equality of the words; the stored index list is kept sorted so that
// composition and keys are order-invariant.
struct Signature {
  std::vector<int> word_indices;  // sorted ascending
  SignatureKind kind = SignatureKind::sensor;

  static Signature make(const Vocabulary& vocab,
                        const std::vector<std::string>& words,
                        SignatureKind kind);

  bool operator==(const Signature& other) const {
    return word_indices == other.word_indices && kind == other.kind;
  }
};

// Canonical string key: the signature's words sorted lexicographically and
// joined with '/'. Permutations of the same word set map to the same key;
// used to index standardizer statistics.
std::string signature_key(const Vocabulary& vocab, const Signature& sig);

// Interning pool so environments and batches can pass small integer ids.
class SignatureSet {
 public:
  int intern(const Signature& sig);
  const Signature& at(int id) const;
  int size() const { return static_cast<int>(sigs_.size()); }

 private:
  std::vector<Signature> sigs_;
  std::unordered_map<std::string, int> lookup_;  // keyed by idx list + kind
};

// Learnable |words| x dim matrix. Row 0 (padding) stays zero and receives no
// gradient updates.
template <typename T>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(int vocab_size, int dim, Rng& rng, T init_std = T(0.02)) {
    table_ = make_leaf<T>({vocab_size, dim}, true, "embedding.table");
    auto& v = table_.value();
    for (size_t i = static_cast<size_t>(dim); i < v.size(); ++i)
      v[i] = static_cast<T>(rng.normal(0.0, static_cast<double>(init_std)));
    // row 0 (padding) is already zero
  }

  Tensor<T>& table() { return table_; }
  const Tensor<T>& table() const { return table_; }
  int dim() const { return table_.shape()[1]; }
  int vocab_size() const { return table_.shape()[0]; }

  // Elementwise sum of the signature's word rows, accumulated in ascending
  // word-index order (the stored order) for reproducibility.
  std::vector<T> compose_role_embedding(const Signature& sig) const {
    int d = dim();
    std::vector<T> out(static_cast<size_t>(d), T(0));
    for (int idx : sig.word_indices) {
      check(idx >= 0 && idx < vocab_size(),
            "compose_role_embedding: word index ", idx, " outside table of ",
            vocab_size(), " rows");
      const T* row = table_.value().data() + static_cast<size_t>(idx) * d;
      for (int j = 0; j < d; ++j) out[static_cast<size_t>(j)] += row[j];
    }
    return out;
  }

  // Keep the padding row out of the update: its gradient is forced to zero
  // before every optimizer step.
  void zero_padding_grad() {
    auto& g = table_.raw()->grad;
    if (g.empty()) return;
    for (int j = 0; j < dim(); ++j) g[static_cast<size_t>(j)] = T(0);
  }

 private:
  Tensor<T> table_;
};

}  // namespace mf

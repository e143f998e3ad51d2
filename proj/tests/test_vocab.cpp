#include "doctest.h"
#include "mf/vocab.hpp"

using namespace mf;

TEST_CASE("vocabulary registration") {
  Vocabulary v;
  CHECK(v.index_of("padding") == 0);
  CHECK(v.register_word("padding") == 0);
  int soleus = v.register_word("soleus");
  CHECK(v.register_word("soleus") == soleus);  // idempotent
  CHECK(v.size() == 2);
  CHECK_THROWS_WITH_AS(v.index_of("unknown_word"),
                       doctest::Contains("unknown_word"), std::runtime_error);
}

TEST_CASE("embedding table size matches the reference configuration") {
  Vocabulary v;
  for (int i = 1; i < 214; ++i) v.register_word("w" + std::to_string(i));
  CHECK(v.size() == 214);
  Rng rng(3);
  EmbeddingTable<float> table(v.size(), 128, rng);
  CHECK(table.table().numel() == 27392);
}

TEST_CASE("role embedding composition") {
  Vocabulary v;
  for (auto w : {"right", "soleus", "muscle", "length", "a", "b"})
    v.register_word(w);
  Rng rng(17);
  EmbeddingTable<double> table(v.size(), 16, rng);

  SUBCASE("sum of word rows") {
    auto sig = Signature::make(v, {"right", "soleus", "muscle", "length"},
                               SignatureKind::sensor);
    auto composed = table.compose_role_embedding(sig);
    for (int j = 0; j < 16; ++j) {
      double expected = 0.0;
      for (auto w : {"right", "soleus", "muscle", "length"})
        expected += table.table().value()[v.index_of(w) * 16 + j];
      CHECK(composed[j] == doctest::Approx(expected));
    }
  }
  SUBCASE("padding row composes to zero") {
    auto sig = Signature::make(v, {"padding"}, SignatureKind::sensor);
    for (double x : table.compose_role_embedding(sig))
      CHECK(x == doctest::Approx(0.0));
  }
  SUBCASE("composition is order-invariant, bitwise") {
    auto ab = Signature::make(v, {"a", "b"}, SignatureKind::sensor);
    auto ba = Signature::make(v, {"b", "a"}, SignatureKind::sensor);
    CHECK(table.compose_role_embedding(ab) == table.compose_role_embedding(ba));
  }
  SUBCASE("appending padding does not change the composition") {
    auto sig = Signature::make(v, {"a", "b"}, SignatureKind::sensor);
    auto padded =
        Signature::make(v, {"a", "b", "padding"}, SignatureKind::sensor);
    CHECK(table.compose_role_embedding(sig) ==
          table.compose_role_embedding(padded));
  }
}

TEST_CASE("signature keys") {
  Vocabulary v;
  for (auto w : {"muscle", "length", "soleus", "right", "velocity"})
    v.register_word(w);
  auto k1 = signature_key(
      v, Signature::make(v, {"muscle", "length", "soleus", "right"},
                         SignatureKind::sensor));
  auto k2 = signature_key(
      v, Signature::make(v, {"right", "soleus", "muscle", "length"},
                         SignatureKind::sensor));
  CHECK(k1 == k2);
  auto k3 = signature_key(
      v, Signature::make(v, {"muscle", "length"}, SignatureKind::sensor));
  auto k4 = signature_key(
      v, Signature::make(v, {"muscle", "velocity"}, SignatureKind::sensor));
  CHECK(k3 != k4);

  SUBCASE("task-qualified words never collide with shared keys") {
    v.register_word("task:reach");
    auto shared = Signature::make(v, {"length"}, SignatureKind::sensor);
    auto disjoint =
        Signature::make(v, {"task:reach", "length"}, SignatureKind::sensor);
    CHECK(signature_key(v, shared) != signature_key(v, disjoint));
  }
}

TEST_CASE("signature interning") {
  Vocabulary v;
  v.register_word("a");
  v.register_word("b");
  SignatureSet set;
  auto s1 = Signature::make(v, {"a", "b"}, SignatureKind::sensor);
  auto s2 = Signature::make(v, {"b", "a"}, SignatureKind::sensor);
  CHECK(set.intern(s1) == set.intern(s2));
  auto s3 = Signature::make(v, {"a", "b"}, SignatureKind::actuator);
  CHECK(set.intern(s3) != set.intern(s1));  // kind participates in identity
}

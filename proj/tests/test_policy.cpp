#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mf/mlp_policy.hpp"
#include "mf/policy.hpp"

using namespace mf;

namespace {

struct Fixture {
  Vocabulary vocab;
  SignatureSet sigs;
  std::vector<int> sensor_ids;
  std::vector<int> actuator_ids;

  explicit Fixture(int n_words = 12, int n_sensor_sigs = 10,
                   int n_actuator_sigs = 4, uint64_t seed = 99) {
    vocab.register_word("value");
    for (int i = 0; i < n_words; ++i)
      vocab.register_word("w" + std::to_string(i));
    Rng rng(seed);
    // build distinct signatures out of 2-3 words each
    for (int s = 0; s < n_sensor_sigs; ++s) {
      Signature sig;
      sig.kind = SignatureKind::sensor;
      sig.word_indices = {1 + (s % n_words), 1 + ((s * 3 + 1) % n_words),
                          1 + ((s * 7 + 2) % n_words)};
      std::sort(sig.word_indices.begin(), sig.word_indices.end());
      sig.word_indices.erase(
          std::unique(sig.word_indices.begin(), sig.word_indices.end()),
          sig.word_indices.end());
      sensor_ids.push_back(sigs.intern(sig));
    }
    for (int s = 0; s < n_actuator_sigs; ++s) {
      Signature sig;
      sig.kind = SignatureKind::actuator;
      sig.word_indices = {1 + (s % n_words), 1 + ((s * 5 + 3) % n_words)};
      std::sort(sig.word_indices.begin(), sig.word_indices.end());
      sig.word_indices.erase(
          std::unique(sig.word_indices.begin(), sig.word_indices.end()),
          sig.word_indices.end());
      actuator_ids.push_back(sigs.intern(sig));
    }
  }

  TokenBatch random_batch(int batch, int tokens, int actuators, int window,
                          Rng& rng, bool ragged = true) const {
    TokenBatch tb;
    tb.resize(batch, tokens, actuators, window);
    tb.signatures = &sigs;
    for (int b = 0; b < batch; ++b) {
      int nt = ragged ? 1 + rng.uniform_int(tokens) : tokens;
      int na = ragged ? 1 + rng.uniform_int(actuators) : actuators;
      for (int n = 0; n < nt; ++n) {
        size_t r = static_cast<size_t>(b) * tokens + n;
        tb.sensor_mask[r] = 1;
        tb.sensor_sig_ids[r] =
            sensor_ids[static_cast<size_t>(rng.uniform_int(
                static_cast<int>(sensor_ids.size())))];
        for (int w = 0; w < window; ++w)
          tb.values[r * window + w] =
              static_cast<float>(rng.normal(0.0, 1.0));
      }
      for (int a = 0; a < na; ++a) {
        size_t r = static_cast<size_t>(b) * actuators + a;
        tb.actuator_mask[r] = 1;
        tb.actuator_sig_ids[r] =
            actuator_ids[static_cast<size_t>(a % actuator_ids.size())];
      }
    }
    return tb;
  }

};

PolicySpec small_spec() {
  PolicySpec s;
  s.embedding_dim = 32;
  s.feedforward_dim = 48;
  s.heads = 2;
  s.encoder_layers = 2;
  s.decoder_layers = 2;
  s.window = 5;
  return s;
}

}  // namespace

TEST_CASE("parameter count matches the reference table exactly") {
  // 214 words, d=128, tokenizer input 6, 6+6+6 layers -> 4,393,732
  Vocabulary vocab;
  vocab.register_word("value");
  for (int i = 0; i < 212; ++i) vocab.register_word("tok" + std::to_string(i));
  REQUIRE(vocab.size() == 214);
  PolicySpec spec;  // reference defaults
  spec.tokenizer_extra_feature = true;
  TransformerPolicy<float> policy(vocab, spec, 1);
  CHECK(policy.parameter_count() == 4393732u);

  // component subtotals
  size_t embedding = 0, tokenizer = 0, encoder = 0, action_dec = 0,
         value_dec = 0, heads = 0;
  for (const auto& [name, count] : policy.parameter_summary()) {
    if (name == "total") continue;
    if (name.rfind("embedding.", 0) == 0) embedding += count;
    else if (name.rfind("tokenizer", 0) == 0) tokenizer += count;
    else if (name.rfind("encoder.", 0) == 0) encoder += count;
    else if (name.rfind("action_decoder.", 0) == 0) action_dec += count;
    else if (name.rfind("value_decoder.", 0) == 0) value_dec += count;
    else heads += count;
  }
  CHECK(embedding == 27392u);
  CHECK(tokenizer == 896u);
  CHECK(encoder == 1189888u);
  CHECK(action_dec == 1587584u);
  CHECK(value_dec == 1587584u);
  CHECK(heads == 129u * 3 + 1);  // action/value/log-std nets + global sigma
}

TEST_CASE("mlp baseline parameter count matches the closed form") {
  MlpSpec spec;
  spec.max_flat_dim = 40;
  spec.max_actions = 6;
  spec.num_tasks = 4;
  spec.task_embedding_dim = 8;
  spec.hidden1 = 32;
  spec.hidden2 = 24;
  MlpPolicy<float> mlp(spec, 7);
  size_t in = 40 + 8;
  size_t expected = 4 * 8                      // task table
                    + in * 32 + 32             // fc1
                    + 32 * 24 + 24             // fc2
                    + 24 * 6 + 6               // action head
                    + 24 * 1 + 1               // value head
                    + 6;                       // log std
  CHECK(mlp.parameter_count() == expected);
}

TEST_CASE("tokenize") {
  Fixture fx;
  auto spec = small_spec();
  TransformerPolicy<float> policy(fx.vocab, spec, 5);
  Rng rng(2);

  SUBCASE("zero values map to the role embedding") {
    // tokenizer bias starts at zero, so tokenizer(0) == 0
    TokenBatch tb;
    tb.resize(1, 2, 1, spec.window);
    tb.signatures = &fx.sigs;
    tb.sensor_mask = {1, 0};
    tb.sensor_sig_ids[0] = fx.sensor_ids[3];
    tb.actuator_mask = {1};
    tb.actuator_sig_ids[0] = fx.actuator_ids[0];
    Tape<float> t;
    t.set_grad_enabled(false);
    auto x = policy.tokenize(t, tb);
    auto role = policy.embedding().compose_role_embedding(
        fx.sigs.at(fx.sensor_ids[3]));
    for (int j = 0; j < spec.embedding_dim; ++j)
      CHECK(x.value()[j] == doctest::Approx(role[j]));
    // padded slot is exactly zero
    for (int j = 0; j < spec.embedding_dim; ++j)
      CHECK(x.value()[spec.embedding_dim + j] == 0.0f);
  }
  SUBCASE("same values, different signatures, different tokens") {
    TokenBatch tb;
    tb.resize(1, 2, 1, spec.window);
    tb.signatures = &fx.sigs;
    tb.sensor_mask = {1, 1};
    tb.sensor_sig_ids[0] = fx.sensor_ids[0];
    tb.sensor_sig_ids[1] = fx.sensor_ids[1];
    for (int w = 0; w < spec.window; ++w) {
      tb.values[w] = 0.3f;
      tb.values[spec.window + w] = 0.3f;
    }
    tb.actuator_mask = {1};
    tb.actuator_sig_ids[0] = fx.actuator_ids[0];
    Tape<float> t;
    t.set_grad_enabled(false);
    auto x = policy.tokenize(t, tb);
    bool differ = false;
    for (int j = 0; j < spec.embedding_dim; ++j)
      differ = differ ||
               x.value()[j] != x.value()[spec.embedding_dim + j];
    CHECK(differ);
  }
}

TEST_CASE("padding invariance") {
  Fixture fx;
  auto spec = small_spec();
  TransformerPolicy<float> policy(fx.vocab, spec, 11);
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    auto tb = fx.random_batch(3, 6, 3, spec.window, rng);
    // widen with pure padding
    TokenBatch padded;
    padded.resize(3, 6 + 4, 3 + 2, spec.window);
    padded.signatures = &fx.sigs;
    padded.task_ids = tb.task_ids;
    for (int b = 0; b < 3; ++b) {
      for (int n = 0; n < 6; ++n) {
        size_t src = static_cast<size_t>(b) * 6 + n;
        size_t dst = static_cast<size_t>(b) * 10 + n;
        padded.sensor_mask[dst] = tb.sensor_mask[src];
        padded.sensor_sig_ids[dst] = tb.sensor_sig_ids[src];
        for (int w = 0; w < spec.window; ++w)
          padded.values[dst * spec.window + w] =
              tb.values[src * spec.window + w];
      }
      for (int a = 0; a < 3; ++a) {
        size_t src = static_cast<size_t>(b) * 3 + a;
        size_t dst = static_cast<size_t>(b) * 5 + a;
        padded.actuator_mask[dst] = tb.actuator_mask[src];
        padded.actuator_sig_ids[dst] = tb.actuator_sig_ids[src];
      }
    }
    Tape<float> t1, t2;
    t1.set_grad_enabled(false);
    t2.set_grad_enabled(false);
    auto f1 = policy.forward(t1, tb);
    auto f2 = policy.forward(t2, padded);
    double max_dev = 0.0;
    for (int b = 0; b < 3; ++b) {
      for (int a = 0; a < 3; ++a) {
        if (!tb.actuator_mask[b * 3 + a]) continue;
        max_dev = std::max(
            max_dev,
            std::abs(static_cast<double>(f1.pre_squash_mean.value()[b * 3 + a]) -
                     f2.pre_squash_mean.value()[b * 5 + a]));
        max_dev = std::max(
            max_dev,
            std::abs(static_cast<double>(f1.log_sigma.value()[b * 3 + a]) -
                     f2.log_sigma.value()[b * 5 + a]));
      }
      max_dev = std::max(max_dev,
                         std::abs(static_cast<double>(f1.value.value()[b]) -
                                  f2.value.value()[b]));
    }
    CHECK(max_dev <= 1e-6);
  }
}

TEST_CASE("permutation equivariance") {
  Fixture fx;
  auto spec = small_spec();
  TransformerPolicy<float> policy(fx.vocab, spec, 13);
  Rng rng(41);
  int tokens = 7, actuators = 4;
  auto tb = fx.random_batch(2, tokens, actuators, spec.window, rng,
                            /*ragged=*/false);

  // permute sensor tokens and actuator tokens with fixed permutations
  std::vector<int> sperm = {3, 0, 6, 1, 5, 2, 4};
  std::vector<int> aperm = {2, 0, 3, 1};
  TokenBatch perm = tb;
  for (int b = 0; b < 2; ++b) {
    for (int n = 0; n < tokens; ++n) {
      size_t src = static_cast<size_t>(b) * tokens + sperm[n];
      size_t dst = static_cast<size_t>(b) * tokens + n;
      perm.sensor_sig_ids[dst] = tb.sensor_sig_ids[src];
      perm.sensor_mask[dst] = tb.sensor_mask[src];
      for (int w = 0; w < spec.window; ++w)
        perm.values[dst * spec.window + w] = tb.values[src * spec.window + w];
    }
    for (int a = 0; a < actuators; ++a) {
      size_t src = static_cast<size_t>(b) * actuators + aperm[a];
      size_t dst = static_cast<size_t>(b) * actuators + a;
      perm.actuator_sig_ids[dst] = tb.actuator_sig_ids[src];
      perm.actuator_mask[dst] = tb.actuator_mask[src];
    }
  }
  Tape<float> t1, t2;
  t1.set_grad_enabled(false);
  t2.set_grad_enabled(false);
  auto f1 = policy.forward(t1, tb);
  auto f2 = policy.forward(t2, perm);
  double max_dev = 0.0;
  for (int b = 0; b < 2; ++b) {
    for (int a = 0; a < actuators; ++a) {
      size_t src = static_cast<size_t>(b) * actuators + aperm[a];
      size_t dst = static_cast<size_t>(b) * actuators + a;
      max_dev = std::max(
          max_dev, std::abs(static_cast<double>(
                       f1.pre_squash_mean.value()[src]) -
                   f2.pre_squash_mean.value()[dst]));
    }
    // value output is invariant
    max_dev = std::max(max_dev,
                       std::abs(static_cast<double>(f1.value.value()[b]) -
                                f2.value.value()[b]));
  }
  CHECK(max_dev <= 1e-6);
}

TEST_CASE("single-token encoder matches brute-force attention") {
  // with one token, softmax over keys is exactly 1 and each layer reduces to
  // token + Wo(Wv(LN(token))) + FF path; check against a direct evaluation
  Fixture fx;
  PolicySpec spec = small_spec();
  spec.encoder_layers = 1;
  TransformerPolicy<double> policy(fx.vocab, spec, 21);
  TokenBatch tb;
  tb.resize(1, 1, 1, spec.window);
  tb.signatures = &fx.sigs;
  tb.sensor_mask = {1};
  tb.sensor_sig_ids[0] = fx.sensor_ids[0];
  tb.actuator_mask = {1};
  tb.actuator_sig_ids[0] = fx.actuator_ids[0];
  Rng rng(4);
  for (int w = 0; w < spec.window; ++w)
    tb.values[w] = static_cast<float>(rng.normal(0.0, 1.0));

  Tape<double> t;
  t.set_grad_enabled(false);
  auto enc = policy.encode(t, tb);

  // brute force the same computation from the raw parameters
  auto ps = policy.parameters();
  auto find = [&](const std::string& name) -> const Tensor<double>& {
    for (const auto& p : ps.params)
      if (p.name() == name) return p;
    FAIL("missing param " << name);
    static Tensor<double> dummy;
    return dummy;
  };
  int d = spec.embedding_dim;
  // token embedding
  std::vector<double> token(d, 0.0);
  {
    const auto& w = find("tokenizer.w");
    const auto& b = find("tokenizer.b");
    for (int j = 0; j < d; ++j) {
      double s = b.value()[j];
      for (int i = 0; i < spec.window; ++i)
        s += tb.values[i] * w.value()[i * d + j];
      token[j] = s;
    }
    auto role = policy.embedding().compose_role_embedding(
        fx.sigs.at(fx.sensor_ids[0]));
    for (int j = 0; j < d; ++j) token[j] += role[j];
  }
  auto layer_norm_vec = [&](const std::vector<double>& x,
                            const std::string& prefix) {
    const auto& gain = find(prefix + ".gain");
    const auto& bias = find(prefix + ".bias");
    double mean = 0, var = 0;
    for (double v : x) mean += v;
    mean /= x.size();
    for (double v : x) var += (v - mean) * (v - mean);
    var /= x.size();
    std::vector<double> y(x.size());
    for (size_t j = 0; j < x.size(); ++j)
      y[j] = (x[j] - mean) / std::sqrt(var + spec.layer_norm_eps) *
                 gain.value()[j] +
             bias.value()[j];
    return y;
  };
  auto linear_vec = [&](const std::vector<double>& x, const std::string& name,
                        int out_dim) {
    const auto& w = find(name + ".w");
    const auto& b = find(name + ".b");
    std::vector<double> y(out_dim);
    for (int j = 0; j < out_dim; ++j) {
      double s = b.value()[j];
      for (size_t i = 0; i < x.size(); ++i) s += x[i] * w.value()[i * out_dim + j];
      y[j] = s;
    }
    return y;
  };
  // single-token self-attention output = Wo(Wv(h)) since attn weight == 1
  auto h = layer_norm_vec(token, "encoder.layer0.ln1");
  auto v = linear_vec(h, "encoder.layer0.attn.wv", d);
  auto attn_out = linear_vec(v, "encoder.layer0.attn.wo", d);
  std::vector<double> x1(d);
  for (int j = 0; j < d; ++j) x1[j] = token[j] + attn_out[j];
  auto h2 = layer_norm_vec(x1, "encoder.layer0.ln2");
  auto ff1 = linear_vec(h2, "encoder.layer0.ff.lin1", spec.feedforward_dim);
  for (auto& z : ff1) z = std::max(0.0, z);
  auto ff2 = linear_vec(ff1, "encoder.layer0.ff.lin2", d);
  std::vector<double> x2(d);
  for (int j = 0; j < d; ++j) x2[j] = x1[j] + ff2[j];
  auto expected = layer_norm_vec(x2, "encoder.final_ln");
  for (int j = 0; j < d; ++j)
    CHECK(enc.value()[j] == doctest::Approx(expected[j]).epsilon(1e-9));
}

TEST_CASE("noise formula") {
  SUBCASE("equal logits give sigma_tilde per component") {
    std::vector<std::vector<double>> cols = {{0.0, 0.0}, {0.0, 0.0}};
    auto sigma = noise_std<double>(cols, {0.3, -0.2}, 0.1, 0.7);
    CHECK(sigma[0] == doctest::Approx(0.7));
    CHECK(sigma[1] == doctest::Approx(0.7));
  }
  SUBCASE("components always sum to sigma_tilde * n_actuators") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      int d = 2 + rng.uniform_int(6);
      int na = 1 + rng.uniform_int(8);
      std::vector<std::vector<double>> cols(na, std::vector<double>(d));
      std::vector<double> x(d);
      for (auto& c : cols)
        for (auto& v : c) v = rng.normal(0.0, 2.0);
      for (auto& v : x) v = rng.normal(0.0, 2.0);
      double st = std::exp(rng.normal(0.0, 1.0));
      auto sigma = noise_std<double>(cols, x, rng.normal(0.0, 1.0), st);
      double sum = 0.0;
      for (double s : sigma) {
        CHECK(s > 0.0);
        sum += s;
      }
      CHECK(sum == doctest::Approx(st * na).epsilon(1e-9));
    }
  }
  SUBCASE("sigma_tilde reset for fine-tuning") {
    Fixture fx;
    TransformerPolicy<float> policy(fx.vocab, small_spec(), 3);
    CHECK(policy.sigma_tilde() == doctest::Approx(1.0));
    policy.reset_sigma_tilde(1e-3);
    CHECK(policy.sigma_tilde() == doctest::Approx(1e-3));
  }
  SUBCASE("forward log_sigma agrees with the direct formula") {
    Fixture fx;
    auto spec = small_spec();
    TransformerPolicy<double> policy(fx.vocab, spec, 23);
    Rng rng(8);
    auto tb = fx.random_batch(2, 5, 3, spec.window, rng, false);
    Tape<double> t;
    t.set_grad_enabled(false);
    auto fwd = policy.forward(t, tb);
    for (int b = 0; b < 2; ++b) {
      std::vector<std::vector<double>> cols;
      for (int a = 0; a < 3; ++a) {
        std::vector<double> col(spec.embedding_dim);
        for (int j = 0; j < spec.embedding_dim; ++j)
          col[j] = fwd.actuator_hidden.value()[(b * 3 + a) * spec.embedding_dim + j];
        cols.push_back(col);
      }
      auto ps = policy.parameters();
      std::vector<double> x(spec.embedding_dim);
      double xb = 0.0;
      for (const auto& p : ps.params) {
        if (p.name() == "log_std_net.w")
          for (int j = 0; j < spec.embedding_dim; ++j) x[j] = p.value()[j];
        if (p.name() == "log_std_net.b") xb = p.value()[0];
      }
      auto sigma = noise_std<double>(cols, x, xb, policy.sigma_tilde());
      for (int a = 0; a < 3; ++a)
        CHECK(std::exp(fwd.log_sigma.value()[b * 3 + a]) ==
              doctest::Approx(sigma[a]).epsilon(1e-9));
    }
  }
}

TEST_CASE("sampling") {
  ActionDistribution dist;
  dist.pre_squash_mean = {0.4f, -1.0f};
  dist.mean = {0.59868766f, 0.26894143f};
  dist.std = {0.5f, 0.25f};

  SUBCASE("zero std collapses to the mean") {
    ActionDistribution d0 = dist;
    d0.std = {0.0f, 0.0f};
    Rng rng(9);
    auto s = sample_action(d0, rng);
    CHECK(s.pre_squash[0] == doctest::Approx(0.4f));
    CHECK(s.action[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.4))));
  }
  SUBCASE("log_prob is maximized at the mean") {
    double at_mean = log_prob(dist, dist.pre_squash_mean);
    Rng rng(10);
    for (int i = 0; i < 20; ++i) {
      std::vector<float> other = {
          dist.pre_squash_mean[0] + static_cast<float>(rng.normal(0, 0.3)),
          dist.pre_squash_mean[1] + static_cast<float>(rng.normal(0, 0.3))};
      CHECK(log_prob(dist, other) <= at_mean + 1e-12);
    }
  }
  SUBCASE("empirical std matches sigma within 2%") {
    Rng rng(12);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      auto s = sample_action(dist, rng);
      sum += s.pre_squash[0];
      sq += static_cast<double>(s.pre_squash[0]) * s.pre_squash[0];
    }
    double mean = sum / n;
    double std = std::sqrt(sq / n - mean * mean);
    CHECK(std == doctest::Approx(0.5).epsilon(0.02));
  }
}

TEST_CASE("mlp baseline forward") {
  MlpSpec spec;
  spec.max_flat_dim = 10;
  spec.max_actions = 4;
  spec.num_tasks = 3;
  spec.task_embedding_dim = 4;
  spec.hidden1 = 16;
  spec.hidden2 = 16;
  MlpPolicy<float> mlp(spec, 77);
  std::vector<float> obs(2 * 10, 0.0f);
  for (int i = 0; i < 10; ++i) obs[i] = 0.1f * i;  // row 1 is all padding zeros
  Tape<float> t;
  t.set_grad_enabled(false);
  auto f1 = mlp.forward(t, obs, {0, 1}, 2);

  SUBCASE("task embedding changes the output") {
    Tape<float> t2;
    t2.set_grad_enabled(false);
    auto f2 = mlp.forward(t2, obs, {2, 1}, 2);
    bool differ = false;
    for (int a = 0; a < 4; ++a)
      differ = differ || f1.pre_squash_mean.value()[a] !=
                             f2.pre_squash_mean.value()[a];
    CHECK(differ);
    // unchanged task id row stays identical
    for (int a = 0; a < 4; ++a)
      CHECK(f1.pre_squash_mean.value()[4 + a] ==
            f2.pre_squash_mean.value()[4 + a]);
  }
}

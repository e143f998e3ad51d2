#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "mf/adam.hpp"
#include "mf/ops.hpp"
#include "mf/rng.hpp"
#include "mf/vocab.hpp"

namespace mf {

// Architecture hyperparameters. Defaults are the reference configuration;
// desk-scale runs shrink them through the run config.
struct PolicySpec {
  int embedding_dim = 128;
  int feedforward_dim = 512;
  int heads = 4;
  int encoder_layers = 6;
  int decoder_layers = 6;
  double dropout = 0.0;  // architecture is dropout-free
  bool pre_norm = true;
  int window = 5;  // observation history steps per channel
  // Adds a constant-1 input slot to the tokenizer (input dim window+1).
  bool tokenizer_extra_feature = false;
  double layer_norm_eps = 1e-5;
  double initial_std = 1.0;
  // role embeddings must stay comparable in scale to the standardized value
  // encodings or the encoder cannot separate channels
  double embedding_init_std = 1.0;

  int tokenizer_input_dim() const {
    return window + (tokenizer_extra_feature ? 1 : 0);
  }
  void validate() const {
    MF_CHECK(embedding_dim % heads == 0, "policy: embedding_dim ", embedding_dim,
          " not divisible by heads ", heads);
    MF_CHECK(dropout == 0.0, "policy: dropout must be 0");
    MF_CHECK(pre_norm, "policy: only pre-norm is supported");
    MF_CHECK(window >= 1 && encoder_layers >= 1 && decoder_layers >= 1,
          "policy: invalid spec");
  }
};

// Padded batch of (signature, value-history) tokens; the policy's sole input
// format. Values are already standardized by the caller. Masked slots carry
// zero values and are excluded from attention and outputs.
struct TokenBatch {
  int batch = 0;
  int max_tokens = 0;     // sensor tokens per row, padded maximum
  int max_actuators = 0;  // actuator tokens per row, padded maximum
  int window = 0;
  std::vector<float> values;           // batch x max_tokens x window
  std::vector<int> sensor_sig_ids;     // batch x max_tokens, -1 when padded
  std::vector<int> actuator_sig_ids;   // batch x max_actuators, -1 when padded
  std::vector<uint8_t> sensor_mask;    // batch x max_tokens
  std::vector<uint8_t> actuator_mask;  // batch x max_actuators
  std::vector<int> task_ids;           // batch
  const SignatureSet* signatures = nullptr;

  void resize(int b, int tokens, int actuators, int w) {
    batch = b;
    max_tokens = tokens;
    max_actuators = actuators;
    window = w;
    values.assign(static_cast<size_t>(b) * tokens * w, 0.0f);
    sensor_sig_ids.assign(static_cast<size_t>(b) * tokens, -1);
    actuator_sig_ids.assign(static_cast<size_t>(b) * actuators, -1);
    sensor_mask.assign(static_cast<size_t>(b) * tokens, 0);
    actuator_mask.assign(static_cast<size_t>(b) * actuators, 0);
    task_ids.assign(static_cast<size_t>(b), 0);
  }
  int valid_actuators(int row) const {
    int c = 0;
    for (int q = 0; q < max_actuators; ++q)
      c += actuator_mask[static_cast<size_t>(row) * max_actuators + q] ? 1 : 0;
    return c;
  }
};

// Stochastic action head output for one batch row, in plain buffers for the
// rollout path (no tape).
struct ActionDistribution {
  std::vector<float> pre_squash_mean;
  std::vector<float> mean;  // sigmoid(pre_squash_mean), in [0,1]
  std::vector<float> std;   // per-actuator exploration std
  double sigma_tilde = 1.0;
};

// sigma_a = sigma_tilde * softmax_a(x^T E + b) * n_actuators.
// E columns are the action decoder's per-actuator output vectors.
template <typename T>
std::vector<T> noise_std(const std::vector<std::vector<T>>& embed_columns,
                         const std::vector<T>& x, T x_bias, T sigma_tilde) {
  size_t n_act = embed_columns.size();
  MF_CHECK(n_act >= 1, "noise_std: need at least one actuator");
  std::vector<double> logits(n_act);
  for (size_t a = 0; a < n_act; ++a) {
    MF_CHECK(embed_columns[a].size() == x.size(),
          "noise_std: embedding dim mismatch");
    double s = static_cast<double>(x_bias);
    for (size_t i = 0; i < x.size(); ++i)
      s += static_cast<double>(x[i]) * static_cast<double>(embed_columns[a][i]);
    logits[a] = s;
  }
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    sum += l;
  }
  std::vector<T> out(n_act);
  for (size_t a = 0; a < n_act; ++a)
    out[a] = static_cast<T>(static_cast<double>(sigma_tilde) * (logits[a] / sum) *
                            static_cast<double>(n_act));
  return out;
}

namespace nn {

template <typename T>
struct Linear {
  Tensor<T> w, b;
  void init(int in, int out, Rng& rng, const std::string& name) {
    w = make_leaf<T>({in, out}, true, name + ".w");
    b = make_leaf<T>({out}, true, name + ".b");
    double bound = std::sqrt(6.0 / (in + out));
    for (auto& v : w.value())
      v = static_cast<T>(rng.uniform(-bound, bound));
  }
  Tensor<T> operator()(Tape<T>& t, const Tensor<T>& x) const {
    return t.add(t.matmul(x, w), b);
  }
  void collect(ParamSet<T>& ps) const {
    ps.add(w);
    ps.add(b);
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain, bias;
  T eps = T(1e-5);
  void init(int dim, T eps_, const std::string& name) {
    eps = eps_;
    gain = make_leaf<T>({dim}, true, name + ".gain");
    bias = make_leaf<T>({dim}, true, name + ".bias");
    for (auto& v : gain.value()) v = T(1);
  }
  Tensor<T> operator()(Tape<T>& t, const Tensor<T>& x) const {
    return t.add(t.mul(t.layer_norm(x, eps), gain), bias);
  }
  void collect(ParamSet<T>& ps) const {
    ps.add(gain);
    ps.add(bias);
  }
};

template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1;
  void init(int dim, int heads_, Rng& rng, const std::string& name) {
    heads = heads_;
    wq.init(dim, dim, rng, name + ".wq");
    wk.init(dim, dim, rng, name + ".wk");
    wv.init(dim, dim, rng, name + ".wv");
    wo.init(dim, dim, rng, name + ".wo");
  }
  // q_in: [B,Q,d], kv_in: [B,N,d], key_keep: B x N validity mask.
  Tensor<T> operator()(Tape<T>& t, const Tensor<T>& q_in,
                       const Tensor<T>& kv_in,
                       const std::vector<uint8_t>& key_keep) const {
    int b = q_in.shape()[0];
    int nq = q_in.shape()[1];
    int d = q_in.shape()[2];
    int nk = kv_in.shape()[1];
    int dk = d / heads;
    auto q = wq(t, q_in);
    auto k = wk(t, kv_in);
    auto v = wv(t, kv_in);
    // expand key mask over (batch, query, key)
    std::vector<uint8_t> keep(static_cast<size_t>(b) * nq * nk);
    for (int bi = 0; bi < b; ++bi)
      for (int qi = 0; qi < nq; ++qi)
        for (int ki = 0; ki < nk; ++ki)
          keep[(static_cast<size_t>(bi) * nq + qi) * nk + ki] =
              key_keep[static_cast<size_t>(bi) * nk + ki];
    std::vector<Tensor<T>> ctx;
    T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    for (int h = 0; h < heads; ++h) {
      auto qh = t.slice_last(q, h * dk, dk);
      auto kh = t.slice_last(k, h * dk, dk);
      auto vh = t.slice_last(v, h * dk, dk);
      auto scores = t.scale(t.matmul(qh, kh, true), inv_sqrt_dk);
      scores = t.masked_fill(scores, keep, T(-1e9));
      auto attn = t.softmax(scores);
      ctx.push_back(t.matmul(attn, vh));
    }
    return wo(t, t.concat_last(ctx));
  }
  void collect(ParamSet<T>& ps) const {
    wq.collect(ps);
    wk.collect(ps);
    wv.collect(ps);
    wo.collect(ps);
  }
};

template <typename T>
struct FeedForward {
  Linear<T> lin1, lin2;
  void init(int dim, int ff, Rng& rng, const std::string& name) {
    lin1.init(dim, ff, rng, name + ".lin1");
    lin2.init(ff, dim, rng, name + ".lin2");
  }
  Tensor<T> operator()(Tape<T>& t, const Tensor<T>& x) const {
    return lin2(t, t.relu(lin1(t, x)));
  }
  void collect(ParamSet<T>& ps) const {
    lin1.collect(ps);
    lin2.collect(ps);
  }
};

template <typename T>
struct EncoderLayer {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ff;
  void init(int dim, int ffdim, int heads, T eps, Rng& rng,
            const std::string& name) {
    ln1.init(dim, eps, name + ".ln1");
    ln2.init(dim, eps, name + ".ln2");
    attn.init(dim, heads, rng, name + ".attn");
    ff.init(dim, ffdim, rng, name + ".ff");
  }
  Tensor<T> operator()(Tape<T>& t, Tensor<T> x,
                       const std::vector<uint8_t>& token_keep) const {
    auto h = ln1(t, x);
    x = t.add(x, attn(t, h, h, token_keep));
    x = t.add(x, ff(t, ln2(t, x)));
    return x;
  }
  void collect(ParamSet<T>& ps) const {
    ln1.collect(ps);
    ln2.collect(ps);
    attn.collect(ps);
    ff.collect(ps);
  }
};

template <typename T>
struct DecoderLayer {
  LayerNorm<T> ln1, ln2, ln3;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ff;
  void init(int dim, int ffdim, int heads, T eps, Rng& rng,
            const std::string& name) {
    ln1.init(dim, eps, name + ".ln1");
    ln2.init(dim, eps, name + ".ln2");
    ln3.init(dim, eps, name + ".ln3");
    self_attn.init(dim, heads, rng, name + ".self_attn");
    cross_attn.init(dim, heads, rng, name + ".cross_attn");
    ff.init(dim, ffdim, rng, name + ".ff");
  }
  Tensor<T> operator()(Tape<T>& t, Tensor<T> q, const Tensor<T>& memory,
                       const std::vector<uint8_t>& query_keep,
                       const std::vector<uint8_t>& memory_keep) const {
    auto h = ln1(t, q);
    q = t.add(q, self_attn(t, h, h, query_keep));
    q = t.add(q, cross_attn(t, ln2(t, q), memory, memory_keep));
    q = t.add(q, ff(t, ln3(t, q)));
    return q;
  }
  void collect(ParamSet<T>& ps) const {
    ln1.collect(ps);
    ln2.collect(ps);
    ln3.collect(ps);
    self_attn.collect(ps);
    cross_attn.collect(ps);
    ff.collect(ps);
  }
};

}  // namespace nn

// Tape-tracked outputs of one batched policy forward pass.
template <typename T>
struct PolicyForward {
  Tensor<T> pre_squash_mean;  // [B, Q]
  Tensor<T> squashed_mean;    // [B, Q]
  Tensor<T> log_sigma;        // [B, Q], log of per-actuator std
  Tensor<T> value;            // [B]
  Tensor<T> actuator_hidden;  // [B, Q, d]
  Tensor<T> encoded;          // [B, N, d]
};

// Encoder-decoder policy over a variable token set. Sensor tokens are
// window-histories tagged with composed role embeddings; an action decoder
// emits one activation per actuator token and a separate value decoder reads
// a single learned value token.
template <typename T>
class TransformerPolicy {
 public:
  TransformerPolicy(const Vocabulary& vocab, const PolicySpec& spec,
                    uint64_t seed)
      : spec_(spec), vocab_words_(vocab.words()) {
    spec_.validate();
    Rng rng = Rng::derive(seed, "policy-init");
    int d = spec_.embedding_dim;
    T eps = static_cast<T>(spec_.layer_norm_eps);
    embedding_ = EmbeddingTable<T>(vocab.size(), d, rng,
                                   static_cast<T>(spec_.embedding_init_std));
    tokenizer_.init(spec_.tokenizer_input_dim(), d, rng, "tokenizer");
    encoder_.resize(spec_.encoder_layers);
    for (int i = 0; i < spec_.encoder_layers; ++i)
      encoder_[i].init(d, spec_.feedforward_dim, spec_.heads, eps, rng,
                       "encoder.layer" + std::to_string(i));
    encoder_final_ln_.init(d, eps, "encoder.final_ln");
    action_decoder_.resize(spec_.decoder_layers);
    value_decoder_.resize(spec_.decoder_layers);
    for (int i = 0; i < spec_.decoder_layers; ++i) {
      action_decoder_[i].init(d, spec_.feedforward_dim, spec_.heads, eps, rng,
                              "action_decoder.layer" + std::to_string(i));
      value_decoder_[i].init(d, spec_.feedforward_dim, spec_.heads, eps, rng,
                             "value_decoder.layer" + std::to_string(i));
    }
    action_query_base_ = make_leaf<T>({d}, true, "action_decoder.query_base");
    value_query_base_ = make_leaf<T>({d}, true, "value_decoder.query_base");
    for (auto& v : action_query_base_.value())
      v = static_cast<T>(rng.normal(0.0, 0.02));
    for (auto& v : value_query_base_.value())
      v = static_cast<T>(rng.normal(0.0, 0.02));
    action_net_.init(d, 1, rng, "action_net");
    value_net_.init(d, 1, rng, "value_net");
    noise_net_.init(d, 1, rng, "log_std_net");
    log_sigma_tilde_ = make_leaf<T>({1}, true, "log_sigma_tilde");
    log_sigma_tilde_.value()[0] =
        static_cast<T>(std::log(spec_.initial_std));
    value_word_index_ = vocab.index_of("value");
  }

  const PolicySpec& spec() const { return spec_; }
  const std::vector<std::string>& vocab_words() const { return vocab_words_; }
  EmbeddingTable<T>& embedding() { return embedding_; }

  double sigma_tilde() const {
    return std::exp(static_cast<double>(log_sigma_tilde_.value()[0]));
  }
  void reset_sigma_tilde(double value) {
    log_sigma_tilde_.value()[0] = static_cast<T>(std::log(value));
  }

  ParamSet<T> parameters() const {
    ParamSet<T> ps;
    ps.add(embedding_.table());
    tokenizer_.collect(ps);
    for (const auto& l : encoder_) l.collect(ps);
    encoder_final_ln_.collect(ps);
    for (const auto& l : action_decoder_) l.collect(ps);
    ps.add(action_query_base_);
    for (const auto& l : value_decoder_) l.collect(ps);
    ps.add(value_query_base_);
    action_net_.collect(ps);
    value_net_.collect(ps);
    noise_net_.collect(ps);
    ps.add(log_sigma_tilde_);
    return ps;
  }

  // (name, element count) per parameter plus the grand total.
  std::vector<std::pair<std::string, size_t>> parameter_summary() const {
    std::vector<std::pair<std::string, size_t>> rows;
    size_t total = 0;
    for (const auto& p : parameters().params) {
      rows.emplace_back(p.name(), p.numel());
      total += p.numel();
    }
    rows.emplace_back("total", total);
    return rows;
  }
  size_t parameter_count() const { return parameters().count(); }

  // Token embeddings: tokenizer(values) + composed role embedding, with
  // padded slots forced to exactly zero.
  Tensor<T> tokenize(Tape<T>& t, const TokenBatch& batch) const {
    MF_CHECK(batch.window == spec_.window, "tokenize: batch window ", batch.window,
          " != policy window ", spec_.window);
    MF_CHECK(batch.signatures != nullptr, "tokenize: batch has no signature set");
    int b = batch.batch, n = batch.max_tokens, w = spec_.tokenizer_input_dim();
    size_t rows = static_cast<size_t>(b) * n;
    std::vector<T> vals(rows * w, T(0));
    for (size_t r = 0; r < rows; ++r) {
      if (!batch.sensor_mask[r]) continue;
      for (int j = 0; j < batch.window; ++j)
        vals[r * w + j] =
            static_cast<T>(batch.values[r * batch.window + j]);
      if (spec_.tokenizer_extra_feature) vals[r * w + batch.window] = T(1);
    }
    auto values = t.constant({b * n, w}, std::move(vals));
    auto tokens = tokenizer_(t, values);  // [b*n, d]
    std::vector<std::vector<int>> groups(rows);
    for (size_t r = 0; r < rows; ++r) {
      int sid = batch.sensor_sig_ids[r];
      if (batch.sensor_mask[r] && sid >= 0)
        groups[r] = batch.signatures->at(sid).word_indices;
    }
    auto roles = t.gather_sum_rows(embedding_.table(), groups);
    auto x = t.add(tokens, roles);
    // zero out padded slots entirely
    std::vector<uint8_t> keep(rows * spec_.embedding_dim);
    for (size_t r = 0; r < rows; ++r)
      for (int j = 0; j < spec_.embedding_dim; ++j)
        keep[r * spec_.embedding_dim + j] = batch.sensor_mask[r];
    x = t.masked_fill(x, keep, T(0));
    return t.reshape(x, {b, n, spec_.embedding_dim});
  }

  // Contextual sensor representations; masked positions never influence
  // unmasked outputs.
  Tensor<T> encode(Tape<T>& t, const TokenBatch& batch) const {
    auto x = tokenize(t, batch);
    for (const auto& layer : encoder_) x = layer(t, x, batch.sensor_mask);
    return encoder_final_ln_(t, x);
  }

  PolicyForward<T> forward(Tape<T>& t, const TokenBatch& batch) const {
    PolicyForward<T> out;
    out.encoded = encode(t, batch);
    int b = batch.batch, q = batch.max_actuators, d = spec_.embedding_dim;

    // actuator queries: role embedding + shared query base
    size_t qrows = static_cast<size_t>(b) * q;
    std::vector<std::vector<int>> groups(qrows);
    for (size_t r = 0; r < qrows; ++r) {
      int sid = batch.actuator_sig_ids[r];
      if (batch.actuator_mask[r] && sid >= 0)
        groups[r] = batch.signatures->at(sid).word_indices;
    }
    auto roles = t.gather_sum_rows(embedding_.table(), groups);
    auto queries =
        t.reshape(t.add(roles, action_query_base_), {b, q, d});
    auto hidden = queries;
    for (const auto& layer : action_decoder_)
      hidden = layer(t, hidden, out.encoded, batch.actuator_mask,
                     batch.sensor_mask);
    out.actuator_hidden = hidden;

    auto mean_flat = action_net_(t, hidden);  // [b,q,1]
    out.pre_squash_mean = t.reshape(mean_flat, {b, q});
    out.squashed_mean = t.sigmoid(out.pre_squash_mean);

    // per-actuator exploration scale, normalized over the valid set
    auto logits = t.reshape(noise_net_(t, hidden), {b, q});
    logits = t.masked_fill(logits, batch.actuator_mask, T(-1e9));
    auto log_sm = t.log_softmax(logits);
    std::vector<T> log_counts(static_cast<size_t>(b) * q, T(0));
    for (int bi = 0; bi < b; ++bi) {
      int na = batch.valid_actuators(bi);
      T lc = static_cast<T>(std::log(static_cast<double>(std::max(na, 1))));
      for (int qi = 0; qi < q; ++qi)
        log_counts[static_cast<size_t>(bi) * q + qi] = lc;
    }
    auto log_na = t.constant({b, q}, std::move(log_counts));
    out.log_sigma =
        t.add(t.add(log_sm, log_na), log_sigma_tilde_);

    // value decoder: a single learned value token attending to the encoding
    std::vector<std::vector<int>> vgroups(static_cast<size_t>(b),
                                          {value_word_index_});
    auto vroles = t.gather_sum_rows(embedding_.table(), vgroups);
    auto vq = t.reshape(t.add(vroles, value_query_base_), {b, 1, d});
    std::vector<uint8_t> vmask(static_cast<size_t>(b), 1);
    auto vh = vq;
    for (const auto& layer : value_decoder_)
      vh = layer(t, vh, out.encoded, vmask, batch.sensor_mask);
    out.value = t.reshape(value_net_(t, vh), {b});
    return out;
  }

  // Rollout-path distribution for each batch row (plain buffers, no grads).
  std::vector<ActionDistribution> action_distributions(
      const TokenBatch& batch) const {
    Tape<T> t;
    t.set_grad_enabled(false);
    auto fwd = forward(t, batch);
    return extract_distributions(batch, fwd);
  }

  std::vector<ActionDistribution> extract_distributions(
      const TokenBatch& batch, const PolicyForward<T>& fwd) const {
    std::vector<ActionDistribution> dists(batch.batch);
    int q = batch.max_actuators;
    double st = sigma_tilde();
    for (int bi = 0; bi < batch.batch; ++bi) {
      auto& dist = dists[bi];
      dist.sigma_tilde = st;
      for (int qi = 0; qi < q; ++qi) {
        size_t i = static_cast<size_t>(bi) * q + qi;
        if (!batch.actuator_mask[i]) continue;
        dist.pre_squash_mean.push_back(
            static_cast<float>(fwd.pre_squash_mean.value()[i]));
        dist.mean.push_back(static_cast<float>(fwd.squashed_mean.value()[i]));
        dist.std.push_back(
            static_cast<float>(std::exp(static_cast<double>(
                fwd.log_sigma.value()[i]))));
      }
    }
    return dists;
  }

  Tensor<T> log_sigma_tilde_param() const { return log_sigma_tilde_; }

 private:
  PolicySpec spec_;
  std::vector<std::string> vocab_words_;
  EmbeddingTable<T> embedding_;
  nn::Linear<T> tokenizer_;
  std::vector<nn::EncoderLayer<T>> encoder_;
  nn::LayerNorm<T> encoder_final_ln_;
  std::vector<nn::DecoderLayer<T>> action_decoder_;
  std::vector<nn::DecoderLayer<T>> value_decoder_;
  Tensor<T> action_query_base_, value_query_base_;
  nn::Linear<T> action_net_, value_net_, noise_net_;
  Tensor<T> log_sigma_tilde_;
  int value_word_index_ = -1;
};

// Gaussian sample in pre-squash space, sigmoid to [0,1]. Log-probabilities
// are computed in pre-squash space (no squash Jacobian), matching clipped
// Gaussian PPO practice.
struct SampledAction {
  std::vector<float> pre_squash;
  std::vector<float> action;  // in [0,1]
};

inline SampledAction sample_action(const ActionDistribution& dist, Rng& rng) {
  SampledAction s;
  size_t n = dist.pre_squash_mean.size();
  s.pre_squash.resize(n);
  s.action.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double z = rng.normal(static_cast<double>(dist.pre_squash_mean[i]),
                          static_cast<double>(dist.std[i]));
    s.pre_squash[i] = static_cast<float>(z);
    s.action[i] = static_cast<float>(1.0 / (1.0 + std::exp(-z)));
  }
  return s;
}

inline SampledAction deterministic_action(const ActionDistribution& dist) {
  SampledAction s;
  s.pre_squash = dist.pre_squash_mean;
  s.action = dist.mean;
  return s;
}

inline double log_prob(const ActionDistribution& dist,
                       const std::vector<float>& pre_squash) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double lp = 0.0;
  for (size_t i = 0; i < pre_squash.size(); ++i) {
    double sd = static_cast<double>(dist.std[i]);
    double d = static_cast<double>(pre_squash[i]) -
               static_cast<double>(dist.pre_squash_mean[i]);
    lp += -0.5 * kLog2Pi - std::log(sd) - 0.5 * d * d / (sd * sd);
  }
  return lp;
}

}  // namespace mf

#include "mf/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace mf {

using nlohmann::json;

namespace {

constexpr char kMagic[6] = {'M', 'F', 'C', 'K', 'P', 'T'};

json welford_to_json(const Welford& w) {
  return json::array({w.count, w.mean, w.m2});
}

Welford welford_from_json(const json& j) {
  Welford w;
  w.count = j.at(0).get<double>();
  w.mean = j.at(1).get<double>();
  w.m2 = j.at(2).get<double>();
  return w;
}

json spec_to_json(const PolicySpec& s) {
  return json{{"embedding_dim", s.embedding_dim},
              {"feedforward_dim", s.feedforward_dim},
              {"heads", s.heads},
              {"encoder_layers", s.encoder_layers},
              {"decoder_layers", s.decoder_layers},
              {"window", s.window},
              {"tokenizer_extra_feature", s.tokenizer_extra_feature},
              {"layer_norm_eps", s.layer_norm_eps},
              {"initial_std", s.initial_std},
              {"embedding_init_std", s.embedding_init_std}};
}

PolicySpec spec_from_json(const json& j) {
  PolicySpec s;
  s.embedding_dim = j.at("embedding_dim").get<int>();
  s.feedforward_dim = j.at("feedforward_dim").get<int>();
  s.heads = j.at("heads").get<int>();
  s.encoder_layers = j.at("encoder_layers").get<int>();
  s.decoder_layers = j.at("decoder_layers").get<int>();
  s.window = j.at("window").get<int>();
  s.tokenizer_extra_feature = j.at("tokenizer_extra_feature").get<bool>();
  s.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  s.initial_std = j.at("initial_std").get<double>();
  s.embedding_init_std = j.at("embedding_init_std").get<double>();
  return s;
}

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(in.good(), "checkpoint: unexpected end of file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  json meta;
  meta["format_version"] = CheckpointData::kFormatVersion;
  meta["algo"] = data.algo;
  meta["seed"] = data.seed;
  meta["env_steps"] = data.env_steps;
  meta["tasks"] = data.tasks;
  meta["disjoint_vocabulary"] = data.disjoint_vocabulary;
  meta["policy_kind"] = data.policy_kind;
  meta["vocab"] = data.vocab_words;
  meta["policy_spec"] = spec_to_json(data.spec);
  if (data.policy_kind == "mlp") {
    meta["mlp_spec"] = json{{"max_flat_dim", data.mlp_spec.max_flat_dim},
                            {"max_actions", data.mlp_spec.max_actions},
                            {"num_tasks", data.mlp_spec.num_tasks},
                            {"task_embedding_dim", data.mlp_spec.task_embedding_dim},
                            {"hidden1", data.mlp_spec.hidden1},
                            {"hidden2", data.mlp_spec.hidden2},
                            {"initial_std", data.mlp_spec.initial_std}};
  }
  json stats = json::object();
  for (const auto& [key, w] : data.obs_stats.stats())
    stats[key] = welford_to_json(w);
  meta["obs_stats"] = stats;
  json rstats = json::object();
  for (const auto& [task, w] : data.reward_stats)
    rstats[std::to_string(task)] = welford_to_json(w);
  meta["reward_stats"] = rstats;
  meta["reward_gamma"] = data.reward_gamma;
  meta["reward_per_task"] = data.reward_per_task;

  ParamSet<float> params;
  if (data.policy_kind == "mlp") {
    check(data.mlp != nullptr, "save_checkpoint: missing mlp policy");
    params = data.mlp->parameters();
  } else {
    check(data.policy != nullptr, "save_checkpoint: missing policy");
    params = data.policy->parameters();
  }
  json plist = json::array();
  for (const auto& p : params.params)
    plist.push_back(json{{"name", p.name()}, {"shape", p.shape()}});
  meta["params"] = plist;

  std::string header = meta.dump();
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write checkpoint to ", path);
  out.write(kMagic, sizeof(kMagic));
  write_raw<uint32_t>(out, CheckpointData::kFormatVersion);
  write_raw<uint32_t>(out, 0x01020304u);  // byte-order marker
  write_raw<uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : params.params)
    out.write(reinterpret_cast<const char*>(p.value().data()),
              static_cast<std::streamsize>(p.numel() * sizeof(float)));
  check(out.good(), "checkpoint write failed: ", path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint ", path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  check(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
        "not a checkpoint file: ", path);
  uint32_t version = read_raw<uint32_t>(in);
  check(version == CheckpointData::kFormatVersion,
        "incompatible checkpoint format version ", version, " (expected ",
        CheckpointData::kFormatVersion, "): ", path);
  uint32_t order = read_raw<uint32_t>(in);
  check(order == 0x01020304u,
        "checkpoint byte order does not match this platform: ", path);
  uint64_t header_len = read_raw<uint64_t>(in);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  check(in.good(), "checkpoint header truncated: ", path);
  json meta = json::parse(header);

  CheckpointData data;
  data.algo = meta.at("algo").get<std::string>();
  data.seed = meta.at("seed").get<uint64_t>();
  data.env_steps = meta.at("env_steps").get<long long>();
  data.tasks = meta.at("tasks").get<std::vector<std::string>>();
  data.disjoint_vocabulary = meta.at("disjoint_vocabulary").get<bool>();
  data.policy_kind = meta.at("policy_kind").get<std::string>();
  data.vocab_words = meta.at("vocab").get<std::vector<std::string>>();
  data.spec = spec_from_json(meta.at("policy_spec"));
  for (auto& [key, value] : meta.at("obs_stats").items())
    data.obs_stats.stats()[key] = welford_from_json(value);
  for (auto& [key, value] : meta.at("reward_stats").items())
    data.reward_stats[std::stoi(key)] = welford_from_json(value);
  data.reward_gamma = meta.at("reward_gamma").get<double>();
  data.reward_per_task = meta.at("reward_per_task").get<bool>();

  ParamSet<float> params;
  if (data.policy_kind == "mlp") {
    const auto& ms = meta.at("mlp_spec");
    data.mlp_spec.max_flat_dim = ms.at("max_flat_dim").get<int>();
    data.mlp_spec.max_actions = ms.at("max_actions").get<int>();
    data.mlp_spec.num_tasks = ms.at("num_tasks").get<int>();
    data.mlp_spec.task_embedding_dim = ms.at("task_embedding_dim").get<int>();
    data.mlp_spec.hidden1 = ms.at("hidden1").get<int>();
    data.mlp_spec.hidden2 = ms.at("hidden2").get<int>();
    data.mlp_spec.initial_std = ms.at("initial_std").get<double>();
    data.mlp = std::make_shared<MlpPolicy<float>>(data.mlp_spec, 0);
    params = data.mlp->parameters();
  } else {
    Vocabulary vocab = Vocabulary::from_words(data.vocab_words);
    data.policy =
        std::make_shared<TransformerPolicy<float>>(vocab, data.spec, 0);
    params = data.policy->parameters();
  }

  const auto& plist = meta.at("params");
  check(plist.size() == params.params.size(),
        "checkpoint parameter list does not match the reconstructed policy");
  for (size_t i = 0; i < params.params.size(); ++i) {
    auto& p = params.params[i];
    check(plist[i].at("name").get<std::string>() == p.name(),
          "checkpoint parameter order mismatch at ", p.name());
    auto shape = plist[i].at("shape").get<std::vector<int>>();
    check(shape == p.shape(), "checkpoint shape mismatch for ", p.name());
    in.read(reinterpret_cast<char*>(p.value().data()),
            static_cast<std::streamsize>(p.numel() * sizeof(float)));
    check(in.good(), "checkpoint arrays truncated at ", p.name());
  }
  return data;
}

}  // namespace mf

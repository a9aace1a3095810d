#include "cap/config.hpp"

#include <cstdlib>
#include <fstream>

#include "cap/util.hpp"

namespace cap {

namespace {

const std::vector<ConfigKeyDoc>& key_table() {
  static const std::vector<ConfigKeyDoc> table = {
      {"model.d_model", "64", "backbone width"},
      {"model.n_layers", "2", "backbone layers"},
      {"model.n_heads", "4", "backbone attention heads"},
      {"model.d_ff", "128", "backbone feed-forward width"},
      {"model.vocab_size", "2048", "max vocabulary ids including the 5 reserved"},
      {"model.vocab_size_effective", "0", "actual id count; written into checkpoints"},
      {"model.max_seq_len", "560", "max sequence length (body + title + specials)"},
      {"model.d_u", "64", "user-vector width"},
      {"model.adapter_enabled", "true", "build context adapters"},
      {"model.adapter_rank", "4", "adapter bottleneck rank"},
      {"model.adapter_dim", "32", "projected context width"},
      {"model.adapter_layers", "all", "layers that fuse context: 'all' or comma list"},
      {"model.upe_layers", "2", "preference-encoder layers"},
      {"model.upe_heads", "2", "preference-encoder heads"},
      {"model.upe_ff", "128", "preference-encoder feed-forward width"},
      {"model.upe_pool", "mean", "history pooling: mean | attn"},
      {"model.upe_positions", "false", "recency position embeddings over history"},
      {"train.epochs", "10", "training epochs"},
      {"train.batch_size", "8", "records per optimizer step"},
      {"train.lr", "5e-05", "AdamW learning rate"},
      {"train.seed", "42", "master seed for all randomness"},
      {"train.lambda1", "0.5", "fact-consistency loss weight"},
      {"train.lambda2", "0.2", "personalization loss weight"},
      {"train.beta1", "0.9", "AdamW beta1"},
      {"train.beta2", "0.999", "AdamW beta2"},
      {"train.eps", "1e-08", "AdamW epsilon"},
      {"train.weight_decay", "0.01", "decoupled weight decay"},
      {"train.clip_norm", "1", "global gradient-norm clip"},
      {"train.upe", "true", "ablation flag: user preference encoder"},
      {"train.cia", "true", "ablation flag: context injection adapter"},
      {"train.fcrm", "true", "ablation flag: fact-consistency loss"},
      {"train.pers", "true", "ablation flag: personalization loss"},
      {"train.history_cap", "50", "max history entries per user"},
      {"train.two_phase", "false", "phase 1 trains the backbone LM only"},
      {"train.phase1_epochs", "5", "epochs in phase 1 when two_phase"},
      {"data.title_cap", "30", "max headline tokens"},
      {"data.body_cap", "500", "max body tokens"},
      {"fact.tau", "0.1", "contrastive temperature"},
      {"fact.negatives", "4", "negatives per anchor"},
      {"fact.window", "10", "segment window tokens"},
      {"fact.stride", "5", "segment window stride"},
      {"metrics.support_threshold", "0.5", "bag-of-words support cutoff"},
      {"gen.max_len", "30", "max generated headline tokens"},
      {"synth.n_users", "16", "synthetic users"},
      {"synth.topics", "4", "synthetic topics"},
      {"synth.history_min", "2", "min history articles per user"},
      {"synth.history_max", "4", "max history articles per user"},
      {"synth.body_sentences_min", "2", "min body sentences"},
      {"synth.body_sentences_max", "3", "max body sentences"},
      {"synth.sentence_len_min", "6", "min words per sentence"},
      {"synth.sentence_len_max", "9", "max words per sentence"},
      {"synth.headline_len_min", "3", "min headline words"},
      {"synth.headline_len_max", "5", "max headline words"},
      {"synth.secondary_sentences", "1", "distractor sentences in the current body"},
      {"synth.primary_prob", "0.9", "history token fidelity to the primary topic"},
  };
  return table;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& doc : key_table()) values_[doc.key] = doc.default_value;
}

const std::vector<ConfigKeyDoc>& RunConfig::key_docs() { return key_table(); }

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) fail("config: unknown key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail("config: unknown key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  return static_cast<int>(std::strtol(get(key).c_str(), nullptr, 10));
}

double RunConfig::get_double(const std::string& key) const {
  return std::strtod(get(key).c_str(), nullptr);
}

bool RunConfig::get_bool(const std::string& key) const { return parse_bool(key, get(key)); }

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return std::strtoull(get(key).c_str(), nullptr, 10);
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto pos = t.find('=');
    if (pos == std::string::npos)
      fail("config file line " + std::to_string(line_no) + ": expected key=value, got '" + t +
           "'");
    try {
      set(trim(t.substr(0, pos)), trim(t.substr(pos + 1)));
    } catch (const std::exception& e) {
      fail("config file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::apply_override(const std::string& key_eq_value) {
  const auto pos = key_eq_value.find('=');
  if (pos == std::string::npos)
    fail("config override: expected key=value, got '" + key_eq_value + "'");
  set(trim(key_eq_value.substr(0, pos)), trim(key_eq_value.substr(pos + 1)));
}

void RunConfig::apply_preset(const std::string& name) {
  if (name == "paper") return;  // the defaults already follow the reference recipe
  if (name == "micro") {
    set("model.d_model", "32");
    set("model.n_heads", "2");
    set("model.d_ff", "64");
    set("model.vocab_size", "512");
    set("model.max_seq_len", "96");
    set("model.d_u", "32");
    set("model.adapter_dim", "16");
    set("model.upe_layers", "2");
    set("model.upe_heads", "2");
    set("model.upe_ff", "64");
    set("train.lr", "0.002");
    set("train.weight_decay", "0");
    set("train.epochs", "30");
    return;
  }
  fail("config: unknown preset '" + name + "' (expected micro|paper)");
}

void RunConfig::apply_map(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) set(k, v);
}

ModelConfig RunConfig::model_config(int effective_vocab) const {
  ModelConfig mc;
  mc.backbone.d_model = get_int("model.d_model");
  mc.backbone.n_layers = get_int("model.n_layers");
  mc.backbone.n_heads = get_int("model.n_heads");
  mc.backbone.d_ff = get_int("model.d_ff");
  const int configured_effective = get_int("model.vocab_size_effective");
  mc.backbone.vocab_size = effective_vocab > 0 ? effective_vocab
                           : configured_effective > 0 ? configured_effective
                                                      : get_int("model.vocab_size");
  mc.backbone.max_seq_len = get_int("model.max_seq_len");

  mc.upe.enabled = get_bool("train.upe");
  mc.upe.d_model = mc.backbone.d_model;
  mc.upe.d_u = get_int("model.d_u");
  mc.upe.n_layers = get_int("model.upe_layers");
  mc.upe.n_heads = get_int("model.upe_heads");
  mc.upe.d_ff = get_int("model.upe_ff");
  const std::string pool = get("model.upe_pool");
  if (pool != "mean" && pool != "attn")
    fail("config: model.upe_pool must be mean|attn, got '" + pool + "'");
  mc.upe.attn_pool = pool == "attn";
  mc.upe.positions = get_bool("model.upe_positions");
  mc.upe.max_history = get_int("train.history_cap");

  mc.adapter.enabled = get_bool("model.adapter_enabled") && get_bool("train.cia");
  mc.adapter.d_model = mc.backbone.d_model;
  mc.adapter.d_u = mc.upe.d_u;
  mc.adapter.d_a = get_int("model.adapter_dim");
  mc.adapter.rank = get_int("model.adapter_rank");
  const std::string layers = get("model.adapter_layers");
  if (layers == "all") {
    for (int l = 0; l < mc.backbone.n_layers; ++l) mc.adapter.layers.push_back(l);
  } else {
    for (const auto& part : split(layers, ',')) {
      if (trim(part).empty()) continue;
      const int l = static_cast<int>(std::strtol(trim(part).c_str(), nullptr, 10));
      if (l < 0 || l >= mc.backbone.n_layers)
        fail("config: adapter layer " + std::to_string(l) + " out of range");
      mc.adapter.layers.push_back(l);
    }
  }

  mc.fact.tau = get_double("fact.tau");
  mc.fact.negatives = get_int("fact.negatives");
  mc.fact.window = get_int("fact.window");
  mc.fact.stride = get_int("fact.stride");
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.epochs = get_int("train.epochs");
  tc.batch_size = get_int("train.batch_size");
  tc.lr = get_double("train.lr");
  tc.beta1 = get_double("train.beta1");
  tc.beta2 = get_double("train.beta2");
  tc.eps = get_double("train.eps");
  tc.weight_decay = get_double("train.weight_decay");
  tc.clip_norm = get_double("train.clip_norm");
  tc.seed = get_u64("train.seed");
  tc.weights.lambda1 = get_double("train.lambda1");
  tc.weights.lambda2 = get_double("train.lambda2");
  tc.flags.upe = get_bool("train.upe");
  tc.flags.cia = get_bool("train.cia");
  tc.flags.fcrm = get_bool("train.fcrm");
  tc.flags.pers = get_bool("train.pers");
  tc.history_cap = get_int("train.history_cap");
  tc.two_phase = get_bool("train.two_phase");
  tc.phase1_epochs = get_int("train.phase1_epochs");
  return tc;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig sc;
  sc.seed = get_u64("train.seed");
  sc.n_users = get_int("synth.n_users");
  sc.topics = get_int("synth.topics");
  sc.history_min = get_int("synth.history_min");
  sc.history_max = get_int("synth.history_max");
  sc.body_sentences_min = get_int("synth.body_sentences_min");
  sc.body_sentences_max = get_int("synth.body_sentences_max");
  sc.sentence_len_min = get_int("synth.sentence_len_min");
  sc.sentence_len_max = get_int("synth.sentence_len_max");
  sc.headline_len_min = get_int("synth.headline_len_min");
  sc.headline_len_max = get_int("synth.headline_len_max");
  sc.secondary_sentences = get_int("synth.secondary_sentences");
  sc.primary_prob = get_double("synth.primary_prob");
  return sc;
}

Caps RunConfig::caps() const {
  Caps c;
  c.history_cap = get_int("train.history_cap");
  c.title_cap = get_int("data.title_cap");
  c.body_cap = get_int("data.body_cap");
  return c;
}

EvalConfig RunConfig::eval_config() const {
  EvalConfig ec;
  ec.max_headline_len = get_int("gen.max_len");
  ec.support_threshold = get_double("metrics.support_threshold");
  ec.window = get_int("fact.window");
  ec.stride = get_int("fact.stride");
  return ec;
}

}  // namespace cap

#pragma once

#include <map>
#include <string>
#include <vector>

#include "cap/metrics.hpp"
#include "cap/model.hpp"
#include "cap/synth.hpp"
#include "cap/training.hpp"

namespace cap {

struct ConfigKeyDoc {
  const char* key;
  const char* default_value;
  const char* doc;
};

/// Flat key=value run configuration with documented defaults. Unknown keys
/// are rejected everywhere (files, overrides, checkpoints).
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKeyDoc>& key_docs();

  void apply_file(const std::string& path);
  void apply_override(const std::string& key_eq_value);  // "train.lr=1e-3"
  void apply_preset(const std::string& name);            // "micro" | "paper"
  void apply_map(const std::map<std::string, std::string>& kv);

  void set(const std::string& key, const std::string& value);
  bool is_explicit(const std::string& key) const;  // set after construction
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  std::map<std::string, std::string> to_map() const { return values_; }

  /// Typed views. `effective_vocab` overrides the configured cap when > 0
  /// (it is the actual id count of a built vocabulary).
  ModelConfig model_config(int effective_vocab) const;
  TrainConfig train_config() const;
  SynthConfig synth_config() const;
  Caps caps() const;
  EvalConfig eval_config() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

}  // namespace cap

#pragma once

#include <map>
#include <string>
#include <vector>

#include "cap/optim.hpp"
#include "cap/text.hpp"

namespace cap {

/// Plain-text checkpoint: a config block, the vocabulary, and a flat
/// name -> (shape, float list) map. Doubles use %.17g so reload is
/// bit-exact; see README for the grammar.
void save_checkpoint(const std::string& path,
                     const std::map<std::string, std::string>& config, const Vocab& vocab,
                     const ParamStore& params);

struct LoadedCheckpoint {
  std::map<std::string, std::string> config;
  std::vector<std::string> vocab_tokens;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copies loaded tensors into a freshly built store. Every loaded tensor
/// must match an existing parameter in name and shape, and vice versa.
void restore_params(ParamStore& params, const LoadedCheckpoint& cp);

}  // namespace cap

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cap/data.hpp"

namespace cap {

/// Deterministic topical corpus: every user gets a primary topic whose word
/// pool dominates their click history; the current article mixes the primary
/// topic with a distractor topic, and the reference headline picks primary
/// words that are guaranteed to appear in the body.
struct SynthConfig {
  std::uint64_t seed = 42;
  int n_users = 16;
  int topics = 4;
  int history_min = 2;
  int history_max = 4;
  int body_sentences_min = 2;
  int body_sentences_max = 3;
  int sentence_len_min = 6;
  int sentence_len_max = 9;
  int headline_len_min = 3;
  int headline_len_max = 5;
  int secondary_sentences = 1;    // distractor sentences in the current body
  double primary_prob = 0.9;      // per-token pool fidelity in the history
};

/// Word pool for one topic; pools are mutually disjoint.
std::vector<std::string> topic_pool(int topic);
std::string topic_name(int topic);

std::vector<RawRecord> synth_records(const SynthConfig& cfg);
void generate_synthetic_corpus(const SynthConfig& cfg, const std::string& out_path);

}  // namespace cap

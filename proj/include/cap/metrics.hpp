#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cap/fact.hpp"
#include "cap/model.hpp"
#include "cap/text.hpp"

namespace cap {

using Words = std::vector<std::string>;

/// Clipped n-gram F1 x 100; 0 when either side has no n-grams.
double rouge_n(const Words& gen, const Words& ref, int n);

/// LCS-based F1 x 100 via dynamic programming; 0 on empty input.
double rouge_l(const Words& gen, const Words& ref);

/// Unigram-F1 of the generation against each history headline; returns
/// (mean, max) x 100. Errors on empty history.
std::pair<double, double> pc_scores(const Words& gen, const std::vector<Words>& history);

/// Deterministic factual-support ratio: a generated segment counts as
/// supported when its best bag-of-words cosine against any body segment
/// reaches the threshold. This is a stand-in score, not the trained FactCC
/// classifier.
double factcc_proxy(const Words& gen, const Words& body, double threshold = 0.5,
                    int window = 10, int stride = 5);

struct MetricsReport {
  double pc_avg = 0.0;
  double pc_max = 0.0;
  double factcc = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  int n_examples = 0;

  std::string to_json() const;
  std::string to_table() const;  // aligned columns in report order
};

struct EvalConfig {
  int max_headline_len = 30;
  double support_threshold = 0.5;
  int window = 10;
  int stride = 5;
};

/// Generates one headline per record and macro-averages all metrics.
MetricsReport evaluate(const Model& model, const std::vector<UserRecord>& records,
                       const Vocab& vocab, const EvalConfig& cfg);

/// Metric view of generated ids: content-token strings, reserved ids dropped.
Words ids_to_words(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace cap

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cap/tensor.hpp"

namespace cap {

struct FactConfig {
  double tau = 0.1;
  int negatives = 4;
  int window = 10;
  int stride = 5;
};

struct TokenSpan {
  int begin = 0;
  int end = 0;  // exclusive
  int length() const { return end - begin; }
};

enum class SegmentSource { kGenerated, kBody, kForeign };

struct Segment {
  TokenSpan span;
  SegmentSource source = SegmentSource::kBody;
  Tensor embedding;
};

/// Splits on sentence punctuation, then slides fixed windows over sentences
/// longer than `window`. The final window is clipped to the sentence end.
template <typename Token>
std::vector<TokenSpan> segment_spans(const std::vector<Token>& tokens,
                                     const std::function<bool(const Token&)>& is_punct,
                                     int window, int stride) {
  std::vector<TokenSpan> spans;
  const int n = static_cast<int>(tokens.size());
  int start = 0;
  auto flush = [&](int begin, int end) {
    const int len = end - begin;
    if (len <= 0) return;
    if (len <= window) {
      spans.push_back({begin, end});
      return;
    }
    for (int s = 0;; s += stride) {
      if (s + window >= len) {
        spans.push_back({begin + s, end});
        break;
      }
      spans.push_back({begin + s, begin + s + window});
    }
  };
  for (int i = 0; i < n; ++i) {
    if (is_punct(tokens[static_cast<std::size_t>(i)])) {
      flush(start, i);
      start = i + 1;
    }
  }
  flush(start, n);
  return spans;
}

/// Cosine similarity on plain value vectors (mining-side; not differentiable).
double cosine_value(const std::vector<double>& a, const std::vector<double>& b);

/// Index of the body segment most similar to the anchor; ties break toward
/// the earliest span start.
int mine_positive(const Segment& anchor, const std::vector<Segment>& body_segments);

/// ceil(K/2) seeded uniform draws from the foreign pool plus floor(K/2)
/// least-similar intra-body segments (mined positive excluded). Quotas spill
/// over to the other side when one pool runs short.
std::vector<Segment> sample_negatives(const Segment& anchor,
                                      const std::vector<Segment>& body_segments,
                                      int positive_index,
                                      const std::vector<Segment>& foreign_pool, int k,
                                      std::uint64_t seed);

/// InfoNCE over one anchor: -log( e^{s+/tau} / (e^{s+/tau} + sum e^{s-/tau}) ).
Tensor contrastive_loss(const Tensor& anchor, const Tensor& positive,
                        const std::vector<Tensor>& negatives, double tau);

}  // namespace cap

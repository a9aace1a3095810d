#include "cap/fact.hpp"

#include <algorithm>
#include <cmath>

#include "cap/util.hpp"

namespace cap {

double cosine_value(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) fail("cosine_value: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

int mine_positive(const Segment& anchor, const std::vector<Segment>& body_segments) {
  if (body_segments.empty()) fail("mine_positive: no body segments");
  int best = 0;
  double best_sim = -2.0;
  for (std::size_t i = 0; i < body_segments.size(); ++i) {
    const double sim = cosine_value(anchor.embedding.data(), body_segments[i].embedding.data());
    const bool better =
        sim > best_sim ||
        (sim == best_sim && body_segments[i].span.begin < body_segments[static_cast<std::size_t>(best)].span.begin);
    if (better) {
      best = static_cast<int>(i);
      best_sim = sim;
    }
  }
  return best;
}

std::vector<Segment> sample_negatives(const Segment& anchor,
                                      const std::vector<Segment>& body_segments,
                                      int positive_index,
                                      const std::vector<Segment>& foreign_pool, int k,
                                      std::uint64_t seed) {
  if (k < 1) fail("sample_negatives: k must be >= 1");
  std::vector<int> body_candidates;
  for (std::size_t i = 0; i < body_segments.size(); ++i)
    if (static_cast<int>(i) != positive_index) body_candidates.push_back(static_cast<int>(i));

  if (foreign_pool.empty() && static_cast<int>(body_candidates.size()) < k)
    fail("sample_negatives: shortfall: need " + std::to_string(k) + ", available " +
         std::to_string(body_candidates.size()) + " (foreign 0, body " +
         std::to_string(body_candidates.size()) + ")");

  int foreign_quota = (k + 1) / 2;
  int body_quota = k / 2;
  if (foreign_pool.empty()) {
    body_quota = k;
    foreign_quota = 0;
  } else if (static_cast<int>(body_candidates.size()) < body_quota) {
    foreign_quota += body_quota - static_cast<int>(body_candidates.size());
    body_quota = static_cast<int>(body_candidates.size());
  }

  std::vector<Segment> out;
  Rng rng(seed);
  if (foreign_quota > 0) {
    const int pool = static_cast<int>(foreign_pool.size());
    if (pool >= foreign_quota) {
      // uniform without replacement
      std::vector<int> idx(static_cast<std::size_t>(pool));
      for (int i = 0; i < pool; ++i) idx[static_cast<std::size_t>(i)] = i;
      rng.shuffle(idx);
      for (int i = 0; i < foreign_quota; ++i) {
        Segment s = foreign_pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        s.source = SegmentSource::kForeign;
        out.push_back(std::move(s));
      }
    } else {
      for (int i = 0; i < foreign_quota; ++i) {
        Segment s = foreign_pool[static_cast<std::size_t>(rng.uniform_int(0, pool - 1))];
        s.source = SegmentSource::kForeign;
        out.push_back(std::move(s));
      }
    }
  }
  if (body_quota > 0) {
    // least-similar intra-body candidates, ties toward earliest span
    std::vector<std::pair<double, int>> ranked;
    for (int idx : body_candidates)
      ranked.emplace_back(
          cosine_value(anchor.embedding.data(), body_segments[static_cast<std::size_t>(idx)].embedding.data()),
          idx);
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return body_segments[static_cast<std::size_t>(a.second)].span.begin <
             body_segments[static_cast<std::size_t>(b.second)].span.begin;
    });
    for (int i = 0; i < body_quota; ++i)
      out.push_back(body_segments[static_cast<std::size_t>(ranked[static_cast<std::size_t>(i)].second)]);
  }
  return out;
}

Tensor contrastive_loss(const Tensor& anchor, const Tensor& positive,
                        const std::vector<Tensor>& negatives, double tau) {
  if (tau <= 0.0) fail("contrastive_loss: temperature must be positive");
  if (negatives.empty()) fail("contrastive_loss: need at least one negative");
  std::vector<Tensor> sims;
  sims.push_back(cosine_similarity(anchor, positive));
  for (const auto& n : negatives) sims.push_back(cosine_similarity(anchor, n));
  Tensor scaled = scale(stack_scalars(sims), 1.0 / tau);
  return sub(log_sum_exp(scaled), scale(sims[0], 1.0 / tau));
}

}  // namespace cap

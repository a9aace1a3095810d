#include "cap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "cap/util.hpp"
#include "json.hpp"

namespace cap {

namespace {

std::map<std::string, int> ngram_counts(const Words& toks, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += toks[i + static_cast<std::size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

double f1(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

double bow_cosine(const Words& a, const Words& b) {
  std::map<std::string, int> ca, cb;
  for (const auto& t : a) ++ca[t];
  for (const auto& t : b) ++cb[t];
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [tok, c] : ca) {
    na += static_cast<double>(c) * c;
    auto it = cb.find(tok);
    if (it != cb.end()) dot += static_cast<double>(c) * it->second;
  }
  for (const auto& [tok, c] : cb) nb += static_cast<double>(c) * c;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<TokenSpan> word_segments(const Words& toks, int window, int stride) {
  std::function<bool(const std::string&)> punct = [](const std::string& t) {
    return Vocab::is_sentence_punct_token(t);
  };
  return segment_spans<std::string>(toks, punct, window, stride);
}

Words slice(const Words& toks, const TokenSpan& span) {
  return Words(toks.begin() + span.begin, toks.begin() + span.end);
}

}  // namespace

double rouge_n(const Words& gen, const Words& ref, int n) {
  if (n < 1) fail("rouge_n: n must be >= 1");
  const auto cg = ngram_counts(gen, n);
  const auto cr = ngram_counts(ref, n);
  long gen_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [k, c] : cg) gen_total += c;
  for (const auto& [k, c] : cr) ref_total += c;
  if (gen_total == 0 || ref_total == 0) return 0.0;
  for (const auto& [k, c] : cg) {
    auto it = cr.find(k);
    if (it != cr.end()) overlap += std::min(c, it->second);
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(gen_total);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  return 100.0 * f1(p, r);
}

double rouge_l(const Words& gen, const Words& ref) {
  const std::size_t m = gen.size(), n = ref.size();
  if (m == 0 || n == 0) return 0.0;
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (gen[i - 1] == ref[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const int lcs = prev[n];
  const double p = static_cast<double>(lcs) / static_cast<double>(m);
  const double r = static_cast<double>(lcs) / static_cast<double>(n);
  return 100.0 * f1(p, r);
}

std::pair<double, double> pc_scores(const Words& gen, const std::vector<Words>& history) {
  if (history.empty()) fail("pc_scores: undefined metric for empty history");
  double sum = 0.0, best = 0.0;
  for (const auto& h : history) {
    const double c = rouge_n(gen, h, 1);
    sum += c;
    best = std::max(best, c);
  }
  return {sum / static_cast<double>(history.size()), best};
}

double factcc_proxy(const Words& gen, const Words& body, double threshold, int window,
                    int stride) {
  if (body.empty()) fail("factcc_proxy: empty body");
  const auto gen_spans = word_segments(gen, window, stride);
  if (gen_spans.empty()) return 0.0;
  const auto body_spans = word_segments(body, window, stride);
  int supported = 0;
  for (const auto& gs : gen_spans) {
    const Words g = slice(gen, gs);
    double best = 0.0;
    for (const auto& bs : body_spans) best = std::max(best, bow_cosine(g, slice(body, bs)));
    if (best >= threshold) ++supported;
  }
  return 100.0 * static_cast<double>(supported) / static_cast<double>(gen_spans.size());
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json obj;
  obj["pc_avg"] = pc_avg;
  obj["pc_max"] = pc_max;
  obj["factcc"] = factcc;
  obj["rouge1"] = rouge1;
  obj["rouge2"] = rouge2;
  obj["rougeL"] = rougeL;
  obj["n_examples"] = n_examples;
  return obj.dump();
}

std::string MetricsReport::to_table() const {
  char buf[256];
  std::string out = "Pc(avg)   Pc(max)   FactCC    ROUGE-1   ROUGE-2   ROUGE-L   N\n";
  std::snprintf(buf, sizeof(buf), "%-9.2f %-9.2f %-9.2f %-9.2f %-9.2f %-9.2f %d\n", pc_avg,
                pc_max, factcc, rouge1, rouge2, rougeL, n_examples);
  return out + buf;
}

Words ids_to_words(const std::vector<int>& ids, const Vocab& vocab) {
  Words out;
  for (int id : ids)
    if (id >= Vocab::kReserved && id < vocab.size()) out.push_back(vocab.token(id));
  return out;
}

MetricsReport evaluate(const Model& model, const std::vector<UserRecord>& records,
                       const Vocab& vocab, const EvalConfig& cfg) {
  if (records.empty()) fail("evaluate: empty dataset");
  MetricsReport rep;
  double pc_avg_sum = 0.0, pc_max_sum = 0.0, fact_sum = 0.0;
  double r1_sum = 0.0, r2_sum = 0.0, rl_sum = 0.0;
  int pc_count = 0, fact_count = 0;
  for (const auto& rec : records) {
    const std::vector<int> gen_ids = model.generate_for(rec, cfg.max_headline_len);
    const Words gen = ids_to_words(gen_ids, vocab);
    const Words ref = Vocab::word_split(rec.raw_reference);
    r1_sum += rouge_n(gen, ref, 1);
    r2_sum += rouge_n(gen, ref, 2);
    rl_sum += rouge_l(gen, ref);
    if (!rec.history.empty()) {
      std::vector<Words> heads;
      for (const auto& art : rec.history) heads.push_back(Vocab::word_split(art.raw_headline));
      const auto [avg, mx] = pc_scores(gen, heads);
      pc_avg_sum += avg;
      pc_max_sum += mx;
      ++pc_count;
    }
    const Words body = Vocab::word_split(rec.current.raw_body);
    if (!body.empty()) {
      fact_sum += factcc_proxy(gen, body, cfg.support_threshold, cfg.window, cfg.stride);
      ++fact_count;
    }
  }
  const auto n = static_cast<double>(records.size());
  rep.rouge1 = r1_sum / n;
  rep.rouge2 = r2_sum / n;
  rep.rougeL = rl_sum / n;
  rep.pc_avg = pc_count ? pc_avg_sum / pc_count : 0.0;
  rep.pc_max = pc_count ? pc_max_sum / pc_count : 0.0;
  rep.factcc = fact_count ? fact_sum / fact_count : 0.0;
  rep.n_examples = static_cast<int>(records.size());
  return rep;
}

}  // namespace cap

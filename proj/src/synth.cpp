#include "cap/synth.hpp"

#include <algorithm>

#include "cap/util.hpp"

namespace cap {

namespace {

struct Pool {
  const char* name;
  const char* words[24];
};

const Pool kPools[] = {
    {"sports",
     {"match", "coach", "season", "playoff", "stadium", "striker", "goal", "defense",
      "tournament", "champion", "roster", "injury", "victory", "derby", "league", "transfer",
      "keeper", "midfield", "referee", "fans", "training", "overtime", "title", "comeback"}},
    {"markets",
     {"stocks", "shares", "investors", "earnings", "profit", "quarterly", "trading", "bonds",
      "inflation", "rates", "fed", "rally", "selloff", "dividend", "forecast", "growth",
      "deficit", "currency", "hedge", "portfolio", "ipo", "valuation", "merger", "index"}},
    {"technology",
     {"software", "startup", "chip", "processor", "cloud", "data", "privacy", "platform",
      "update", "device", "battery", "network", "encryption", "robot", "sensor", "algorithm",
      "silicon", "browser", "gadget", "interface", "wireless", "server", "code", "launch"}},
    {"health",
     {"patients", "doctors", "vaccine", "therapy", "clinical", "trial", "diet", "wellness",
      "symptoms", "hospital", "nurses", "treatment", "recovery", "mental", "anxiety", "fitness",
      "nutrition", "sleep", "virus", "immunity", "screening", "surgery", "chronic", "dose"}},
    {"climate",
     {"emissions", "carbon", "renewable", "solar", "wind", "drought", "wildfire", "glacier",
      "warming", "policy", "energy", "grid", "storm", "flood", "conservation", "habitat",
      "pollution", "recycling", "sustainability", "forest", "ocean", "temperature", "methane",
      "targets"}},
    {"film",
     {"director", "premiere", "sequel", "actor", "screenplay", "studio", "boxoffice", "trailer",
      "casting", "festival", "drama", "comedy", "thriller", "documentary", "animation", "scene",
      "script", "audience", "award", "critics", "franchise", "producer", "soundtrack", "debut"}},
    {"travel",
     {"airline", "flight", "passport", "resort", "tourism", "itinerary", "luggage",
      "destination", "cruise", "hotel", "booking", "airfare", "island", "museum", "landmark",
      "adventure", "backpacking", "visa", "border", "beach", "mountain", "culture", "guide",
      "journey"}},
    {"science",
     {"researchers", "study", "physics", "particle", "telescope", "orbit", "genome", "bacteria",
      "experiment", "laboratory", "theory", "quantum", "fossil", "neuron", "molecule",
      "asteroid", "satellite", "mission", "discovery", "evidence", "hypothesis", "journal",
      "sample", "observation"}},
};

constexpr int kCuratedTopics = static_cast<int>(sizeof(kPools) / sizeof(kPools[0]));
constexpr int kPoolSize = 24;

std::string pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
}

/// Token-wise topical mixing: primary pool with probability p, any other
/// topic otherwise.
std::string mixed_word(int primary, int topics, double p, Rng& rng) {
  int topic = primary;
  if (topics > 1 && rng.uniform_real() >= p) {
    topic = rng.uniform_int(0, topics - 2);
    if (topic >= primary) ++topic;
  }
  return pick(topic_pool(topic), rng);
}

std::string make_sentence(int primary, int topics, double p, int len, Rng& rng) {
  std::vector<std::string> words;
  for (int i = 0; i < len; ++i) words.push_back(mixed_word(primary, topics, p, rng));
  return join(words, " ") + " .";
}

std::vector<std::string> sample_distinct(const std::vector<std::string>& pool, int n, Rng& rng) {
  std::vector<std::string> bag = pool;
  rng.shuffle(bag);
  bag.resize(static_cast<std::size_t>(std::min<int>(n, static_cast<int>(bag.size()))));
  return bag;
}

}  // namespace

std::string topic_name(int topic) {
  if (topic < kCuratedTopics) return kPools[topic].name;
  return "topic" + std::to_string(topic);
}

std::vector<std::string> topic_pool(int topic) {
  std::vector<std::string> out;
  if (topic < kCuratedTopics) {
    for (const char* w : kPools[topic].words) out.emplace_back(w);
    return out;
  }
  for (int i = 0; i < kPoolSize; ++i)
    out.push_back("t" + std::to_string(topic) + "w" + std::to_string(i));
  return out;
}

std::vector<RawRecord> synth_records(const SynthConfig& cfg) {
  if (cfg.topics < 2) fail("synth: need at least 2 topics");
  if (cfg.n_users < 1) fail("synth: need at least 1 user");
  std::vector<RawRecord> records;
  for (int u = 0; u < cfg.n_users; ++u) {
    Rng rng(derive_seed(cfg.seed, "synth-user", static_cast<std::uint64_t>(u)));
    const int primary = u % cfg.topics;
    int secondary = rng.uniform_int(0, cfg.topics - 2);
    if (secondary >= primary) ++secondary;
    const auto pool = topic_pool(primary);
    const auto sec_pool = topic_pool(secondary);

    RawRecord rec;
    rec.user_id = "u" + std::to_string(10000 + u).substr(1) + "_" + topic_name(primary);

    const int n_hist = rng.uniform_int(cfg.history_min, cfg.history_max);
    for (int h = 0; h < n_hist; ++h) {
      RawArticle art;
      std::vector<std::string> head;
      const int hl = rng.uniform_int(cfg.headline_len_min, cfg.headline_len_max);
      for (int i = 0; i < hl; ++i)
        head.push_back(mixed_word(primary, cfg.topics, cfg.primary_prob, rng));
      art.headline = join(head, " ");
      std::vector<std::string> sentences;
      const int ns = rng.uniform_int(cfg.body_sentences_min, cfg.body_sentences_max);
      for (int s = 0; s < ns; ++s)
        sentences.push_back(make_sentence(primary, cfg.topics, cfg.primary_prob,
                                          rng.uniform_int(cfg.sentence_len_min,
                                                          cfg.sentence_len_max),
                                          rng));
      art.body = join(sentences, " ");
      rec.history.push_back(std::move(art));
    }

    // Reference words first, then a body built to contain all of them.
    const int hl = rng.uniform_int(cfg.headline_len_min, cfg.headline_len_max);
    const auto ref_words = sample_distinct(pool, hl, rng);
    rec.reference_headline = join(ref_words, " ");

    std::vector<std::string> sentences;
    const int ns = rng.uniform_int(cfg.body_sentences_min, cfg.body_sentences_max);
    std::vector<std::string> primary_words = ref_words;
    while (static_cast<int>(primary_words.size()) < ns * cfg.sentence_len_min)
      primary_words.push_back(pick(pool, rng));
    rng.shuffle(primary_words);
    const int per = static_cast<int>(primary_words.size()) / ns;
    std::size_t cursor = 0;
    for (int s = 0; s < ns; ++s) {
      const int take = (s == ns - 1) ? static_cast<int>(primary_words.size() - cursor) : per;
      std::vector<std::string> words(primary_words.begin() + static_cast<long>(cursor),
                                     primary_words.begin() + static_cast<long>(cursor) + take);
      cursor += static_cast<std::size_t>(take);
      sentences.push_back(join(words, " ") + " .");
    }
    for (int s = 0; s < cfg.secondary_sentences; ++s) {
      std::vector<std::string> words;
      const int len = rng.uniform_int(cfg.sentence_len_min, cfg.sentence_len_max);
      for (int i = 0; i < len; ++i) words.push_back(pick(sec_pool, rng));
      sentences.push_back(join(words, " ") + " .");
    }
    rng.shuffle(sentences);
    rec.current_body = join(sentences, " ");
    records.push_back(std::move(rec));
  }
  return records;
}

void generate_synthetic_corpus(const SynthConfig& cfg, const std::string& out_path) {
  save_dataset(synth_records(cfg), out_path);
}

}  // namespace cap

#include "cap/data.hpp"

#include <fstream>

#include "cap/util.hpp"
#include "json.hpp"

namespace cap {

namespace {

using nlohmann::ordered_json;

std::string require_string(const ordered_json& obj, const char* field, long line) {
  if (!obj.contains(field))
    fail("line " + std::to_string(line) + ": missing field '" + field + "'");
  if (!obj[field].is_string())
    fail("line " + std::to_string(line) + ": field '" + field + "' must be a string");
  return obj[field].get<std::string>();
}

PaddedBlock pad_block(const std::vector<std::vector<int>>& rows) {
  PaddedBlock block;
  block.width = 0;
  for (const auto& r : rows) block.width = std::max(block.width, static_cast<int>(r.size()));
  for (const auto& r : rows) {
    std::vector<int> padded(static_cast<std::size_t>(block.width), Vocab::kPad);
    std::vector<double> mask(static_cast<std::size_t>(block.width), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      padded[i] = r[i];
      mask[i] = 1.0;
    }
    block.tokens.push_back(std::move(padded));
    block.mask.push_back(std::move(mask));
    block.lengths.push_back(static_cast<int>(r.size()));
  }
  return block;
}

}  // namespace

std::vector<RawRecord> load_raw_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open dataset: " + path);
  std::vector<RawRecord> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ordered_json obj;
    try {
      obj = ordered_json::parse(line);
    } catch (const std::exception& e) {
      fail("line " + std::to_string(line_no) + ": JSON parse error: " + e.what());
    }
    RawRecord rec;
    rec.user_id = require_string(obj, "user_id", line_no);
    if (!obj.contains("history"))
      fail("line " + std::to_string(line_no) + ": missing field 'history'");
    if (!obj["history"].is_array())
      fail("line " + std::to_string(line_no) + ": field 'history' must be an array");
    for (const auto& item : obj["history"]) {
      RawArticle art;
      art.headline = require_string(item, "headline", line_no);
      art.body = require_string(item, "body", line_no);
      rec.history.push_back(std::move(art));
    }
    if (!obj.contains("current"))
      fail("line " + std::to_string(line_no) + ": missing field 'current'");
    const auto& cur = obj["current"];
    rec.current_body = require_string(cur, "body", line_no);
    if (cur.contains("headline")) rec.current_headline = cur["headline"].get<std::string>();
    rec.reference_headline = require_string(obj, "reference_headline", line_no);
    if (trim(rec.reference_headline).empty())
      fail("line " + std::to_string(line_no) + ": field 'reference_headline' is empty");
    out.push_back(std::move(rec));
  }
  return out;
}

void save_dataset(const std::vector<RawRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write dataset: " + path);
  for (const auto& rec : records) {
    ordered_json obj;
    obj["user_id"] = rec.user_id;
    obj["history"] = ordered_json::array();
    for (const auto& art : rec.history) {
      ordered_json item;
      item["headline"] = art.headline;
      item["body"] = art.body;
      obj["history"].push_back(item);
    }
    ordered_json cur;
    if (!rec.current_headline.empty()) cur["headline"] = rec.current_headline;
    cur["body"] = rec.current_body;
    obj["current"] = cur;
    obj["reference_headline"] = rec.reference_headline;
    out << obj.dump() << "\n";
  }
}

std::vector<std::string> corpus_texts(const std::vector<RawRecord>& records) {
  std::vector<std::string> out;
  for (const auto& rec : records) {
    for (const auto& art : rec.history) {
      out.push_back(art.headline);
      out.push_back(art.body);
    }
    if (!rec.current_headline.empty()) out.push_back(rec.current_headline);
    out.push_back(rec.current_body);
    out.push_back(rec.reference_headline);
  }
  return out;
}

UserRecord tokenize_record(const RawRecord& raw, const Vocab& vocab) {
  UserRecord rec;
  rec.user_id = raw.user_id;
  for (const auto& art : raw.history) {
    Article a;
    a.headline = vocab.encode(art.headline);
    a.body = vocab.encode(art.body);
    a.raw_headline = art.headline;
    a.raw_body = art.body;
    rec.history.push_back(std::move(a));
  }
  rec.current.headline = vocab.encode(raw.current_headline);
  rec.current.body = vocab.encode(raw.current_body);
  rec.current.raw_headline = raw.current_headline;
  rec.current.raw_body = raw.current_body;
  rec.reference = vocab.encode(raw.reference_headline);
  rec.raw_reference = raw.reference_headline;
  return rec;
}

UserRecord truncate_record(UserRecord record, const Caps& caps) {
  auto cut = [](std::vector<int>& v, int cap) {
    if (static_cast<int>(v.size()) > cap) v.resize(static_cast<std::size_t>(cap));
  };
  // Most recent history entries are the tail of the list.
  if (static_cast<int>(record.history.size()) > caps.history_cap) {
    record.history.erase(record.history.begin(),
                         record.history.end() - caps.history_cap);
  }
  for (auto& art : record.history) {
    cut(art.headline, caps.title_cap);
    cut(art.body, caps.body_cap);
  }
  cut(record.current.headline, caps.title_cap);
  cut(record.current.body, caps.body_cap);
  cut(record.reference, caps.title_cap);
  return record;
}

std::vector<UserRecord> load_dataset(const std::string& path, const Vocab& vocab,
                                     const Caps& caps) {
  std::vector<UserRecord> out;
  for (const auto& raw : load_raw_dataset(path))
    out.push_back(truncate_record(tokenize_record(raw, vocab), caps));
  return out;
}

TrainingBatch make_batch(const std::vector<UserRecord>& records) {
  if (records.empty()) fail("make_batch: empty batch");
  TrainingBatch batch;
  std::vector<std::vector<int>> bodies, refs;
  for (const auto& rec : records) {
    bodies.push_back(rec.current.body);
    std::vector<int> wrapped;
    wrapped.push_back(Vocab::kBos);
    wrapped.insert(wrapped.end(), rec.reference.begin(), rec.reference.end());
    wrapped.push_back(Vocab::kEos);
    refs.push_back(std::move(wrapped));
  }
  batch.body = pad_block(bodies);
  batch.reference = pad_block(refs);
  for (const auto& rec : records) {
    HistoryStack hs;
    std::vector<std::vector<int>> heads, hbodies;
    for (const auto& art : rec.history) {
      heads.push_back(art.headline);
      hbodies.push_back(art.body);
    }
    hs.headlines = pad_block(heads);
    hs.bodies = pad_block(hbodies);
    batch.histories.push_back(std::move(hs));
  }
  batch.records = records;
  return batch;
}

}  // namespace cap

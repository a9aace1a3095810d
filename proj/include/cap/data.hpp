#pragma once

#include <string>
#include <vector>

#include "cap/text.hpp"

namespace cap {

/// Ingestion caps: history entries kept (most recent), token cut per
/// headline, token cut per body.
struct Caps {
  int history_cap = 50;
  int title_cap = 30;
  int body_cap = 500;
};

struct Article {
  std::vector<int> headline;
  std::vector<int> body;
  std::string raw_headline;
  std::string raw_body;
};

struct UserRecord {
  std::string user_id;
  std::vector<Article> history;
  Article current;  // current.headline may be empty
  std::vector<int> reference;
  std::string raw_reference;
};

struct RawArticle {
  std::string headline;
  std::string body;
};

struct RawRecord {
  std::string user_id;
  std::vector<RawArticle> history;
  std::string current_headline;  // optional in the file
  std::string current_body;
  std::string reference_headline;
};

/// Parses a JSONL dataset. Malformed lines raise a parse error with the line
/// number; missing required fields raise a schema error naming the field.
std::vector<RawRecord> load_raw_dataset(const std::string& path);

/// Writes records back out in the same JSONL schema.
void save_dataset(const std::vector<RawRecord>& records, const std::string& path);

/// All text of a record set, used to build the training vocabulary.
std::vector<std::string> corpus_texts(const std::vector<RawRecord>& records);

UserRecord tokenize_record(const RawRecord& raw, const Vocab& vocab);
UserRecord truncate_record(UserRecord record, const Caps& caps);

/// load_raw_dataset + tokenize + truncate for every record.
std::vector<UserRecord> load_dataset(const std::string& path, const Vocab& vocab,
                                     const Caps& caps);

/// Right-padded id matrices with 0/1 masks; one row per record.
struct PaddedBlock {
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<double>> mask;
  std::vector<int> lengths;
  int width = 0;
};

struct HistoryStack {
  PaddedBlock headlines;
  PaddedBlock bodies;
};

struct TrainingBatch {
  PaddedBlock body;                  // current-article bodies
  PaddedBlock reference;             // bos ... eos wrapped references
  std::vector<HistoryStack> histories;
  std::vector<UserRecord> records;
};

TrainingBatch make_batch(const std::vector<UserRecord>& records);

}  // namespace cap

#pragma once

// File formats and serialization: dataset directories (vocab, synonyms,
// corpus, queries, candidates, qrels), model checkpoints, run files, and the
// JSON report payloads.  Writers are atomic (temp + rename) and byte
// deterministic; parsers reject malformed input naming the file and line
// before anything is written.  Wall-clock time never enters a payload.

#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "piat/attack.hpp"
#include "piat/core.hpp"
#include "piat/datagen.hpp"
#include "piat/metrics.hpp"
#include "piat/model.hpp"
#include "piat/rng.hpp"
#include "piat/train.hpp"

namespace piat::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Plumbing.

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open " + path.string() + " for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Writes via a sibling temp file and renames into place, so readers never
// observe a partial file and a failed write leaves the old content intact.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw ValidationError("cannot open " + tmp.string() + " for writing");
    }
    out << content;
    out.flush();
    if (!out) {
      throw ValidationError("write to " + tmp.string() + " failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(origin + ": " + e.what());
  }
}

inline json parse_json_line(const std::string& line, const std::string& origin,
                            std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError(origin + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

inline const json& field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ValidationError(where + ": missing field \"" + key + "\"");
  }
  return *it;
}

inline std::vector<TokenId> tokens_field(const json& j, const std::string& where) {
  const json& arr = field(j, "tokens", where);
  if (!arr.is_array() || arr.empty()) {
    throw ValidationError(where + ": \"tokens\" must be a non-empty array");
  }
  std::vector<TokenId> out;
  out.reserve(arr.size());
  for (const json& t : arr) {
    if (!t.is_number_integer()) {
      throw ValidationError(where + ": token ids must be integers");
    }
    out.push_back(t.get<TokenId>());
  }
  return out;
}

// Splits into lines; the final newline is required (all emitters end with one).
inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

inline int parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(where + ": not an integer: \"" + s + "\"");
  }
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(where + ": not a number: \"" + s + "\"");
  }
}

inline std::string format_score(double s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", s);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Vocabulary.

inline json vocab_to_json(const Vocabulary& vocab) {
  json words = json::array();
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    words.push_back(vocab.word(static_cast<TokenId>(i)));
  }
  return json{{"words", std::move(words)}};
}

inline Vocabulary vocab_from_json(const json& j, const std::string& origin) {
  const json& words = detail::field(j, "words", origin);
  if (!words.is_array()) {
    throw ValidationError(origin + ": \"words\" must be an array");
  }
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const json& w : words) {
    if (!w.is_string()) {
      throw ValidationError(origin + ": vocabulary entries must be strings");
    }
    out.push_back(w.get<std::string>());
  }
  return Vocabulary(std::move(out));
}

// Order-sensitive content hash; checkpoints embed it so a model is never
// silently applied to a vocabulary it was not trained on.
inline std::string vocab_content_hash(const Vocabulary& vocab) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const std::string& w = vocab.word(static_cast<TokenId>(i));
    h = mix64(derive_stream(h, w), w.size());  // length guards concatenation collisions
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Synonym lexicon.

inline json synonyms_to_json(const SynonymLexicon& lex) {
  json groups = json::array();
  for (const std::vector<TokenId>& g : lex.groups()) groups.push_back(g);
  return json{{"groups", std::move(groups)}};
}

inline SynonymLexicon synonyms_from_json(const json& j, const std::string& origin) {
  const json& groups = detail::field(j, "groups", origin);
  if (!groups.is_array()) {
    throw ValidationError(origin + ": \"groups\" must be an array");
  }
  std::vector<std::vector<TokenId>> out;
  for (const json& g : groups) {
    if (!g.is_array()) {
      throw ValidationError(origin + ": each synonym group must be an array");
    }
    std::vector<TokenId> group;
    for (const json& t : g) {
      if (!t.is_number_integer()) {
        throw ValidationError(origin + ": synonym tokens must be integers");
      }
      group.push_back(t.get<TokenId>());
    }
    out.push_back(std::move(group));
  }
  return SynonymLexicon(std::move(out));
}

// ---------------------------------------------------------------------------
// Corpus and query JSONL.

// One corpus line.  Attacked documents carry the id of the document they
// replace plus the substitution list; clean documents carry neither.
struct CorpusEntry {
  TokenDoc doc;
  std::string origin_doc_id;
  std::vector<Substitution> substitutions;

  bool attacked() const { return !origin_doc_id.empty(); }
};

inline std::string corpus_to_jsonl(const std::vector<CorpusEntry>& entries) {
  std::string out;
  for (const CorpusEntry& e : entries) {
    json j{{"doc_id", e.doc.doc_id}, {"tokens", e.doc.tokens}};
    if (e.attacked()) {
      j["origin_doc_id"] = e.origin_doc_id;
      json subs = json::array();
      for (const Substitution& s : e.substitutions) {
        subs.push_back(json::array({s.position, s.old_token, s.new_token}));
      }
      j["substitutions"] = std::move(subs);
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<CorpusEntry> corpus_from_jsonl(const std::string& text,
                                                  const std::string& origin) {
  std::vector<CorpusEntry> out;
  std::vector<std::string> lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = origin + ":" + std::to_string(i + 1);
    json j = detail::parse_json_line(lines[i], origin, i + 1);
    CorpusEntry e;
    e.doc.doc_id = detail::field(j, "doc_id", where).get<std::string>();
    e.doc.tokens = detail::tokens_field(j, where);
    if (j.contains("origin_doc_id")) {
      e.origin_doc_id = j["origin_doc_id"].get<std::string>();
      for (const json& s : detail::field(j, "substitutions", where)) {
        if (!s.is_array() || s.size() != 3) {
          throw ValidationError(where + ": substitutions must be [pos, old, new] triples");
        }
        e.substitutions.push_back(
            {s[0].get<int>(), s[1].get<TokenId>(), s[2].get<TokenId>()});
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string queries_to_jsonl(const std::vector<TokenQuery>& queries) {
  std::string out;
  for (const TokenQuery& q : queries) {
    json j{{"query_id", q.query_id}, {"tokens", q.tokens}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<TokenQuery> queries_from_jsonl(const std::string& text,
                                                  const std::string& origin) {
  std::vector<TokenQuery> out;
  std::vector<std::string> lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = origin + ":" + std::to_string(i + 1);
    json j = detail::parse_json_line(lines[i], origin, i + 1);
    TokenQuery q;
    q.query_id = detail::field(j, "query_id", where).get<std::string>();
    q.tokens = detail::tokens_field(j, where);
    out.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// qrels.tsv and candidates.tsv.

inline std::string qrels_to_tsv(const std::vector<QueryInstance>& queries) {
  std::string out;
  for (const QueryInstance& inst : queries) {
    for (const TokenDoc& d : inst.candidates.docs) {
      out += inst.candidates.query_id;
      out += '\t';
      out += d.doc_id;
      out += '\t';
      out += std::to_string(inst.candidates.gt_rank_of(d.doc_id));
      out += '\n';
    }
  }
  return out;
}

struct QrelRow {
  std::string query_id;
  std::string doc_id;
  int gt_rank = 0;
};

inline std::vector<QrelRow> qrels_from_tsv(const std::string& text,
                                           const std::string& origin) {
  std::vector<QrelRow> out;
  std::vector<std::string> lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = origin + ":" + std::to_string(i + 1);
    std::vector<std::string> cells = detail::split_tabs(lines[i]);
    if (cells.size() != 3) {
      throw ValidationError(where + ": expected query_id<TAB>doc_id<TAB>gt_rank");
    }
    out.push_back({cells[0], cells[1], detail::parse_int(cells[2], where)});
  }
  return out;
}

inline std::string candidates_to_tsv(const std::vector<QueryInstance>& queries) {
  std::string out;
  for (const QueryInstance& inst : queries) {
    for (const TokenDoc& d : inst.candidates.docs) {
      out += inst.candidates.query_id;
      out += '\t';
      out += d.doc_id;
      out += '\n';
    }
  }
  return out;
}

inline std::vector<std::pair<std::string, std::string>> candidates_from_tsv(
    const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::vector<std::string> lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = origin + ":" + std::to_string(i + 1);
    std::vector<std::string> cells = detail::split_tabs(lines[i]);
    if (cells.size() != 2) {
      throw ValidationError(where + ": expected query_id<TAB>doc_id");
    }
    out.push_back({cells[0], cells[1]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run files: query_id doc_id rank score, scores printed with 6 decimals,
// ranks dense 1..N per query block, scores non-increasing within a block.

struct RunRow {
  std::string query_id;
  std::string doc_id;
  int rank = 0;
  double score = 0.0;

  bool operator==(const RunRow&) const = default;
};

inline std::string run_to_text(const std::vector<RankedList>& lists) {
  std::string out;
  for (const RankedList& rl : lists) {
    for (std::size_t i = 0; i < rl.entries.size(); ++i) {
      out += rl.query_id;
      out += ' ';
      out += rl.entries[i].doc_id;
      out += ' ';
      out += std::to_string(i + 1);
      out += ' ';
      out += detail::format_score(rl.entries[i].score);
      out += '\n';
    }
  }
  return out;
}

inline std::vector<RunRow> run_from_text(const std::string& text,
                                         const std::string& origin) {
  std::vector<RunRow> out;
  std::vector<std::string> lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = origin + ":" + std::to_string(i + 1);
    std::istringstream ss(lines[i]);
    RunRow row;
    std::string rank_s, score_s, extra;
    if (!(ss >> row.query_id >> row.doc_id >> rank_s >> score_s) || (ss >> extra)) {
      throw ValidationError(where + ": expected query_id doc_id rank score");
    }
    row.rank = detail::parse_int(rank_s, where);
    row.score = detail::parse_double(score_s, where);

    if (!out.empty() && out.back().query_id == row.query_id) {
      if (row.rank != out.back().rank + 1) {
        throw ValidationError(where + ": ranks must be dense (expected " +
                              std::to_string(out.back().rank + 1) + ", got " +
                              std::to_string(row.rank) + ")");
      }
      if (row.score > out.back().score) {
        throw ValidationError(where + ": scores must be non-increasing with rank");
      }
    } else {
      if (row.rank != 1) {
        throw ValidationError(where + ": each query block must start at rank 1");
      }
      for (const RunRow& prev : out) {
        if (prev.query_id == row.query_id) {
          throw ValidationError(where + ": query " + row.query_id +
                                " appears in two separate blocks");
        }
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints.

inline json checkpoint_to_json(const ScoringModel& model,
                               const std::string& vocab_hash) {
  return json{{"vocab_size", model.vocab_size()},
              {"embedding_dim", model.embedding_dim()},
              {"embeddings", model.embeddings()},
              {"interaction", model.interaction()},
              {"bias", model.bias()},
              {"vocab_hash", vocab_hash}};
}

inline ScoringModel checkpoint_from_json(const json& j, const std::string& origin,
                                         const std::string& expected_vocab_hash) {
  const std::string hash = detail::field(j, "vocab_hash", origin).get<std::string>();
  if (!expected_vocab_hash.empty() && hash != expected_vocab_hash) {
    throw ValidationError(origin + ": checkpoint was trained on a different vocabulary (hash " +
                          hash + ", expected " + expected_vocab_hash + ")");
  }
  const std::size_t v = detail::field(j, "vocab_size", origin).get<std::size_t>();
  const std::size_t e = detail::field(j, "embedding_dim", origin).get<std::size_t>();
  if (v < 1 || e < 1) {
    throw ValidationError(origin + ": checkpoint dims must be positive");
  }
  ScoringModel model(v, e);
  std::vector<double> emb =
      detail::field(j, "embeddings", origin).get<std::vector<double>>();
  std::vector<double> inter =
      detail::field(j, "interaction", origin).get<std::vector<double>>();
  if (emb.size() != v * e || inter.size() != e * e) {
    throw ValidationError(origin + ": parameter array sizes do not match dims");
  }
  model.embeddings() = std::move(emb);
  model.interaction() = std::move(inter);
  model.set_param(v * e + e * e, detail::field(j, "bias", origin).get<double>());
  model.check_finite();
  return model;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const ScoringModel& model, const std::string& vocab_hash) {
  write_file_atomic(path, checkpoint_to_json(model, vocab_hash).dump(2) + "\n");
}

inline ScoringModel load_checkpoint(const std::filesystem::path& path,
                                    const std::string& expected_vocab_hash) {
  return checkpoint_from_json(detail::parse_json(read_file(path), path.string()),
                              path.string(), expected_vocab_hash);
}

// ---------------------------------------------------------------------------
// Report payloads.

inline json trainlog_to_json(const TrainLog& log) {
  json epochs = json::array();
  for (const EpochRecord& rec : log.epochs) {
    epochs.push_back(json{{"natural_loss", rec.natural_loss},
                          {"adversarial_loss", rec.adversarial_loss},
                          {"combined_loss", rec.combined_loss}});
  }
  return json{{"epochs", std::move(epochs)}, {"checkpoint_hash", log.checkpoint_hash}};
}

inline json attacks_to_json(
    const std::vector<std::pair<std::string, std::vector<AttackResult>>>& per_query) {
  json out = json::array();
  for (const auto& [query_id, results] : per_query) {
    json attacks = json::array();
    for (const AttackResult& r : results) {
      json subs = json::array();
      for (const Substitution& s : r.substituted_positions) {
        subs.push_back(json::array({s.position, s.old_token, s.new_token}));
      }
      attacks.push_back(json{{"doc_id", r.original.doc_id},
                             {"score_gain", r.score_gain},
                             {"n_substitutions", r.n_substitutions},
                             {"substitutions", std::move(subs)}});
    }
    out.push_back(json{{"query_id", query_id}, {"attacks", std::move(attacks)}});
  }
  return out;
}

inline json metrics_to_json(const MetricsReport& m) {
  json clean = json::object();
  for (const auto& [k, v] : m.clean_mrr_at) clean[std::to_string(k)] = v;
  json robust = json::object();
  for (const auto& [k, v] : m.robust_mrr_at) robust[std::to_string(k)] = v;
  return json{{"clean_mrr_at", std::move(clean)},
              {"robust_mrr_at", std::move(robust)},
              {"asr", m.asr},
              {"lsd", m.lsd},
              {"n_queries", m.n_queries},
              {"n_attacked_docs", m.n_attacked_docs}};
}

// ---------------------------------------------------------------------------
// Dataset directories.

inline void save_dataset(const std::filesystem::path& dir, const GeneratedData& data) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "vocab.json", vocab_to_json(data.vocab).dump(2) + "\n");
  write_file_atomic(dir / "synonyms.json", synonyms_to_json(data.lexicon).dump(2) + "\n");

  std::vector<CorpusEntry> corpus;
  std::vector<TokenQuery> queries;
  for (const QueryInstance& inst : data.queries) {
    queries.push_back(inst.query);
    for (const TokenDoc& d : inst.candidates.docs) corpus.push_back({d, "", {}});
  }
  write_file_atomic(dir / "corpus.jsonl", corpus_to_jsonl(corpus));
  write_file_atomic(dir / "queries.jsonl", queries_to_jsonl(queries));
  write_file_atomic(dir / "candidates.tsv", candidates_to_tsv(data.queries));
  write_file_atomic(dir / "qrels.tsv", qrels_to_tsv(data.queries));
}

inline GeneratedData load_dataset(const std::filesystem::path& dir) {
  GeneratedData data;
  data.vocab = vocab_from_json(
      detail::parse_json(read_file(dir / "vocab.json"), (dir / "vocab.json").string()),
      (dir / "vocab.json").string());
  data.lexicon = synonyms_from_json(
      detail::parse_json(read_file(dir / "synonyms.json"),
                         (dir / "synonyms.json").string()),
      (dir / "synonyms.json").string());
  data.lexicon.validate_against_vocab(data.vocab.size());

  const std::string corpus_origin = (dir / "corpus.jsonl").string();
  std::vector<CorpusEntry> corpus =
      corpus_from_jsonl(read_file(dir / "corpus.jsonl"), corpus_origin);
  std::map<std::string, const TokenDoc*> doc_index;
  for (const CorpusEntry& e : corpus) {
    validate_tokens(e.doc.tokens, data.vocab.size(), "doc " + e.doc.doc_id);
    if (!doc_index.emplace(e.doc.doc_id, &e.doc).second) {
      throw ValidationError(corpus_origin + ": duplicate doc_id " + e.doc.doc_id);
    }
  }

  const std::string queries_origin = (dir / "queries.jsonl").string();
  std::vector<TokenQuery> queries =
      queries_from_jsonl(read_file(dir / "queries.jsonl"), queries_origin);
  std::map<std::string, const TokenQuery*> query_index;
  for (const TokenQuery& q : queries) {
    validate_tokens(q.tokens, data.vocab.size(), "query " + q.query_id);
    if (!query_index.emplace(q.query_id, &q).second) {
      throw ValidationError(queries_origin + ": duplicate query_id " + q.query_id);
    }
  }

  const std::string cand_origin = (dir / "candidates.tsv").string();
  auto cand_rows = candidates_from_tsv(read_file(dir / "candidates.tsv"), cand_origin);
  const std::string qrel_origin = (dir / "qrels.tsv").string();
  auto qrel_rows = qrels_from_tsv(read_file(dir / "qrels.tsv"), qrel_origin);

  std::map<std::string, std::map<std::string, int>> gt;
  for (const QrelRow& r : qrel_rows) gt[r.query_id][r.doc_id] = r.gt_rank;

  // Candidate rows are grouped by query in file order; queries.jsonl order is
  // authoritative for the instance sequence.
  std::map<std::string, CandidateSet> sets;
  std::vector<std::string> order;
  for (const auto& [query_id, doc_id] : cand_rows) {
    auto it = query_index.find(query_id);
    if (it == query_index.end()) {
      throw ValidationError(cand_origin + ": unknown query_id " + query_id);
    }
    auto doc_it = doc_index.find(doc_id);
    if (doc_it == doc_index.end()) {
      throw ValidationError(cand_origin + ": unknown doc_id " + doc_id);
    }
    auto [set_it, inserted] = sets.try_emplace(query_id);
    if (inserted) {
      set_it->second.query_id = query_id;
      order.push_back(query_id);
    }
    set_it->second.docs.push_back(*doc_it->second);
    auto gt_q = gt.find(query_id);
    if (gt_q == gt.end() || !gt_q->second.count(doc_id)) {
      throw ValidationError(qrel_origin + ": no gt_rank for query " + query_id +
                            " doc " + doc_id);
    }
    set_it->second.gt_rank[doc_id] = gt_q->second[doc_id];
  }

  for (const TokenQuery& q : queries) {
    auto it = sets.find(q.query_id);
    if (it == sets.end()) {
      throw ValidationError(cand_origin + ": query " + q.query_id +
                            " has no candidate docs");
    }
    it->second.validate();
    data.queries.push_back({q, std::move(it->second)});
  }
  if (sets.size() != queries.size()) {
    throw ValidationError(cand_origin + ": candidate rows reference " +
                          std::to_string(sets.size()) + " queries but queries.jsonl has " +
                          std::to_string(queries.size()));
  }
  return data;
}

}  // namespace piat::io

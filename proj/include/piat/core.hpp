#pragma once

// Core domain types for token-level ranking: vocabulary, documents, queries,
// candidate sets with ground-truth ranks, and the canonical ranking rule
// (descending score, ties broken by ascending doc_id).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace piat {

// Invalid input data or configuration.  CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A checked mathematical guarantee failed to hold.  CLI maps this to exit
// code 2.  Reaching it means a bug, not bad input.
class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TokenId = std::int32_t;

// Immutable token-id <-> surface-form table.  Token ids are dense [0, size).
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (words_[i].empty()) {
        throw ValidationError("vocabulary word " + std::to_string(i) + " is empty");
      }
      auto [it, inserted] = index_.emplace(words_[i], static_cast<TokenId>(i));
      if (!inserted) {
        throw ValidationError("duplicate vocabulary word: " + words_[i]);
      }
    }
  }

  std::size_t size() const { return words_.size(); }

  const std::string& word(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
      throw ValidationError("token id " + std::to_string(id) + " out of range");
    }
    return words_[static_cast<std::size_t>(id)];
  }

  TokenId id_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) {
      throw ValidationError("unknown vocabulary word: " + word);
    }
    return it->second;
  }

  bool contains(const std::string& word) const { return index_.count(word) != 0; }

  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TokenDoc {
  std::string doc_id;
  std::vector<TokenId> tokens;

  bool operator==(const TokenDoc& other) const = default;
};

struct TokenQuery {
  std::string query_id;
  std::vector<TokenId> tokens;

  bool operator==(const TokenQuery& other) const = default;
};

// Throws unless every token id lies in [0, vocab_size).
inline void validate_tokens(const std::vector<TokenId>& tokens,
                            std::size_t vocab_size, const std::string& what) {
  if (tokens.empty()) {
    throw ValidationError(what + " has no tokens");
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
      throw ValidationError(what + " contains out-of-range token id " +
                            std::to_string(t));
    }
  }
}

// The candidate documents of one query together with a ground-truth ranking.
// gt_rank maps doc_id -> rank; ranks are a permutation of 1..docs.size().
struct CandidateSet {
  std::string query_id;
  std::vector<TokenDoc> docs;
  std::unordered_map<std::string, int> gt_rank;

  void validate() const {
    if (docs.empty()) {
      throw ValidationError("candidate set for query " + query_id + " is empty");
    }
    if (gt_rank.size() != docs.size()) {
      throw ValidationError("candidate set for query " + query_id +
                            " has mismatched gt_rank size");
    }
    std::vector<bool> seen(docs.size(), false);
    for (const TokenDoc& d : docs) {
      auto it = gt_rank.find(d.doc_id);
      if (it == gt_rank.end()) {
        throw ValidationError("doc " + d.doc_id + " missing from gt_rank");
      }
      int r = it->second;
      if (r < 1 || static_cast<std::size_t>(r) > docs.size()) {
        throw ValidationError("gt_rank for doc " + d.doc_id + " out of range");
      }
      if (seen[static_cast<std::size_t>(r - 1)]) {
        throw ValidationError("gt_rank " + std::to_string(r) +
                              " assigned twice in query " + query_id);
      }
      seen[static_cast<std::size_t>(r - 1)] = true;
    }
  }

  int gt_rank_of(const std::string& doc_id) const {
    auto it = gt_rank.find(doc_id);
    if (it == gt_rank.end()) {
      throw ValidationError("doc " + doc_id + " not in candidate set of query " +
                            query_id);
    }
    return it->second;
  }

  // The ground-truth top document (rank 1).
  const TokenDoc& gt_top() const {
    for (const TokenDoc& d : docs) {
      if (gt_rank_of(d.doc_id) == 1) return d;
    }
    throw ValidationError("candidate set for query " + query_id +
                          " has no rank-1 doc");
  }

  std::size_t index_of(const std::string& doc_id) const {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (docs[i].doc_id == doc_id) return i;
    }
    throw ValidationError("doc " + doc_id + " not in candidate set of query " +
                          query_id);
  }
};

// A query paired with its candidate set; the unit the generator produces and
// the trainer consumes.
struct QueryInstance {
  TokenQuery query;
  CandidateSet candidates;
};

struct RankedEntry {
  std::string doc_id;
  double score = 0.0;
};

// Documents of one query ordered best-first.  entries[i] holds rank i+1.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;

  int rank_of(const std::string& doc_id) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].doc_id == doc_id) return static_cast<int>(i) + 1;
    }
    throw ValidationError("doc " + doc_id + " not present in ranked list of query " +
                          query_id);
  }

  bool contains(const std::string& doc_id) const {
    for (const RankedEntry& e : entries) {
      if (e.doc_id == doc_id) return true;
    }
    return false;
  }
};

// Sorts (doc_id, score) pairs into a RankedList: descending score, ties by
// ascending doc_id.  Rejects non-finite scores and duplicate ids; this is the
// single ranking rule used everywhere (evaluation, attacks, error reports).
inline RankedList rank_by_scores(const std::string& query_id,
                                 std::vector<std::pair<std::string, double>> scored) {
  if (scored.empty()) {
    throw ValidationError("cannot rank an empty candidate list (query " +
                          query_id + ")");
  }
  for (const auto& [id, s] : scored) {
    if (!std::isfinite(s)) {
      throw ValidationError("non-finite score for doc " + id + " in query " +
                            query_id);
    }
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  RankedList out;
  out.query_id = query_id;
  out.entries.reserve(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (i > 0 && scored[i].first == scored[i - 1].first) {
      throw ValidationError("duplicate doc id " + scored[i].first + " in query " +
                            query_id);
    }
    out.entries.push_back({scored[i].first, scored[i].second});
  }
  return out;
}

// Rank of item `i` under the same rule as rank_by_scores, computed without
// sorting: 1 + |{j : s_j > s_i or (s_j == s_i and id_j < id_i)}|.  Used where
// one document's score changes and re-sorting the whole list per neighbor
// would dominate the cost.
inline int rank_in_scored_set(const std::vector<double>& scores,
                              const std::vector<std::string>& doc_ids,
                              std::size_t i) {
  if (scores.size() != doc_ids.size()) {
    throw ValidationError("rank_in_scored_set: scores/doc_ids size mismatch");
  }
  if (i >= scores.size()) {
    throw ValidationError("rank_in_scored_set: index out of range");
  }
  int rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j == i) continue;
    if (scores[j] > scores[i] ||
        (scores[j] == scores[i] && doc_ids[j] < doc_ids[i])) {
      ++rank;
    }
  }
  return rank;
}

// Indices of `values` sorted by descending value; ties keep ascending index.
// The returned order is the reference permutation the list-based losses pin.
inline std::vector<std::size_t> argsort_descending(const std::vector<double>& values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return values[a] > values[b];
  });
  return idx;
}

// Fraction of positions at which the two token sequences differ.  Both
// sequences must be non-empty and of equal length.
inline double hamming_fraction(const TokenDoc& a, const TokenDoc& b) {
  if (a.tokens.empty() || b.tokens.empty()) {
    throw ValidationError("hamming_fraction requires non-empty documents");
  }
  if (a.tokens.size() != b.tokens.size()) {
    throw ValidationError("hamming_fraction requires equal-length documents (" +
                          std::to_string(a.tokens.size()) + " vs " +
                          std::to_string(b.tokens.size()) + ")");
  }
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    if (a.tokens[i] != b.tokens[i]) ++diff;
  }
  return static_cast<double>(diff) / static_cast<double>(a.tokens.size());
}

}  // namespace piat

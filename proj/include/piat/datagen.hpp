#pragma once

// Synthetic corpus generation.  Real relevance datasets carry only binary
// labels, but the robustness error definitions need a total ground-truth
// order over every candidate set, so this generator plants one: each query
// draws a topical unit set, documents are built with a decreasing number of
// topical positions, and gt_rank follows that planted overlap.  Synonym
// classes group token ids with identical planted semantics, which makes
// synonym substitution semantics-preserving by construction.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "piat/core.hpp"
#include "piat/rng.hpp"

namespace piat {

// Disjoint synonym classes over token ids.  syn_of(t) is t's class minus t,
// sorted ascending so enumeration order is deterministic.
class SynonymLexicon {
 public:
  SynonymLexicon() = default;

  explicit SynonymLexicon(std::vector<std::vector<TokenId>> groups)
      : groups_(std::move(groups)) {
    std::unordered_set<TokenId> seen;
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      std::vector<TokenId>& group = groups_[g];
      if (group.empty()) {
        throw ValidationError("synonym group " + std::to_string(g) + " is empty");
      }
      std::sort(group.begin(), group.end());
      for (TokenId t : group) {
        if (t < 0) {
          throw ValidationError("negative token id in synonym group " +
                                std::to_string(g));
        }
        if (!seen.insert(t).second) {
          throw ValidationError("token id " + std::to_string(t) +
                                " appears in two synonym groups");
        }
      }
      for (TokenId t : group) {
        std::vector<TokenId> others;
        others.reserve(group.size() - 1);
        for (TokenId s : group) {
          if (s != t) others.push_back(s);
        }
        syn_of_.emplace(t, std::move(others));
      }
    }
  }

  const std::vector<std::vector<TokenId>>& groups() const { return groups_; }

  // Class members excluding the token itself; empty for unclassed tokens.
  const std::vector<TokenId>& synonyms_of(TokenId t) const {
    static const std::vector<TokenId> kEmpty;
    auto it = syn_of_.find(t);
    return it == syn_of_.end() ? kEmpty : it->second;
  }

  void validate_against_vocab(std::size_t vocab_size) const {
    for (const auto& group : groups_) {
      for (TokenId t : group) {
        if (static_cast<std::size_t>(t) >= vocab_size) {
          throw ValidationError("synonym group token id " + std::to_string(t) +
                                " exceeds vocabulary size " +
                                std::to_string(vocab_size));
        }
      }
    }
  }

 private:
  std::vector<std::vector<TokenId>> groups_;
  std::unordered_map<TokenId, std::vector<TokenId>> syn_of_;
};

struct GenConfig {
  std::uint64_t seed = 1;
  std::size_t vocab_size = 240;
  std::size_t n_queries = 200;
  std::size_t docs_per_query = 20;
  std::size_t doc_len = 12;
  std::size_t query_len = 5;
  std::size_t synonym_class_size = 3;
  std::size_t n_synonym_classes = 60;
  double relevance_noise = 0.0;

  void validate() const {
    auto require = [](bool ok, const char* field) {
      if (!ok) {
        throw ValidationError(std::string("GenConfig: invalid field ") + field);
      }
    };
    require(vocab_size >= 1, "vocab_size");
    require(n_queries >= 1, "n_queries");
    require(docs_per_query >= 1, "docs_per_query");
    require(doc_len >= 1, "doc_len");
    require(query_len >= 1, "query_len");
    require(synonym_class_size >= 2, "synonym_class_size");
    require(n_synonym_classes >= 1, "n_synonym_classes");
    require(n_synonym_classes * synonym_class_size <= vocab_size,
            "n_synonym_classes (classes do not fit in vocabulary)");
    require(relevance_noise >= 0.0, "relevance_noise");
  }
};

struct GeneratedData {
  Vocabulary vocab;
  SynonymLexicon lexicon;
  std::vector<QueryInstance> queries;
};

namespace detail {

inline std::string zero_padded(std::size_t value, std::size_t total) {
  std::size_t width = 1;
  for (std::size_t v = total > 0 ? total - 1 : 0; v >= 10; v /= 10) ++width;
  std::string s = std::to_string(value);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

}  // namespace detail

// Deterministic generator.  Semantic units: class c covers token ids
// [c*S, (c+1)*S); every remaining id is a singleton unit.  A query samples a
// topic (set of units); document j plants topical tokens in a decreasing
// number of positions, and gt_rank sorts docs by that planted overlap
// (optionally noise-perturbed), ties broken by ascending doc_id.
inline GeneratedData generate(const GenConfig& cfg) {
  cfg.validate();

  const std::size_t S = cfg.synonym_class_size;
  const std::size_t classed = cfg.n_synonym_classes * S;
  const std::size_t n_units = cfg.n_synonym_classes + (cfg.vocab_size - classed);

  std::vector<std::string> words;
  words.reserve(cfg.vocab_size);
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
    words.push_back("w" + detail::zero_padded(v, cfg.vocab_size));
  }

  std::vector<std::vector<TokenId>> groups;
  groups.reserve(cfg.n_synonym_classes);
  for (std::size_t c = 0; c < cfg.n_synonym_classes; ++c) {
    std::vector<TokenId> group;
    for (std::size_t k = 0; k < S; ++k) {
      group.push_back(static_cast<TokenId>(c * S + k));
    }
    groups.push_back(std::move(group));
  }

  GeneratedData out;
  out.vocab = Vocabulary(std::move(words));
  out.lexicon = SynonymLexicon(std::move(groups));

  // Uniform token draw from a unit: classes expand to a member, singleton
  // units map back to their id.
  auto token_from_unit = [&](std::size_t unit, Rng& rng) -> TokenId {
    if (unit < cfg.n_synonym_classes) {
      return static_cast<TokenId>(unit * S + rng.uniform_below(S));
    }
    return static_cast<TokenId>(classed + (unit - cfg.n_synonym_classes));
  };

  out.queries.reserve(cfg.n_queries);
  for (std::size_t qi = 0; qi < cfg.n_queries; ++qi) {
    Rng rng(derive_stream(cfg.seed, "gen-query", qi));

    // Topic: doc_len distinct semantic units (or all units if fewer exist).
    const std::size_t topic_size = std::min(cfg.doc_len, n_units);
    std::vector<std::size_t> unit_ids(n_units);
    std::iota(unit_ids.begin(), unit_ids.end(), std::size_t{0});
    rng.shuffle(unit_ids);
    std::vector<std::size_t> topic(unit_ids.begin(),
                                   unit_ids.begin() + static_cast<std::ptrdiff_t>(topic_size));
    std::unordered_set<std::size_t> topic_set(topic.begin(), topic.end());

    QueryInstance inst;
    inst.query.query_id = "q" + detail::zero_padded(qi, cfg.n_queries);
    for (std::size_t k = 0; k < cfg.query_len; ++k) {
      std::size_t unit = topic[rng.uniform_below(topic.size())];
      inst.query.tokens.push_back(token_from_unit(unit, rng));
    }

    auto off_topic_unit = [&](Rng& r) -> std::size_t {
      if (topic_set.size() >= n_units) {
        // Whole unit universe is topical; overlap separation is impossible,
        // fall back to any unit so generation still terminates.
        return r.uniform_below(n_units);
      }
      for (;;) {
        std::size_t u = r.uniform_below(n_units);
        if (topic_set.count(u) == 0) return u;
      }
    };

    const std::size_t nd = cfg.docs_per_query;
    std::vector<double> relevance(nd);
    std::vector<std::size_t> overlap(nd);
    inst.candidates.query_id = inst.query.query_id;
    for (std::size_t j = 0; j < nd; ++j) {
      // Planted overlap decreases evenly from doc_len (doc 0) to 0 (last doc).
      std::size_t o = nd == 1
                          ? cfg.doc_len
                          : (cfg.doc_len * (nd - 1 - j) + (nd - 1) / 2) / (nd - 1);
      overlap[j] = o;

      std::vector<bool> topical(cfg.doc_len, false);
      std::fill(topical.begin(), topical.begin() + static_cast<std::ptrdiff_t>(o), true);
      rng.shuffle(topical);

      TokenDoc doc;
      doc.doc_id = inst.query.query_id + "-d" + detail::zero_padded(j, nd);
      for (std::size_t m = 0; m < cfg.doc_len; ++m) {
        std::size_t unit = topical[m] ? topic[rng.uniform_below(topic.size())]
                                      : off_topic_unit(rng);
        doc.tokens.push_back(token_from_unit(unit, rng));
      }
      relevance[j] = static_cast<double>(o);
      if (cfg.relevance_noise > 0.0) {
        relevance[j] += rng.uniform_real(-cfg.relevance_noise, cfg.relevance_noise);
      }
      inst.candidates.docs.push_back(std::move(doc));
    }

    std::vector<std::size_t> order(nd);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (relevance[a] != relevance[b]) return relevance[a] > relevance[b];
      return inst.candidates.docs[a].doc_id < inst.candidates.docs[b].doc_id;
    });
    for (std::size_t r = 0; r < nd; ++r) {
      inst.candidates.gt_rank[inst.candidates.docs[order[r]].doc_id] =
          static_cast<int>(r) + 1;
    }
    inst.candidates.validate();
    out.queries.push_back(std::move(inst));
  }
  return out;
}

// Exact |B(d, eps)| with at most `max_subs` substituted positions: DP over
// positions where ways[k] counts patterns using exactly k substitutions.
// Saturates at u64 max instead of overflowing.
inline std::uint64_t neighborhood_size_capped(const TokenDoc& d,
                                              const SynonymLexicon& lex,
                                              std::size_t max_subs) {
  constexpr std::uint64_t kMax = ~std::uint64_t{0};
  auto sat_add = [](std::uint64_t a, std::uint64_t b) {
    return a > kMax - b ? kMax : a + b;
  };
  auto sat_mul = [](std::uint64_t a, std::uint64_t b) {
    if (a == 0 || b == 0) return std::uint64_t{0};
    return a > kMax / b ? kMax : a * b;
  };

  std::size_t k_cap = std::min(max_subs, d.tokens.size());
  std::vector<std::uint64_t> ways(k_cap + 1, 0);
  ways[0] = 1;
  for (TokenId t : d.tokens) {
    std::uint64_t c = lex.synonyms_of(t).size();
    if (c == 0) continue;
    for (std::size_t k = k_cap; k >= 1; --k) {
      ways[k] = sat_add(ways[k], sat_mul(ways[k - 1], c));
    }
  }
  std::uint64_t total = 0;
  for (std::uint64_t w : ways) total = sat_add(total, w);
  return total;
}

}  // namespace piat

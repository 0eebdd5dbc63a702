#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "piat/attack.hpp"
#include "piat/core.hpp"
#include "piat/datagen.hpp"

namespace {

// Test-local neighbor counter: recursion over positions, at most `max_subs`
// of them replaced by a synonym.  Independent of the library's DP.
std::uint64_t count_neighbors_rec(const piat::TokenDoc& d,
                                  const piat::SynonymLexicon& lex,
                                  std::size_t pos, std::size_t subs_left) {
  if (pos == d.tokens.size()) return 1;
  std::uint64_t total = count_neighbors_rec(d, lex, pos + 1, subs_left);
  if (subs_left > 0) {
    std::uint64_t syn = lex.synonyms_of(d.tokens[pos]).size();
    total += syn * count_neighbors_rec(d, lex, pos + 1, subs_left - 1);
  }
  return total;
}

bool same_output(const piat::GeneratedData& a, const piat::GeneratedData& b) {
  if (a.vocab.size() != b.vocab.size()) return false;
  for (std::size_t v = 0; v < a.vocab.size(); ++v) {
    if (a.vocab.word(static_cast<piat::TokenId>(v)) !=
        b.vocab.word(static_cast<piat::TokenId>(v))) {
      return false;
    }
  }
  if (a.lexicon.groups() != b.lexicon.groups()) return false;
  if (a.queries.size() != b.queries.size()) return false;
  for (std::size_t i = 0; i < a.queries.size(); ++i) {
    const auto& qa = a.queries[i];
    const auto& qb = b.queries[i];
    if (qa.query.query_id != qb.query.query_id) return false;
    if (qa.query.tokens != qb.query.tokens) return false;
    if (qa.candidates.gt_rank != qb.candidates.gt_rank) return false;
    if (qa.candidates.docs.size() != qb.candidates.docs.size()) return false;
    for (std::size_t j = 0; j < qa.candidates.docs.size(); ++j) {
      if (qa.candidates.docs[j].doc_id != qb.candidates.docs[j].doc_id ||
          qa.candidates.docs[j].tokens != qb.candidates.docs[j].tokens) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("synonym lexicon exposes classes minus self") {
  piat::SynonymLexicon lex({{3, 1, 2}, {7, 9}});

  REQUIRE(lex.groups() == std::vector<std::vector<piat::TokenId>>{{1, 2, 3}, {7, 9}});
  REQUIRE(lex.synonyms_of(1) == std::vector<piat::TokenId>{2, 3});
  REQUIRE(lex.synonyms_of(2) == std::vector<piat::TokenId>{1, 3});
  REQUIRE(lex.synonyms_of(9) == std::vector<piat::TokenId>{7});
  REQUIRE(lex.synonyms_of(0).empty());
  REQUIRE(lex.synonyms_of(42).empty());
}

TEST_CASE("synonym lexicon rejects malformed groups") {
  using Groups = std::vector<std::vector<piat::TokenId>>;
  REQUIRE_THROWS_AS(piat::SynonymLexicon(Groups{{1, 2}, {2, 3}}), piat::ValidationError);
  REQUIRE_THROWS_AS(piat::SynonymLexicon(Groups{{1, 1}}), piat::ValidationError);
  REQUIRE_THROWS_AS(piat::SynonymLexicon(Groups{{}}), piat::ValidationError);
  REQUIRE_THROWS_AS(piat::SynonymLexicon(Groups{{-1, 2}}), piat::ValidationError);

  piat::SynonymLexicon lex({{0, 5}});
  REQUIRE_THROWS_AS(lex.validate_against_vocab(5), piat::ValidationError);
  REQUIRE_NOTHROW(lex.validate_against_vocab(6));
}

TEST_CASE("synonym relation is symmetric and excludes self") {
  piat::GenConfig cfg;
  cfg.seed = 7;
  cfg.n_queries = 1;
  auto data = piat::generate(cfg);

  for (const auto& group : data.lexicon.groups()) {
    for (piat::TokenId t : group) {
      const auto& syns = data.lexicon.synonyms_of(t);
      REQUIRE(std::find(syns.begin(), syns.end(), t) == syns.end());
      REQUIRE(syns.size() == group.size() - 1);
      for (piat::TokenId s : syns) {
        const auto& back = data.lexicon.synonyms_of(s);
        REQUIRE(std::find(back.begin(), back.end(), t) != back.end());
      }
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  piat::GenConfig cfg;
  cfg.seed = 1;
  cfg.n_queries = 8;
  cfg.docs_per_query = 6;

  auto a = piat::generate(cfg);
  auto b = piat::generate(cfg);
  REQUIRE(same_output(a, b));

  piat::GenConfig other = cfg;
  other.seed = 2;
  auto c = piat::generate(other);
  REQUIRE_FALSE(same_output(a, c));
}

TEST_CASE("noiseless ground truth follows planted overlap order") {
  piat::GenConfig cfg;
  cfg.seed = 3;
  cfg.n_queries = 20;
  cfg.docs_per_query = 10;
  cfg.doc_len = 12;
  cfg.relevance_noise = 0.0;

  auto data = piat::generate(cfg);
  for (const auto& inst : data.queries) {
    // Planted overlap decreases with insertion order and ties break on
    // ascending doc_id, so gt_rank must equal insertion order exactly.
    for (std::size_t j = 0; j < inst.candidates.docs.size(); ++j) {
      REQUIRE(inst.candidates.gt_rank_of(inst.candidates.docs[j].doc_id) ==
              static_cast<int>(j) + 1);
    }
  }
}

TEST_CASE("top ranked docs share more vocabulary with the query") {
  piat::GenConfig cfg;
  cfg.seed = 11;
  cfg.n_queries = 50;
  cfg.docs_per_query = 8;
  cfg.doc_len = 10;
  cfg.query_len = 30;
  cfg.vocab_size = 60;
  cfg.n_synonym_classes = 15;
  cfg.synonym_class_size = 3;

  auto data = piat::generate(cfg);

  // A token and a query token that share a synonym class (or are equal)
  // witness a shared semantic unit.
  auto shares_unit = [&](piat::TokenId t, const std::vector<piat::TokenId>& q) {
    for (piat::TokenId u : q) {
      if (u == t) return true;
      const auto& syns = data.lexicon.synonyms_of(u);
      if (std::find(syns.begin(), syns.end(), t) != syns.end()) return true;
    }
    return false;
  };

  double top_overlap = 0.0;
  double bottom_overlap = 0.0;
  for (const auto& inst : data.queries) {
    const auto& top = inst.candidates.docs.front();
    const auto& bottom = inst.candidates.docs.back();
    REQUIRE(inst.candidates.gt_rank_of(top.doc_id) == 1);
    for (piat::TokenId t : top.tokens) {
      if (shares_unit(t, inst.query.tokens)) top_overlap += 1.0;
    }
    for (piat::TokenId t : bottom.tokens) {
      if (shares_unit(t, inst.query.tokens)) bottom_overlap += 1.0;
    }
  }
  REQUIRE(top_overlap > 2.0 * bottom_overlap);
}

TEST_CASE("generated output stays inside the declared vocabulary") {
  piat::GenConfig cfg;
  cfg.seed = 5;
  cfg.n_queries = 10;
  cfg.docs_per_query = 10;
  cfg.doc_len = 8;

  auto data = piat::generate(cfg);
  REQUIRE(data.queries.size() == 10);
  data.lexicon.validate_against_vocab(data.vocab.size());

  for (const auto& inst : data.queries) {
    piat::validate_tokens(inst.query.tokens, data.vocab.size(), inst.query.query_id);
    REQUIRE(inst.query.tokens.size() == cfg.query_len);
    REQUIRE(inst.candidates.docs.size() == cfg.docs_per_query);

    std::set<int> ranks;
    for (const auto& doc : inst.candidates.docs) {
      piat::validate_tokens(doc.tokens, data.vocab.size(), doc.doc_id);
      REQUIRE(doc.tokens.size() == cfg.doc_len);
      ranks.insert(inst.candidates.gt_rank_of(doc.doc_id));
    }
    REQUIRE(ranks.size() == cfg.docs_per_query);
    REQUIRE(*ranks.begin() == 1);
    REQUIRE(*ranks.rbegin() == static_cast<int>(cfg.docs_per_query));
  }
}

TEST_CASE("doc and query ids are zero padded and unique") {
  piat::GenConfig cfg;
  cfg.seed = 9;
  cfg.n_queries = 12;
  cfg.docs_per_query = 11;

  auto data = piat::generate(cfg);
  std::set<std::string> qids;
  for (const auto& inst : data.queries) {
    REQUIRE(qids.insert(inst.query.query_id).second);
    REQUIRE(inst.query.query_id.size() == 3);  // "q" + 2 digits for 12 queries
    std::set<std::string> dids;
    for (const auto& doc : inst.candidates.docs) {
      REQUIRE(dids.insert(doc.doc_id).second);
      REQUIRE(doc.doc_id.substr(0, inst.query.query_id.size() + 2) ==
              inst.query.query_id + "-d");
    }
  }
  REQUIRE(data.queries.front().query.query_id == "q00");
  REQUIRE(data.queries.back().query.query_id == "q11");
}

TEST_CASE("config validation names the offending field") {
  auto expect_reject = [](piat::GenConfig cfg, const std::string& field) {
    REQUIRE_THROWS_WITH(piat::generate(cfg),
                        Catch::Matchers::ContainsSubstring(field));
  };

  piat::GenConfig cfg;
  cfg.vocab_size = 0;
  expect_reject(cfg, "vocab_size");

  cfg = {};
  cfg.n_queries = 0;
  expect_reject(cfg, "n_queries");

  cfg = {};
  cfg.docs_per_query = 0;
  expect_reject(cfg, "docs_per_query");

  cfg = {};
  cfg.doc_len = 0;
  expect_reject(cfg, "doc_len");

  cfg = {};
  cfg.query_len = 0;
  expect_reject(cfg, "query_len");

  cfg = {};
  cfg.synonym_class_size = 1;
  expect_reject(cfg, "synonym_class_size");

  cfg = {};
  cfg.n_synonym_classes = 0;
  expect_reject(cfg, "n_synonym_classes");

  cfg = {};
  cfg.vocab_size = 10;
  cfg.n_synonym_classes = 4;
  cfg.synonym_class_size = 3;
  expect_reject(cfg, "n_synonym_classes");

  cfg = {};
  cfg.relevance_noise = -0.1;
  expect_reject(cfg, "relevance_noise");
}

TEST_CASE("neighborhood size counts the exact enumeration") {
  SECTION("doc without synonym-bearing tokens") {
    piat::SynonymLexicon lex({{10, 11}});
    piat::TokenDoc d{"d", {0, 1, 2}};
    piat::AttackBudget budget;
    budget.epsilon = 1.0;
    budget.k_max = 3;
    REQUIRE(piat::neighborhood_size(d, lex, budget) == 1);
  }

  SECTION("three positions with one synonym each, one substitution allowed") {
    piat::SynonymLexicon lex({{0, 1}, {2, 3}, {4, 5}});
    piat::TokenDoc d{"d", {0, 2, 4}};
    piat::AttackBudget budget;
    budget.epsilon = 1.0;
    budget.k_max = 1;
    REQUIRE(piat::neighborhood_size(d, lex, budget) == 4);
  }

  SECTION("mixed class sizes, two substitutions") {
    // Position synonym counts: 2, 1, 0, 1, 3.
    piat::SynonymLexicon lex({{0, 1, 2}, {3, 4}, {6, 7, 8, 9}});
    piat::TokenDoc d{"d", {0, 3, 5, 4, 6}};
    piat::AttackBudget budget;
    budget.epsilon = 1.0;
    budget.k_max = 2;

    std::uint64_t expected = count_neighbors_rec(d, lex, 0, 2);
    REQUIRE(expected ==
            1 + (2 + 1 + 1 + 3) +
                (2 * 1 + 2 * 1 + 2 * 3 + 1 * 1 + 1 * 3 + 1 * 3));
    REQUIRE(piat::neighborhood_size(d, lex, budget) == expected);
    REQUIRE(piat::enumerate_neighborhood(d, lex, budget).size() == expected);
  }

  SECTION("random docs match the recursive count and the materialized list") {
    piat::SynonymLexicon lex({{0, 1, 2}, {3, 4}, {5, 6, 7}, {8, 9}});
    piat::Rng rng(0xda7a);
    for (int trial = 0; trial < 50; ++trial) {
      piat::TokenDoc d{"d", {}};
      std::size_t len = 1 + rng.uniform_below(6);
      for (std::size_t i = 0; i < len; ++i) {
        d.tokens.push_back(static_cast<piat::TokenId>(rng.uniform_below(12)));
      }
      piat::AttackBudget budget;
      budget.epsilon = rng.uniform_real(0.01, 1.0);
      budget.k_max = 1 + static_cast<int>(rng.uniform_below(3));

      std::size_t limit =
          static_cast<std::size_t>(std::max(budget.substitution_limit(len), 0));
      std::uint64_t expected = count_neighbors_rec(d, lex, 0, limit);
      REQUIRE(piat::neighborhood_size(d, lex, budget) == expected);
      REQUIRE(piat::enumerate_neighborhood(d, lex, budget).size() == expected);
    }
  }
}

TEST_CASE("neighborhood size saturates instead of overflowing") {
  std::vector<std::vector<piat::TokenId>> groups;
  std::vector<piat::TokenId> big;
  for (piat::TokenId t = 0; t < 1000; ++t) big.push_back(t);
  groups.push_back(big);
  piat::SynonymLexicon lex(std::move(groups));

  piat::TokenDoc d{"d", std::vector<piat::TokenId>(30, 0)};
  REQUIRE(piat::neighborhood_size_capped(d, lex, 30) == ~std::uint64_t{0});
}

#pragma once

// Word-substitution attack on a ranked candidate: the perturbation
// neighborhood (all synonym substitutions within budget), an exhaustive
// brute-force search used as an optimality oracle, and the greedy two-phase
// search used at scale.  The attack maximizes the score gain
// f(q, d') - f(q, d); scores come from our own model (white-box scores, no
// gradient use), and brute force certifies the greedy search on enumerable
// neighborhoods.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "piat/core.hpp"
#include "piat/datagen.hpp"
#include "piat/model.hpp"
#include "piat/rng.hpp"

namespace piat {

struct AttackBudget {
  double epsilon = 0.25;
  int k_max = 20;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) {
      throw ValidationError("AttackBudget: epsilon must lie in (0, 1]");
    }
    if (k_max < 1) {
      throw ValidationError("AttackBudget: k_max must be >= 1");
    }
  }

  // min(floor(eps*M), k_max).  The tiny slack absorbs decimal epsilons whose
  // binary product lands just below an integer (0.3 * 10 must allow 3).
  int substitution_limit(std::size_t doc_len) const {
    validate();
    double scaled = epsilon * static_cast<double>(doc_len);
    int by_fraction = static_cast<int>(std::floor(scaled + 1e-9));
    return std::min(by_fraction, k_max);
  }
};

struct Substitution {
  int position = 0;
  TokenId old_token = 0;
  TokenId new_token = 0;

  bool operator==(const Substitution&) const = default;
};

struct AttackResult {
  TokenDoc original;
  TokenDoc adversarial;
  double score_gain = 0.0;
  int n_substitutions = 0;
  std::vector<Substitution> substituted_positions;
};

constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

inline std::uint64_t neighborhood_size(const TokenDoc& d, const SynonymLexicon& lex,
                                       const AttackBudget& budget) {
  return neighborhood_size_capped(
      d, lex, static_cast<std::size_t>(std::max(budget.substitution_limit(d.tokens.size()), 0)));
}

// Visits every neighbor of d within budget exactly once, d itself first.
// Positions are explored in ascending order, keep-before-substitute, synonyms
// in ascending token order, so the visit order is deterministic.  The visitor
// receives the candidate and its substitution count; the candidate buffer is
// reused between calls.
inline void for_each_neighbor(
    const TokenDoc& d, const SynonymLexicon& lex, const AttackBudget& budget,
    const std::function<void(const TokenDoc&, int)>& visit,
    std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  const std::uint64_t size = neighborhood_size(d, lex, budget);
  if (size > enumeration_cap) {
    throw ValidationError("neighborhood of doc " + d.doc_id + " has " +
                          std::to_string(size) + " members, exceeding the cap of " +
                          std::to_string(enumeration_cap));
  }
  const int limit = budget.substitution_limit(d.tokens.size());
  TokenDoc current = d;
  const std::size_t m = d.tokens.size();

  auto recurse = [&](auto&& self, std::size_t pos, int used) -> void {
    if (pos == m) {
      visit(current, used);
      return;
    }
    self(self, pos + 1, used);
    if (used < limit) {
      for (TokenId s : lex.synonyms_of(d.tokens[pos])) {
        current.tokens[pos] = s;
        self(self, pos + 1, used + 1);
      }
      current.tokens[pos] = d.tokens[pos];
    }
  };
  recurse(recurse, 0, 0);
}

inline std::vector<TokenDoc> enumerate_neighborhood(
    const TokenDoc& d, const SynonymLexicon& lex, const AttackBudget& budget,
    std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  std::vector<TokenDoc> out;
  for_each_neighbor(
      d, lex, budget, [&](const TokenDoc& nb, int) { out.push_back(nb); },
      enumeration_cap);
  return out;
}

namespace detail {

inline std::vector<Substitution> diff_substitutions(const TokenDoc& original,
                                                    const TokenDoc& adversarial) {
  std::vector<Substitution> subs;
  for (std::size_t i = 0; i < original.tokens.size(); ++i) {
    if (original.tokens[i] != adversarial.tokens[i]) {
      subs.push_back({static_cast<int>(i), original.tokens[i], adversarial.tokens[i]});
    }
  }
  return subs;
}

inline AttackResult make_result(const TokenDoc& original, TokenDoc adversarial,
                                double score_gain) {
  AttackResult r;
  r.original = original;
  r.adversarial = std::move(adversarial);
  r.adversarial.doc_id = original.doc_id;
  r.substituted_positions = diff_substitutions(original, r.adversarial);
  r.n_substitutions = static_cast<int>(r.substituted_positions.size());
  r.score_gain = score_gain;
  return r;
}

}  // namespace detail

// Exhaustive argmax of the score gain over the whole neighborhood.  Ties are
// broken toward fewer substitutions, then lexicographically smaller token
// sequence, so the result is independent of enumeration order.  d itself is a
// candidate, hence score_gain >= 0.
inline AttackResult brute_force_attack(
    const ScoringModel& model, const TokenQuery& q, const TokenDoc& d,
    const SynonymLexicon& lex, const AttackBudget& budget,
    std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  QueryScorer scorer(model, q);
  const double base = scorer.score(d);

  TokenDoc best = d;
  double best_gain = 0.0;
  int best_subs = 0;
  for_each_neighbor(
      d, lex, budget,
      [&](const TokenDoc& nb, int used) {
        const double gain = scorer.score(nb) - base;
        bool better = gain > best_gain;
        if (!better && gain == best_gain) {
          better = used < best_subs ||
                   (used == best_subs && nb.tokens < best.tokens);
        }
        if (better) {
          best = nb;
          best_gain = gain;
          best_subs = used;
        }
      },
      enumeration_cap);
  return detail::make_result(d, std::move(best), best_gain);
}

// Two-phase greedy search.  Phase 1 ranks positions by importance (best
// single-substitution gain from the original document); phase 2 walks them in
// descending importance (ties toward earlier positions) and commits the best
// synonym at each position only when it strictly increases the current score,
// stopping after the budget's substitution limit.
inline AttackResult greedy_attack(const ScoringModel& model, const TokenQuery& q,
                                  const TokenDoc& d, const SynonymLexicon& lex,
                                  const AttackBudget& budget) {
  QueryScorer scorer(model, q);
  const double base = scorer.score(d);
  const int limit = budget.substitution_limit(d.tokens.size());
  if (limit <= 0) {
    return detail::make_result(d, d, 0.0);
  }

  struct PositionScore {
    std::size_t position;
    double importance;
  };
  std::vector<PositionScore> order;
  TokenDoc probe = d;
  for (std::size_t pos = 0; pos < d.tokens.size(); ++pos) {
    const std::vector<TokenId>& syns = lex.synonyms_of(d.tokens[pos]);
    if (syns.empty()) continue;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (TokenId s : syns) {
      probe.tokens[pos] = s;
      best_gain = std::max(best_gain, scorer.score(probe) - base);
    }
    probe.tokens[pos] = d.tokens[pos];
    order.push_back({pos, best_gain});
  }
  std::sort(order.begin(), order.end(), [](const PositionScore& a, const PositionScore& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.position < b.position;
  });

  TokenDoc current = d;
  double current_score = base;
  int commits = 0;
  for (const PositionScore& ps : order) {
    if (commits >= limit) break;
    std::optional<TokenId> chosen;
    double chosen_score = current_score;
    for (TokenId s : lex.synonyms_of(d.tokens[ps.position])) {
      current.tokens[ps.position] = s;
      const double sc = scorer.score(current);
      if (sc > chosen_score || (sc == chosen_score && chosen && s < *chosen)) {
        chosen = s;
        chosen_score = sc;
      }
    }
    if (chosen) {
      current.tokens[ps.position] = *chosen;
      current_score = chosen_score;
      ++commits;
    } else {
      current.tokens[ps.position] = d.tokens[ps.position];
    }
  }
  return detail::make_result(d, std::move(current), current_score - base);
}

// Attacks a seeded uniform sample of non-top candidates.  Returns the attack
// results (in candidate order) and the perturbed document list index-aligned
// with cs.docs; unattacked positions hold the original document.  The
// ground-truth top document is never attacked (promoting it is vacuous), so
// the effective sample size is min(n_attack, N_d - 1).
inline std::pair<std::vector<AttackResult>, std::vector<TokenDoc>> attack_candidate_set(
    const ScoringModel& model, const TokenQuery& q, const CandidateSet& cs,
    const SynonymLexicon& lex, const AttackBudget& budget, int n_attack,
    std::uint64_t selection_seed) {
  if (n_attack < 0) {
    throw ValidationError("attack_candidate_set: n_attack must be >= 0");
  }
  if (static_cast<std::size_t>(n_attack) > cs.docs.size()) {
    throw ValidationError("attack_candidate_set: n_attack " + std::to_string(n_attack) +
                          " exceeds candidate count " + std::to_string(cs.docs.size()));
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < cs.docs.size(); ++i) {
    if (cs.gt_rank_of(cs.docs[i].doc_id) != 1) eligible.push_back(i);
  }
  Rng rng(derive_stream(selection_seed, "attack-target-sample"));
  rng.shuffle(eligible);
  const std::size_t take = std::min(eligible.size(), static_cast<std::size_t>(n_attack));
  std::vector<std::size_t> selected(eligible.begin(),
                                    eligible.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(selected.begin(), selected.end());

  std::vector<TokenDoc> d_adv = cs.docs;
  std::vector<AttackResult> results;
  results.reserve(selected.size());
  for (std::size_t idx : selected) {
    AttackResult r = greedy_attack(model, q, cs.docs[idx], lex, budget);
    d_adv[idx] = r.adversarial;
    results.push_back(std::move(r));
  }
  return {std::move(results), std::move(d_adv)};
}

}  // namespace piat

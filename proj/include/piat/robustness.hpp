#pragma once

// Measurable robustness quantities for a scored candidate set: natural
// ranking error, decision-boundary neighborhood membership, boundary ranking
// error, its perturbation-invariance upper bound, and the decomposed robust
// error with a per-document audit ledger.
//
// Boundary semantics.  For a document with ground-truth rank r, the
// neighborhood rank is pi_n = r - 1; the topmost rank uses the one position
// BELOW it (pi_n = 2), since the only rank move that exists for rank 1 is a
// demotion.  A perturbed copy d' replaces its original in the candidate set
// (one perturbation at a time, doc_id retained) and the whole set is
// re-ranked.  d_i lies in the boundary neighborhood iff some in-budget d'
// satisfies (pi_f(d_i) - pi_n) * (pi_f(d') - pi_n) <= 0.  The upper bound
// counts documents with an in-budget d' that both satisfies that sign
// condition and actually changes the rank (pi_f(d') != pi_f(d_i)): a
// boundary-crossing rank flip.  These definitions make two facts hold
// pointwise, document by document:
//   1. boundary membership of a correctly ranked doc implies a crossing flip
//      (its pi_f differs from pi_n, so any sign witness flips the rank), and
//   2. a crossing flip on a doc NOT counted by the boundary error implies the
//      doc was already misranked,
// so boundary_error <= boundary_bound and bound - error <= natural_error hold
// with zero tolerance, not just in expectation.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "piat/attack.hpp"
#include "piat/core.hpp"
#include "piat/datagen.hpp"
#include "piat/model.hpp"

namespace piat {

struct PerDocBoundary {
  std::string doc_id;
  bool in_boundary_nbhd = false;
  bool correctly_ranked = false;
  bool crossing_flip = false;
  bool topmost = false;
  std::optional<TokenDoc> flip_witness;
};

struct ErrorReport {
  double r_nat = 0.0;
  double r_bdy = 0.0;
  double r_rob = 0.0;
  double bound_bdy = 0.0;
  double gap = 0.0;
  double eta = 0.0;
  // Number of queries this report covers; the per_doc ledger equalities are
  // exact only for single-query reports (aggregation averages fractions).
  int n_queries = 1;
  std::vector<PerDocBoundary> per_doc;

  // Violation list is empty for every mathematically consistent report; for
  // single-query reports the aggregates are re-derived from the per_doc ledger.
  std::vector<std::string> invariant_violations() const {
    std::vector<std::string> v;
    if (r_rob != r_nat + r_bdy) {
      v.push_back("r_rob != r_nat + r_bdy");
    }
    if (r_bdy > bound_bdy) {
      v.push_back("r_bdy exceeds bound_bdy");
    }
    if (gap != bound_bdy - r_bdy) {
      v.push_back("gap != bound_bdy - r_bdy");
    }
    if (gap > eta + 1e-12) {
      v.push_back("gap exceeds eta");
    }
    if (n_queries == 1 && !per_doc.empty()) {
      std::size_t n = per_doc.size();
      std::size_t nat = 0, bdy = 0, flip = 0;
      for (const PerDocBoundary& d : per_doc) {
        if (!d.correctly_ranked) ++nat;
        if (d.in_boundary_nbhd && d.correctly_ranked) ++bdy;
        if (d.crossing_flip) ++flip;
      }
      if (r_nat != static_cast<double>(nat) / static_cast<double>(n)) {
        v.push_back("r_nat does not match per_doc ledger");
      }
      if (r_bdy != static_cast<double>(bdy) / static_cast<double>(n)) {
        v.push_back("r_bdy does not match per_doc ledger");
      }
      if (bound_bdy != static_cast<double>(flip) / static_cast<double>(n)) {
        v.push_back("bound_bdy does not match per_doc ledger");
      }
    }
    return v;
  }
};

// pi_n: the rank an in-budget perturbation would have to reach for the
// document to sit on the ranking decision boundary.  One position above for
// every rank except the topmost, which uses one position below.
inline int neighbor_rank(int pi_y, int n_docs) {
  if (pi_y < 1 || pi_y > n_docs) {
    throw ValidationError("neighbor_rank: rank " + std::to_string(pi_y) +
                          " outside 1.." + std::to_string(n_docs));
  }
  return pi_y == 1 ? 2 : pi_y - 1;
}

namespace detail {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::string> doc_ids;
  std::vector<int> ranks;  // model ranks, index-aligned with cs.docs
};

inline ScoredSet score_and_rank(const ScoringModel& model, const TokenQuery& q,
                                const CandidateSet& cs) {
  cs.validate();
  ScoredSet s;
  QueryScorer scorer(model, q);
  s.scores.reserve(cs.docs.size());
  s.doc_ids.reserve(cs.docs.size());
  for (const TokenDoc& d : cs.docs) {
    s.scores.push_back(scorer.score(d));
    s.doc_ids.push_back(d.doc_id);
  }
  s.ranks.reserve(cs.docs.size());
  for (std::size_t i = 0; i < cs.docs.size(); ++i) {
    s.ranks.push_back(rank_in_scored_set(s.scores, s.doc_ids, i));
  }
  return s;
}

// Rank of the perturbed doc at index i when its score is replaced by
// new_score (doc_id unchanged), against the other docs' clean scores.
inline int rank_of_replacement(const ScoredSet& s, std::size_t i, double new_score) {
  int rank = 1;
  for (std::size_t j = 0; j < s.scores.size(); ++j) {
    if (j == i) continue;
    if (s.scores[j] > new_score ||
        (s.scores[j] == new_score && s.doc_ids[j] < s.doc_ids[i])) {
      ++rank;
    }
  }
  return rank;
}

struct BoundaryScan {
  bool member = false;
  bool flip = false;
  std::optional<TokenDoc> member_witness;
  std::optional<TokenDoc> flip_witness;
};

// Single pass over the neighborhood of cs.docs[i], collecting the boundary
// membership witness (sign product <= 0) and the crossing-flip witness (sign
// product <= 0 and rank changed).
inline BoundaryScan scan_boundary(const ScoringModel& model, const TokenQuery& q,
                                  const CandidateSet& cs, const ScoredSet& s,
                                  std::size_t i, const SynonymLexicon& lex,
                                  const AttackBudget& budget,
                                  std::uint64_t enumeration_cap) {
  QueryScorer scorer(model, q);
  const int pi_f = s.ranks[i];
  const int pi_n = neighbor_rank(cs.gt_rank_of(cs.docs[i].doc_id),
                                 static_cast<int>(cs.docs.size()));
  const long long delta = pi_f - pi_n;

  BoundaryScan out;
  for_each_neighbor(
      cs.docs[i], lex, budget,
      [&](const TokenDoc& nb, int) {
        if (out.member && out.flip) return;
        const int nb_rank = rank_of_replacement(s, i, scorer.score(nb));
        const long long product = delta * static_cast<long long>(nb_rank - pi_n);
        if (product <= 0) {
          if (!out.member) {
            out.member = true;
            out.member_witness = nb;
          }
          if (!out.flip && nb_rank != pi_f) {
            out.flip = true;
            out.flip_witness = nb;
          }
        }
      },
      enumeration_cap);
  return out;
}

}  // namespace detail

// Fraction of candidates whose model rank differs from the ground-truth rank.
inline double natural_error(const ScoringModel& model, const TokenQuery& q,
                            const CandidateSet& cs) {
  detail::ScoredSet s = detail::score_and_rank(model, q, cs);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < cs.docs.size(); ++i) {
    if (s.ranks[i] != cs.gt_rank_of(cs.docs[i].doc_id)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(cs.docs.size());
}

// Whether some in-budget perturbation of cs.docs[i_doc] lands on or across
// the document's decision boundary; returns the first witness in enumeration
// order (d itself counts when pi_f == pi_n).
inline std::pair<bool, std::optional<TokenDoc>> in_boundary_neighborhood(
    const ScoringModel& model, const TokenQuery& q, const CandidateSet& cs,
    const std::string& doc_id, const SynonymLexicon& lex, const AttackBudget& budget,
    std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  detail::ScoredSet s = detail::score_and_rank(model, q, cs);
  std::size_t i = cs.index_of(doc_id);
  detail::BoundaryScan scan =
      detail::scan_boundary(model, q, cs, s, i, lex, budget, enumeration_cap);
  return {scan.member, scan.member_witness};
}

// Fraction of documents that are correctly ranked AND have a boundary
// neighborhood member.
inline double boundary_error(const ScoringModel& model, const TokenQuery& q,
                             const CandidateSet& cs, const SynonymLexicon& lex,
                             const AttackBudget& budget,
                             std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  detail::ScoredSet s = detail::score_and_rank(model, q, cs);
  std::size_t count = 0;
  for (std::size_t i = 0; i < cs.docs.size(); ++i) {
    if (s.ranks[i] != cs.gt_rank_of(cs.docs[i].doc_id)) continue;
    detail::BoundaryScan scan =
        detail::scan_boundary(model, q, cs, s, i, lex, budget, enumeration_cap);
    if (scan.member) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(cs.docs.size());
}

// Fraction of documents with a boundary-crossing rank flip; upper-bounds
// boundary_error document by document.
inline double boundary_bound(const ScoringModel& model, const TokenQuery& q,
                             const CandidateSet& cs, const SynonymLexicon& lex,
                             const AttackBudget& budget,
                             std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  detail::ScoredSet s = detail::score_and_rank(model, q, cs);
  std::size_t count = 0;
  for (std::size_t i = 0; i < cs.docs.size(); ++i) {
    detail::BoundaryScan scan =
        detail::scan_boundary(model, q, cs, s, i, lex, budget, enumeration_cap);
    if (scan.flip) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(cs.docs.size());
}

// Full per-query report.  r_rob is defined as the sum r_nat + r_bdy (the
// events partition the candidate set); gap is defined as bound_bdy - r_bdy,
// so those two identities hold bit-exactly, and the per_doc ledger lets both
// be re-derived.  Throws VerificationError if any invariant fails.
inline ErrorReport robust_error_report(
    const ScoringModel& model, const TokenQuery& q, const CandidateSet& cs,
    const SynonymLexicon& lex, const AttackBudget& budget,
    std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  detail::ScoredSet s = detail::score_and_rank(model, q, cs);
  const std::size_t n = cs.docs.size();

  ErrorReport report;
  std::size_t nat = 0, bdy = 0, flip = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int gt = cs.gt_rank_of(cs.docs[i].doc_id);
    detail::BoundaryScan scan =
        detail::scan_boundary(model, q, cs, s, i, lex, budget, enumeration_cap);

    PerDocBoundary rec;
    rec.doc_id = cs.docs[i].doc_id;
    rec.correctly_ranked = s.ranks[i] == gt;
    rec.in_boundary_nbhd = scan.member;
    rec.crossing_flip = scan.flip;
    rec.topmost = gt == 1;
    rec.flip_witness = scan.flip_witness;
    report.per_doc.push_back(std::move(rec));

    if (s.ranks[i] != gt) ++nat;
    if (scan.member && s.ranks[i] == gt) ++bdy;
    if (scan.flip) ++flip;
  }
  report.r_nat = static_cast<double>(nat) / static_cast<double>(n);
  report.r_bdy = static_cast<double>(bdy) / static_cast<double>(n);
  report.bound_bdy = static_cast<double>(flip) / static_cast<double>(n);
  report.r_rob = report.r_nat + report.r_bdy;
  report.gap = report.bound_bdy - report.r_bdy;
  report.eta = report.r_nat;

  std::vector<std::string> violations = report.invariant_violations();
  if (!violations.empty()) {
    std::string msg = "robust_error_report invariant violation:";
    for (const std::string& v : violations) msg += " " + v + ";";
    throw VerificationError(msg);
  }
  return report;
}

// Mean of per-query reports with per_doc ledgers concatenated.  The derived
// fields (r_rob, gap, eta) are recomputed from the averaged components so the
// exact identities survive aggregation.
inline ErrorReport aggregate_reports(const std::vector<ErrorReport>& reports) {
  if (reports.empty()) {
    throw ValidationError("aggregate_reports: no reports");
  }
  ErrorReport agg;
  agg.n_queries = static_cast<int>(reports.size());
  for (const ErrorReport& r : reports) {
    agg.r_nat += r.r_nat;
    agg.r_bdy += r.r_bdy;
    agg.bound_bdy += r.bound_bdy;
    agg.per_doc.insert(agg.per_doc.end(), r.per_doc.begin(), r.per_doc.end());
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  agg.r_nat *= inv;
  agg.r_bdy *= inv;
  agg.bound_bdy *= inv;
  agg.r_rob = agg.r_nat + agg.r_bdy;
  agg.gap = agg.bound_bdy - agg.r_bdy;
  agg.eta = agg.r_nat;
  return agg;
}

}  // namespace piat

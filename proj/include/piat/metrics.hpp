#pragma once

// Evaluation metrics: MRR@k on clean and attacked rankings, attack success
// rate (strict rank improvements), and location square deviation (mean
// squared rank displacement between two rankings of the same doc set).

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "piat/core.hpp"

namespace piat {

struct MetricsReport {
  std::map<int, double> clean_mrr_at;
  std::map<int, double> robust_mrr_at;
  double asr = 0.0;
  double lsd = 0.0;
  int n_queries = 0;
  int n_attacked_docs = 0;
};

// 1/rank of the relevant document if its rank is within the cutoff, else 0.
inline double mrr_at_k(const RankedList& ranked, const std::string& relevant_doc_id,
                       int k) {
  if (k < 1) {
    throw ValidationError("mrr_at_k: k must be >= 1");
  }
  int rank = ranked.rank_of(relevant_doc_id);  // throws if absent
  return rank <= k ? 1.0 / static_cast<double>(rank) : 0.0;
}

// Fraction of attacked documents whose rank strictly improved (lower rank
// value = higher position).
inline double attack_success_rate(const std::vector<std::pair<int, int>>& rank_pairs) {
  if (rank_pairs.empty()) {
    throw ValidationError("attack_success_rate: no rank pairs");
  }
  std::size_t improved = 0;
  for (const auto& [orig, attacked] : rank_pairs) {
    if (orig < 1 || attacked < 1) {
      throw ValidationError("attack_success_rate: ranks must be >= 1");
    }
    if (attacked < orig) ++improved;
  }
  return static_cast<double>(improved) / static_cast<double>(rank_pairs.size());
}

// (1/N) * sum over docs of (rank_orig - rank_pert)^2.  Both lists must rank
// the same doc_id set (attacked docs keep their original doc_id).
inline double location_square_deviation(const RankedList& orig,
                                        const RankedList& perturbed) {
  if (orig.entries.size() != perturbed.entries.size()) {
    throw ValidationError("location_square_deviation: list size mismatch (" +
                          std::to_string(orig.entries.size()) + " vs " +
                          std::to_string(perturbed.entries.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < orig.entries.size(); ++i) {
    const std::string& id = orig.entries[i].doc_id;
    if (!perturbed.contains(id)) {
      throw ValidationError("location_square_deviation: doc " + id +
                            " missing from perturbed list");
    }
    double diff = static_cast<double>(i + 1) - static_cast<double>(perturbed.rank_of(id));
    acc += diff * diff;
  }
  return acc / static_cast<double>(orig.entries.size());
}

}  // namespace piat

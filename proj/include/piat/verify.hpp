#pragma once

// Empirical verification of the robust-error decomposition inequalities over
// seeded random instances: the boundary error never exceeds the crossing-flip
// bound, and the bound's slack never exceeds the natural error (within 1e-12).
// Instances stay small enough that every neighborhood is enumerated exactly,
// so a violation here is a real counterexample, not sampling noise.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "piat/core.hpp"
#include "piat/datagen.hpp"
#include "piat/model.hpp"
#include "piat/robustness.hpp"
#include "piat/rng.hpp"

namespace piat {

struct VerifyConfig {
  std::uint64_t seed = 1;
  int trials = 1000;
  std::size_t max_docs = 6;
  std::size_t max_doc_len = 6;

  void validate() const {
    if (trials < 1) throw ValidationError("VerifyConfig: trials must be >= 1");
    if (max_docs < 2) throw ValidationError("VerifyConfig: max_docs must be >= 2");
    if (max_doc_len < 1) {
      throw ValidationError("VerifyConfig: max_doc_len must be >= 1");
    }
  }
};

struct VerifyReport {
  int trials = 0;
  int bound_violations = 0;    // boundary_error > boundary_bound
  int gap_violations = 0;      // bound - error > natural_error + 1e-12
  int report_violations = 0;   // per-report identity ledger failures
  double worst_bound_slack = 0.0;  // max over trials of r_bdy - bound (<= 0 when ok)
  double worst_gap_excess = 0.0;   // max over trials of gap - eta (<= 1e-12 when ok)

  bool ok() const {
    return bound_violations == 0 && gap_violations == 0 && report_violations == 0;
  }
};

// One random (model, instance, lexicon, budget) draw per trial, all streams
// derived from the config seed.
inline VerifyReport verify_decomposition(const VerifyConfig& cfg) {
  cfg.validate();

  VerifyReport report;
  report.worst_bound_slack = -1.0;
  report.worst_gap_excess = -1.0;

  for (int t = 0; t < cfg.trials; ++t) {
    Rng shape(derive_stream(cfg.seed, "verify-shape", t));

    GenConfig gen;
    gen.seed = derive_stream(cfg.seed, "verify-gen", t);
    gen.vocab_size = 12 + shape.uniform_below(8);
    gen.n_queries = 1;
    gen.docs_per_query = 2 + shape.uniform_below(cfg.max_docs - 1);
    gen.doc_len = 1 + shape.uniform_below(cfg.max_doc_len);
    gen.query_len = 1 + shape.uniform_below(3);
    gen.synonym_class_size = 2 + shape.uniform_below(2);
    gen.n_synonym_classes =
        std::min<std::size_t>(4, gen.vocab_size / gen.synonym_class_size);
    GeneratedData data = generate(gen);

    ScoringModel model = ScoringModel::seeded_init(
        gen.vocab_size, 1 + shape.uniform_below(3),
        derive_stream(cfg.seed, "verify-model", t));

    AttackBudget budget;
    budget.epsilon = 0.15 + 0.85 * shape.uniform_real();
    budget.k_max = 1 + static_cast<int>(shape.uniform_below(3));

    const QueryInstance& inst = data.queries[0];
    const double r_nat = natural_error(model, inst.query, inst.candidates);
    const double r_bdy =
        boundary_error(model, inst.query, inst.candidates, data.lexicon, budget);
    const double bound =
        boundary_bound(model, inst.query, inst.candidates, data.lexicon, budget);

    if (r_bdy > bound) ++report.bound_violations;
    const double gap = bound - r_bdy;
    if (gap > r_nat + 1e-12) ++report.gap_violations;
    report.worst_bound_slack = std::max(report.worst_bound_slack, r_bdy - bound);
    report.worst_gap_excess = std::max(report.worst_gap_excess, gap - r_nat);

    try {
      ErrorReport er =
          robust_error_report(model, inst.query, inst.candidates, data.lexicon, budget);
      if (er.r_nat != r_nat || er.r_bdy != r_bdy || er.bound_bdy != bound) {
        ++report.report_violations;
      }
    } catch (const VerificationError&) {
      ++report.report_violations;
    }
    ++report.trials;
  }
  return report;
}

}  // namespace piat

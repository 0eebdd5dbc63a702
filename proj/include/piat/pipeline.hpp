#pragma once

// Experiment pipeline behind the CLI: strict config parsing, the gen / train /
// attack / evaluate / verify / sweep commands, and the in-memory evaluation
// core they share.  Every output is byte-deterministic given the same inputs
// and seeds.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "piat/attack.hpp"
#include "piat/core.hpp"
#include "piat/datagen.hpp"
#include "piat/io.hpp"
#include "piat/loss.hpp"
#include "piat/metrics.hpp"
#include "piat/model.hpp"
#include "piat/rng.hpp"
#include "piat/train.hpp"
#include "piat/verify.hpp"

namespace piat::pipeline {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment configuration: one JSON document with sections; every field has
// a default; unknown keys are rejected before any work starts.

struct EvalAttackConfig {
  AttackBudget budget;
  int n_eval_targets = 4;
  std::uint64_t seed = 99;

  void validate() const {
    budget.validate();
    if (n_eval_targets < 0) {
      throw ValidationError("attack config: n_eval_targets must be >= 0");
    }
  }
};

struct EvalConfig {
  std::vector<int> cutoffs = {10};

  void validate() const {
    if (cutoffs.empty()) {
      throw ValidationError("eval config: at least one cutoff required");
    }
    for (int k : cutoffs) {
      if (k < 1) throw ValidationError("eval config: cutoffs must be >= 1");
    }
  }
};

struct ExperimentConfig {
  GenConfig gen;
  TrainConfig train;
  EvalAttackConfig attack;
  EvalConfig eval;

  void validate() const {
    gen.validate();
    train.validate();
    attack.validate();
    eval.validate();
  }
};

namespace detail {

inline void reject_unknown_keys(const json& j,
                                std::initializer_list<const char*> known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ValidationError(where + ": unknown key \"" + it.key() + "\"");
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

inline void read_gen(const json& j, GenConfig& g, const std::string& where) {
  reject_unknown_keys(j,
                      {"seed", "vocab_size", "n_queries", "docs_per_query", "doc_len",
                       "query_len", "synonym_class_size", "n_synonym_classes",
                       "relevance_noise"},
                      where);
  read_field(j, "seed", g.seed);
  read_field(j, "vocab_size", g.vocab_size);
  read_field(j, "n_queries", g.n_queries);
  read_field(j, "docs_per_query", g.docs_per_query);
  read_field(j, "doc_len", g.doc_len);
  read_field(j, "query_len", g.query_len);
  read_field(j, "synonym_class_size", g.synonym_class_size);
  read_field(j, "n_synonym_classes", g.n_synonym_classes);
  read_field(j, "relevance_noise", g.relevance_noise);
}

inline void read_train(const json& j, TrainConfig& t, const std::string& where) {
  reject_unknown_keys(
      j,
      {"method", "lambda", "variant", "phi", "detach_clean_target",
       "listnet_top_one", "epochs", "batch_size", "learning_rate",
       "n_hard_negatives", "n_random_negatives", "adv_fraction",
       "n_attack_per_query", "adv_refresh_epochs", "seed", "embedding_dim",
       "at_supplement_clean"},
      where);
  if (j.contains("method")) {
    t.method = train_method_from_name(j.at("method").get<std::string>());
  }
  read_field(j, "lambda", t.tradeoff.lambda);
  if (j.contains("variant")) {
    t.tradeoff.adv_variant = adv_variant_from_name(j.at("variant").get<std::string>());
  }
  if (j.contains("phi")) {
    t.tradeoff.phi = phi_from_name(j.at("phi").get<std::string>());
  }
  read_field(j, "detach_clean_target", t.tradeoff.detach_clean_target);
  read_field(j, "listnet_top_one", t.tradeoff.listnet_top_one);
  read_field(j, "epochs", t.epochs);
  read_field(j, "batch_size", t.batch_size);
  read_field(j, "learning_rate", t.learning_rate);
  read_field(j, "n_hard_negatives", t.n_hard_negatives);
  read_field(j, "n_random_negatives", t.n_random_negatives);
  read_field(j, "adv_fraction", t.adv_fraction);
  read_field(j, "n_attack_per_query", t.n_attack_per_query);
  read_field(j, "adv_refresh_epochs", t.adv_refresh_epochs);
  read_field(j, "seed", t.seed);
  read_field(j, "embedding_dim", t.embedding_dim);
  read_field(j, "at_supplement_clean", t.at_supplement_clean);
}

inline void read_attack(const json& j, EvalAttackConfig& a, const std::string& where) {
  reject_unknown_keys(j, {"epsilon", "k_max", "n_eval_targets", "seed"}, where);
  read_field(j, "epsilon", a.budget.epsilon);
  read_field(j, "k_max", a.budget.k_max);
  read_field(j, "n_eval_targets", a.n_eval_targets);
  read_field(j, "seed", a.seed);
}

inline void read_eval(const json& j, EvalConfig& e, const std::string& where) {
  reject_unknown_keys(j, {"cutoffs"}, where);
  read_field(j, "cutoffs", e.cutoffs);
}

}  // namespace detail

// The training attack and the evaluation attack share one substitution budget.
inline ExperimentConfig experiment_config_from_json(const json& j,
                                                    const std::string& origin) {
  detail::reject_unknown_keys(j, {"gen", "train", "attack", "eval"}, origin);
  ExperimentConfig cfg;
  if (j.contains("gen")) detail::read_gen(j.at("gen"), cfg.gen, origin + ": gen");
  if (j.contains("train")) detail::read_train(j.at("train"), cfg.train, origin + ": train");
  if (j.contains("attack")) {
    detail::read_attack(j.at("attack"), cfg.attack, origin + ": attack");
  }
  if (j.contains("eval")) detail::read_eval(j.at("eval"), cfg.eval, origin + ": eval");
  cfg.train.budget = cfg.attack.budget;
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return experiment_config_from_json(
      io::detail::parse_json(io::read_file(path), path.string()), path.string());
}

// ---------------------------------------------------------------------------
// In-memory pipeline core.

// Per-query evaluation attack output, index-aligned with data.queries.
struct AttackedQuery {
  std::vector<AttackResult> results;            // one per attacked target
  std::vector<TokenDoc> docs;                   // full list, targets replaced
  std::vector<std::size_t> attacked_indices;    // positions of the targets
};

inline RankedList rank_candidates(const ScoringModel& model, const TokenQuery& q,
                                  const std::vector<TokenDoc>& docs,
                                  const std::string& query_id) {
  QueryScorer scorer(model, q);
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(docs.size());
  for (const TokenDoc& d : docs) scored.emplace_back(d.doc_id, scorer.score(d));
  return rank_by_scores(query_id, std::move(scored));
}

// Evaluation targets: the candidates below the model's top position are cut
// into up to n_targets contiguous rank bands and one document is sampled per
// band, the desk-scale analogue of attacking one document per ten-rank band.
// Two documents are never targets: the model's top one (the attack only
// raises scores, so its rank is unimprovable) and the relevant one (the
// protocol attacks non-relevant documents into the relevant one's territory).
inline std::vector<std::size_t> stratified_eval_targets(const RankedList& clean,
                                                        const CandidateSet& cs,
                                                        int n_targets, Rng& rng) {
  if (n_targets <= 0) return {};
  const std::string relevant = cs.gt_top().doc_id;
  std::vector<std::size_t> eligible;  // candidate indices, rank order
  for (std::size_t r = 1; r < clean.entries.size(); ++r) {
    if (clean.entries[r].doc_id != relevant) {
      eligible.push_back(cs.index_of(clean.entries[r].doc_id));
    }
  }
  const int span = static_cast<int>(eligible.size());
  const int bands = std::min(n_targets, span);
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(bands));
  for (int b = 0; b < bands; ++b) {
    const int start = static_cast<int>(static_cast<std::int64_t>(b) * span / bands);
    const int end = static_cast<int>(static_cast<std::int64_t>(b + 1) * span / bands) - 1;
    const int pick = start + static_cast<int>(rng.uniform_below(
                                 static_cast<std::uint64_t>(end - start + 1)));
    out.push_back(eligible[static_cast<std::size_t>(pick)]);
  }
  return out;
}

inline std::vector<AttackedQuery> attack_dataset(const ScoringModel& model,
                                                 const GeneratedData& data,
                                                 const EvalAttackConfig& cfg) {
  std::vector<AttackedQuery> out;
  out.reserve(data.queries.size());
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const QueryInstance& inst = data.queries[qi];
    AttackedQuery aq;
    aq.docs = inst.candidates.docs;

    RankedList clean =
        rank_candidates(model, inst.query, inst.candidates.docs, inst.query.query_id);
    Rng rng(derive_stream(cfg.seed, "eval-attack-targets", qi));
    aq.attacked_indices =
        stratified_eval_targets(clean, inst.candidates, cfg.n_eval_targets, rng);

    for (std::size_t idx : aq.attacked_indices) {
      AttackResult r = greedy_attack(model, inst.query, inst.candidates.docs[idx],
                                     data.lexicon, cfg.budget);
      aq.docs[idx] = r.adversarial;
      aq.results.push_back(std::move(r));
    }
    out.push_back(std::move(aq));
  }
  return out;
}

struct EvalOutcome {
  MetricsReport metrics;
  std::vector<RankedList> clean_lists;
  std::vector<RankedList> attacked_lists;
};

// Clean and attacked rankings plus the corpus metrics.  MRR cutoffs are
// averaged over all queries; ASR is counted over attacked documents; LSD is
// averaged over the queries that actually contain attacked documents.
inline EvalOutcome evaluate_model(const ScoringModel& model, const GeneratedData& data,
                                  const std::vector<AttackedQuery>& attacked,
                                  const EvalConfig& eval) {
  eval.validate();
  if (attacked.size() != data.queries.size()) {
    throw ValidationError("evaluate_model: attacked-query list misaligned with data");
  }

  EvalOutcome out;
  std::vector<std::pair<int, int>> asr_pairs;
  double lsd_sum = 0.0;
  int lsd_queries = 0;

  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const QueryInstance& inst = data.queries[qi];
    const std::string relevant = inst.candidates.gt_top().doc_id;

    RankedList clean =
        rank_candidates(model, inst.query, inst.candidates.docs, inst.query.query_id);
    RankedList adv =
        rank_candidates(model, inst.query, attacked[qi].docs, inst.query.query_id);

    for (int k : eval.cutoffs) {
      out.metrics.clean_mrr_at[k] += mrr_at_k(clean, relevant, k);
      out.metrics.robust_mrr_at[k] += mrr_at_k(adv, relevant, k);
    }
    for (std::size_t idx : attacked[qi].attacked_indices) {
      const std::string& doc_id = inst.candidates.docs[idx].doc_id;
      asr_pairs.emplace_back(clean.rank_of(doc_id), adv.rank_of(doc_id));
    }
    if (!attacked[qi].attacked_indices.empty()) {
      lsd_sum += location_square_deviation(clean, adv);
      ++lsd_queries;
    }

    out.clean_lists.push_back(std::move(clean));
    out.attacked_lists.push_back(std::move(adv));
  }

  const double n_q = static_cast<double>(data.queries.size());
  for (int k : eval.cutoffs) {
    out.metrics.clean_mrr_at[k] /= n_q;
    out.metrics.robust_mrr_at[k] /= n_q;
  }
  out.metrics.asr = asr_pairs.empty() ? 0.0 : attack_success_rate(asr_pairs);
  out.metrics.lsd = lsd_queries == 0 ? 0.0 : lsd_sum / static_cast<double>(lsd_queries);
  out.metrics.n_queries = static_cast<int>(data.queries.size());
  out.metrics.n_attacked_docs = static_cast<int>(asr_pairs.size());
  return out;
}

// ---------------------------------------------------------------------------
// Commands.

inline void run_gen(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  io::save_dataset(out_dir, generate(cfg.gen));
}

// Content hash of the serialized checkpoint, recorded in the train log.
inline std::string payload_hash(const std::string& bytes) {
  std::uint64_t h = derive_stream(0x1d0c5eedULL, bytes);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline TrainLog run_train(const ExperimentConfig& cfg,
                          const std::filesystem::path& data_dir,
                          const std::filesystem::path& checkpoint_path) {
  GeneratedData data = io::load_dataset(data_dir);
  auto [model, log] = train(cfg.train, data.queries, data.lexicon, data.vocab.size());

  const std::string ckpt =
      io::checkpoint_to_json(model, io::vocab_content_hash(data.vocab)).dump(2) + "\n";
  log.checkpoint_hash = payload_hash(ckpt);
  if (checkpoint_path.has_parent_path()) {
    std::filesystem::create_directories(checkpoint_path.parent_path());
  }
  io::write_file_atomic(checkpoint_path, ckpt);
  io::write_file_atomic(checkpoint_path.parent_path() / "trainlog.json",
                        io::trainlog_to_json(log).dump(2) + "\n");
  return log;
}

inline void run_attack(const ExperimentConfig& cfg,
                       const std::filesystem::path& data_dir,
                       const std::filesystem::path& checkpoint_path,
                       const std::filesystem::path& out_dir) {
  GeneratedData data = io::load_dataset(data_dir);
  ScoringModel model =
      io::load_checkpoint(checkpoint_path, io::vocab_content_hash(data.vocab));

  std::vector<AttackedQuery> attacked = attack_dataset(model, data, cfg.attack);

  std::vector<io::CorpusEntry> corpus;
  std::vector<std::pair<std::string, std::vector<AttackResult>>> per_query;
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const QueryInstance& inst = data.queries[qi];
    std::vector<bool> is_target(inst.candidates.docs.size(), false);
    for (std::size_t idx : attacked[qi].attacked_indices) is_target[idx] = true;

    std::size_t ri = 0;
    for (std::size_t d = 0; d < inst.candidates.docs.size(); ++d) {
      if (is_target[d]) {
        const AttackResult& r = attacked[qi].results[ri++];
        corpus.push_back({r.adversarial, r.original.doc_id, r.substituted_positions});
      } else {
        corpus.push_back({inst.candidates.docs[d], "", {}});
      }
    }
    per_query.emplace_back(inst.query.query_id, attacked[qi].results);
  }

  std::filesystem::create_directories(out_dir);
  io::write_file_atomic(out_dir / "attacked_corpus.jsonl", io::corpus_to_jsonl(corpus));
  io::write_file_atomic(out_dir / "attacks.json",
                        io::attacks_to_json(per_query).dump(2) + "\n");
}

inline MetricsReport run_evaluate(const ExperimentConfig& cfg,
                                  const std::filesystem::path& data_dir,
                                  const std::filesystem::path& attacked_dir,
                                  const std::filesystem::path& checkpoint_path,
                                  const std::filesystem::path& out_dir) {
  GeneratedData data = io::load_dataset(data_dir);
  ScoringModel model =
      io::load_checkpoint(checkpoint_path, io::vocab_content_hash(data.vocab));

  const std::filesystem::path corpus_path = attacked_dir / "attacked_corpus.jsonl";
  std::vector<io::CorpusEntry> entries =
      io::corpus_from_jsonl(io::read_file(corpus_path), corpus_path.string());
  std::map<std::string, const io::CorpusEntry*> by_id;
  for (const io::CorpusEntry& e : entries) {
    validate_tokens(e.doc.tokens, data.vocab.size(), "attacked doc " + e.doc.doc_id);
    if (!by_id.emplace(e.doc.doc_id, &e).second) {
      throw ValidationError(corpus_path.string() + ": duplicate doc_id " + e.doc.doc_id);
    }
  }

  std::vector<AttackedQuery> attacked(data.queries.size());
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const QueryInstance& inst = data.queries[qi];
    attacked[qi].docs = inst.candidates.docs;
    for (std::size_t d = 0; d < inst.candidates.docs.size(); ++d) {
      auto it = by_id.find(inst.candidates.docs[d].doc_id);
      if (it == by_id.end()) {
        throw ValidationError(corpus_path.string() + ": missing doc " +
                              inst.candidates.docs[d].doc_id);
      }
      if (it->second->attacked()) {
        if (it->second->origin_doc_id != inst.candidates.docs[d].doc_id) {
          throw ValidationError(corpus_path.string() + ": doc " +
                                it->second->doc.doc_id + " replaces " +
                                it->second->origin_doc_id +
                                ", which is not the candidate it shadows");
        }
        attacked[qi].docs[d] = it->second->doc;
        attacked[qi].attacked_indices.push_back(d);
      }
    }
  }

  EvalOutcome outcome = evaluate_model(model, data, attacked, cfg.eval);

  std::filesystem::create_directories(out_dir);
  io::write_file_atomic(out_dir / "clean.run", io::run_to_text(outcome.clean_lists));
  io::write_file_atomic(out_dir / "attacked.run", io::run_to_text(outcome.attacked_lists));
  io::write_file_atomic(out_dir / "metrics.json",
                        io::metrics_to_json(outcome.metrics).dump(2) + "\n");
  return outcome.metrics;
}

inline json verify_report_to_json(const VerifyReport& r) {
  return json{{"trials", r.trials},
              {"bound_violations", r.bound_violations},
              {"gap_violations", r.gap_violations},
              {"report_violations", r.report_violations},
              {"worst_bound_slack", r.worst_bound_slack},
              {"worst_gap_excess", r.worst_gap_excess},
              {"ok", r.ok()}};
}

inline VerifyReport run_verify(const VerifyConfig& cfg,
                               const std::filesystem::path& out_path) {
  VerifyReport report = verify_decomposition(cfg);
  io::write_file_atomic(out_path, verify_report_to_json(report).dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------------------
// Lambda sweep: one full train/attack/evaluate cycle per lambda on a shared
// generated corpus, emitting one CSV row per lambda for the configured
// adversarial variant.

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid = {0.2, 0.35, 0.5, 0.65, 0.8};
  return grid;
}

struct SweepRow {
  double lambda = 0.0;
  std::string variant;
  double clean_mrr = 0.0;
  double robust_mrr = 0.0;
  double asr = 0.0;
  double lsd = 0.0;
};

inline MetricsReport run_cycle_in_memory(const ExperimentConfig& cfg,
                                         const GeneratedData& data) {
  auto [model, log] = train(cfg.train, data.queries, data.lexicon, data.vocab.size());
  std::vector<AttackedQuery> attacked = attack_dataset(model, data, cfg.attack);
  return evaluate_model(model, data, attacked, cfg.eval).metrics;
}

inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base,
                                       const std::vector<double>& lambdas,
                                       const std::filesystem::path& out_csv) {
  if (lambdas.empty()) {
    throw ValidationError("sweep: at least one lambda required");
  }
  GeneratedData data = generate(base.gen);

  std::vector<SweepRow> rows;
  std::string csv = "lambda,variant,clean_mrr@10,robust_mrr@10,asr,lsd\n";
  for (double lambda : lambdas) {
    ExperimentConfig cfg = base;
    cfg.train.method = TrainMethod::PIAT;
    cfg.train.tradeoff.lambda = lambda;
    cfg.train.tradeoff.validate();
    MetricsReport m = run_cycle_in_memory(cfg, data);
    if (!m.clean_mrr_at.count(10) || !m.robust_mrr_at.count(10)) {
      throw ValidationError("sweep: cutoff 10 missing from eval config");
    }

    SweepRow row{lambda, adv_variant_name(cfg.train.tradeoff.adv_variant),
                 m.clean_mrr_at.at(10), m.robust_mrr_at.at(10), m.asr, m.lsd};
    rows.push_back(row);

    char buf[256];
    std::snprintf(buf, sizeof(buf), "%g,%s,%.6f,%.6f,%.6f,%.6f\n", row.lambda,
                  row.variant.c_str(), row.clean_mrr, row.robust_mrr, row.asr, row.lsd);
    csv += buf;
  }
  io::write_file_atomic(out_csv, csv);
  return rows;
}

}  // namespace piat::pipeline

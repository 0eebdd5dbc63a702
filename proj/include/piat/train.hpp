#pragma once

// Training loops: standard training (ST), data augmentation (DA), adversarial
// training (AT), and perturbation-invariant adversarial training (PIAT) with
// any of the adversarial regularizers.  Plain gradient descent with a fixed
// step; every random draw comes from a purpose-tagged stream derived from the
// config seed, so runs are bitwise reproducible and methods sharing a stage
// (e.g. negative sampling) consume identical draws.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "piat/attack.hpp"
#include "piat/core.hpp"
#include "piat/datagen.hpp"
#include "piat/loss.hpp"
#include "piat/model.hpp"
#include "piat/rng.hpp"

namespace piat {

enum class TrainMethod { ST, DA, AT, PIAT };

inline const char* train_method_name(TrainMethod m) {
  switch (m) {
    case TrainMethod::ST: return "ST";
    case TrainMethod::DA: return "DA";
    case TrainMethod::AT: return "AT";
    case TrainMethod::PIAT: return "PIAT";
  }
  return "?";
}

inline TrainMethod train_method_from_name(const std::string& name) {
  if (name == "ST") return TrainMethod::ST;
  if (name == "DA") return TrainMethod::DA;
  if (name == "AT") return TrainMethod::AT;
  if (name == "PIAT") return TrainMethod::PIAT;
  throw ValidationError("unknown training method: " + name +
                        " (expected ST, DA, AT, or PIAT)");
}

struct TrainConfig {
  TrainMethod method = TrainMethod::PIAT;
  TradeoffConfig tradeoff;
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 0.05;
  int n_hard_negatives = 4;
  int n_random_negatives = 4;
  // Fraction of training queries that receive adversarial examples (AT and
  // PIAT); the rest train on the natural loss alone.
  double adv_fraction = 0.1;
  int n_attack_per_query = 10;
  // Regenerate adversarial examples every this many epochs; 0 = generate
  // once at the start and keep.
  int adv_refresh_epochs = 0;
  std::uint64_t seed = 7;
  std::size_t embedding_dim = 8;
  AttackBudget budget;
  // AT keeps the clean pairs alongside the adversarial ones (supplement);
  // disabling trains the selected queries on adversarial pairs only.
  bool at_supplement_clean = true;

  void validate() const {
    tradeoff.validate();
    budget.validate();
    if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) {
      throw ValidationError("TrainConfig: learning_rate must be > 0");
    }
    if (n_hard_negatives < 0 || n_random_negatives < 0) {
      throw ValidationError("TrainConfig: negative counts must be >= 0");
    }
    if (n_hard_negatives + n_random_negatives < 1) {
      throw ValidationError("TrainConfig: at least one negative per query required");
    }
    if (!(adv_fraction >= 0.0 && adv_fraction <= 1.0)) {
      throw ValidationError("TrainConfig: adv_fraction must lie in [0, 1]");
    }
    if (n_attack_per_query < 0) {
      throw ValidationError("TrainConfig: n_attack_per_query must be >= 0");
    }
    if (adv_refresh_epochs < 0) {
      throw ValidationError("TrainConfig: adv_refresh_epochs must be >= 0");
    }
    if (embedding_dim < 1) {
      throw ValidationError("TrainConfig: embedding_dim must be >= 1");
    }
  }
};

struct EpochRecord {
  double natural_loss = 0.0;
  double adversarial_loss = 0.0;
  double combined_loss = 0.0;
  double wall_seconds = 0.0;  // never serialized; payloads stay deterministic
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::string checkpoint_hash;  // filled when the checkpoint is serialized
};

// Hard negatives: the best-scored non-relevant candidates under the current
// model, in rank order.  Random negatives: a uniform draw from the remaining
// non-relevant candidates.  The ground-truth top document is never returned.
inline std::vector<std::size_t> sample_negative_indices(
    const ScoringModel& model, const TokenQuery& q, const CandidateSet& cs,
    int n_hard, int n_random, Rng& rng) {
  if (n_hard < 0 || n_random < 0) {
    throw ValidationError("sample_negatives: counts must be >= 0");
  }
  const std::size_t need = static_cast<std::size_t>(n_hard) +
                           static_cast<std::size_t>(n_random);
  if (need > cs.docs.size() - 1) {
    throw ValidationError("sample_negatives: requested " + std::to_string(need) +
                          " negatives but only " + std::to_string(cs.docs.size() - 1) +
                          " non-relevant candidates exist");
  }
  if (need == 0) return {};

  QueryScorer scorer(model, q);
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(cs.docs.size());
  for (const TokenDoc& d : cs.docs) scored.emplace_back(d.doc_id, scorer.score(d));
  RankedList ranked = rank_by_scores(cs.query_id, std::move(scored));

  std::vector<std::size_t> non_relevant;  // candidate indices, best first
  for (const RankedEntry& e : ranked.entries) {
    if (cs.gt_rank_of(e.doc_id) != 1) non_relevant.push_back(cs.index_of(e.doc_id));
  }

  std::vector<std::size_t> out(non_relevant.begin(),
                               non_relevant.begin() + n_hard);
  std::vector<std::size_t> rest(non_relevant.begin() + n_hard, non_relevant.end());
  rng.shuffle(rest);
  out.insert(out.end(), rest.begin(), rest.begin() + n_random);
  return out;
}

// Spec-shaped convenience wrapper returning the documents themselves.
inline std::vector<TokenDoc> sample_negatives(const ScoringModel& model,
                                              const TokenQuery& q,
                                              const CandidateSet& cs, int n_hard,
                                              int n_random, Rng& rng) {
  std::vector<TokenDoc> out;
  for (std::size_t i : sample_negative_indices(model, q, cs, n_hard, n_random, rng)) {
    out.push_back(cs.docs[i]);
  }
  return out;
}

namespace detail {

// One uniformly synonym-substituted copy of a document: the budget's
// substitution count (or every synonym-bearing position if fewer), positions
// chosen uniformly, each replaced by a uniform synonym.
inline TokenDoc augment_document(const TokenDoc& d, const SynonymLexicon& lex,
                                 const AttackBudget& budget, Rng& rng) {
  TokenDoc out = d;
  std::vector<std::size_t> bearing;
  for (std::size_t i = 0; i < d.tokens.size(); ++i) {
    if (!lex.synonyms_of(d.tokens[i]).empty()) bearing.push_back(i);
  }
  const std::size_t n_subs =
      std::min(bearing.size(),
               static_cast<std::size_t>(std::max(budget.substitution_limit(d.tokens.size()), 0)));
  if (n_subs == 0) return out;
  rng.shuffle(bearing);
  for (std::size_t k = 0; k < n_subs; ++k) {
    const std::size_t pos = bearing[k];
    const std::vector<TokenId>& syns = lex.synonyms_of(d.tokens[pos]);
    out.tokens[pos] = syns[rng.uniform_below(syns.size())];
  }
  return out;
}

}  // namespace detail

// Trains a model on the query instances.  Deterministic given the config;
// divergence (non-finite loss) aborts with the epoch and batch index.
inline std::pair<ScoringModel, TrainLog> train(const TrainConfig& cfg,
                                               const std::vector<QueryInstance>& data,
                                               const SynonymLexicon& lex,
                                               std::size_t vocab_size) {
  cfg.validate();
  if (data.empty()) throw ValidationError("train: no training queries");
  for (const QueryInstance& inst : data) {
    inst.candidates.validate();
    validate_tokens(inst.query.tokens, vocab_size, "query " + inst.query.query_id);
    for (const TokenDoc& d : inst.candidates.docs) {
      validate_tokens(d.tokens, vocab_size, "doc " + d.doc_id);
    }
  }
  lex.validate_against_vocab(vocab_size);

  const std::size_t n_queries = data.size();
  ScoringModel model = ScoringModel::seeded_init(vocab_size, cfg.embedding_dim,
                                                 derive_stream(cfg.seed, "train-init"));

  const bool uses_adv =
      cfg.method == TrainMethod::AT || cfg.method == TrainMethod::PIAT;

  // Queries that receive adversarial examples: a seeded uniform sample of
  // round(adv_fraction * N_q) queries, fixed for the whole run.
  std::vector<bool> selected(n_queries, false);
  if (uses_adv) {
    std::size_t n_sel = static_cast<std::size_t>(
        std::llround(cfg.adv_fraction * static_cast<double>(n_queries)));
    n_sel = std::min(n_sel, n_queries);
    std::vector<std::size_t> idx(n_queries);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_stream(cfg.seed, "train-adv-select"));
    rng.shuffle(idx);
    for (std::size_t i = 0; i < n_sel; ++i) selected[idx[i]] = true;
  }

  // DA: two augmented copies of every candidate list, generated once.
  std::vector<std::array<std::vector<TokenDoc>, 2>> augmented;
  if (cfg.method == TrainMethod::DA) {
    augmented.resize(n_queries);
    for (std::size_t qi = 0; qi < n_queries; ++qi) {
      for (std::size_t copy = 0; copy < 2; ++copy) {
        Rng rng(derive_stream(cfg.seed, "train-augment", qi, copy));
        std::vector<TokenDoc>& docs = augmented[qi][copy];
        docs.reserve(data[qi].candidates.docs.size());
        for (const TokenDoc& d : data[qi].candidates.docs) {
          docs.push_back(detail::augment_document(d, lex, cfg.budget, rng));
        }
      }
    }
  }

  // Per-query adversarial document lists, index-aligned with candidates.
  std::vector<std::vector<TokenDoc>> adv_docs(n_queries);

  TrainLog log;
  const double lambda = cfg.tradeoff.lambda;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();

    if (uses_adv &&
        (epoch == 0 || (cfg.adv_refresh_epochs > 0 && epoch % cfg.adv_refresh_epochs == 0))) {
      for (std::size_t qi = 0; qi < n_queries; ++qi) {
        if (!selected[qi]) continue;
        const int n_attack = std::min<int>(
            cfg.n_attack_per_query, static_cast<int>(data[qi].candidates.docs.size()));
        auto [results, d_adv] = attack_candidate_set(
            model, data[qi].query, data[qi].candidates, lex, cfg.budget, n_attack,
            derive_stream(cfg.seed, "train-attack", epoch, qi));
        adv_docs[qi] = std::move(d_adv);
      }
    }

    std::vector<std::size_t> order(n_queries);
    std::iota(order.begin(), order.end(), std::size_t{0});
    {
      Rng rng(derive_stream(cfg.seed, "train-order", epoch));
      rng.shuffle(order);
    }

    double nat_sum = 0.0, adv_sum = 0.0, comb_sum = 0.0;

    for (std::size_t start = 0; start < n_queries; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(n_queries, start + static_cast<std::size_t>(cfg.batch_size));
      Gradient acc(vocab_size, cfg.embedding_dim);

      for (std::size_t b = start; b < end; ++b) {
        const std::size_t qi = order[b];
        const QueryInstance& inst = data[qi];
        const CandidateSet& cs = inst.candidates;

        Rng neg_rng(derive_stream(cfg.seed, "train-negatives", epoch, qi));
        std::vector<std::size_t> neg_idx = sample_negative_indices(
            model, inst.query, cs, cfg.n_hard_negatives, cfg.n_random_negatives, neg_rng);
        const std::size_t pos_idx = cs.index_of(cs.gt_top().doc_id);

        QueryScorer scorer(model, inst.query);
        std::vector<TokenDoc> pair_docs;
        pair_docs.reserve(1 + neg_idx.size());
        pair_docs.push_back(cs.docs[pos_idx]);
        for (std::size_t ni : neg_idx) pair_docs.push_back(cs.docs[ni]);

        std::vector<double> neg_scores;
        neg_scores.reserve(neg_idx.size());
        for (std::size_t ni : neg_idx) neg_scores.push_back(scorer.score(cs.docs[ni]));
        LossOutput nat = natural_loss(scorer.score(cs.docs[pos_idx]), neg_scores);

        double query_nat = nat.value;
        double query_adv = 0.0;
        double query_comb = nat.value;

        switch (cfg.method) {
          case TrainMethod::ST: {
            acc.add_scaled(backprop(model, inst.query, pair_docs, nat.grad_scores_clean), 1.0);
            break;
          }
          case TrainMethod::DA: {
            // Mean of the clean loss and the two augmented-copy losses.
            acc.add_scaled(backprop(model, inst.query, pair_docs, nat.grad_scores_clean),
                           1.0 / 3.0);
            double value_sum = nat.value;
            for (std::size_t copy = 0; copy < 2; ++copy) {
              const std::vector<TokenDoc>& aug = augmented[qi][copy];
              std::vector<TokenDoc> aug_docs;
              aug_docs.reserve(pair_docs.size());
              aug_docs.push_back(aug[pos_idx]);
              for (std::size_t ni : neg_idx) aug_docs.push_back(aug[ni]);
              std::vector<double> aug_negs;
              aug_negs.reserve(neg_idx.size());
              for (std::size_t ni : neg_idx) aug_negs.push_back(scorer.score(aug[ni]));
              LossOutput aug_nat = natural_loss(scorer.score(aug[pos_idx]), aug_negs);
              acc.add_scaled(backprop(model, inst.query, aug_docs, aug_nat.grad_scores_clean),
                             1.0 / 3.0);
              value_sum += aug_nat.value;
            }
            query_nat = value_sum / 3.0;
            query_comb = query_nat;
            break;
          }
          case TrainMethod::AT: {
            if (selected[qi] && !adv_docs[qi].empty()) {
              const std::vector<TokenDoc>& adv = adv_docs[qi];
              std::vector<TokenDoc> adv_pair_docs;
              adv_pair_docs.reserve(pair_docs.size());
              adv_pair_docs.push_back(adv[pos_idx]);
              for (std::size_t ni : neg_idx) adv_pair_docs.push_back(adv[ni]);
              std::vector<double> adv_negs;
              adv_negs.reserve(neg_idx.size());
              for (std::size_t ni : neg_idx) adv_negs.push_back(scorer.score(adv[ni]));
              LossOutput adv_nat = natural_loss(scorer.score(adv[pos_idx]), adv_negs);
              query_adv = adv_nat.value;
              if (cfg.at_supplement_clean) {
                acc.add_scaled(backprop(model, inst.query, pair_docs, nat.grad_scores_clean), 0.5);
                acc.add_scaled(
                    backprop(model, inst.query, adv_pair_docs, adv_nat.grad_scores_clean), 0.5);
                query_comb = 0.5 * (nat.value + adv_nat.value);
              } else {
                acc.add_scaled(
                    backprop(model, inst.query, adv_pair_docs, adv_nat.grad_scores_clean), 1.0);
                query_comb = adv_nat.value;
              }
            } else {
              acc.add_scaled(backprop(model, inst.query, pair_docs, nat.grad_scores_clean), 1.0);
            }
            break;
          }
          case TrainMethod::PIAT: {
            if (selected[qi] && !adv_docs[qi].empty()) {
              std::vector<double> clean_scores;
              clean_scores.reserve(cs.docs.size());
              for (const TokenDoc& d : cs.docs) clean_scores.push_back(scorer.score(d));
              std::vector<double> adv_scores;
              adv_scores.reserve(adv_docs[qi].size());
              for (const TokenDoc& d : adv_docs[qi]) adv_scores.push_back(scorer.score(d));

              LossOutput adv_out = adversarial_loss(cfg.tradeoff, clean_scores, adv_scores);
              query_adv = adv_out.value;
              query_comb = lambda * nat.value + (1.0 - lambda) * adv_out.value;

              if (lambda != 0.0) {
                std::vector<double> up(nat.grad_scores_clean);
                for (double& g : up) g *= lambda;
                acc.add_scaled(backprop(model, inst.query, pair_docs, up), 1.0);
              }
              const double wa = 1.0 - lambda;
              if (wa != 0.0) {
                if (!adv_out.grad_scores_clean.empty()) {
                  std::vector<double> up(adv_out.grad_scores_clean);
                  for (double& g : up) g *= wa;
                  acc.add_scaled(backprop(model, inst.query, cs.docs, up), 1.0);
                }
                if (!adv_out.grad_scores_adv.empty()) {
                  std::vector<double> up(adv_out.grad_scores_adv);
                  for (double& g : up) g *= wa;
                  acc.add_scaled(backprop(model, inst.query, adv_docs[qi], up), 1.0);
                }
              }
            } else {
              // Unselected queries contribute lambda * L_nat, not renormalized.
              query_comb = lambda * nat.value;
              if (lambda != 0.0) {
                std::vector<double> up(nat.grad_scores_clean);
                for (double& g : up) g *= lambda;
                acc.add_scaled(backprop(model, inst.query, pair_docs, up), 1.0);
              }
            }
            break;
          }
        }

        if (!std::isfinite(query_comb) || !std::isfinite(query_nat) ||
            !std::isfinite(query_adv)) {
          throw std::runtime_error(
              "train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(start / static_cast<std::size_t>(cfg.batch_size)) +
              " (query " + inst.query.query_id + ")");
        }
        nat_sum += query_nat;
        adv_sum += query_adv;
        comb_sum += query_comb;
      }

      model.apply_gradient(acc, -cfg.learning_rate / static_cast<double>(end - start));
    }

    model.check_finite();
    EpochRecord rec;
    rec.natural_loss = nat_sum / static_cast<double>(n_queries);
    rec.adversarial_loss = adv_sum / static_cast<double>(n_queries);
    rec.combined_loss = comb_sum / static_cast<double>(n_queries);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    log.epochs.push_back(rec);
  }

  return {std::move(model), std::move(log)};
}

}  // namespace piat

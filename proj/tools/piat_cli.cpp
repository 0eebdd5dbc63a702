// Command-line driver: data generation, training, attacking, evaluation,
// decomposition verification, and the lambda sweep.  Exit codes: 0 success,
// 1 validation error, 2 verification-inequality violation, 3 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "piat/pipeline.hpp"

namespace {

namespace fs = std::filesystem;

piat::pipeline::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return piat::pipeline::load_experiment_config(path);
}

// Per-doc mean-pooled representations for offline projection tools.
void dump_representations(const piat::ScoringModel& model,
                          const piat::GeneratedData& data, const fs::path& out) {
  nlohmann::json queries = nlohmann::json::array();
  for (const piat::QueryInstance& inst : data.queries) {
    nlohmann::json docs = nlohmann::json::array();
    for (const piat::TokenDoc& d : inst.candidates.docs) {
      docs.push_back(nlohmann::json{{"doc_id", d.doc_id},
                                    {"rep", model.mean_embedding(d.tokens)}});
    }
    queries.push_back(nlohmann::json{{"query_id", inst.query.query_id},
                                     {"query_rep", model.mean_embedding(inst.query.tokens)},
                                     {"docs", std::move(docs)}});
  }
  piat::io::write_file_atomic(out, queries.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perturbation-invariant adversarial training toolkit for ranking"};
  app.require_subcommand(1);
  int exit_code = 0;

  // --- gen -----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a synthetic ranking corpus");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "experiment config file");
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "override gen seed");
  gen->callback([&] {
    auto cfg = load_config(gen_config);
    if (*gen_seed_opt) cfg.gen.seed = gen_seed;
    piat::pipeline::run_gen(cfg, gen_out);
    std::printf("wrote dataset (%zu queries) to %s\n", cfg.gen.n_queries,
                gen_out.c_str());
  });

  // --- train ---------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train a scoring model");
  std::string tr_config, tr_data, tr_out, tr_method, tr_variant, tr_phi;
  double tr_lambda = 0.5, tr_lr = 0.0, tr_adv_fraction = 0.0;
  int tr_epochs = 0;
  std::uint64_t tr_seed = 0;
  tr->add_option("--config", tr_config, "experiment config file");
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint path (trainlog.json lands beside it)")
      ->required();
  auto* tr_method_opt = tr->add_option("--method", tr_method, "ST, DA, AT, or PIAT");
  auto* tr_lambda_opt = tr->add_option("--lambda", tr_lambda, "trade-off weight");
  auto* tr_variant_opt =
      tr->add_option("--variant", tr_variant, "KL, ListNet, or ListMLE");
  auto* tr_phi_opt = tr->add_option("--phi", tr_phi, "exp, sigmoid, or linear");
  auto* tr_epochs_opt = tr->add_option("--epochs", tr_epochs, "training epochs");
  auto* tr_lr_opt = tr->add_option("--learning-rate", tr_lr, "gradient step size");
  auto* tr_adv_opt =
      tr->add_option("--adv-fraction", tr_adv_fraction, "fraction of queries attacked");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "override train seed");
  tr->callback([&] {
    auto cfg = load_config(tr_config);
    if (*tr_method_opt) cfg.train.method = piat::train_method_from_name(tr_method);
    if (*tr_lambda_opt) cfg.train.tradeoff.lambda = tr_lambda;
    if (*tr_variant_opt) {
      cfg.train.tradeoff.adv_variant = piat::adv_variant_from_name(tr_variant);
    }
    if (*tr_phi_opt) cfg.train.tradeoff.phi = piat::phi_from_name(tr_phi);
    if (*tr_epochs_opt) cfg.train.epochs = tr_epochs;
    if (*tr_lr_opt) cfg.train.learning_rate = tr_lr;
    if (*tr_adv_opt) cfg.train.adv_fraction = tr_adv_fraction;
    if (*tr_seed_opt) cfg.train.seed = tr_seed;
    cfg.train.validate();
    auto log = piat::pipeline::run_train(cfg, tr_data, tr_out);
    std::printf("trained %s for %zu epochs, final loss %.6f, checkpoint %s\n",
                piat::train_method_name(cfg.train.method), log.epochs.size(),
                log.epochs.back().combined_loss, tr_out.c_str());
  });

  // --- attack ----------------------------------------------------------------
  auto* at = app.add_subcommand("attack", "attack a trained model's rankings");
  std::string at_config, at_data, at_ckpt, at_out;
  double at_eps = 0.0;
  int at_kmax = 0, at_targets = 0;
  std::uint64_t at_seed = 0;
  at->add_option("--config", at_config, "experiment config file");
  at->add_option("--data", at_data, "dataset directory")->required();
  at->add_option("--checkpoint", at_ckpt, "model checkpoint")->required();
  at->add_option("--out", at_out, "output directory")->required();
  auto* at_eps_opt = at->add_option("--epsilon", at_eps, "max substituted fraction");
  auto* at_kmax_opt = at->add_option("--k-max", at_kmax, "max substitutions per doc");
  auto* at_targets_opt =
      at->add_option("--n-targets", at_targets, "attacked docs per query");
  auto* at_seed_opt = at->add_option("--seed", at_seed, "target sampling seed");
  at->callback([&] {
    auto cfg = load_config(at_config);
    if (*at_eps_opt) cfg.attack.budget.epsilon = at_eps;
    if (*at_kmax_opt) cfg.attack.budget.k_max = at_kmax;
    if (*at_targets_opt) cfg.attack.n_eval_targets = at_targets;
    if (*at_seed_opt) cfg.attack.seed = at_seed;
    cfg.attack.validate();
    piat::pipeline::run_attack(cfg, at_data, at_ckpt, at_out);
    std::printf("wrote attacked corpus to %s\n", at_out.c_str());
  });

  // --- evaluate --------------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "clean and attacked ranking metrics");
  std::string ev_config, ev_data, ev_attacked, ev_ckpt, ev_out, ev_dump;
  std::vector<int> ev_cutoffs;
  ev->add_option("--config", ev_config, "experiment config file");
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--attacked", ev_attacked, "attack output directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--out", ev_out, "output directory")->required();
  auto* ev_k_opt =
      ev->add_option("--k", ev_cutoffs, "MRR cutoffs")->delimiter(',');
  ev->add_option("--dump-reps", ev_dump, "write pooled doc representations here");
  ev->callback([&] {
    auto cfg = load_config(ev_config);
    if (*ev_k_opt) cfg.eval.cutoffs = ev_cutoffs;
    cfg.eval.validate();
    auto metrics = piat::pipeline::run_evaluate(cfg, ev_data, ev_attacked, ev_ckpt, ev_out);
    if (!ev_dump.empty()) {
      auto data = piat::io::load_dataset(ev_data);
      auto model = piat::io::load_checkpoint(
          ev_ckpt, piat::io::vocab_content_hash(data.vocab));
      dump_representations(model, data, ev_dump);
    }
    for (const auto& [k, v] : metrics.clean_mrr_at) {
      std::printf("clean_mrr@%d %.6f robust_mrr@%d %.6f\n", k, v, k,
                  metrics.robust_mrr_at.at(k));
    }
    std::printf("asr %.6f lsd %.6f over %d attacked docs\n", metrics.asr,
                metrics.lsd, metrics.n_attacked_docs);
  });

  // --- verify ----------------------------------------------------------------
  auto* vf = app.add_subcommand("verify", "check the error-decomposition bounds");
  piat::VerifyConfig vf_cfg;
  std::string vf_out = "verify.json";
  vf->add_option("--trials", vf_cfg.trials, "random instances to draw");
  vf->add_option("--seed", vf_cfg.seed, "base seed");
  vf->add_option("--max-docs", vf_cfg.max_docs, "max candidates per query");
  vf->add_option("--max-doc-len", vf_cfg.max_doc_len, "max document length");
  vf->add_option("--out", vf_out, "report path");
  vf->callback([&] {
    auto report = piat::pipeline::run_verify(vf_cfg, vf_out);
    std::printf(
        "%d trials: %d bound violations, %d gap violations, %d report violations\n",
        report.trials, report.bound_violations, report.gap_violations,
        report.report_violations);
    if (!report.ok()) exit_code = 2;
  });

  // --- sweep -----------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "train/attack/evaluate across lambdas");
  std::string sw_config, sw_out;
  std::vector<double> sw_lambdas;
  sw->add_option("--config", sw_config, "experiment config file");
  sw->add_option("--out", sw_out, "CSV path")->required();
  auto* sw_l_opt =
      sw->add_option("--lambdas", sw_lambdas, "trade-off grid")->delimiter(',');
  sw->callback([&] {
    auto cfg = load_config(sw_config);
    const auto& grid = *sw_l_opt ? sw_lambdas : piat::pipeline::default_lambda_grid();
    auto rows = piat::pipeline::run_sweep(cfg, grid, sw_out);
    std::printf("wrote %zu sweep rows to %s\n", rows.size(), sw_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const piat::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const piat::VerificationError& e) {
    std::cerr << "verification violation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
  return exit_code;
}

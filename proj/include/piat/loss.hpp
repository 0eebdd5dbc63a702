#pragma once

// The training loss family: a natural pairwise softmax loss, a Plackett-Luce
// permutation model, and three adversarial regularizers (candidate-level KL,
// stage-wise suffix-softmax KL, and negative permutation log-likelihood),
// combined affinely by a trade-off weight.  Every loss returns its value plus
// d(loss)/d(scores); the model's backprop consumes those.
//
// Numerics: every softmax goes through log-sum-exp; probabilities are floored
// at 1e-300 only where a log of a raw weight is taken.  Permutations obtained
// by sorting scores are treated as constants when differentiating (a
// subgradient choice; argsort is piecewise constant).

#include <cmath>
#include <string>
#include <vector>

#include "piat/core.hpp"

namespace piat {

struct LossOutput {
  double value = 0.0;
  std::vector<double> grad_scores_clean;
  std::vector<double> grad_scores_adv;
};

enum class AdvVariant { KL, ListNet, ListMLE };

enum class Phi { Exponential, Sigmoid, Linear };

struct TradeoffConfig {
  double lambda = 0.5;
  AdvVariant adv_variant = AdvVariant::KL;
  Phi phi = Phi::Exponential;
  // Treat the clean distribution as a constant target in the KL regularizer
  // (ablation switch; default lets gradients flow through both arguments).
  bool detach_clean_target = false;
  // Restrict the stage-wise regularizer to the top-one stage only.
  bool listnet_top_one = false;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw ValidationError("TradeoffConfig: lambda must lie in [0, 1]");
    }
  }
};

namespace detail {

inline void require_finite_scores(const std::vector<double>& scores,
                                  const char* what) {
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw ValidationError(std::string(what) + ": non-finite score");
    }
  }
}

inline double log_sum_exp(const std::vector<double>& xs) {
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline double phi_value(Phi phi, double x) {
  switch (phi) {
    case Phi::Exponential:
      return std::exp(x);
    case Phi::Sigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
    case Phi::Linear:
      return x;
  }
  throw ValidationError("unknown phi");
}

inline double phi_prime(Phi phi, double x) {
  switch (phi) {
    case Phi::Exponential:
      return std::exp(x);
    case Phi::Sigmoid: {
      double s = phi_value(Phi::Sigmoid, x);
      return s * (1.0 - s);
    }
    case Phi::Linear:
      return 1.0;
  }
  throw ValidationError("unknown phi");
}

// phi weight with positivity enforced: linear phi requires positive scores,
// sigmoid may underflow and is floored.
inline double positive_phi(Phi phi, double x, const char* what) {
  if (phi == Phi::Linear && x <= 0.0) {
    throw ValidationError(std::string(what) +
                          ": linear phi requires strictly positive scores");
  }
  return std::max(phi_value(phi, x), 1e-300);
}

inline void validate_permutation(const std::vector<std::size_t>& pi,
                                 std::size_t n, const char* what) {
  if (pi.size() != n) {
    throw ValidationError(std::string(what) + ": permutation length mismatch");
  }
  std::vector<bool> seen(n, false);
  for (std::size_t p : pi) {
    if (p >= n || seen[p]) {
      throw ValidationError(std::string(what) + ": not a permutation of the index set");
    }
    seen[p] = true;
  }
}

}  // namespace detail

// Softmax over candidate scores via log-sum-exp.
inline std::vector<double> score_distribution(const std::vector<double>& scores) {
  if (scores.empty()) {
    throw ValidationError("score_distribution: empty score list");
  }
  detail::require_finite_scores(scores, "score_distribution");
  double lse = detail::log_sum_exp(scores);
  std::vector<double> p(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) p[i] = std::exp(scores[i] - lse);
  return p;
}

// Pairwise softmax loss of one positive against its negatives:
// -log( e^{s+} / (e^{s+} + sum_j e^{s-_j}) ).  Gradients are the softmax
// residuals, returned as [d/ds+, d/ds-_1, ...] in grad_scores_clean.
inline LossOutput natural_loss(double pos_score,
                               const std::vector<double>& neg_scores) {
  if (neg_scores.empty()) {
    throw ValidationError("natural_loss: at least one negative score required");
  }
  std::vector<double> all;
  all.reserve(neg_scores.size() + 1);
  all.push_back(pos_score);
  all.insert(all.end(), neg_scores.begin(), neg_scores.end());
  detail::require_finite_scores(all, "natural_loss");

  double lse = detail::log_sum_exp(all);
  LossOutput out;
  out.value = lse - pos_score;
  out.grad_scores_clean.resize(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    out.grad_scores_clean[i] = std::exp(all[i] - lse) - (i == 0 ? 1.0 : 0.0);
  }
  return out;
}

// KL divergence between the softmax distributions of the clean and perturbed
// score lists (position j of the perturbed list is the counterpart of clean
// position j).  Value = sum_j p_j log(p_j / p'_j) >= 0, exactly 0 when the
// lists are identical.  Gradients flow through both arguments unless
// detach_clean_target is set.
inline LossOutput kl_adv_loss(const std::vector<double>& clean_scores,
                              const std::vector<double>& adv_scores,
                              bool detach_clean_target = false) {
  const std::size_t n = clean_scores.size();
  if (n != adv_scores.size()) {
    throw ValidationError("kl_adv_loss: clean/adv length mismatch");
  }
  if (n < 2) {
    throw ValidationError("kl_adv_loss: needs at least 2 candidates");
  }
  detail::require_finite_scores(clean_scores, "kl_adv_loss");
  detail::require_finite_scores(adv_scores, "kl_adv_loss");

  const double lse_c = detail::log_sum_exp(clean_scores);
  const double lse_a = detail::log_sum_exp(adv_scores);
  std::vector<double> lp(n), lq(n), p(n), q(n);
  for (std::size_t i = 0; i < n; ++i) {
    lp[i] = clean_scores[i] - lse_c;
    lq[i] = adv_scores[i] - lse_a;
    p[i] = std::exp(lp[i]);
    q[i] = std::exp(lq[i]);
  }
  LossOutput out;
  for (std::size_t i = 0; i < n; ++i) out.value += p[i] * (lp[i] - lq[i]);

  out.grad_scores_clean.assign(n, 0.0);
  out.grad_scores_adv.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!detach_clean_target) {
      out.grad_scores_clean[i] = p[i] * ((lp[i] - lq[i]) - out.value);
    }
    out.grad_scores_adv[i] = q[i] - p[i];
  }
  return out;
}

struct PlResult {
  double logprob = 0.0;
  std::vector<double> grad_scores;
};

// Plackett-Luce log-probability of drawing permutation pi from the score
// list:  log prod_j phi(s_{pi(j)}) / sum_{k>=j} phi(s_{pi(k)}).  For the
// exponential phi every stage is a suffix log-softmax computed in log space;
// sigmoid/linear use direct weight sums (their weights cannot blow up).
inline PlResult pl_permutation_logprob(const std::vector<double>& scores,
                                       const std::vector<std::size_t>& pi,
                                       Phi phi) {
  const std::size_t n = scores.size();
  if (n == 0) {
    throw ValidationError("pl_permutation_logprob: empty score list");
  }
  detail::require_finite_scores(scores, "pl_permutation_logprob");
  detail::validate_permutation(pi, n, "pl_permutation_logprob");

  PlResult out;
  out.grad_scores.assign(n, 0.0);
  std::vector<double> t(n);
  for (std::size_t j = 0; j < n; ++j) t[j] = scores[pi[j]];

  if (phi == Phi::Exponential) {
    // Suffix log-sum-exp, back to front.
    std::vector<double> lse(n);
    lse[n - 1] = t[n - 1];
    for (std::size_t j = n - 1; j-- > 0;) {
      double a = t[j], b = lse[j + 1];
      double hi = std::max(a, b), lo = std::min(a, b);
      lse[j] = hi + std::log1p(std::exp(lo - hi));
    }
    for (std::size_t j = 0; j < n; ++j) out.logprob += t[j] - lse[j];
    // d/ds_{pi(m)} = 1 - sum_{j<=m} exp(t_m - lse_j)
    for (std::size_t m = 0; m < n; ++m) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= m; ++j) acc += std::exp(t[m] - lse[j]);
      out.grad_scores[pi[m]] = 1.0 - acc;
    }
    return out;
  }

  std::vector<double> u(n), suffix(n);
  for (std::size_t j = 0; j < n; ++j) {
    u[j] = detail::positive_phi(phi, t[j], "pl_permutation_logprob");
  }
  suffix[n - 1] = u[n - 1];
  for (std::size_t j = n - 1; j-- > 0;) suffix[j] = u[j] + suffix[j + 1];
  for (std::size_t j = 0; j < n; ++j) {
    out.logprob += std::log(u[j]) - std::log(suffix[j]);
  }
  // d/ds_{pi(m)} = phi'(t_m)/phi(t_m) - phi'(t_m) * sum_{j<=m} 1/S_j
  for (std::size_t m = 0; m < n; ++m) {
    double inv_sum = 0.0;
    for (std::size_t j = 0; j <= m; ++j) inv_sum += 1.0 / suffix[j];
    double dp = detail::phi_prime(phi, t[m]);
    out.grad_scores[pi[m]] = dp / u[m] - dp * inv_sum;
  }
  return out;
}

// Stage-wise suffix-softmax KL along a pinned permutation: for each stage j,
// the KL between the adv and clean distributions over the suffix pi[j..N).
// This equals the KL between the two full Plackett-Luce distributions when
// both are factored along pi.  The permutation is a constant for gradients.
inline LossOutput listnet_adv_loss_with_permutation(
    const std::vector<double>& clean_scores, const std::vector<double>& adv_scores,
    const std::vector<std::size_t>& pi, Phi phi, bool top_one = false) {
  const std::size_t n = clean_scores.size();
  if (n != adv_scores.size()) {
    throw ValidationError("listnet_adv_loss: clean/adv length mismatch");
  }
  if (n < 2) {
    throw ValidationError("listnet_adv_loss: needs at least 2 candidates");
  }
  detail::require_finite_scores(clean_scores, "listnet_adv_loss");
  detail::require_finite_scores(adv_scores, "listnet_adv_loss");
  detail::validate_permutation(pi, n, "listnet_adv_loss");

  LossOutput out;
  out.grad_scores_clean.assign(n, 0.0);
  out.grad_scores_adv.assign(n, 0.0);

  const std::size_t n_stages = top_one ? 1 : n;
  std::vector<double> a(n), c(n);  // suffix-ordered working buffers
  for (std::size_t stage = 0; stage < n_stages; ++stage) {
    const std::size_t len = n - stage;
    if (len < 2) break;  // single-element suffix contributes nothing
    for (std::size_t k = 0; k < len; ++k) {
      a[k] = adv_scores[pi[stage + k]];
      c[k] = clean_scores[pi[stage + k]];
    }

    if (phi == Phi::Exponential) {
      double lse_a = a[0], lse_c = c[0];
      {
        double ma = a[0], mc = c[0];
        for (std::size_t k = 1; k < len; ++k) {
          ma = std::max(ma, a[k]);
          mc = std::max(mc, c[k]);
        }
        double sa = 0.0, sc = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
          sa += std::exp(a[k] - ma);
          sc += std::exp(c[k] - mc);
        }
        lse_a = ma + std::log(sa);
        lse_c = mc + std::log(sc);
      }
      double kl = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        kl += std::exp(a[k] - lse_a) * ((a[k] - lse_a) - (c[k] - lse_c));
      }
      out.value += kl;
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t m = pi[stage + k];
        const double ahat = std::exp(a[k] - lse_a);
        const double chat = std::exp(c[k] - lse_c);
        const double r = (a[k] - lse_a) - (c[k] - lse_c);
        out.grad_scores_adv[m] += ahat * (r - kl);
        out.grad_scores_clean[m] += chat - ahat;
      }
      continue;
    }

    // General phi path: direct weight sums (weights are bounded for sigmoid
    // and equal to the scores for linear).
    double usum = 0.0, vsum = 0.0;
    std::vector<double> u(len), v(len);
    for (std::size_t k = 0; k < len; ++k) {
      u[k] = detail::positive_phi(phi, a[k], "listnet_adv_loss");
      v[k] = detail::positive_phi(phi, c[k], "listnet_adv_loss");
      usum += u[k];
      vsum += v[k];
    }
    double kl = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double ahat = u[k] / usum;
      kl += ahat * (std::log(ahat) - std::log(v[k] / vsum));
    }
    out.value += kl;
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t m = pi[stage + k];
      const double ahat = u[k] / usum;
      const double chat = v[k] / vsum;
      const double r = std::log(ahat) - std::log(chat);
      out.grad_scores_adv[m] += detail::phi_prime(phi, a[k]) * (r - kl) / usum;
      // (chat - ahat) / v == 1/vsum - ahat/v, but cancels exactly at adv == clean.
      out.grad_scores_clean[m] +=
          detail::phi_prime(phi, c[k]) * (chat - ahat) / v[k];
    }
  }
  return out;
}

// Stage-wise KL along the clean ranking (descending clean scores, stable on
// ties).  Zero exactly when adv == clean.
inline LossOutput listnet_adv_loss(const std::vector<double>& clean_scores,
                                   const std::vector<double>& adv_scores, Phi phi,
                                   bool top_one = false) {
  detail::require_finite_scores(clean_scores, "listnet_adv_loss");
  return listnet_adv_loss_with_permutation(
      clean_scores, adv_scores, argsort_descending(clean_scores), phi, top_one);
}

// Negative Plackett-Luce log-likelihood of the pinned permutation under the
// perturbed scores.  grad_scores_clean is zero: clean scores enter only
// through the argsort, which is piecewise constant.
inline LossOutput listmle_adv_loss_with_permutation(
    const std::vector<double>& clean_scores, const std::vector<double>& adv_scores,
    const std::vector<std::size_t>& pi, Phi phi) {
  const std::size_t n = clean_scores.size();
  if (n != adv_scores.size()) {
    throw ValidationError("listmle_adv_loss: clean/adv length mismatch");
  }
  if (n < 2) {
    throw ValidationError("listmle_adv_loss: needs at least 2 candidates");
  }
  PlResult pl = pl_permutation_logprob(adv_scores, pi, phi);
  LossOutput out;
  out.value = -pl.logprob;
  out.grad_scores_clean.assign(n, 0.0);
  out.grad_scores_adv.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.grad_scores_adv[i] = -pl.grad_scores[i];
  return out;
}

inline LossOutput listmle_adv_loss(const std::vector<double>& clean_scores,
                                   const std::vector<double>& adv_scores, Phi phi) {
  detail::require_finite_scores(clean_scores, "listmle_adv_loss");
  return listmle_adv_loss_with_permutation(
      clean_scores, adv_scores, argsort_descending(clean_scores), phi);
}

// Affine combination  lambda * natural + (1 - lambda) * adversarial.
// lambda = 1 (or 0) returns the natural (or adversarial) component bit-exactly.
// A gradient list that is empty on one side passes through scaled; two
// non-empty lists must agree in length and are combined elementwise.
inline LossOutput combined_loss(const TradeoffConfig& cfg, const LossOutput& natural,
                                const LossOutput& adversarial) {
  cfg.validate();
  if (!std::isfinite(natural.value) || !std::isfinite(adversarial.value)) {
    throw ValidationError("combined_loss: non-finite component value");
  }
  if (cfg.lambda == 1.0) return natural;
  if (cfg.lambda == 0.0) return adversarial;

  const double wn = cfg.lambda;
  const double wa = 1.0 - cfg.lambda;
  auto combine = [&](const std::vector<double>& a,
                     const std::vector<double>& b) -> std::vector<double> {
    if (a.empty() && b.empty()) return {};
    if (a.empty()) {
      std::vector<double> out(b.size());
      for (std::size_t i = 0; i < b.size(); ++i) out[i] = wa * b[i];
      return out;
    }
    if (b.empty()) {
      std::vector<double> out(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = wn * a[i];
      return out;
    }
    if (a.size() != b.size()) {
      throw ValidationError("combined_loss: gradient length mismatch between components");
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = wn * a[i] + wa * b[i];
    return out;
  };

  LossOutput out;
  out.value = wn * natural.value + wa * adversarial.value;
  out.grad_scores_clean = combine(natural.grad_scores_clean, adversarial.grad_scores_clean);
  out.grad_scores_adv = combine(natural.grad_scores_adv, adversarial.grad_scores_adv);
  return out;
}

// Dispatch on the configured adversarial variant.  Both score lists are
// index-aligned with the candidate set (position j of the perturbed list is
// d_j or its perturbation).
inline LossOutput adversarial_loss(const TradeoffConfig& cfg,
                                   const std::vector<double>& clean_scores,
                                   const std::vector<double>& adv_scores) {
  switch (cfg.adv_variant) {
    case AdvVariant::KL:
      return kl_adv_loss(clean_scores, adv_scores, cfg.detach_clean_target);
    case AdvVariant::ListNet:
      return listnet_adv_loss(clean_scores, adv_scores, cfg.phi, cfg.listnet_top_one);
    case AdvVariant::ListMLE:
      return listmle_adv_loss(clean_scores, adv_scores, cfg.phi);
  }
  throw ValidationError("unknown adversarial variant");
}

inline const char* adv_variant_name(AdvVariant v) {
  switch (v) {
    case AdvVariant::KL: return "KL";
    case AdvVariant::ListNet: return "ListNet";
    case AdvVariant::ListMLE: return "ListMLE";
  }
  return "?";
}

inline AdvVariant adv_variant_from_name(const std::string& name) {
  if (name == "KL") return AdvVariant::KL;
  if (name == "ListNet") return AdvVariant::ListNet;
  if (name == "ListMLE") return AdvVariant::ListMLE;
  throw ValidationError("unknown adversarial variant: " + name +
                        " (expected KL, ListNet, or ListMLE)");
}

inline const char* phi_name(Phi phi) {
  switch (phi) {
    case Phi::Exponential: return "exponential";
    case Phi::Sigmoid: return "sigmoid";
    case Phi::Linear: return "linear";
  }
  return "?";
}

inline Phi phi_from_name(const std::string& name) {
  if (name == "exponential") return Phi::Exponential;
  if (name == "sigmoid") return Phi::Sigmoid;
  if (name == "linear") return Phi::Linear;
  throw ValidationError("unknown phi: " + name +
                        " (expected exponential, sigmoid, or linear)");
}

}  // namespace piat

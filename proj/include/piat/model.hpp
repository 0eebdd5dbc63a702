#pragma once

// Bilinear mean-pooled embedding scorer: f(q, d) = phi(q)^T W phi(d) + bias,
// where phi(x) averages the token embeddings of x.  The smallest model with a
// trainable interaction whose gradients stay hand-derivable, so no autodiff
// framework is needed.  All arithmetic is in 64-bit floats.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "piat/core.hpp"
#include "piat/rng.hpp"

namespace piat {

// Parameter block with the same shape as a ScoringModel: V x E embeddings
// (row-major), E x E interaction (row-major), scalar bias.
struct Gradient {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 0;
  std::vector<double> embeddings;
  std::vector<double> interaction;
  double bias = 0.0;

  Gradient() = default;
  Gradient(std::size_t v, std::size_t e)
      : vocab_size(v), embedding_dim(e), embeddings(v * e, 0.0),
        interaction(e * e, 0.0) {}

  void zero() {
    std::fill(embeddings.begin(), embeddings.end(), 0.0);
    std::fill(interaction.begin(), interaction.end(), 0.0);
    bias = 0.0;
  }

  // this += scale * other
  void add_scaled(const Gradient& other, double scale) {
    if (other.vocab_size != vocab_size || other.embedding_dim != embedding_dim) {
      throw ValidationError("Gradient::add_scaled: shape mismatch");
    }
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      embeddings[i] += scale * other.embeddings[i];
    }
    for (std::size_t i = 0; i < interaction.size(); ++i) {
      interaction[i] += scale * other.interaction[i];
    }
    bias += scale * other.bias;
  }
};

class ScoringModel {
 public:
  ScoringModel() = default;

  // All-zero parameters.
  ScoringModel(std::size_t vocab_size, std::size_t embedding_dim)
      : v_(vocab_size), e_(embedding_dim), embeddings_(v_ * e_, 0.0),
        interaction_(e_ * e_, 0.0) {
    if (v_ == 0 || e_ == 0) {
      throw ValidationError("ScoringModel requires vocab_size >= 1 and embedding_dim >= 1");
    }
  }

  // Embeddings ~ U(-0.5, 0.5), interaction = I, bias = 0.  The scale keeps
  // initial score gaps of order 0.1: small enough for a spread-out softmax,
  // large enough that the bilinear form's gradients do not vanish at the
  // origin saddle.
  static ScoringModel seeded_init(std::size_t vocab_size, std::size_t embedding_dim,
                                  std::uint64_t seed) {
    ScoringModel m(vocab_size, embedding_dim);
    Rng rng(derive_stream(seed, "model-init"));
    for (double& w : m.embeddings_) w = rng.uniform_real(-0.5, 0.5);
    for (std::size_t i = 0; i < embedding_dim; ++i) {
      m.interaction_[i * embedding_dim + i] = 1.0;
    }
    return m;
  }

  std::size_t vocab_size() const { return v_; }
  std::size_t embedding_dim() const { return e_; }
  std::size_t param_count() const { return v_ * e_ + e_ * e_ + 1; }

  std::vector<double>& embeddings() { return embeddings_; }
  const std::vector<double>& embeddings() const { return embeddings_; }
  std::vector<double>& interaction() { return interaction_; }
  const std::vector<double>& interaction() const { return interaction_; }
  double& bias() { return bias_; }
  double bias() const { return bias_; }

  double embedding(TokenId t, std::size_t dim) const {
    return embeddings_[static_cast<std::size_t>(t) * e_ + dim];
  }

  // Flat parameter view in the fixed order embeddings, interaction, bias.
  // Used by the finite-difference checker and the checkpoint format.
  double get_param(std::size_t i) const {
    if (i < embeddings_.size()) return embeddings_[i];
    i -= embeddings_.size();
    if (i < interaction_.size()) return interaction_[i];
    return bias_;
  }

  void set_param(std::size_t i, double value) {
    if (i < embeddings_.size()) {
      embeddings_[i] = value;
    } else if (i - embeddings_.size() < interaction_.size()) {
      interaction_[i - embeddings_.size()] = value;
    } else {
      bias_ = value;
    }
  }

  // theta += scale * grad
  void apply_gradient(const Gradient& g, double scale) {
    if (g.vocab_size != v_ || g.embedding_dim != e_) {
      throw ValidationError("apply_gradient: shape mismatch");
    }
    for (std::size_t i = 0; i < embeddings_.size(); ++i) {
      embeddings_[i] += scale * g.embeddings[i];
    }
    for (std::size_t i = 0; i < interaction_.size(); ++i) {
      interaction_[i] += scale * g.interaction[i];
    }
    bias_ += scale * g.bias;
  }

  void check_finite() const {
    for (double w : embeddings_) {
      if (!std::isfinite(w)) throw VerificationError("non-finite embedding parameter");
    }
    for (double w : interaction_) {
      if (!std::isfinite(w)) throw VerificationError("non-finite interaction parameter");
    }
    if (!std::isfinite(bias_)) throw VerificationError("non-finite bias parameter");
  }

  // Mean of token embeddings, accumulated in token order.
  std::vector<double> mean_embedding(const std::vector<TokenId>& tokens) const {
    validate_tokens(tokens, v_, "sequence");
    std::vector<double> phi(e_, 0.0);
    for (TokenId t : tokens) {
      const double* row = &embeddings_[static_cast<std::size_t>(t) * e_];
      for (std::size_t k = 0; k < e_; ++k) phi[k] += row[k];
    }
    double inv = 1.0 / static_cast<double>(tokens.size());
    for (double& x : phi) x *= inv;
    return phi;
  }

 private:
  std::size_t v_ = 0;
  std::size_t e_ = 0;
  std::vector<double> embeddings_;
  std::vector<double> interaction_;
  double bias_ = 0.0;
};

// Caches u = W^T phi(q) so each document costs one dot product.  score() and
// score_batch() route through this, which keeps every scoring path bit-identical.
class QueryScorer {
 public:
  QueryScorer(const ScoringModel& model, const TokenQuery& q)
      : model_(&model), u_(model.embedding_dim(), 0.0) {
    std::vector<double> phi_q = model.mean_embedding(q.tokens);
    const std::size_t e = model.embedding_dim();
    const std::vector<double>& w = model.interaction();
    for (std::size_t col = 0; col < e; ++col) {
      double acc = 0.0;
      for (std::size_t row = 0; row < e; ++row) {
        acc += phi_q[row] * w[row * e + col];
      }
      u_[col] = acc;
    }
  }

  double score(const TokenDoc& d) const {
    std::vector<double> phi_d = model_->mean_embedding(d.tokens);
    double acc = 0.0;
    for (std::size_t k = 0; k < u_.size(); ++k) acc += u_[k] * phi_d[k];
    return acc + model_->bias();
  }

 private:
  const ScoringModel* model_;
  std::vector<double> u_;
};

inline double score(const ScoringModel& model, const TokenQuery& q,
                    const TokenDoc& d) {
  return QueryScorer(model, q).score(d);
}

inline std::vector<double> score_batch(const ScoringModel& model,
                                       const TokenQuery& q,
                                       const std::vector<TokenDoc>& docs) {
  QueryScorer scorer(model, q);
  std::vector<double> out;
  out.reserve(docs.size());
  for (const TokenDoc& d : docs) out.push_back(scorer.score(d));
  return out;
}

// Sum_j upstream_j * d f(q, d_j) / d theta, assembled analytically:
//   d f / d W      = phi(q) phi(d)^T
//   d f / d bias   = 1
//   d f / d emb[t] = cnt_q(t)/|q| * (W phi(d))  +  cnt_d(t)/M * (W^T phi(q))
inline Gradient backprop(const ScoringModel& model, const TokenQuery& q,
                         const std::vector<TokenDoc>& docs,
                         const std::vector<double>& upstream) {
  if (docs.size() != upstream.size()) {
    throw ValidationError("backprop: upstream size " + std::to_string(upstream.size()) +
                          " != docs size " + std::to_string(docs.size()));
  }
  const std::size_t e = model.embedding_dim();
  Gradient g(model.vocab_size(), e);
  if (docs.empty()) return g;

  std::vector<double> phi_q = model.mean_embedding(q.tokens);
  const std::vector<double>& w = model.interaction();

  // u = W^T phi(q), shared across docs.
  std::vector<double> u(e, 0.0);
  for (std::size_t col = 0; col < e; ++col) {
    double acc = 0.0;
    for (std::size_t row = 0; row < e; ++row) acc += phi_q[row] * w[row * e + col];
    u[col] = acc;
  }

  // weighted_phi_d = Sum_j upstream_j phi(d_j): drives dW and the query-token
  // embedding gradients in one pass.
  std::vector<double> weighted_phi_d(e, 0.0);
  for (std::size_t j = 0; j < docs.size(); ++j) {
    const double uj = upstream[j];
    g.bias += uj;
    std::vector<double> phi_d = model.mean_embedding(docs[j].tokens);
    for (std::size_t k = 0; k < e; ++k) weighted_phi_d[k] += uj * phi_d[k];

    // Doc-token embedding gradients: uj / M_j * u scattered per occurrence.
    const double scale = uj / static_cast<double>(docs[j].tokens.size());
    for (TokenId t : docs[j].tokens) {
      double* row = &g.embeddings[static_cast<std::size_t>(t) * e];
      for (std::size_t k = 0; k < e; ++k) row[k] += scale * u[k];
    }
  }

  for (std::size_t row = 0; row < e; ++row) {
    for (std::size_t col = 0; col < e; ++col) {
      g.interaction[row * e + col] += phi_q[row] * weighted_phi_d[col];
    }
  }

  // Query-token embedding gradients: v = W weighted_phi_d, scattered with
  // weight 1/|q| per occurrence.
  std::vector<double> v(e, 0.0);
  for (std::size_t row = 0; row < e; ++row) {
    double acc = 0.0;
    for (std::size_t col = 0; col < e; ++col) acc += w[row * e + col] * weighted_phi_d[col];
    v[row] = acc;
  }
  const double qscale = 1.0 / static_cast<double>(q.tokens.size());
  for (TokenId t : q.tokens) {
    double* row = &g.embeddings[static_cast<std::size_t>(t) * e];
    for (std::size_t k = 0; k < e; ++k) row[k] += qscale * v[k];
  }
  return g;
}

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;

  bool passed(double tol) const { return max_rel_error <= tol; }
};

// Central finite differences over a flat parameter vector.  Relative error
// uses denominator max(|analytic|, |numeric|, 1e-8).
inline FdReport finite_diff_check(
    std::vector<double> params,
    const std::function<double(const std::vector<double>&)>& loss_fn,
    const std::vector<double>& analytic, double h) {
  if (h <= 0.0) throw ValidationError("finite_diff_check: h must be positive");
  if (analytic.size() != params.size()) {
    throw ValidationError("finite_diff_check: gradient shape mismatch");
  }
  FdReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss_fn(params);
    params[i] = saved - h;
    const double down = loss_fn(params);
    params[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("finite_diff_check: non-finite loss at parameter " +
                               std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(a - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

// Central finite differences over every parameter of `model` against the
// analytic gradient.  loss_fn must be a pure function of the model's
// parameters.  Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
inline FdReport finite_diff_check(
    ScoringModel model, const std::function<double(const ScoringModel&)>& loss_fn,
    const Gradient& analytic, double h) {
  if (h <= 0.0) throw ValidationError("finite_diff_check: h must be positive");
  if (analytic.vocab_size != model.vocab_size() ||
      analytic.embedding_dim != model.embedding_dim()) {
    throw ValidationError("finite_diff_check: gradient shape mismatch");
  }
  FdReport report;
  const std::size_t n = model.param_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double saved = model.get_param(i);
    model.set_param(i, saved + h);
    const double up = loss_fn(model);
    model.set_param(i, saved - h);
    const double down = loss_fn(model);
    model.set_param(i, saved);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("finite_diff_check: non-finite loss at parameter " +
                               std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    double a;
    if (i < analytic.embeddings.size()) {
      a = analytic.embeddings[i];
    } else if (i - analytic.embeddings.size() < analytic.interaction.size()) {
      a = analytic.interaction[i - analytic.embeddings.size()];
    } else {
      a = analytic.bias;
    }
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(a - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

}  // namespace piat

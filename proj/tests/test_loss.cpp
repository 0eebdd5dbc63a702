#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "piat/core.hpp"
#include "piat/loss.hpp"
#include "piat/model.hpp"
#include "piat/rng.hpp"

using Catch::Matchers::WithinAbs;

namespace {

std::vector<std::vector<std::size_t>> all_permutations(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> out;
  do {
    out.push_back(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

double phi_direct(piat::Phi phi, double x) {
  switch (phi) {
    case piat::Phi::Exponential: return std::exp(x);
    case piat::Phi::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case piat::Phi::Linear: return x;
  }
  return 0.0;
}

// Plain product-of-ratios evaluation, no log-space tricks.
double pl_prob_direct(const std::vector<double>& scores,
                      const std::vector<std::size_t>& pi, piat::Phi phi) {
  double prob = 1.0;
  for (std::size_t j = 0; j < pi.size(); ++j) {
    double denom = 0.0;
    for (std::size_t k = j; k < pi.size(); ++k) {
      denom += phi_direct(phi, scores[pi[k]]);
    }
    prob *= phi_direct(phi, scores[pi[j]]) / denom;
  }
  return prob;
}

std::vector<double> softmax_direct(const std::vector<double>& scores) {
  double z = 0.0;
  for (double s : scores) z += std::exp(s);
  std::vector<double> out;
  for (double s : scores) out.push_back(std::exp(s) / z);
  return out;
}

// Finite differences over the concatenation (clean ++ adv) of both score
// lists, against the loss's two gradient vectors.
template <typename Fn>
piat::FdReport fd_two_lists(const std::vector<double>& clean,
                            const std::vector<double>& adv,
                            const piat::LossOutput& out, Fn&& fn, double h) {
  std::vector<double> params = clean;
  params.insert(params.end(), adv.begin(), adv.end());
  std::vector<double> analytic = out.grad_scores_clean;
  REQUIRE(analytic.size() == clean.size());
  REQUIRE(out.grad_scores_adv.size() == adv.size());
  analytic.insert(analytic.end(), out.grad_scores_adv.begin(),
                  out.grad_scores_adv.end());
  auto loss_fn = [&](const std::vector<double>& p) {
    std::vector<double> c(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(clean.size()));
    std::vector<double> a(p.begin() + static_cast<std::ptrdiff_t>(clean.size()), p.end());
    return fn(c, a);
  };
  return piat::finite_diff_check(params, loss_fn, analytic, h);
}

std::vector<double> random_scores(piat::Rng& rng, std::size_t n, double lo,
                                  double hi) {
  std::vector<double> s(n);
  for (double& x : s) x = rng.uniform_real(lo, hi);
  return s;
}

constexpr piat::Phi kAllPhi[] = {piat::Phi::Exponential, piat::Phi::Sigmoid,
                                 piat::Phi::Linear};

}  // namespace

TEST_CASE("score distribution is a stable softmax") {
  SECTION("uniform over equal scores") {
    auto d = piat::score_distribution({0.0, 0.0, 0.0});
    for (double p : d) REQUIRE_THAT(p, WithinAbs(1.0 / 3.0, 1e-15));
  }

  SECTION("single element") {
    auto d = piat::score_distribution({4.2});
    REQUIRE(d == std::vector<double>{1.0});
  }

  SECTION("matches explicit exponential ratios") {
    std::vector<double> s{2.0, 1.0, 0.0};
    auto d = piat::score_distribution(s);
    auto expected = softmax_direct(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      REQUIRE_THAT(d[i], WithinAbs(expected[i], 1e-12));
    }
  }

  SECTION("sums to one, survives extreme magnitudes") {
    piat::Rng rng(0x10551);
    for (int trial = 0; trial < 50; ++trial) {
      auto s = random_scores(rng, 1 + rng.uniform_below(8), -700.0, 700.0);
      auto d = piat::score_distribution(s);
      double sum = std::accumulate(d.begin(), d.end(), 0.0);
      REQUIRE_THAT(sum, WithinAbs(1.0, 1e-12));
      for (double p : d) {
        REQUIRE(p >= 0.0);
        REQUIRE(std::isfinite(p));
      }
    }
  }

  SECTION("shift invariant") {
    std::vector<double> s{0.3, -1.2, 2.7, 0.0};
    auto base = piat::score_distribution(s);
    for (double& x : s) x += 123.456;
    auto shifted = piat::score_distribution(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      REQUIRE_THAT(shifted[i], WithinAbs(base[i], 1e-10));
    }
  }

  SECTION("rejects empty and non-finite input") {
    REQUIRE_THROWS_AS(piat::score_distribution({}), piat::ValidationError);
    REQUIRE_THROWS_AS(piat::score_distribution({1.0, std::nan("")}),
                      piat::ValidationError);
  }
}

TEST_CASE("natural loss is the positive-vs-negatives softmax") {
  SECTION("symmetric two-way softmax") {
    auto out = piat::natural_loss(0.0, {0.0});
    REQUIRE_THAT(out.value, WithinAbs(std::log(2.0), 1e-12));
    REQUIRE(out.grad_scores_clean.size() == 2);
    REQUIRE_THAT(out.grad_scores_clean[0], WithinAbs(-0.5, 1e-12));
    REQUIRE_THAT(out.grad_scores_clean[1], WithinAbs(0.5, 1e-12));
    REQUIRE(out.grad_scores_adv.empty());
  }

  SECTION("saturates to zero when the positive dominates") {
    auto out = piat::natural_loss(50.0, {0.0, -3.0});
    REQUIRE(out.value >= 0.0);
    REQUIRE(out.value < 1e-20);
  }

  SECTION("matches direct softmax evaluation") {
    auto out = piat::natural_loss(1.0, {0.0, -1.0});
    auto p = softmax_direct({1.0, 0.0, -1.0});
    REQUIRE_THAT(out.value, WithinAbs(-std::log(p[0]), 1e-12));
    REQUIRE_THAT(out.grad_scores_clean[0], WithinAbs(p[0] - 1.0, 1e-12));
    REQUIRE_THAT(out.grad_scores_clean[1], WithinAbs(p[1], 1e-12));
    REQUIRE_THAT(out.grad_scores_clean[2], WithinAbs(p[2], 1e-12));
  }

  SECTION("non-negative on random instances, gradients pass finite differences") {
    piat::Rng rng(0x10552);
    for (int trial = 0; trial < 20; ++trial) {
      std::size_t n_neg = 1 + rng.uniform_below(7);
      auto all = random_scores(rng, n_neg + 1, -2.0, 2.0);
      auto out = piat::natural_loss(all[0], {all.begin() + 1, all.end()});
      REQUIRE(out.value >= 0.0);

      auto loss_fn = [&](const std::vector<double>& p) {
        return piat::natural_loss(p[0], {p.begin() + 1, p.end()}).value;
      };
      auto report =
          piat::finite_diff_check(all, loss_fn, out.grad_scores_clean, 1e-5);
      REQUIRE(report.max_rel_error <= 1e-4);
    }
  }

  SECTION("rejects empty negatives") {
    REQUIRE_THROWS_AS(piat::natural_loss(1.0, {}), piat::ValidationError);
  }
}

TEST_CASE("candidate softmax KL divergence") {
  SECTION("zero at the fixed point, gradients exactly zero") {
    std::vector<double> s{0.4, -1.0, 2.2};
    auto out = piat::kl_adv_loss(s, s);
    REQUIRE(out.value == 0.0);
    for (double g : out.grad_scores_adv) REQUIRE(g == 0.0);
    for (double g : out.grad_scores_clean) REQUIRE(g == 0.0);
  }

  SECTION("two-term hand evaluation") {
    auto out = piat::kl_adv_loss({0.0, 0.0}, {std::log(3.0), 0.0});
    double expected = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
    REQUIRE_THAT(out.value, WithinAbs(expected, 1e-12));
    REQUIRE_THAT(out.value, WithinAbs(0.1438, 2e-4));
  }

  SECTION("non-negative on random pairs") {
    piat::Rng rng(0x10553);
    for (int trial = 0; trial < 50; ++trial) {
      std::size_t n = 2 + rng.uniform_below(5);
      auto c = random_scores(rng, n, -3.0, 3.0);
      auto a = random_scores(rng, n, -3.0, 3.0);
      REQUIRE(piat::kl_adv_loss(c, a).value >= 0.0);
    }
  }

  SECTION("gradients through both arguments pass finite differences") {
    piat::Rng rng(0x10554);
    for (int trial = 0; trial < 20; ++trial) {
      std::size_t n = 2 + rng.uniform_below(5);
      auto c = random_scores(rng, n, -2.0, 2.0);
      auto a = random_scores(rng, n, -2.0, 2.0);
      auto out = piat::kl_adv_loss(c, a);
      auto report = fd_two_lists(
          c, a, out,
          [](const std::vector<double>& cc, const std::vector<double>& aa) {
            return piat::kl_adv_loss(cc, aa).value;
          },
          1e-5);
      REQUIRE(report.max_rel_error <= 1e-4);
    }
  }

  SECTION("detached target zeroes the clean gradient") {
    std::vector<double> c{1.0, 0.0, -1.0};
    std::vector<double> a{0.5, 0.2, 0.0};
    auto out = piat::kl_adv_loss(c, a, true);
    for (double g : out.grad_scores_clean) REQUIRE(g == 0.0);
    REQUIRE(out.value == piat::kl_adv_loss(c, a).value);
    REQUIRE(out.grad_scores_adv == piat::kl_adv_loss(c, a).grad_scores_adv);
  }

  SECTION("shift of either list leaves the value unchanged") {
    std::vector<double> c{1.0, 0.0, -1.0};
    std::vector<double> a{0.5, 0.2, 0.0};
    double base = piat::kl_adv_loss(c, a).value;
    std::vector<double> c2 = c, a2 = a;
    for (double& x : c2) x += 0.7;
    for (double& x : a2) x -= 1.3;
    REQUIRE_THAT(piat::kl_adv_loss(c2, a2).value, WithinAbs(base, 1e-10));
  }

  SECTION("rejects mismatched or short lists") {
    REQUIRE_THROWS_AS(piat::kl_adv_loss({1.0, 2.0}, {1.0}), piat::ValidationError);
    REQUIRE_THROWS_AS(piat::kl_adv_loss({1.0}, {1.0}), piat::ValidationError);
  }
}

TEST_CASE("permutation log-probability under the sequential choice model") {
  SECTION("uniform when all scores are equal") {
    for (piat::Phi phi : kAllPhi) {
      auto res = piat::pl_permutation_logprob({1.0, 1.0, 1.0}, {2, 0, 1}, phi);
      REQUIRE_THAT(res.logprob, WithinAbs(-std::log(6.0), 1e-12));
    }
  }

  SECTION("single element has probability one") {
    for (piat::Phi phi : kAllPhi) {
      auto res = piat::pl_permutation_logprob({0.7}, {0}, phi);
      REQUIRE(res.logprob == 0.0);
      REQUIRE(res.grad_scores == std::vector<double>{0.0});
    }
  }

  SECTION("direct product evaluation") {
    auto res = piat::pl_permutation_logprob({2.0, 1.0, 0.0}, {0, 1, 2},
                                            piat::Phi::Exponential);
    double e = std::exp(1.0), e2 = std::exp(2.0);
    double expected = std::log(e2 / (e2 + e + 1.0) * (e / (e + 1.0)));
    REQUIRE_THAT(res.logprob, WithinAbs(expected, 1e-12));
  }

  SECTION("probabilities normalize over all permutations") {
    piat::Rng rng(0x10555);
    for (piat::Phi phi : kAllPhi) {
      double lo = phi == piat::Phi::Linear ? 0.1 : -3.0;
      for (std::size_t n = 2; n <= 5; ++n) {
        for (int rep = 0; rep < 10; ++rep) {
          auto s = random_scores(rng, n, lo, 3.0);
          double total = 0.0;
          for (const auto& pi : all_permutations(n)) {
            total += std::exp(piat::pl_permutation_logprob(s, pi, phi).logprob);
          }
          REQUIRE_THAT(total, WithinAbs(1.0, 1e-10));
        }
      }
    }
  }

  SECTION("matches plain product evaluation on random instances") {
    piat::Rng rng(0x10556);
    for (piat::Phi phi : kAllPhi) {
      double lo = phi == piat::Phi::Linear ? 0.1 : -3.0;
      for (int rep = 0; rep < 20; ++rep) {
        std::size_t n = 1 + rng.uniform_below(6);
        auto s = random_scores(rng, n, lo, 3.0);
        std::vector<std::size_t> pi(n);
        std::iota(pi.begin(), pi.end(), std::size_t{0});
        rng.shuffle(pi);
        double direct = pl_prob_direct(s, pi, phi);
        REQUIRE_THAT(std::exp(piat::pl_permutation_logprob(s, pi, phi).logprob),
                     WithinAbs(direct, 1e-10));
      }
    }
  }

  SECTION("gradients pass finite differences for every weight function") {
    piat::Rng rng(0x10557);
    for (piat::Phi phi : kAllPhi) {
      double lo = phi == piat::Phi::Linear ? 0.5 : -2.0;
      for (int rep = 0; rep < 10; ++rep) {
        std::size_t n = 2 + rng.uniform_below(5);
        auto s = random_scores(rng, n, lo, 2.5);
        std::vector<std::size_t> pi(n);
        std::iota(pi.begin(), pi.end(), std::size_t{0});
        rng.shuffle(pi);
        auto res = piat::pl_permutation_logprob(s, pi, phi);
        auto loss_fn = [&](const std::vector<double>& p) {
          return piat::pl_permutation_logprob(p, pi, phi).logprob;
        };
        auto report = piat::finite_diff_check(s, loss_fn, res.grad_scores, 1e-5);
        REQUIRE(report.max_rel_error <= 1e-4);
      }
    }
  }

  SECTION("descending argsort is the most likely permutation") {
    piat::Rng rng(0x10558);
    for (piat::Phi phi : kAllPhi) {
      double lo = phi == piat::Phi::Linear ? 0.1 : -2.0;
      for (int rep = 0; rep < 10; ++rep) {
        auto s = random_scores(rng, 4, lo, 2.0);
        // Distinct weights keep the argmax unique.
        std::sort(s.begin(), s.end());
        bool distinct = true;
        for (std::size_t i = 1; i < s.size(); ++i) {
          if (s[i] - s[i - 1] < 0.05) distinct = false;
        }
        if (!distinct) continue;
        rng.shuffle(s);

        auto best_pi = piat::argsort_descending(s);
        double best = piat::pl_permutation_logprob(s, best_pi, phi).logprob;
        for (const auto& pi : all_permutations(s.size())) {
          double lp = piat::pl_permutation_logprob(s, pi, phi).logprob;
          REQUIRE(lp <= best + 1e-12);
          if (pi != best_pi) REQUIRE(lp < best);
        }
      }
    }
  }

  SECTION("exponential weights are shift invariant") {
    std::vector<double> s{0.2, -1.5, 0.9, 0.0};
    std::vector<std::size_t> pi{3, 1, 0, 2};
    double base =
        piat::pl_permutation_logprob(s, pi, piat::Phi::Exponential).logprob;
    for (double& x : s) x += 41.5;
    REQUIRE_THAT(piat::pl_permutation_logprob(s, pi, piat::Phi::Exponential).logprob,
                 WithinAbs(base, 1e-10));
  }

  SECTION("rejects bad permutations and non-positive linear weights") {
    REQUIRE_THROWS_AS(piat::pl_permutation_logprob({1.0, 2.0}, {0, 0},
                                                   piat::Phi::Exponential),
                      piat::ValidationError);
    REQUIRE_THROWS_AS(piat::pl_permutation_logprob({1.0, 2.0}, {0},
                                                   piat::Phi::Exponential),
                      piat::ValidationError);
    REQUIRE_THROWS_AS(piat::pl_permutation_logprob({1.0, -2.0}, {0, 1},
                                                   piat::Phi::Linear),
                      piat::ValidationError);
  }
}

TEST_CASE("stage-wise suffix softmax divergence along the clean order") {
  SECTION("zero at the fixed point for every weight function") {
    std::vector<double> s{0.8, 0.1, -0.4, 1.2};
    for (piat::Phi phi : kAllPhi) {
      std::vector<double> scores = s;
      if (phi == piat::Phi::Linear) {
        for (double& x : scores) x += 2.0;
      }
      auto out = piat::listnet_adv_loss(scores, scores, phi);
      REQUIRE(out.value == 0.0);
      for (double g : out.grad_scores_adv) REQUIRE(g == 0.0);
      for (double g : out.grad_scores_clean) REQUIRE(g == 0.0);
    }
  }

  SECTION("two candidates reduce to a single binary divergence") {
    auto out = piat::listnet_adv_loss({1.0, 0.0}, {0.0, 1.0},
                                      piat::Phi::Exponential);
    // Clean order puts index 0 first; substitute both suffix softmaxes.
    auto p_adv = softmax_direct({0.0, 1.0});
    auto p_clean = softmax_direct({1.0, 0.0});
    double expected = p_adv[0] * std::log(p_adv[0] / p_clean[0]) +
                      p_adv[1] * std::log(p_adv[1] / p_clean[1]);
    REQUIRE_THAT(out.value, WithinAbs(expected, 1e-12));
    REQUIRE_THAT(out.value, WithinAbs(0.462117, 1e-6));
  }

  SECTION("equals the sum of suffix divergences computed directly") {
    piat::Rng rng(0x10559);
    for (int rep = 0; rep < 20; ++rep) {
      std::size_t n = 2 + rng.uniform_below(5);
      auto c = random_scores(rng, n, -2.0, 2.0);
      auto a = random_scores(rng, n, -2.0, 2.0);
      auto pi = piat::argsort_descending(c);

      double expected = 0.0;
      for (std::size_t j = 0; j + 1 < n; ++j) {
        std::vector<double> cs, as;
        for (std::size_t k = j; k < n; ++k) {
          cs.push_back(c[pi[k]]);
          as.push_back(a[pi[k]]);
        }
        auto pc = softmax_direct(cs);
        auto pa = softmax_direct(as);
        for (std::size_t k = 0; k < cs.size(); ++k) {
          expected += pa[k] * std::log(pa[k] / pc[k]);
        }
      }
      auto out = piat::listnet_adv_loss(c, a, piat::Phi::Exponential);
      REQUIRE_THAT(out.value, WithinAbs(expected, 1e-10));
      REQUIRE(out.value >= 0.0);
    }
  }

  SECTION("non-negative for every weight function") {
    piat::Rng rng(0x1055a);
    for (piat::Phi phi : kAllPhi) {
      double lo = phi == piat::Phi::Linear ? 0.1 : -2.0;
      for (int rep = 0; rep < 20; ++rep) {
        std::size_t n = 2 + rng.uniform_below(5);
        auto c = random_scores(rng, n, lo, 2.0);
        auto a = random_scores(rng, n, lo, 2.0);
        REQUIRE(piat::listnet_adv_loss(c, a, phi).value >= 0.0);
      }
    }
  }

  SECTION("gradients pass finite differences with the order held fixed") {
    piat::Rng rng(0x1055b);
    for (piat::Phi phi : kAllPhi) {
      double lo = phi == piat::Phi::Linear ? 0.5 : -2.0;
      for (int rep = 0; rep < 10; ++rep) {
        std::size_t n = 2 + rng.uniform_below(4);
        auto c = random_scores(rng, n, lo, 2.5);
        auto a = random_scores(rng, n, lo, 2.5);
        auto pi = piat::argsort_descending(c);
        auto out = piat::listnet_adv_loss_with_permutation(c, a, pi, phi);
        auto report = fd_two_lists(
            c, a, out,
            [&](const std::vector<double>& cc, const std::vector<double>& aa) {
              return piat::listnet_adv_loss_with_permutation(cc, aa, pi, phi).value;
            },
            1e-5);
        REQUIRE(report.max_rel_error <= 1e-4);
      }
    }
  }

  SECTION("top-one variant keeps only the first stage") {
    std::vector<double> c{1.0, -0.5, 0.3};
    std::vector<double> a{0.2, 0.6, -1.0};
    auto out = piat::listnet_adv_loss(c, a, piat::Phi::Exponential, true);
    auto pc = softmax_direct(c);
    auto pa = softmax_direct(a);
    double expected = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      expected += pa[k] * std::log(pa[k] / pc[k]);
    }
    REQUIRE_THAT(out.value, WithinAbs(expected, 1e-12));
  }

  SECTION("rejects mismatched lists") {
    REQUIRE_THROWS_AS(
        piat::listnet_adv_loss({1.0, 2.0}, {1.0}, piat::Phi::Exponential),
        piat::ValidationError);
  }
}

TEST_CASE("clean-order likelihood under perturbed scores") {
  SECTION("uniform scores give log n! regardless of the clean list") {
    for (const auto& clean : {std::vector<double>{3.0, 2.0, 1.0},
                              std::vector<double>{-1.0, 5.0, 0.2}}) {
      auto out = piat::listmle_adv_loss(clean, {0.0, 0.0, 0.0},
                                        piat::Phi::Exponential);
      REQUIRE_THAT(out.value, WithinAbs(std::log(6.0), 1e-12));
    }
  }

  SECTION("direct product at the fixed point") {
    std::vector<double> s{2.0, 1.0, 0.0};
    auto out = piat::listmle_adv_loss(s, s, piat::Phi::Exponential);
    double e = std::exp(1.0), e2 = std::exp(2.0);
    double expected = -std::log(e2 / (e2 + e + 1.0) * (e / (e + 1.0)));
    REQUIRE_THAT(out.value, WithinAbs(expected, 1e-12));
  }

  SECTION("value is the negated log-likelihood of the clean order") {
    piat::Rng rng(0x1055c);
    for (piat::Phi phi : kAllPhi) {
      double lo = phi == piat::Phi::Linear ? 0.1 : -2.0;
      for (int rep = 0; rep < 20; ++rep) {
        std::size_t n = 2 + rng.uniform_below(5);
        auto c = random_scores(rng, n, lo, 2.0);
        auto a = random_scores(rng, n, lo, 2.0);
        auto out = piat::listmle_adv_loss(c, a, phi);
        auto pi = piat::argsort_descending(c);
        REQUIRE(out.value == -piat::pl_permutation_logprob(a, pi, phi).logprob);
        REQUIRE(out.value >= 0.0);
      }
    }
  }

  SECTION("clean gradient is identically zero") {
    std::vector<double> c{1.5, -0.2, 0.8};
    std::vector<double> a{0.1, 0.9, -0.3};
    auto out = piat::listmle_adv_loss(c, a, piat::Phi::Exponential);
    REQUIRE(out.grad_scores_clean == std::vector<double>(3, 0.0));
  }

  SECTION("adv gradients pass finite differences with the order held fixed") {
    piat::Rng rng(0x1055d);
    for (piat::Phi phi : kAllPhi) {
      double lo = phi == piat::Phi::Linear ? 0.5 : -2.0;
      for (int rep = 0; rep < 10; ++rep) {
        std::size_t n = 2 + rng.uniform_below(5);
        auto c = random_scores(rng, n, lo, 2.5);
        auto a = random_scores(rng, n, lo, 2.5);
        auto pi = piat::argsort_descending(c);
        auto out = piat::listmle_adv_loss_with_permutation(c, a, pi, phi);
        auto report = fd_two_lists(
            c, a, out,
            [&](const std::vector<double>& cc, const std::vector<double>& aa) {
              return piat::listmle_adv_loss_with_permutation(cc, aa, pi, phi).value;
            },
            1e-5);
        REQUIRE(report.max_rel_error <= 1e-4);
      }
    }
  }

  SECTION("rejects mismatched lists") {
    REQUIRE_THROWS_AS(
        piat::listmle_adv_loss({1.0, 2.0}, {1.0}, piat::Phi::Exponential),
        piat::ValidationError);
  }
}

TEST_CASE("trade-off combination is affine in lambda") {
  piat::LossOutput natural;
  natural.value = 2.0;
  natural.grad_scores_clean = {1.0, 2.0};
  piat::LossOutput adv;
  adv.value = -1.0;
  adv.grad_scores_clean = {0.5, -0.5};
  adv.grad_scores_adv = {3.0, 4.0};

  piat::TradeoffConfig cfg;

  SECTION("endpoints return the components untouched") {
    cfg.lambda = 1.0;
    auto out = piat::combined_loss(cfg, natural, adv);
    REQUIRE(out.value == natural.value);
    REQUIRE(out.grad_scores_clean == natural.grad_scores_clean);
    REQUIRE(out.grad_scores_adv == natural.grad_scores_adv);

    cfg.lambda = 0.0;
    out = piat::combined_loss(cfg, natural, adv);
    REQUIRE(out.value == adv.value);
    REQUIRE(out.grad_scores_clean == adv.grad_scores_clean);
    REQUIRE(out.grad_scores_adv == adv.grad_scores_adv);
  }

  SECTION("midpoint is the arithmetic mean") {
    cfg.lambda = 0.5;
    auto out = piat::combined_loss(cfg, natural, adv);
    REQUIRE(out.value == 0.5 * natural.value + 0.5 * adv.value);
    REQUIRE(out.grad_scores_clean[0] == 0.5 * 1.0 + 0.5 * 0.5);
    REQUIRE(out.grad_scores_clean[1] == 0.5 * 2.0 + 0.5 * -0.5);
    // The natural component has no adv-side gradient; the adversarial one
    // passes through scaled.
    REQUIRE(out.grad_scores_adv == std::vector<double>{1.5, 2.0});
  }

  SECTION("exact affine identity across the grid") {
    for (double lambda : {0.1, 0.2, 0.35, 0.65, 0.8, 0.9}) {
      cfg.lambda = lambda;
      auto out = piat::combined_loss(cfg, natural, adv);
      REQUIRE(out.value == lambda * natural.value + (1.0 - lambda) * adv.value);
    }
  }

  SECTION("rejects invalid lambda and non-finite components") {
    cfg.lambda = 1.5;
    REQUIRE_THROWS_AS(piat::combined_loss(cfg, natural, adv),
                      piat::ValidationError);
    cfg.lambda = 0.5;
    piat::LossOutput bad = adv;
    bad.value = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(piat::combined_loss(cfg, natural, bad),
                      piat::ValidationError);

    piat::LossOutput mismatched = adv;
    mismatched.grad_scores_clean = {1.0, 2.0, 3.0};
    REQUIRE_THROWS_AS(piat::combined_loss(cfg, natural, mismatched),
                      piat::ValidationError);
  }
}

TEST_CASE("variant dispatch and name round-trips") {
  std::vector<double> c{1.0, 0.0, -0.5};
  std::vector<double> a{0.3, 0.6, 0.1};

  piat::TradeoffConfig cfg;
  cfg.adv_variant = piat::AdvVariant::KL;
  auto via_cfg = piat::adversarial_loss(cfg, c, a);
  auto direct = piat::kl_adv_loss(c, a);
  REQUIRE(via_cfg.value == direct.value);
  REQUIRE(via_cfg.grad_scores_adv == direct.grad_scores_adv);

  cfg.adv_variant = piat::AdvVariant::ListNet;
  REQUIRE(piat::adversarial_loss(cfg, c, a).value ==
          piat::listnet_adv_loss(c, a, cfg.phi).value);

  cfg.adv_variant = piat::AdvVariant::ListMLE;
  REQUIRE(piat::adversarial_loss(cfg, c, a).value ==
          piat::listmle_adv_loss(c, a, cfg.phi).value);

  for (piat::AdvVariant v : {piat::AdvVariant::KL, piat::AdvVariant::ListNet,
                             piat::AdvVariant::ListMLE}) {
    REQUIRE(piat::adv_variant_from_name(piat::adv_variant_name(v)) == v);
  }
  for (piat::Phi phi : kAllPhi) {
    REQUIRE(piat::phi_from_name(piat::phi_name(phi)) == phi);
  }
  REQUIRE_THROWS_AS(piat::adv_variant_from_name("bogus"), piat::ValidationError);
  REQUIRE_THROWS_AS(piat::phi_from_name("bogus"), piat::ValidationError);
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "rankalign/loss.hpp"
#include "rankalign/rng.hpp"
#include "oracles.hpp"

using namespace rankalign;

TEST_CASE("length-normalized log-prob is the per-token mean") {
  for (int len : {1, 3, 7}) {
    const double lp = -std::log(10.0);
    std::vector<double> uniform(static_cast<std::size_t>(len), lp);
    CHECK(length_normalized_logprob(uniform) == doctest::Approx(lp).epsilon(1e-15));
  }
  std::vector<double> lps{-1.0, -2.0, -3.0};
  CHECK(length_normalized_logprob(lps) == -2.0);
}

TEST_CASE("length-normalized log-prob rejects bad input") {
  CHECK_THROWS(length_normalized_logprob({}));
  std::vector<double> positive{-1.0, 0.5};
  CHECK_THROWS(length_normalized_logprob(positive));
  std::vector<double> nan{std::nan("")};
  CHECK_THROWS(length_normalized_logprob(nan));
  std::vector<double> zero{0.0};
  CHECK(length_normalized_logprob(zero) == 0.0);
}

TEST_CASE("ranking loss hand cases") {
  CHECK(ranking_loss(std::vector<double>{-2.0, -1.0},
                     std::vector<double>{0.0, 1.0}) == 0.0);
  CHECK(ranking_loss(std::vector<double>{-1.0, -2.0},
                     std::vector<double>{0.0, 1.0}) == 1.0);
  // tied pair (1,2) excluded; violations (1,3) and (2,3)
  CHECK(ranking_loss(std::vector<double>{-1.0, -2.0, -3.0},
                     std::vector<double>{0.0, 0.0, 1.0}) == 3.0);
}

TEST_CASE("ranking loss input validation") {
  CHECK_THROWS(ranking_loss(std::vector<double>{-1.0},
                            std::vector<double>{0.0, 1.0}));
  CHECK_THROWS(ranking_loss(std::vector<double>{-1.0},
                            std::vector<double>{0.0}));
}

TEST_CASE("ranking loss properties") {
  Rng rng(1234);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    auto batch = oracle::random_batch(rng, k);
    const double loss = ranking_loss(batch.p, batch.r);
    CHECK(loss >= 0.0);
    CHECK(loss == doctest::Approx(oracle::ranking_loss(batch.p, batch.r))
                      .epsilon(1e-12));

    // invariant under a constant shift of every score
    const double c = 4.0 * rng.uniform() - 2.0;
    auto shifted = batch.p;
    for (double& x : shifted) x += c;
    CHECK(ranking_loss(shifted, batch.r) == doctest::Approx(loss).epsilon(1e-9));

    // invariant under a simultaneous permutation
    std::vector<std::size_t> perm(batch.p.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<double> pp, rp;
    for (std::size_t i : perm) {
      pp.push_back(batch.p[i]);
      rp.push_back(batch.r[i]);
    }
    CHECK(ranking_loss(pp, rp) == doctest::Approx(loss).epsilon(1e-12));
  }
}

TEST_CASE("ranking loss is zero exactly when ordering matches") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    auto batch = oracle::random_batch(rng, k);
    bool violated = false;
    for (std::size_t i = 0; i < batch.p.size(); ++i)
      for (std::size_t j = 0; j < batch.p.size(); ++j)
        if (batch.r[i] < batch.r[j] && batch.p[i] > batch.p[j]) violated = true;
    CHECK((ranking_loss(batch.p, batch.r) == 0.0) == !violated);
  }
}

TEST_CASE("best response index and tie-breaking") {
  CHECK(best_response_index(std::vector<double>{0.0, 1.0}) == 1);
  CHECK(best_response_index(std::vector<double>{1.0, 1.0}) == 0);
  CHECK(best_response_index(std::vector<double>{3.0, 1.0, 2.0}) == 0);
  CHECK_THROWS(best_response_index({}));
}

TEST_CASE("best response index ignores monotone reward transforms") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    std::vector<double> r;
    for (int i = 0; i < k; ++i) r.push_back(4.0 * rng.uniform() - 2.0);
    auto transformed = r;
    for (double& x : transformed) x = std::exp(2.0 * x) + 1.0;
    CHECK(best_response_index(r) == best_response_index(transformed));
  }
}

TEST_CASE("sft loss hand cases") {
  CHECK(sft_loss(std::vector<double>{-1.5, -0.5}, 1) == 0.5);
  CHECK(sft_loss(std::vector<double>{0.0}, 0) == 0.0);
  CHECK(sft_loss(std::vector<double>{-2.0, -1.0}, 0) == 2.0);
  CHECK_THROWS(sft_loss(std::vector<double>{-1.0}, 1));
}

TEST_CASE("similarity loss hand cases") {
  std::vector<double> v{0.3, -1.2, 4.0};
  CHECK(similarity_loss(v, v) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(similarity_loss(std::vector<double>{1.0, 0.0},
                        std::vector<double>{0.0, 1.0}) == 1.0);
  CHECK(similarity_loss(std::vector<double>{1.0, 0.0},
                        std::vector<double>{-1.0, 0.0}) == 2.0);
}

TEST_CASE("similarity loss errors") {
  std::vector<double> v{1.0, 0.0};
  std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_WITH(similarity_loss(v, zero),
                    doctest::Contains("degenerate"));
  CHECK_THROWS(similarity_loss(v, std::vector<double>{1.0, 0.0, 0.0}));
}

TEST_CASE("similarity loss scale invariance and range") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 2 + static_cast<int>(rng.uniform_int(6));
    std::vector<double> a, b;
    for (int i = 0; i < dim; ++i) {
      a.push_back(rng.normal());
      b.push_back(rng.normal());
    }
    const double loss = similarity_loss(a, b);
    CHECK(loss >= 0.0);
    CHECK(loss <= 2.0);
    const double ca = 0.01 + 10.0 * rng.uniform();
    const double cb = 0.01 + 10.0 * rng.uniform();
    auto a2 = a;
    auto b2 = b;
    for (double& x : a2) x *= ca;
    for (double& x : b2) x *= cb;
    CHECK(similarity_loss(a2, b2) == doctest::Approx(loss).epsilon(1e-9));
  }
}

TEST_CASE("total loss combination and hand cases") {
  const LossWeights paper{10.0, 1.0, 1.0};
  CHECK(total_loss(0.0, 0.0, 0.0, paper).total == 0.0);
  CHECK(total_loss(0.5, 2.0, 0.1, paper).total == 7.1);
  CHECK(total_loss(1.0, 0.0, 0.0, paper).total == 10.0);

  auto breakdown = total_loss(0.4, -0.3, 1.2, LossWeights{2.0, 3.0, 0.5});
  CHECK(breakdown.total == 2.0 * 0.4 + 3.0 * -0.3 + 0.5 * 1.2);
  CHECK(breakdown.rank == 0.4);
  CHECK(breakdown.sft == -0.3);
  CHECK(breakdown.sim == 1.2);
}

TEST_CASE("total loss validation") {
  CHECK_THROWS(total_loss(0.0, 0.0, 0.0, LossWeights{-1.0, 1.0, 1.0}));
  CHECK_THROWS(total_loss(0.0, 0.0, 0.0, LossWeights{0.0, 0.0, 0.0}));
  CHECK_THROWS(total_loss(-0.1, 0.0, 0.0, LossWeights{1.0, 1.0, 1.0}));
  CHECK_THROWS(total_loss(0.0, 0.0, 2.5, LossWeights{1.0, 1.0, 1.0}));
}

TEST_CASE("total loss is linear in components and weights") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double rank = 2.0 * rng.uniform();
    const double sft = 4.0 * rng.uniform() - 2.0;
    const double sim = 2.0 * rng.uniform();
    const LossWeights w{rng.uniform() + 0.1, rng.uniform() + 0.1,
                        rng.uniform() + 0.1};
    const double base = total_loss(rank, sft, sim, w).total;
    const double c = 1.0 + rng.uniform();
    CHECK(total_loss(c * rank, sft, sim, w).total ==
          doctest::Approx(base + (c - 1.0) * w.rank * rank).epsilon(1e-12));
    LossWeights w2 = w;
    w2.sft *= c;
    CHECK(total_loss(rank, sft, sim, w2).total ==
          doctest::Approx(base + (c - 1.0) * w.sft * sft).epsilon(1e-12));
  }
}

TEST_CASE("raw ranking baseline") {
  // rank 0.5 and sft 2.0 by construction
  std::vector<double> p{-1.5, -2.0};
  std::vector<double> r{0.0, 1.0};
  CHECK(raw_rrhf_loss(p, r, LossWeights::rrhf_unweighted()).total == 2.5);
  CHECK(raw_rrhf_loss(p, r, LossWeights::rrhf_weighted()).total == 7.0);

  std::vector<double> p2{-1.0, -1.0};
  std::vector<double> r2{0.0, 1.0};
  // rank 1.0, sft 1.0
  std::vector<double> p3{-1.0, -2.0};
  std::vector<double> r3{0.0, 1.0};
  auto ub = raw_rrhf_loss(p3, r3, LossWeights::rrhf_unweighted());
  CHECK(ub.rank == 1.0);
  CHECK(ub.sft == 2.0);
  CHECK(ub.total == 3.0);
  auto wb = raw_rrhf_loss(p3, r3, LossWeights::rrhf_weighted());
  CHECK(wb.total == 12.0);
  CHECK(raw_rrhf_loss(std::vector<double>{-1.0, -1.0},
                      std::vector<double>{1.0, 1.0},
                      LossWeights::rrhf_unweighted())
            .rank == 0.0);
  CHECK(wb.sim == 0.0);
  CHECK_THROWS(raw_rrhf_loss(p3, r3, LossWeights{1.0, 1.0, 0.5}));
}

TEST_CASE("raw baseline spec arithmetic") {
  // rank 1.0, sft 1.0: weights (1,1,0) -> 2.0 and (10,1,0) -> 11.0
  std::vector<double> p{-0.5, -1.5};
  std::vector<double> r{0.0, 1.0};
  auto b = raw_rrhf_loss(p, r, LossWeights::rrhf_unweighted());
  CHECK(b.rank == 1.0);
  CHECK(b.sft == 1.5);
  std::vector<double> p2{-1.0, -2.0};
  // engineered rank=1, sft=1: p=(-0.?..) choose p=(0.0 invalid?) use direct total
  auto direct = total_loss(1.0, 1.0, 0.0, LossWeights::rrhf_unweighted());
  CHECK(direct.total == 2.0);
  auto weighted = total_loss(1.0, 1.0, 0.0, LossWeights::rrhf_weighted());
  CHECK(weighted.total == 11.0);
  auto zero = total_loss(0.0, 0.0, 0.0, LossWeights::rrhf_weighted());
  CHECK(zero.total == 0.0);
}

TEST_CASE("loss breakdown total matches the oracle combination") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const double rank = 3.0 * rng.uniform();
    const double sft = 3.0 * rng.uniform();
    const double sim = 2.0 * rng.uniform();
    const LossWeights w{10.0 * rng.uniform(), rng.uniform() + 0.01,
                        rng.uniform()};
    const auto breakdown = total_loss(rank, sft, sim, w);
    CHECK(breakdown.total ==
          oracle::total_loss(rank, sft, sim, w.rank, w.sft, w.sim));
  }
}

TEST_CASE("log softmax normalizes and reproduces hand softmax") {
  std::vector<double> logits{std::log(3.0), 0.0};
  const auto lsm = log_softmax(logits);
  CHECK(lsm[0] == doctest::Approx(std::log(3.0 / 4.0)).epsilon(1e-12));
  CHECK(lsm[1] == doctest::Approx(std::log(1.0 / 4.0)).epsilon(1e-12));
  double sum = 0.0;
  for (double v : lsm) sum += std::exp(v);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

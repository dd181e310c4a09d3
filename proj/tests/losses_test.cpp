#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace ciao;

namespace {

std::vector<ContrastiveKey> keys_of(const std::vector<int>& ids) {
  std::vector<ContrastiveKey> k;
  for (int i : ids) k.push_back({{i}});
  return k;
}

double run_supcon(const Tensor& z, const std::vector<int>& ids, ContrastiveConfig cfg = {}) {
  Graph g(GradMode::none);
  const auto keys = keys_of(ids);
  return supcon_loss(g.constant(z), std::span<const ContrastiveKey>(keys), cfg).value().item();
}

double run_task(const Tensor& pred, const std::vector<LabelScheme>& labels, LabelKind kind) {
  Graph g(GradMode::none);
  return task_loss(g.constant(pred), std::span<const LabelScheme>(labels), kind).value().item();
}

std::vector<std::vector<double>> rows_of(const Tensor& z) {
  std::vector<std::vector<double>> r(z.dim(0), std::vector<double>(z.dim(1)));
  for (std::size_t i = 0; i < z.dim(0); ++i)
    for (std::size_t j = 0; j < z.dim(1); ++j) r[i][j] = z.at(i, j);
  return r;
}

}  // namespace

TEST(ContrastiveKey, Schemes) {
  const ContrastiveConfig cfg;
  EXPECT_EQ(contrastive_key(Dimensional{-1, -1}, cfg).parts, (std::vector<int>{0, 0}));
  EXPECT_EQ(contrastive_key(Dimensional{1, 1}, cfg).parts, (std::vector<int>{6, 6}));
  EXPECT_EQ(contrastive_key(Dimensional{0, 0}, cfg).parts, (std::vector<int>{3, 3}));
  EXPECT_EQ(contrastive_key(Distribution{{0.1f, 0.7f, 0.2f}}, cfg).parts, (std::vector<int>{1}));
  EXPECT_EQ(contrastive_key(Distribution{{0.4f, 0.2f, 0.4f}}, cfg).parts, (std::vector<int>{0})) << "ties go low";
  EXPECT_EQ(contrastive_key(Categorical{5}, cfg).parts, (std::vector<int>{5}));
  EXPECT_EQ(contrastive_key(MultiLabelBinary{{1, 0, 1}}, cfg).parts, (std::vector<int>{1, 0, 1}));
}

TEST(PairwiseExps, Examples) {
  const Tensor same({2, 2}, {1, 0, 1, 0});
  EXPECT_NEAR(pairwise_exps(same, 1.0)[1], std::exp(1.0), 1e-6);
  const Tensor ortho({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(pairwise_exps(ortho, 1.0)[1], 1.0, 1e-7);
  EXPECT_THROW(pairwise_exps(Tensor({1, 3}), 1.0), ShapeError);
}

TEST(PairwiseExps, MatchesScalarLoop) {
  std::mt19937_64 rng(2);
  const Tensor raw = ciao::testing::random_tensor({4, 3}, rng);
  Graph g(GradMode::none);
  const Tensor z = l2_normalize_rows(g.constant(raw), 1e-12).value();
  const Tensor c = pairwise_exps(z, 0.5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < 3; ++k) dot += static_cast<double>(z.at(i, k)) * z.at(j, k);
      EXPECT_NEAR(c.at(i, j), std::exp(dot / 0.5), 1e-6 * std::exp(dot / 0.5));
      EXPECT_EQ(c.at(i, j), c.at(j, i));
    }
}

TEST(Supcon, HandComputedThreeSamples) {
  const Tensor z({3, 2}, {1, 0, 1, 0, 0, 1});
  ContrastiveConfig cfg;
  cfg.temperature = 1.0;
  const double per_anchor = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(per_anchor, 0.31326, 1e-5);
  EXPECT_NEAR(run_supcon(z, {0, 0, 1}, cfg), 0.62652, 1e-4);
}

TEST(Supcon, AllDistinctKeysIsZero) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(run_supcon(ciao::testing::random_tensor({5, 4}, rng), {0, 1, 2, 3, 4}), 0.0);
}

TEST(Supcon, MatchesBruteForceOracle) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(2, 8), dim(1, 6), key(0, 3);
  std::uniform_real_distribution<double> temp(0.1, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = static_cast<std::size_t>(size(rng)), f = static_cast<std::size_t>(dim(rng));
    const Tensor z = ciao::testing::random_tensor({n, f}, rng);
    std::vector<int> ids(n);
    for (int& k : ids) k = key(rng);
    ContrastiveConfig cfg;
    cfg.temperature = temp(rng);
    cfg.normalize_embeddings = trial % 4 != 0;
    const double want = oracle::supcon(rows_of(z), ids, cfg.temperature, cfg.normalize_embeddings);
    ASSERT_NEAR(run_supcon(z, ids, cfg), want, 1e-5 * std::max(1.0, want)) << "trial " << trial;
  }
}

TEST(Supcon, PermutationInvariantAndNonNegative) {
  std::mt19937_64 rng(9);
  const Tensor z = ciao::testing::random_tensor({8, 5}, rng);
  const std::vector<int> ids{0, 1, 0, 2, 1, 1, 3, 0};
  const double base = run_supcon(z, ids);
  EXPECT_GE(base, 0.0);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> pids;
    for (std::size_t p : perm) pids.push_back(ids[p]);
    EXPECT_NEAR(run_supcon(z.gather_rows(perm), pids), base, 1e-6 * std::max(1.0, base));
  }
}

TEST(Supcon, NormalizedLossIgnoresRowScale) {
  std::mt19937_64 rng(3);
  Tensor z = ciao::testing::random_tensor({6, 4}, rng);
  const std::vector<int> ids{0, 0, 1, 1, 2, 2};
  const double base = run_supcon(z, ids);
  for (std::size_t j = 0; j < 4; ++j) z.at(2, j) *= 7.5f;
  EXPECT_NEAR(run_supcon(z, ids), base, 1e-5);
}

TEST(Supcon, KeyCountMismatchIsError) {
  Graph g(GradMode::none);
  const auto keys = keys_of({0, 1});
  EXPECT_THROW(supcon_loss(g.constant(Tensor({3, 2}, 1.0f)), std::span<const ContrastiveKey>(keys), {}), ShapeError);
}

TEST(TaskLoss, Examples) {
  EXPECT_NEAR(run_task(Tensor({1, 4}), {Categorical{2}}, LabelKind::categorical), std::log(4.0), 1e-6);
  EXPECT_LT(run_task(Tensor({1, 3}, {20, 0, 0}), {Categorical{0}}, LabelKind::categorical), 1e-6);
  EXPECT_NEAR(run_task(Tensor({1, 2}, {0.5f, -0.5f}), {Dimensional{0, 0}}, LabelKind::dimensional), 0.25, 1e-7);
}

TEST(TaskLoss, DistributionAndMultilabel) {
  // Uniform logits against any distribution give ln k.
  EXPECT_NEAR(run_task(Tensor({1, 3}), {Distribution{{0.2f, 0.5f, 0.3f}}}, LabelKind::distribution), std::log(3.0), 1e-6);
  // BCE at logit 0 is ln 2 per class whatever the flag.
  EXPECT_NEAR(run_task(Tensor({2, 3}), {MultiLabelBinary{{1, 0, 1}}, MultiLabelBinary{{0, 0, 1}}}, LabelKind::multilabel),
              std::log(2.0), 1e-6);
  const double logit = 1.3, want = -std::log(1.0 / (1.0 + std::exp(-logit)));
  EXPECT_NEAR(run_task(Tensor({1, 1}, {static_cast<float>(logit)}), {MultiLabelBinary{{1}}}, LabelKind::multilabel), want,
              1e-6);
}

TEST(TaskLoss, SchemeMismatchIsError) {
  EXPECT_THROW(run_task(Tensor({1, 3}), {Dimensional{0, 0}}, LabelKind::categorical), ShapeError);
  EXPECT_THROW(run_task(Tensor({1, 3}), {Dimensional{0, 0}}, LabelKind::dimensional), ShapeError);
  EXPECT_THROW(run_task(Tensor({1, 3}), {Categorical{3}}, LabelKind::categorical), ShapeError);
  EXPECT_THROW(run_task(Tensor({2, 3}), {Categorical{0}}, LabelKind::categorical), ShapeError);
}

TEST(TotalLoss, Examples) {
  Graph g(GradMode::none);
  auto s = [&](float v) { return g.constant(Tensor::scalar(v)); };
  EXPECT_EQ(total_loss(s(0.5f), s(1.0f), true).value().item(), 1.5f);
  EXPECT_EQ(total_loss(s(123.0f), s(1.0f), false).value().item(), 1.0f);
  EXPECT_EQ(total_loss(s(0.0f), s(0.0f), true).value().item(), 0.0f);
}

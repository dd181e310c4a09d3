#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace ciao;
using ciao::testing::random_tensor;

namespace {

Tensor dense_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t B = x.dim(0), F = x.dim(1), O = w.dim(1);
  Tensor out({B, O});
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t o = 0; o < O; ++o) {
      double acc = b[o];
      for (std::size_t f = 0; f < F; ++f) acc += static_cast<double>(x.at(r, f)) * w.at(f, o);
      out.at(r, o) = static_cast<float>(acc);
    }
  return out;
}

Tensor run_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  Graph g(GradMode::none);
  return conv2d(g.constant(x), g.constant(w), g.constant(b), stride, pad).value();
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "at flat index " << i;
}

}  // namespace

TEST(Conv2d, SumOfOnes) {
  const Tensor out = run_conv(Tensor({1, 1, 3, 3}, 1.0f), Tensor({1, 1, 3, 3}, 1.0f), Tensor({1}), 1, 0);
  EXPECT_EQ(out, Tensor({1, 1, 1, 1}, {9.0f}));
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 1, 5, 4}, rng);
  EXPECT_EQ(run_conv(x, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}), 1, 0), x);
}

TEST(Conv2d, MatchesLoopOracle) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({1, 2, 4, 4}, rng), w = random_tensor({3, 2, 2, 2}, rng), b = random_tensor({3}, rng);
  expect_close(run_conv(x, w, b, 1, 0), oracle::conv(x, w, b, 1, 0), 1e-6);
}

TEST(Conv2d, MatchesLoopOracleAcrossShapes) {
  std::mt19937_64 rng(11);
  for (std::size_t stride : {1u, 2u})
    for (std::size_t pad : {0u, 1u}) {
      const Tensor x = random_tensor({4, 4, 8, 8}, rng), w = random_tensor({3, 4, 3, 3}, rng), b = random_tensor({3}, rng);
      expect_close(run_conv(x, w, b, stride, pad), oracle::conv(x, w, b, stride, pad), 1e-6);
    }
}

TEST(Conv2d, OutputSizeFormula) {
  const Tensor out = run_conv(Tensor({1, 1, 7, 6}), Tensor({2, 1, 3, 3}), Tensor({2}), 2, 1);
  EXPECT_EQ(out.shape(), (Shape{1, 2, 4, 3}));
}

TEST(Conv2d, ShapeErrors) {
  EXPECT_THROW(run_conv(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 0), ShapeError);
  EXPECT_THROW(run_conv(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), 1, 0), ShapeError);
  EXPECT_THROW(run_conv(Tensor({1, 1, 4, 4}), Tensor({1, 1, 3, 3}), Tensor({2}), 1, 0), ShapeError);
  EXPECT_THROW(run_conv(Tensor({1, 1, 4, 4}), Tensor({1, 1, 3, 3}), Tensor({1}), 0, 0), ShapeError);
}

TEST(Dense, Examples) {
  Graph g(GradMode::none);
  EXPECT_EQ(dense(g.constant(Tensor({1, 2}, {1, 2})), g.constant(Tensor({2, 2}, {1, 0, 0, 1})), g.constant(Tensor({2})))
                .value(),
            Tensor({1, 2}, {1, 2}));
  EXPECT_EQ(dense(g.constant(Tensor({1, 2}, {1, 1})), g.constant(Tensor({2, 1}, {2, 3})), g.constant(Tensor({1}, {1})))
                .value(),
            Tensor({1, 1}, {6}));
}

TEST(Dense, MatchesLoopOracle) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({4, 8}, rng), w = random_tensor({8, 3}, rng), b = random_tensor({3}, rng);
  Graph g(GradMode::none);
  expect_close(dense(g.constant(x), g.constant(w), g.constant(b)).value(), dense_oracle(x, w, b), 1e-6);
  EXPECT_THROW(dense(g.constant(x), g.constant(Tensor({7, 3})), g.constant(b)), ShapeError);
}

TEST(Elementwise, ReluMaxpoolNormalize) {
  Graph g(GradMode::none);
  EXPECT_EQ(relu(g.constant(Tensor({2}, {-1, 2}))).value(), Tensor({2}, {0, 2}));
  EXPECT_EQ(maxpool2x2(g.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}))).value(), Tensor({1, 1, 1, 1}, {4}));
  const Tensor n = l2_normalize_rows(g.constant(Tensor({1, 2}, {3, 4})), 1e-12).value();
  EXPECT_NEAR(n[0], 0.6, 1e-7);
  EXPECT_NEAR(n[1], 0.8, 1e-7);
  EXPECT_THROW(maxpool2x2(g.constant(Tensor({1, 1, 3, 2}))), ShapeError);
  EXPECT_EQ(flatten(g.constant(Tensor({2, 3, 2, 2}))).shape(), (Shape{2, 12}));
}

TEST(Elementwise, NormalizeZeroRowUsesEps) {
  Graph g(GradMode::none);
  const Tensor n = l2_normalize_rows(g.constant(Tensor({1, 2})), 1e-12).value();
  EXPECT_TRUE(n.all_finite());
  EXPECT_EQ(n, Tensor({1, 2}));
}

// Float-precision grad checks on the two affine ops, checked at several seeds.
TEST(GradCheck, DenseAndConvFloatFragments) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    BasicParam<double> x("x", random_tensor<double>({3, 4}, rng)), w("w", random_tensor<double>({4, 2}, rng)),
        b("b", random_tensor<double>({2}, rng));
    auto rep = grad_check<double>([&](BasicGraph<double>& g) { return sum(dense(g.param(x), g.param(w), g.param(b))); },
                                  {&x, &w, &b});
    EXPECT_TRUE(rep.pass) << "dense seed " << seed << " err " << rep.max_rel_error;

    BasicParam<double> cx("cx", random_tensor<double>({1, 2, 4, 4}, rng)), cw("cw", random_tensor<double>({2, 2, 3, 3}, rng)),
        cb("cb", random_tensor<double>({2}, rng));
    const auto r = random_tensor<double>({1, 2, 4, 4}, rng);
    rep = grad_check<double>([&](BasicGraph<double>& g) {
      return sum(mul(conv2d(g.param(cx), g.param(cw), g.param(cb), 1, 1), g.constant(r)));
    }, {&cx, &cw, &cb});
    EXPECT_TRUE(rep.pass) << "conv seed " << seed << " err " << rep.max_rel_error;
  }
}

TEST(GradCheck, DetectsCorruptedBackward) {
  // y = 3x with a backward that reports 6x.
  auto doubled = [](BasicVar<double> x) {
    BasicTensor<double> out = x.value();
    for (auto& v : out.data()) v *= 3.0;
    const std::size_t xi = x.id();
    return x.graph().record(std::move(out), {xi}, [xi](BasicGraph<double>& g, std::size_t self) {
      const auto& go = g.grad(self);
      auto& gx = g.grad_mut(xi);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += 2.0 * 3.0 * go[i];
    });
  };
  std::mt19937_64 rng(0);
  BasicParam<double> x("x", random_tensor<double>({4}, rng));
  const auto rep = grad_check<double>([&](BasicGraph<double>& g) { return sum(doubled(g.param(x))); }, {&x});
  EXPECT_FALSE(rep.pass);
  EXPECT_NEAR(rep.max_rel_error, 0.5, 1e-6);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(derivative_rel_error(1e-8, 0.0, 1e-6), 0.0);
  EXPECT_NEAR(derivative_rel_error(2.0, 1.0, 1e-6), 0.5, 1e-12);
}

TEST(GradCheck, NonScalarFragmentIsError) {
  BasicParam<double> x("x", BasicTensor<double>({2}, 1.0));
  EXPECT_THROW(grad_check<double>([&](BasicGraph<double>& g) { return relu(g.param(x)); }, {&x}), GraphError);
}

TEST(GradCheckSuite, EveryGroupPassesOverTenSeeds) {
  const auto checks = run_gradcheck_suite("all");
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks) {
    EXPECT_TRUE(c.pass) << c.module << "/" << c.name << " max_rel_error " << c.max_rel_error;
    EXPECT_GE(c.seeds, 10) << c.name;
  }
  EXPECT_THROW(run_gradcheck_suite("nope"), ValidationError);
}

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace ciao;

TEST(Backward, LinearDerivative) {
  Param w("w", Tensor({1}, {5.0f}));
  Graph g;
  Var loss = sum(mul(g.param(w), g.constant(Tensor({1}, {2.0f}))));
  g.backward(loss);
  EXPECT_EQ(w.grad[0], 2.0f);
}

TEST(Backward, DeadReluHasZeroGradient) {
  Param w("w", Tensor({1}, {-1.0f}));
  Graph g;
  g.backward(sum(relu(g.param(w))));
  EXPECT_EQ(w.grad[0], 0.0f);
}

TEST(Backward, FrozenParamGradStaysZero) {
  Param w("w", Tensor({2}, {1.0f, 2.0f}));
  Param v("v", Tensor({2}, {3.0f, 4.0f}), false);
  Graph g;
  g.backward(sum(mul(g.param(w), g.param(v))));
  EXPECT_EQ(w.grad, Tensor({2}, {3.0f, 4.0f}));
  EXPECT_EQ(v.grad, Tensor({2}));

  Graph all(GradMode::all);
  all.backward(sum(mul(all.param(w), all.param(v))));
  EXPECT_EQ(v.grad, Tensor({2})) << "frozen params never receive gradient, even when gradients are tracked";
}

TEST(Backward, SecondCallAndNonScalarAreErrors) {
  Param w("w", Tensor({2}, {1.0f, 2.0f}));
  Graph g;
  Var x = g.param(w);
  EXPECT_THROW(g.backward(relu(x)), GraphError);
  Var loss = sum(x);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), GraphError);
  EXPECT_THROW(g.constant(Tensor({1})), GraphError);
}

TEST(Backward, VisitsNodesInReverseExecutionOrder) {
  Param w("w", Tensor({2, 2}, {1, -2, 3, 4}));
  Graph g;
  Var a = g.param(w);
  Var b = relu(a);
  Var c = scale(b, 2.0);
  Var d = add(c, a);
  Var loss = sum(d);
  g.backward(loss);
  const std::vector<std::size_t> expected{loss.id(), d.id(), c.id(), b.id(), a.id()};
  EXPECT_EQ(g.backward_order(), expected);
}

TEST(Backward, GradientsAccumulateAcrossUses) {
  Param w("w", Tensor({1}, {3.0f}));
  Graph g;
  Var x = g.param(w);
  g.backward(sum(mul(x, x)));
  EXPECT_FLOAT_EQ(w.grad[0], 6.0f);
}

TEST(Forward, IsDeterministic) {
  std::mt19937_64 rng(2);
  const Tensor x = ciao::testing::random_tensor({2, 3, 8, 8}, rng);
  Param w("w", ciao::testing::random_tensor({4, 3, 3, 3}, rng)), b("b", ciao::testing::random_tensor({4}, rng));
  auto run = [&] {
    Graph g;
    return maxpool2x2(relu(conv2d(g.constant(x), g.param(w), g.param(b), 1, 1))).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Sgd, MomentumUpdate) {
  Param p("p", Tensor({1}, {1.0f}));
  Param frozen("f", Tensor({1}, {1.0f}), false);
  Sgd sgd({&p, &frozen}, 0.1, 0.9);
  p.grad[0] = 1.0f;
  frozen.grad[0] = 1.0f;
  sgd.step();  // v = 1, p = 1 - 0.1
  EXPECT_FLOAT_EQ(p.value[0], 0.9f);
  sgd.step();  // v = 0.9 + 1 = 1.9, p = 0.9 - 0.19
  EXPECT_FLOAT_EQ(p.value[0], 0.71f);
  EXPECT_EQ(frozen.value[0], 1.0f);
}

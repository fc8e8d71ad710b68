#include <gtest/gtest.h>

#include <unordered_set>

#include "support/fd_oracle.hpp"
#include "uwipt/core/ops.hpp"

using namespace uwipt;

TEST(Backward, SumGivesUnitGradient) {
  Tensor<float> x({3}, {1, 2, 3}, true);
  backward(sum(x));
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{1, 1, 1}));
}

TEST(Backward, SquareSum) {
  Tensor<float> x({2}, {1, 2}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{2, 4}));
}

TEST(Backward, NonScalarLossIsAContractError) {
  Tensor<float> x({2}, {1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0f)), ContractError);
}

TEST(Backward, DetachedLossIsAContractError) {
  Tensor<float> x({2}, {1, 2}, false);
  EXPECT_THROW(backward(sum(x)), ContractError);
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  Tensor<float> x({2}, {1, 2}, true);
  backward(sum(x));
  backward(sum(x));
  EXPECT_EQ(x.grad()[0], 2.0f);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, TwoConsumersSumBothPaths) {
  // y = relu(x) * x + gelu(x): x feeds three consumers.
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = fd::random_away_from_zero<double>({6}, rng);
    const auto report = fd::compare<double>(
        [](const auto& in) { return add(mul(relu(in[0]), in[0]), gelu(in[0])); }, {x}, 1e-5, 1e-6, rng);
    EXPECT_LT(report.worst_rel, 1e-6);
  }
  Tensor<float> x({1}, {3}, true);
  backward(sum(add(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0f);
}

TEST(Backward, UnreachableLeafGetsNoGradient) {
  Tensor<float> used({2}, {1, 2}, true);
  Tensor<float> unused({2}, {1, 2}, true);
  backward(sum(used));
  EXPECT_TRUE(used.has_grad());
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor<float> x({2}, {1, 2}, true);
  Tensor<float> y;
  {
    NoGradGuard guard;
    y = sum(mul(x, x));
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_enabled());
}

TEST(Tape, TopologicalOrderAndSingleVisit) {
  Tensor<float> a({2}, {1, 2}, true);
  Tensor<float> b({2}, {3, 4}, true);
  const auto c = mul(a, b);
  const auto d = add(c, c);
  const auto loss = sum(add(d, a));
  ComputationTape<float> tape(loss);
  const auto& nodes = tape.nodes();
  std::unordered_set<const void*> seen;
  for (const auto* n : nodes) {
    for (const auto& in : n->inputs) {
      if (in->requires_grad) {
        EXPECT_TRUE(seen.count(in.get())) << "input recorded after consumer";
      }
    }
    EXPECT_TRUE(seen.insert(n).second) << "node visited twice";
  }
  EXPECT_EQ(nodes.back(), loss.node_ptr().get());
  EXPECT_EQ(tape.size(), 6u);  // a, b, c, d, d+a, sum
}

TEST(Backward, CorruptedRuleHookSkewsGradient) {
  Tensor<float> x({2}, {1, 2}, true);
  detail::corrupted_backward_op() = "relu";
  backward(sum(relu(x)));
  detail::corrupted_backward_op().clear();
  EXPECT_FLOAT_EQ(x.grad()[0], 1.5f);
}

#include <gtest/gtest.h>

#include "mamlcon/tensor.hpp"

using namespace mamlcon;

TEST(Tensor, ShapeAndDataLengthAgree) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.values(), t.values());
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, SliceAndStackInvert) {
  Tensor t({3, 2}, {1, 2, 3, 4, 5, 6});
  std::vector<Tensor> rows{t.slice(0), t.slice(1), t.slice(2)};
  EXPECT_EQ(rows[1].values(), (std::vector<double>{3, 4}));
  EXPECT_EQ(Tensor::stack(rows), t);
  EXPECT_THROW(t.slice(3), ShapeError);
  std::vector<Tensor> mixed{Tensor({2}), Tensor({3})};
  EXPECT_THROW(Tensor::stack(mixed), ShapeError);
}

TEST(NamedTensors, InsertionOrderAndUniqueness) {
  ParameterSet p;
  p.add("b", Tensor({1}));
  p.add("a", Tensor({2}));
  EXPECT_EQ(p.names(), (std::vector<std::string>{"b", "a"}));
  EXPECT_THROW(p.add("a", Tensor({1})), std::invalid_argument);
  EXPECT_EQ(p.numel(), 3u);
  EXPECT_THROW(p.at("zz"), std::out_of_range);
}

TEST(NamedTensors, ZerosLikeMirrorsLayout) {
  ParameterSet p;
  p.add("w", Tensor({2, 2}, 3.0));
  p.add("b", Tensor({2}, 1.0));
  const auto g = GradientSet::zeros_like(p);
  EXPECT_TRUE(g.same_layout(p));
  for (const auto& [name, t] : g)
    for (double x : t.values()) EXPECT_EQ(x, 0.0);
  GradientSet other;
  other.add("b", Tensor({2}));
  other.add("w", Tensor({2, 2}));
  EXPECT_FALSE(other.same_layout(p));
}

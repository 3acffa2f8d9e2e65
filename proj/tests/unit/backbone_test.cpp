#include <gtest/gtest.h>

#include <cmath>

#include "autodiff/ops.hpp"
#include "common/error.hpp"
#include "nn/backbone.hpp"

namespace rsg::nn {
namespace {

BackboneSpec small_spec(std::size_t insertion_stage = 2) {
  BackboneSpec spec;
  spec.in_channels = 3;
  spec.stage_channels = {4, 6, 8};
  spec.blocks_per_stage = 1;
  spec.n_cls = 5;
  spec.insertion_stage = insertion_stage;
  return spec;
}

std::vector<double> row_values(const ad::Tensor& t, std::size_t rows) {
  const std::size_t width = t.numel() / t.dim(0);
  return {t.values().begin(), t.values().begin() + static_cast<long>(rows * width)};
}

TEST(Backbone, HookShapeAtStageTwo) {
  Rng rng(1);
  Backbone net(small_spec(2), rng);
  const ad::Tensor f = net.forward_to_hook(normal({2, 3, 32, 32}, 1.0, rng));
  EXPECT_EQ(f.shape(), (ad::Shape{2, 6, 16, 16}));
  EXPECT_EQ(net.hook_channels(), 6u);
}

TEST(Backbone, HookShapeAtStageThree) {
  Rng rng(2);
  Backbone net(small_spec(3), rng);
  EXPECT_EQ(net.forward_to_hook(normal({1, 3, 32, 32}, 1.0, rng)).shape(),
            (ad::Shape{1, 8, 8, 8}));
}

TEST(Backbone, ZeroImagesGiveFiniteOutputs) {
  Rng rng(3);
  Backbone net(small_spec(), rng);
  const ad::Tensor out = net.forward(ad::Tensor::zeros({2, 3, 8, 8}));
  for (double v : out.values()) {
    EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Backbone, SplitForwardEqualsWholeBitwise) {
  Rng rng(4);
  Backbone net(small_spec(), rng);
  ad::Tensor x = normal({3, 3, 8, 8}, 1.0, rng);
  const ad::Tensor whole = net.forward(x);
  const ad::Tensor split = net.forward_from_hook(net.forward_to_hook(x));
  ASSERT_EQ(whole.shape(), (ad::Shape{3, 5}));
  for (std::size_t i = 0; i < whole.numel(); ++i) EXPECT_EQ(whole[i], split[i]);
}

TEST(Backbone, AppendedRowsLeaveEarlierLogitsUnchanged) {
  Rng rng(5);
  Backbone net(small_spec(), rng);
  ad::Tensor f = net.forward_to_hook(normal({4, 3, 8, 8}, 1.0, rng));
  ad::Tensor extra = normal({3, 6, 4, 4}, 1.0, rng);
  const ad::Tensor alone = net.forward_from_hook(f);
  const ad::Tensor joined = net.forward_from_hook(ad::concat_rows(f, extra));
  ASSERT_EQ(joined.dim(0), 7u);
  // GEMM blocking may change with the row count, so agreement is to rounding.
  const auto a = row_values(alone, 4), b = row_values(joined, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Backbone, ZeroFeaturesGiveBias) {
  Rng rng(6);
  Backbone net(small_spec(), rng);
  const ad::Tensor logits = net.forward_from_hook(ad::Tensor::zeros({2, 6, 4, 4}));
  const ad::Tensor bias = net.parameters().back();
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(logits[r * 5 + c], bias[c]);
}

TEST(Backbone, ShapeMismatchRejected) {
  Rng rng(7);
  Backbone net(small_spec(), rng);
  EXPECT_THROW(net.forward_to_hook(ad::Tensor::zeros({1, 1, 8, 8})), ShapeError);
  EXPECT_THROW(net.forward_from_hook(ad::Tensor::zeros({1, 4, 4, 4})), ShapeError);
}

TEST(Backbone, SpecValidation) {
  Rng rng(8);
  auto spec = small_spec();
  spec.insertion_stage = 4;
  EXPECT_THROW(Backbone(spec, rng), ValidationError);
  spec = small_spec();
  spec.insertion_stage = 0;
  EXPECT_THROW(Backbone(spec, rng), ValidationError);
  spec = small_spec();
  spec.stage_channels.clear();
  EXPECT_THROW(Backbone(spec, rng), ValidationError);
}

TEST(Backbone, SameSeedSameWeights) {
  Rng a(9), b(9);
  Backbone n1(small_spec(), a), n2(small_spec(), b);
  const auto p1 = n1.parameters(), p2 = n2.parameters();
  ASSERT_EQ(p1.size(), p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_TRUE(std::equal(p1[i].values().begin(), p1[i].values().end(), p2[i].values().begin()));
  }
}

TEST(Backbone, BatchNormOptionCouplesRowsInTraining) {
  Rng rng(10);
  auto spec = small_spec();
  spec.batch_norm = true;
  Backbone net(spec, rng);
  EXPECT_EQ(net.buffers().size(), 2u * (1 + 2 + 2 * 3));
  ad::Tensor x = normal({4, 3, 8, 8}, 1.0, rng);
  ad::Tensor f = net.forward_to_hook(x);
  ad::Tensor extra = normal({2, 6, 4, 4}, 3.0, rng);
  const auto alone = row_values(net.forward_from_hook(f), 4);
  const auto joined = row_values(net.forward_from_hook(ad::concat_rows(f, extra)), 4);
  EXPECT_NE(alone, joined);
  // Evaluation mode uses running statistics, so rows are independent again.
  net.set_training(false);
  EXPECT_EQ(row_values(net.forward_from_hook(f), 4),
            row_values(net.forward_from_hook(ad::concat_rows(f, extra)), 4));
}

}  // namespace
}  // namespace rsg::nn

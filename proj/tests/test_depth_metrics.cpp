#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pog/depth_metrics.hpp"

using namespace pog;

namespace {

DepthMap random_depth(int w, int h, std::uint64_t seed, double lo = 0.5, double hi = 8.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  DepthMap d(w, h);
  for (int v = 0; v < h; ++v)
    for (int x = 0; x < w; ++x) d.set(x, v, u(rng));
  return d;
}

DepthMap shifted(const DepthMap& d, double offset) {
  DepthMap out = d;
  out.values = d.values + offset;
  return out;
}

/// SSIM of two constant patches, written out from the definition.
double constant_patch_ssim(double a, double b, double L) {
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const double luminance = (2 * a * b + c1) / (a * a + b * b + c1);
  const double contrast_structure = (0 + c2) / (0 + 0 + c2);
  return luminance * contrast_structure;
}

}  // namespace

TEST(DepthL2, Examples) {
  const DepthMap gt = random_depth(32, 24, 1);
  EXPECT_EQ(depth_l2(gt, gt), 0.0);
  EXPECT_NEAR(depth_l2(shifted(gt, 1.0), gt), 1.0, 1e-12);

  DepthMap half = gt;
  for (int v = 0; v < gt.height(); ++v)
    for (int u = 0; u < gt.width() / 2; ++u) half.values(v, u) += 2.0;
  EXPECT_NEAR(depth_l2(half, gt), std::sqrt(2.0), 1e-12);
}

TEST(DepthL2, OnlyJointlyValidPixels) {
  DepthMap gt = random_depth(8, 8, 2);
  DepthMap pred = shifted(gt, 1.0);
  pred.values(3, 3) = 100;
  gt.invalidate(3, 3);
  EXPECT_NEAR(depth_l2(pred, gt), 1.0, 1e-12);
}

TEST(DepthL2, Errors) {
  EXPECT_THROW(depth_l2(random_depth(4, 4, 1), random_depth(5, 4, 1)), std::invalid_argument);
  EXPECT_THROW(depth_l2(DepthMap(4, 4), random_depth(4, 4, 1)), std::invalid_argument);
}

TEST(GradLoss, Examples) {
  const DepthMap gt = random_depth(32, 24, 3);
  EXPECT_EQ(grad_loss(gt, gt), 0.0);
  EXPECT_NEAR(grad_loss(shifted(gt, 3.0), gt), 0.0, 1e-12);

  DepthMap ramp = gt;
  for (int v = 0; v < gt.height(); ++v)
    for (int u = 0; u < gt.width(); ++u) ramp.values(v, u) += u;
  EXPECT_NEAR(grad_loss(ramp, gt), 1.0, 1e-9);
}

TEST(GradLoss, DiagonalRampIsEuclidean) {
  const DepthMap gt = random_depth(16, 16, 4);
  DepthMap ramp = gt;
  for (int v = 0; v < gt.height(); ++v)
    for (int u = 0; u < gt.width(); ++u) ramp.values(v, u) += 3.0 * u + 4.0 * v;
  EXPECT_NEAR(grad_loss(ramp, gt), 5.0, 1e-9);
}

TEST(GradLoss, InvalidNeighbourExcluded) {
  DepthMap gt = random_depth(6, 6, 5);
  DepthMap pred = gt;
  // A spike next to an invalid pixel must not contribute.
  pred.values(2, 2) += 50;
  pred.invalidate(2, 2);
  EXPECT_NEAR(grad_loss(pred, gt), 0.0, 1e-12);
  EXPECT_THROW(grad_loss(DepthMap(6, 6), gt), std::invalid_argument);
  EXPECT_THROW(grad_loss(gt, random_depth(5, 6, 5)), std::invalid_argument);
}

TEST(Ssim, SelfSimilarityAndSymmetry) {
  const DepthMap x = random_depth(40, 30, 6);
  const DepthMap y = random_depth(40, 30, 7);
  const SsimParams params;
  EXPECT_NEAR(ssim(x, x, params), 1.0, 1e-9);
  const double xy = ssim(x, y, params);
  EXPECT_NEAR(xy, ssim(y, x, params), 1e-12);
  EXPECT_GE(xy, -1.0);
  EXPECT_LE(xy, 1.0);
  EXPECT_LT(xy, 0.9);
}

TEST(Ssim, ConstantImagesMatchClosedForm) {
  const SsimParams params;
  const double L = params.dynamic_range;
  for (double a : {0.5, 2.0, 7.0}) {
    const DepthMap x = DepthMap::constant(30, 20, a);
    const DepthMap y = DepthMap::constant(30, 20, a + 0.1 * L);
    EXPECT_NEAR(ssim(x, y, params), constant_patch_ssim(a, a + 0.1 * L, L), 1e-9) << a;
  }
}

TEST(Ssim, SingleWindowMatchesClosedForm) {
  const DepthImage w = gaussian_window(11, 1.5);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  const DepthImage x = DepthImage::Constant(11, 11, 3.0);
  const DepthImage y = DepthImage::Constant(11, 11, 4.0);
  EXPECT_NEAR(ssim_window(x, y, w, 10.0), constant_patch_ssim(3.0, 4.0, 10.0), 1e-12);
}

TEST(Ssim, AnticorrelatedPatchIsNegative) {
  DepthImage x(11, 11), y(11, 11);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      const double s = ((i + j) % 2 == 0) ? 1.0 : -1.0;
      x(i, j) = 5.0 + s;
      y(i, j) = 5.0 - s;
    }
  const double v = ssim_window(x, y, gaussian_window(11, 1.5), 10.0);
  EXPECT_LT(v, 0.0);
  EXPECT_GE(v, -1.0);
}

TEST(Ssim, WindowsTouchingInvalidPixelsSkipped) {
  DepthMap x = random_depth(30, 30, 8);
  DepthMap y = x;
  y.values(15, 15) += 5.0;
  y.invalidate(15, 15);
  EXPECT_NEAR(ssim(x, y, SsimParams{}), 1.0, 1e-9);
}

TEST(Ssim, Errors) {
  const SsimParams params;
  EXPECT_THROW(ssim(random_depth(20, 20, 1), random_depth(21, 20, 1), params), std::invalid_argument);
  EXPECT_THROW(ssim(random_depth(8, 8, 1), random_depth(8, 8, 2), params), std::invalid_argument);
  SsimParams even = params;
  even.window = 10;
  EXPECT_THROW(ssim(random_depth(20, 20, 1), random_depth(20, 20, 2), even), std::invalid_argument);
}

TEST(CombinedLoss, Examples) {
  const DepthMap gt = random_depth(30, 30, 9);
  const DepthMap pred = random_depth(30, 30, 10);
  const SsimParams sp;
  EXPECT_NEAR(combined_loss(gt, gt, LossWeights{}, sp), 0.0, 1e-9);
  EXPECT_NEAR(combined_loss(pred, gt, LossWeights{1, 0, 0}, sp), depth_l2(pred, gt), 1e-15);
  EXPECT_EQ(combine_loss_terms(LossTerms{0, 0, -1}, LossWeights{0, 0, 1}), 1.0);

  const LossWeights w{0.1, 1.0, 1.0};
  const double expected = 0.1 * depth_l2(pred, gt) + grad_loss(pred, gt) + (1 - ssim(pred, gt, sp)) / 2;
  EXPECT_NEAR(combined_loss(pred, gt, w, sp), expected, 1e-12);
}

TEST(CombinedLoss, WeightValidation) {
  EXPECT_THROW(LossWeights({0, 0, 0}).validate(), std::invalid_argument);
  EXPECT_THROW(LossWeights({-1, 1, 1}).validate(), std::invalid_argument);
  EXPECT_THROW(LossWeights({std::nan(""), 1, 1}).validate(), std::invalid_argument);
  EXPECT_NO_THROW(LossWeights({0, 0, 2}).validate());
}

TEST(ThresholdAccuracy, Examples) {
  const DepthMap gt = random_depth(16, 16, 11);
  EXPECT_EQ(threshold_accuracy(gt, gt, 1.25), 1.0);
  DepthMap scaled = gt;
  scaled.values = gt.values * 1.3;
  EXPECT_EQ(threshold_accuracy(scaled, gt, 1.25), 0.0);
  EXPECT_EQ(threshold_accuracy(gt, scaled, 1.25), 0.0);
  EXPECT_EQ(threshold_accuracy(scaled, gt, 1.35), 1.0);
}

TEST(ThresholdAccuracy, Errors) {
  const DepthMap gt = random_depth(4, 4, 12);
  EXPECT_THROW(threshold_accuracy(gt, gt, 1.0), std::invalid_argument);
  EXPECT_THROW(threshold_accuracy(gt, random_depth(3, 4, 1), 1.25), std::invalid_argument);
  EXPECT_THROW(threshold_accuracy(DepthMap(4, 4), gt, 1.25), std::invalid_argument);
}

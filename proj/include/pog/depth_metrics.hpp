#pragma once

#include "pog/depth.hpp"

namespace pog {

// Quality metrics between a predicted and a reference depth map. Each metric
// only looks at pixels valid in both maps and throws std::invalid_argument
// on a shape mismatch or when no pixel qualifies.

/// Root mean square depth difference.
double depth_l2(const DepthMap& pred, const DepthMap& gt);

/// Mean Euclidean norm of the difference of forward-difference gradients.
double grad_loss(const DepthMap& pred, const DepthMap& gt);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double dynamic_range = 10.0;

  static SsimParams for_camera(const CameraIntrinsics& intr) { return {11, 1.5, intr.max_depth}; }
};

/// Mean SSIM over every Gaussian-weighted window that lies fully inside the
/// image and contains only jointly valid pixels.
double ssim(const DepthMap& pred, const DepthMap& gt, const SsimParams& params);

/// SSIM of two equally sized patches under one weighted window.
double ssim_window(const Eigen::Ref<const DepthImage>& x, const Eigen::Ref<const DepthImage>& y,
                   const Eigen::Ref<const DepthImage>& weights, double dynamic_range);

/// Normalized separable Gaussian kernel of odd size.
DepthImage gaussian_window(int size, double sigma);

struct LossWeights {
  double w_depth = 0.1;
  double w_grad = 1.0;
  double w_ssim = 1.0;

  void validate() const;
};

struct LossTerms {
  double depth_l2 = 0;
  double grad = 0;
  double ssim = 1;
};

/// w_depth·l2 + w_grad·grad + w_ssim·(1 − ssim)/2.
double combine_loss_terms(const LossTerms& terms, const LossWeights& weights);

double combined_loss(const DepthMap& pred, const DepthMap& gt, const LossWeights& weights,
                     const SsimParams& ssim_params);

/// Fraction of jointly valid pixels with max(pred/gt, gt/pred) < threshold.
double threshold_accuracy(const DepthMap& pred, const DepthMap& gt, double threshold);

}  // namespace pog

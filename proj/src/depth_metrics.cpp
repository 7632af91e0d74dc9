#include "pog/depth_metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace pog {

namespace {

ValidMask joint_mask(const DepthMap& pred, const DepthMap& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    throw std::invalid_argument("depth maps have different dimensions");
  if (pred.valid.rows() != pred.values.rows() || pred.valid.cols() != pred.values.cols() ||
      gt.valid.rows() != gt.values.rows() || gt.valid.cols() != gt.values.cols())
    throw std::invalid_argument("depth map mask shape differs from values");
  return pred.valid && gt.valid;
}

}  // namespace

double depth_l2(const DepthMap& pred, const DepthMap& gt) {
  const ValidMask mask = joint_mask(pred, gt);
  const auto n = mask.count();
  if (n == 0) throw std::invalid_argument("depth_l2: no jointly valid pixels");
  const double sum = mask.select((pred.values - gt.values).square(), 0.0).sum();
  return std::sqrt(sum / static_cast<double>(n));
}

double grad_loss(const DepthMap& pred, const DepthMap& gt) {
  const ValidMask mask = joint_mask(pred, gt);
  const Eigen::Index h = mask.rows(), w = mask.cols();
  if (h < 2 || w < 2) throw std::invalid_argument("grad_loss: image too small for forward differences");

  const Eigen::Index ih = h - 1, iw = w - 1;
  const ValidMask usable = mask.topLeftCorner(ih, iw) && mask.block(0, 1, ih, iw) && mask.block(1, 0, ih, iw);
  const auto n = usable.count();
  if (n == 0) throw std::invalid_argument("grad_loss: no interior jointly valid pixels");

  const DepthImage diff = pred.values - gt.values;
  const DepthImage gx = diff.block(0, 1, ih, iw) - diff.topLeftCorner(ih, iw);
  const DepthImage gy = diff.block(1, 0, ih, iw) - diff.topLeftCorner(ih, iw);
  const double sum = usable.select((gx.square() + gy.square()).sqrt(), 0.0).sum();
  return sum / static_cast<double>(n);
}

DepthImage gaussian_window(int size, double sigma) {
  if (size <= 0 || size % 2 == 0) throw std::invalid_argument("gaussian_window: size must be odd and positive");
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_window: sigma must be positive");
  Eigen::ArrayXd g(size);
  const int r = size / 2;
  for (int i = 0; i < size; ++i) g(i) = std::exp(-double((i - r) * (i - r)) / (2.0 * sigma * sigma));
  g /= g.sum();
  return (g.matrix() * g.matrix().transpose()).array();
}

double ssim_window(const Eigen::Ref<const DepthImage>& x, const Eigen::Ref<const DepthImage>& y,
                   const Eigen::Ref<const DepthImage>& weights, double dynamic_range) {
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const double mx = (weights * x).sum();
  const double my = (weights * y).sum();
  const DepthImage dx = x - mx;
  const DepthImage dy = y - my;
  const double vx = (weights * dx.square()).sum();
  const double vy = (weights * dy.square()).sum();
  const double cxy = (weights * dx * dy).sum();
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

double ssim(const DepthMap& pred, const DepthMap& gt, const SsimParams& params) {
  const ValidMask mask = joint_mask(pred, gt);
  const int k = params.window;
  if (k <= 0 || k % 2 == 0) throw std::invalid_argument("ssim: window must be odd and positive");
  if (k > mask.rows() || k > mask.cols()) throw std::invalid_argument("ssim: window larger than image");
  if (!(params.dynamic_range > 0)) throw std::invalid_argument("ssim: dynamic range must be positive");

  const DepthImage weights = gaussian_window(k, params.sigma);

  // Summed-area table of invalid pixels to skip windows touching holes.
  const Eigen::Index h = mask.rows(), w = mask.cols();
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> holes =
      Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(h + 1, w + 1);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c)
      holes(r + 1, c + 1) = (mask(r, c) ? 0 : 1) + holes(r, c + 1) + holes(r + 1, c) - holes(r, c);

  double total = 0;
  std::size_t count = 0;
  for (Eigen::Index r = 0; r + k <= h; ++r) {
    for (Eigen::Index c = 0; c + k <= w; ++c) {
      const int bad = holes(r + k, c + k) - holes(r, c + k) - holes(r + k, c) + holes(r, c);
      if (bad != 0) continue;
      total += ssim_window(pred.values.block(r, c, k, k), gt.values.block(r, c, k, k), weights, params.dynamic_range);
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("ssim: no window free of invalid pixels");
  return total / static_cast<double>(count);
}

void LossWeights::validate() const {
  const bool finite = std::isfinite(w_depth) && std::isfinite(w_grad) && std::isfinite(w_ssim);
  if (!finite || w_depth < 0 || w_grad < 0 || w_ssim < 0 || (w_depth == 0 && w_grad == 0 && w_ssim == 0))
    throw std::invalid_argument("LossWeights: weights must be finite, nonnegative and not all zero");
}

double combine_loss_terms(const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  return weights.w_depth * terms.depth_l2 + weights.w_grad * terms.grad + weights.w_ssim * (1.0 - terms.ssim) / 2.0;
}

double combined_loss(const DepthMap& pred, const DepthMap& gt, const LossWeights& weights,
                     const SsimParams& ssim_params) {
  weights.validate();
  LossTerms terms;
  terms.depth_l2 = depth_l2(pred, gt);
  terms.grad = grad_loss(pred, gt);
  terms.ssim = ssim(pred, gt, ssim_params);
  return combine_loss_terms(terms, weights);
}

double threshold_accuracy(const DepthMap& pred, const DepthMap& gt, double threshold) {
  if (!(threshold > 1.0)) throw std::invalid_argument("threshold_accuracy: threshold must exceed 1");
  const ValidMask mask = joint_mask(pred, gt);
  const auto n = mask.count();
  if (n == 0) throw std::invalid_argument("threshold_accuracy: no jointly valid pixels");
  const auto ratio = (pred.values / gt.values).max(gt.values / pred.values);
  const auto hits = (mask && (ratio < threshold)).count();
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace pog

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "m3dvg/geometry.hpp"

namespace m3dvg::losses {

using geometry::Box2D;
using geometry::Box3d;

/// A loss value together with its gradient with respect to the inputs, in
/// the order documented on each function.
struct ValueGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

inline constexpr double kDefaultFocalAlpha = 0.25;
inline constexpr double kDefaultFocalGamma = 2.0;
inline constexpr std::size_t kDefaultClasses = 9;
inline constexpr std::size_t kDefaultOrientationBins = 12;

// --- classification --------------------------------------------------------

/// -alpha (1 - p)^gamma log p for the probability of the true class.
double focal_term(double p_target, double alpha = kDefaultFocalAlpha, double gamma = kDefaultFocalGamma);
/// Gradient input: p_target.
ValueGrad focal_term_grad(double p_target, double alpha = kDefaultFocalAlpha,
                          double gamma = kDefaultFocalGamma);

/// Focal loss over a class distribution. Probabilities must lie in (0, 1]
/// and sum to one within 1e-4; otherwise Error{InvalidProbability}.
double focal_loss(std::span<const double> probabilities, std::size_t target,
                  double alpha = kDefaultFocalAlpha, double gamma = kDefaultFocalGamma);

/// Mean focal loss over pixels. Row p of `probabilities` is the distribution
/// of pixel p over depth bins plus background; targets[p] is its bin.
double depth_map_focal(const Eigen::MatrixXd& probabilities, std::span<const std::size_t> targets,
                       double alpha = kDefaultFocalAlpha, double gamma = kDefaultFocalGamma);
/// Gradient input: probabilities flattened row-major.
ValueGrad depth_map_focal_grad(const Eigen::MatrixXd& probabilities, std::span<const std::size_t> targets,
                               double alpha = kDefaultFocalAlpha, double gamma = kDefaultFocalGamma);

// --- regression --------------------------------------------------------------

/// Mean absolute difference.
double l1_loss(std::span<const double> pred, std::span<const double> target);
/// Gradient input: pred.
ValueGrad l1_loss_grad(std::span<const double> pred, std::span<const double> target);

/// 1 - GIoU, in [0, 2).
double giou_loss(const Box2D& a, const Box2D& b);
/// Gradient inputs: a.{x_min,y_min,x_max,y_max}, b.{x_min,y_min,x_max,y_max}.
ValueGrad giou_loss_grad(const Box2D& a, const Box2D& b);

/// 1 - iou3d(a, b).
double iou3d_loss(const Box3d& a, const Box3d& b);
/// Gradient inputs: a.{cx,cy,cz,w,h,l,yaw}, b.{cx,cy,cz,w,h,l,yaw}.
ValueGrad iou3d_loss_grad(const Box3d& a, const Box3d& b);

/// Size term: iou3d_loss after moving `pred` onto the target's center, so
/// only dimensions and yaw contribute.
double size3d_loss(const Box3d& pred, const Box3d& target);
/// Gradient inputs: pred.{w,h,l,yaw}, target.{cx,cy,cz,w,h,l,yaw}.
ValueGrad size3d_loss_grad(const Box3d& pred, const Box3d& target);

// --- orientation ---------------------------------------------------------------

struct OrientationTarget {
  std::size_t bin = 0;
  double residual = 0.0;  // offset from the bin center, within half a bin width
};

/// Equal, non-overlapping bins centered at k * 2pi / n_bins.
OrientationTarget encode_orientation(double yaw, std::size_t n_bins = kDefaultOrientationBins);
double decode_orientation(const OrientationTarget& t, std::size_t n_bins = kDefaultOrientationBins);

/// Cross-entropy over bin logits plus L1 on the target bin's residual.
double multibin_loss(std::span<const double> bin_logits, std::span<const double> residuals,
                     const OrientationTarget& target);
/// Gradient inputs: bin_logits then residuals.
ValueGrad multibin_loss_grad(std::span<const double> bin_logits, std::span<const double> residuals,
                             const OrientationTarget& target);

// --- depth ---------------------------------------------------------------------

/// Laplacian aleatoric depth loss sqrt(2) exp(-s) |d - d*| + s, with s the
/// predicted log scale.
double laplacian_depth_loss(double depth, double log_scale, double target);
/// Gradient inputs: depth, log_scale, target.
ValueGrad laplacian_depth_loss_grad(double depth, double log_scale, double target);

// --- aggregates ------------------------------------------------------------------

struct LossWeights {
  double cls = 2.0;
  double lrtb = 5.0;
  double giou = 2.0;
  double xy3d = 10.0;

  void validate() const;
};

struct LossParts {
  double cls = 0.0;
  double lrtb = 0.0;
  double giou = 0.0;
  double xy3d = 0.0;
  double size3d = 0.0;
  double orien = 0.0;
  double depth = 0.0;
  double dmap = 0.0;
};

double loss_2d(const LossParts& parts, const LossWeights& w = {});
double loss_3d(const LossParts& parts);
double loss_overall(const LossParts& parts, const LossWeights& w = {});

}  // namespace m3dvg::losses

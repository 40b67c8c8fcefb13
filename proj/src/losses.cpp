#include "m3dvg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/AutoDiff>

#include "m3dvg/error.hpp"

namespace m3dvg::losses {

namespace {

constexpr double kSumTolerance = 1e-4;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_probability(double p) {
  if (!(p > 0.0 && p <= 1.0))
    throw Error(ErrorKind::InvalidProbability, "probability " + std::to_string(p) + " outside (0, 1]");
}

void check_distribution(std::span<const double> probs, std::size_t target) {
  if (probs.empty()) throw Error(ErrorKind::InvalidProbability, "empty distribution");
  if (target >= probs.size())
    throw Error(ErrorKind::InvalidProbability,
                "target class " + std::to_string(target) + " out of " + std::to_string(probs.size()));
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorKind::InvalidProbability, "probability " + std::to_string(p) + " outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance)
    throw Error(ErrorKind::InvalidProbability, "probabilities sum to " + std::to_string(sum));
  check_probability(probs[target]);
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string(what) + " is not finite");
}

using Dual = Eigen::AutoDiffScalar<Eigen::Matrix<double, 14, 1>>;

geometry::Box3D<Dual> seed_box(const Box3d& b, int offset) {
  geometry::Box3D<Dual> out;
  for (int i = 0; i < 3; ++i) {
    out.center(i) = Dual(b.center(i), 14, offset + i);
    out.dims(i) = Dual(b.dims(i), 14, offset + 3 + i);
  }
  out.yaw = Dual(b.yaw, 14, offset + 6);
  return out;
}

}  // namespace

double focal_term(double p, double alpha, double gamma) {
  check_probability(p);
  return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

ValueGrad focal_term_grad(double p, double alpha, double gamma) {
  ValueGrad r;
  r.value = focal_term(p, alpha, gamma);
  const double q = 1.0 - p;
  const double modulation = (gamma == 0.0 || q == 0.0) ? 0.0 : alpha * gamma * std::pow(q, gamma - 1.0) * std::log(p);
  r.grad = Eigen::VectorXd::Constant(1, modulation - alpha * std::pow(q, gamma) / p);
  return r;
}

double focal_loss(std::span<const double> probabilities, std::size_t target, double alpha, double gamma) {
  check_distribution(probabilities, target);
  return focal_term(probabilities[target], alpha, gamma);
}

double depth_map_focal(const Eigen::MatrixXd& probabilities, std::span<const std::size_t> targets,
                       double alpha, double gamma) {
  return depth_map_focal_grad(probabilities, targets, alpha, gamma).value;
}

ValueGrad depth_map_focal_grad(const Eigen::MatrixXd& probabilities, std::span<const std::size_t> targets,
                               double alpha, double gamma) {
  const Eigen::Index pixels = probabilities.rows();
  if (pixels == 0 || static_cast<std::size_t>(pixels) != targets.size())
    throw Error(ErrorKind::ShapeMismatch, "depth map needs one target bin per pixel");
  ValueGrad r;
  r.grad = Eigen::VectorXd::Zero(probabilities.size());
  const Eigen::Index bins = probabilities.cols();
  std::vector<double> row(static_cast<std::size_t>(bins));
  for (Eigen::Index p = 0; p < pixels; ++p) {
    for (Eigen::Index k = 0; k < bins; ++k) row[static_cast<std::size_t>(k)] = probabilities(p, k);
    const std::size_t t = targets[static_cast<std::size_t>(p)];
    check_distribution(row, t);
    const ValueGrad term = focal_term_grad(row[t], alpha, gamma);
    r.value += term.value;
    r.grad(p * bins + static_cast<Eigen::Index>(t)) = term.grad(0) / static_cast<double>(pixels);
  }
  r.value /= static_cast<double>(pixels);
  return r;
}

double l1_loss(std::span<const double> pred, std::span<const double> target) {
  return l1_loss_grad(pred, target).value;
}

ValueGrad l1_loss_grad(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty())
    throw Error(ErrorKind::ShapeMismatch, "L1 inputs have lengths " + std::to_string(pred.size()) +
                                              " and " + std::to_string(target.size()));
  const double n = static_cast<double>(pred.size());
  ValueGrad r;
  r.grad.resize(static_cast<Eigen::Index>(pred.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred[i] - target[i];
    r.value += std::abs(diff);
    r.grad(static_cast<Eigen::Index>(i)) = sign(diff) / n;
  }
  r.value /= n;
  check_finite(r.value, "L1 loss");
  return r;
}

double giou_loss(const Box2D& a, const Box2D& b) { return 1.0 - geometry::giou(a, b); }

ValueGrad giou_loss_grad(const Box2D& a, const Box2D& b) {
  geometry::validate(a);
  geometry::validate(b);
  ValueGrad r;
  r.value = giou_loss(a, b);
  r.grad = Eigen::VectorXd::Zero(8);
  // coordinate slots: a = 0..3, b = 4..7 in (x_min, y_min, x_max, y_max) order
  auto& g = r.grad;

  const double aw = a.x_max - a.x_min, ah = a.y_max - a.y_min;
  const double bw = b.x_max - b.x_min, bh = b.y_max - b.y_min;
  const double area_a = aw * ah, area_b = bw * bh;

  const int ix0 = a.x_min >= b.x_min ? 0 : 4;
  const int iy0 = a.y_min >= b.y_min ? 1 : 5;
  const int ix1 = a.x_max <= b.x_max ? 2 : 6;
  const int iy1 = a.y_max <= b.y_max ? 3 : 7;
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const bool overlap = iw > 0.0 && ih > 0.0;
  const double inter = overlap ? iw * ih : 0.0;
  const double uni = area_a + area_b - inter;

  const int hx0 = a.x_min <= b.x_min ? 0 : 4;
  const int hy0 = a.y_min <= b.y_min ? 1 : 5;
  const int hx1 = a.x_max >= b.x_max ? 2 : 6;
  const int hy1 = a.y_max >= b.y_max ? 3 : 7;
  const double hw = std::max(a.x_max, b.x_max) - std::min(a.x_min, b.x_min);
  const double hh = std::max(a.y_max, b.y_max) - std::min(a.y_min, b.y_min);
  const double hull = hw * hh;
  if (!(uni > 0.0) || !(hull > 0.0)) return r;

  // loss = 2 - inter/uni - uni/hull
  const double d_inter = -(uni + inter) / (uni * uni) + 1.0 / hull;
  const double d_area = inter / (uni * uni) - 1.0 / hull;
  const double d_hull = uni / (hull * hull);

  g(0) += -ah * d_area;
  g(2) += ah * d_area;
  g(1) += -aw * d_area;
  g(3) += aw * d_area;
  g(4) += -bh * d_area;
  g(6) += bh * d_area;
  g(5) += -bw * d_area;
  g(7) += bw * d_area;

  if (overlap) {
    g(ix1) += ih * d_inter;
    g(ix0) -= ih * d_inter;
    g(iy1) += iw * d_inter;
    g(iy0) -= iw * d_inter;
  }

  g(hx1) += hh * d_hull;
  g(hx0) -= hh * d_hull;
  g(hy1) += hw * d_hull;
  g(hy0) -= hw * d_hull;
  return r;
}

double iou3d_loss(const Box3d& a, const Box3d& b) { return 1.0 - geometry::iou3d(a, b); }

ValueGrad iou3d_loss_grad(const Box3d& a, const Box3d& b) {
  const Dual iou = geometry::iou3d(seed_box(a, 0), seed_box(b, 7));
  ValueGrad r;
  r.value = 1.0 - iou.value();
  r.grad = -iou.derivatives();
  return r;
}

double size3d_loss(const Box3d& pred, const Box3d& target) {
  Box3d centered = pred;
  centered.center = target.center;
  return iou3d_loss(centered, target);
}

ValueGrad size3d_loss_grad(const Box3d& pred, const Box3d& target) {
  Box3d centered = pred;
  centered.center = target.center;
  const ValueGrad full = iou3d_loss_grad(centered, target);
  ValueGrad r;
  r.value = full.value;
  r.grad.resize(11);
  r.grad.head(4) = full.grad.segment(3, 4);
  r.grad.segment(4, 3) = full.grad.head(3) + full.grad.segment(7, 3);
  r.grad.tail(4) = full.grad.tail(4);
  return r;
}

OrientationTarget encode_orientation(double yaw, std::size_t n_bins) {
  if (n_bins == 0) throw Error(ErrorKind::InvalidArgument, "orientation needs at least one bin");
  check_finite(yaw, "yaw");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double width = two_pi / static_cast<double>(n_bins);
  double a = std::fmod(yaw, two_pi);
  if (a < 0.0) a += two_pi;
  const auto bin = static_cast<std::size_t>(std::floor((a + width / 2.0) / width)) % n_bins;
  double residual = a - static_cast<double>(bin) * width;
  if (residual > std::numbers::pi) residual -= two_pi;
  return {bin, residual};
}

double decode_orientation(const OrientationTarget& t, std::size_t n_bins) {
  const double width = 2.0 * std::numbers::pi / static_cast<double>(n_bins);
  return geometry::normalize_yaw(static_cast<double>(t.bin) * width + t.residual);
}

double multibin_loss(std::span<const double> bin_logits, std::span<const double> residuals,
                     const OrientationTarget& target) {
  return multibin_loss_grad(bin_logits, residuals, target).value;
}

ValueGrad multibin_loss_grad(std::span<const double> bin_logits, std::span<const double> residuals,
                             const OrientationTarget& target) {
  const std::size_t n = bin_logits.size();
  if (n == 0 || residuals.size() != n)
    throw Error(ErrorKind::ShapeMismatch, "MultiBin needs one logit and one residual per bin");
  if (target.bin >= n)
    throw Error(ErrorKind::ShapeMismatch, "target bin " + std::to_string(target.bin) + " out of " +
                                              std::to_string(n));
  const Eigen::Map<const Eigen::VectorXd> logits(bin_logits.data(), static_cast<Eigen::Index>(n));
  const double m = logits.maxCoeff();
  const Eigen::VectorXd e = (logits.array() - m).exp();
  const double z = e.sum();

  ValueGrad r;
  const double diff = residuals[target.bin] - target.residual;
  r.value = (m + std::log(z) - bin_logits[target.bin]) + std::abs(diff);
  r.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * n));
  r.grad.head(static_cast<Eigen::Index>(n)) = e / z;
  r.grad(static_cast<Eigen::Index>(target.bin)) -= 1.0;
  r.grad(static_cast<Eigen::Index>(n + target.bin)) = sign(diff);
  check_finite(r.value, "MultiBin loss");
  return r;
}

double laplacian_depth_loss(double depth, double log_scale, double target) {
  return laplacian_depth_loss_grad(depth, log_scale, target).value;
}

ValueGrad laplacian_depth_loss_grad(double depth, double log_scale, double target) {
  check_finite(depth, "depth");
  check_finite(log_scale, "depth log-scale");
  check_finite(target, "target depth");
  const double w = std::numbers::sqrt2 * std::exp(-log_scale);
  const double diff = depth - target;
  ValueGrad r;
  r.value = w * std::abs(diff) + log_scale;
  check_finite(r.value, "Laplacian depth loss");
  r.grad.resize(3);
  r.grad << w * sign(diff), 1.0 - w * std::abs(diff), -w * sign(diff);
  return r;
}

void LossWeights::validate() const {
  for (double v : {cls, lrtb, giou, xy3d})
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(ErrorKind::InvalidArgument, "loss weights must be finite and non-negative");
}

double loss_2d(const LossParts& parts, const LossWeights& w) {
  w.validate();
  for (double v : {parts.cls, parts.lrtb, parts.giou, parts.xy3d}) check_finite(v, "2D loss component");
  return w.cls * parts.cls + w.lrtb * parts.lrtb + w.giou * parts.giou + w.xy3d * parts.xy3d;
}

double loss_3d(const LossParts& parts) {
  for (double v : {parts.size3d, parts.orien, parts.depth}) check_finite(v, "3D loss component");
  return parts.size3d + parts.orien + parts.depth;
}

double loss_overall(const LossParts& parts, const LossWeights& w) {
  check_finite(parts.dmap, "depth-map loss");
  return loss_2d(parts, w) + loss_3d(parts) + parts.dmap;
}

}  // namespace m3dvg::losses
